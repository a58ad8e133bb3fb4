#include <cmath>
#include <numbers>

#include "format.hpp"
#include "racelab/errors.hpp"
#include "racelab/track.hpp"

namespace racelab {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kSampleStep = 0.5;  // centerline step; outer-barrier chords stay below 1 m

// A straight (radius == 0) or a circular arc with signed turn angle (+ = left).
struct Piece {
  double length{0.0};
  double radius{0.0};
  double angle{0.0};

  double arc_length() const { return radius > 0.0 ? radius * std::abs(angle) : length; }
};

Piece straight(double len) { return {len, 0.0, 0.0}; }
Piece arc(double radius, double deg) { return {0.0, radius, deg * kDeg}; }

// Pose after travelling `s` metres into `p` starting from `start`.
Pose2D advance(const Pose2D& start, const Piece& p, double s) {
  if (p.radius == 0.0) {
    return {start.x + s * std::cos(start.heading), start.y + s * std::sin(start.heading),
            start.heading};
  }
  const double dir = p.angle > 0.0 ? 1.0 : -1.0;
  const double cx = start.x - dir * p.radius * std::sin(start.heading);
  const double cy = start.y + dir * p.radius * std::cos(start.heading);
  const double h = start.heading + dir * s / p.radius;
  return {cx + dir * p.radius * std::sin(h), cy - dir * p.radius * std::cos(h), h};
}

class Centerline {
 public:
  explicit Centerline(std::vector<Piece> pieces) : pieces_(std::move(pieces)) {
    Pose2D pose{};
    for (const auto& p : pieces_) {
      starts_.push_back(pose);
      offsets_.push_back(length_);
      pose = advance(pose, p, p.arc_length());
      length_ += p.arc_length();
    }
    end_ = pose;
  }

  double length() const { return length_; }
  const Pose2D& end() const { return end_; }
  const std::vector<Piece>& pieces() const { return pieces_; }
  const std::vector<Pose2D>& starts() const { return starts_; }

  Pose2D at(double s) const {
    s = std::fmod(s, length_);
    if (s < 0.0) s += length_;
    std::size_t i = pieces_.size() - 1;
    while (i > 0 && offsets_[i] > s) --i;
    return advance(starts_[i], pieces_[i], s - offsets_[i]);
  }

  // Samples every piece at <= kSampleStep, closed (first point repeated at end).
  std::vector<Pose2D> samples() const {
    std::vector<Pose2D> out;
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      const double len = pieces_[i].arc_length();
      const int n = std::max(1, static_cast<int>(std::ceil(len / kSampleStep)));
      for (int k = 0; k < n; ++k) out.push_back(advance(starts_[i], pieces_[i], len * k / n));
    }
    out.push_back(out.front());
    return out;
  }

 private:
  std::vector<Piece> pieces_;
  std::vector<Pose2D> starts_;
  std::vector<double> offsets_;
  double length_{0.0};
  Pose2D end_{};
};

Vec2 offset(const Pose2D& p, double d) {
  return {p.x - d * std::sin(p.heading), p.y + d * std::cos(p.heading)};
}

// Adjusts the lengths of straights i and j so the centerline closes.
std::vector<Piece> close_loop(std::vector<Piece> pieces, std::size_t i, std::size_t j) {
  const Centerline nominal(pieces);
  const Pose2D end = nominal.end();
  const double hi = nominal.starts()[i].heading;
  const double hj = nominal.starts()[j].heading;
  // [cos hi, cos hj; sin hi, sin hj] [a; b] = -end
  const double det = std::cos(hi) * std::sin(hj) - std::cos(hj) * std::sin(hi);
  const double a = (-end.x * std::sin(hj) + end.y * std::cos(hj)) / det;
  const double b = (-end.y * std::cos(hi) + end.x * std::sin(hi)) / det;
  pieces[i].length += a;
  pieces[j].length += b;
  if (pieces[i].length <= 0.0 || pieces[j].length <= 0.0) {
    throw ValidationError("infeasible dimensions: layout does not close");
  }
  return pieces;
}

Track build(const std::string& name, const Centerline& line, double width,
            std::map<std::string, std::string> metadata) {
  const auto samples = line.samples();
  std::vector<Vec2> left;
  std::vector<Vec2> right;
  left.reserve(samples.size());
  right.reserve(samples.size());
  for (const auto& p : samples) {
    left.push_back(offset(p, 0.5 * width));
    right.push_back(offset(p, -0.5 * width));
  }
  left.back() = left.front();
  right.back() = right.front();

  // Gate N sits 10 m past the start of the layout; A one spacing later. The
  // car spawns at rest between them, so its first credited gate is A.
  const double spacing = line.length() / kCheckpointCount;
  const double s_n = 10.0;
  std::vector<Gate> gates;
  for (int i = 0; i < kCheckpointCount; ++i) {
    const Pose2D p = line.at(s_n + spacing * (i + 1));
    gates.push_back({static_cast<char>('A' + i), offset(p, 0.5 * width), offset(p, -0.5 * width)});
  }
  Pose2D spawn = line.at(s_n + 0.3 * spacing);
  spawn.heading = normalize_angle(spawn.heading);

  metadata["centerline_length"] = detail::fmt_exact(line.length());
  metadata["width"] = detail::fmt_exact(width);
  return Track(name, std::move(left), std::move(right), std::move(gates), spawn, std::move(metadata));
}

Track make_oval(const TrackParams& p) {
  if (!(p.length_x > 0.0) || !(p.length_y > 0.0)) {
    throw ValidationError("infeasible dimensions: extents must be positive");
  }
  if (p.width < 8.0) throw ValidationError("infeasible dimensions: width below 8 m");
  const double radius = 0.5 * std::min(p.length_x, p.length_y);
  const double straight_len = std::abs(p.length_x - p.length_y);
  if (p.width >= radius) {
    throw ValidationError("infeasible dimensions: width exceeds corner radius");
  }
  if (straight_len <= 0.0) throw ValidationError("infeasible dimensions: oval needs straights");
  Centerline line({straight(straight_len), arc(radius, 180.0), straight(straight_len),
                   arc(radius, 180.0)});
  return build("oval", line, p.width, {{"generator", "oval"}});
}

Track make_mini_oasis(const TrackParams& p) {
  if (!(p.scale > 0.0)) throw ValidationError("infeasible dimensions: scale must be positive");
  if (p.width < 8.0) throw ValidationError("infeasible dimensions: width below 8 m");
  const double k = p.scale;
  // Main straight (finish line), large curve, straight, planar S-curve, large
  // curve, straight, large curve, long straight, sharp left-right, straight,
  // two sharp lefts back onto the main straight.
  std::vector<Piece> pieces{
      straight(200 * k), arc(75 * k, 100), straight(80 * k),  arc(45 * k, -40), arc(45 * k, 40),
      arc(65 * k, 80),   straight(80 * k), arc(70 * k, 70),   straight(160 * k), arc(36 * k, 90),
      straight(15 * k),  arc(36 * k, -90), straight(70 * k),  arc(34 * k, 55),   straight(40 * k),
      arc(34 * k, 55)};
  double min_radius = 1e300;
  for (const auto& pc : pieces) {
    if (pc.radius > 0.0) min_radius = std::min(min_radius, pc.radius);
  }
  if (p.width >= min_radius) {
    throw ValidationError("infeasible dimensions: width exceeds corner radius");
  }
  Centerline line(close_loop(std::move(pieces), 0, 2));
  return build("mini_oasis", line, p.width, {{"generator", "mini_oasis"}});
}

}  // namespace

TrackKind parse_track_kind(const std::string& s) {
  if (s == "oval") return TrackKind::kOval;
  if (s == "mini-oasis" || s == "mini_oasis") return TrackKind::kMiniOasis;
  throw ValidationError("unknown track kind '" + s + "'");
}

Track generate_track(TrackKind kind, const TrackParams& params) {
  switch (kind) {
    case TrackKind::kOval:
      return make_oval(params);
    case TrackKind::kMiniOasis:
      return make_mini_oasis(params);
  }
  throw ValidationError("unknown track kind");
}

}  // namespace racelab
