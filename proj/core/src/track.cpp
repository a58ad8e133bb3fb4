#include "racelab/track.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "racelab/errors.hpp"

namespace racelab {
namespace {

constexpr double kGridCell = 4.0;

double point_segment_distance(Vec2 p, const Segment& s) {
  const Vec2 e = s.b - s.a;
  const double len2 = dot(e, e);
  double t = len2 > 0.0 ? dot(p - s.a, e) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (s.a + e * t));
}

double polyline_distance(Vec2 p, const std::vector<Vec2>& line) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    best = std::min(best, point_segment_distance(p, {line[i], line[i + 1]}));
  }
  return best;
}

void check_polyline(const std::vector<Vec2>& line, const char* which) {
  if (line.size() < 4) {
    throw ValidationError(std::string(which) + " barrier: needs at least 3 distinct points");
  }
  if (!(line.front() == line.back())) {
    throw ValidationError(std::string(which) + " barrier not closed");
  }
  for (const auto& p : line) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw ValidationError(std::string(which) + " barrier has non-finite coordinate");
    }
  }
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    if (line[i] == line[i + 1]) {
      throw ValidationError(std::string(which) + " barrier has a zero-length segment");
    }
  }
}

}  // namespace

// --- SegmentGrid ---------------------------------------------------------------

SegmentGrid::SegmentGrid(std::span<const Segment> segments, double cell_size) : cell_(cell_size) {
  double minx = std::numeric_limits<double>::infinity();
  double miny = minx;
  double maxx = -minx;
  double maxy = -minx;
  for (const auto& s : segments) {
    for (Vec2 p : {s.a, s.b}) {
      minx = std::min(minx, p.x);
      miny = std::min(miny, p.y);
      maxx = std::max(maxx, p.x);
      maxy = std::max(maxy, p.y);
    }
  }
  origin_ = {minx - cell_, miny - cell_};
  nx_ = static_cast<int>(std::floor((maxx - origin_.x) / cell_)) + 2;
  ny_ = static_cast<int>(std::floor((maxy - origin_.y) / cell_)) + 2;
  cells_.assign(static_cast<std::size_t>(nx_) * ny_, {});
  rows_.assign(static_cast<std::size_t>(ny_), {});
  for (std::uint32_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    const int x0 = cell_x(std::min(s.a.x, s.b.x));
    const int x1 = cell_x(std::max(s.a.x, s.b.x));
    const int y0 = cell_y(std::min(s.a.y, s.b.y));
    const int y1 = cell_y(std::max(s.a.y, s.b.y));
    for (int iy = y0; iy <= y1; ++iy) {
      rows_[iy].push_back(i);
      for (int ix = x0; ix <= x1; ++ix) cells_[static_cast<std::size_t>(iy) * nx_ + ix].push_back(i);
    }
  }
}

int SegmentGrid::cell_x(double x) const {
  return static_cast<int>(std::floor((x - origin_.x) / cell_));
}

int SegmentGrid::cell_y(double y) const {
  return static_cast<int>(std::floor((y - origin_.y) / cell_));
}

std::span<const std::uint32_t> SegmentGrid::cell(int ix, int iy) const {
  if (!in_bounds(ix, iy)) return {};
  return cells_[static_cast<std::size_t>(iy) * nx_ + ix];
}

std::span<const std::uint32_t> SegmentGrid::row(double y) const {
  const int iy = cell_y(y);
  if (iy < 0 || iy >= ny_) return {};
  return rows_[iy];
}

// --- Track ---------------------------------------------------------------------

Track::Track(std::string name, std::vector<Vec2> left_barrier, std::vector<Vec2> right_barrier,
             std::vector<Gate> checkpoints, Pose2D spawn,
             std::map<std::string, std::string> metadata)
    : name_(std::move(name)),
      left_(std::move(left_barrier)),
      right_(std::move(right_barrier)),
      gates_(std::move(checkpoints)),
      spawn_(spawn),
      metadata_(std::move(metadata)) {
  check_polyline(left_, "left");
  check_polyline(right_, "right");

  const std::size_t n_left = left_.size() - 1;
  for (std::size_t i = 0; i < n_left; ++i) segments_.push_back({left_[i], left_[i + 1]});
  for (std::size_t i = 0; i + 1 < right_.size(); ++i) segments_.push_back({right_[i], right_[i + 1]});
  grid_ = SegmentGrid(segments_, kGridCell);

  // Non-self-intersection, and the two barriers never touch each other.
  const std::size_t n = segments_.size();
  const auto adjacent = [&](std::size_t i, std::size_t j) {
    const bool li = i < n_left;
    const bool lj = j < n_left;
    if (li != lj) return false;
    const std::size_t base = li ? 0 : n_left;
    const std::size_t count = li ? n_left : n - n_left;
    const std::size_t a = i - base;
    const std::size_t b = j - base;
    return (a + 1) % count == b || (b + 1) % count == a;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = segments_[i];
    const int x0 = grid_.cell_x(std::min(s.a.x, s.b.x));
    const int x1 = grid_.cell_x(std::max(s.a.x, s.b.x));
    const int y0 = grid_.cell_y(std::min(s.a.y, s.b.y));
    const int y1 = grid_.cell_y(std::max(s.a.y, s.b.y));
    for (int iy = y0; iy <= y1; ++iy) {
      for (int ix = x0; ix <= x1; ++ix) {
        for (std::uint32_t j : grid_.cell(ix, iy)) {
          if (j <= i || adjacent(i, j)) continue;
          if (segments_intersect(s, segments_[j])) {
            if ((i < n_left) != (j < n_left)) {
              throw ValidationError("barriers intersect each other");
            }
            throw ValidationError(std::string(i < n_left ? "left" : "right") +
                                  " barrier self-intersects");
          }
        }
      }
    }
  }

  if (static_cast<int>(gates_.size()) != kCheckpointCount) {
    throw ValidationError("checkpoint count: expected 14, got " + std::to_string(gates_.size()));
  }
  for (int i = 0; i < kCheckpointCount; ++i) {
    const Gate& g = gates_[i];
    const char expected = static_cast<char>('A' + i);
    if (g.id != expected) {
      throw ValidationError(std::string("checkpoint order: expected id ") + expected + ", got " +
                            g.id);
    }
    if (g.p0 == g.p1) throw ValidationError(std::string("gate ") + g.id + " is degenerate");
    if (norm(g.p1 - g.p0) < kMinTrackWidth) {
      throw ValidationError(std::string("gate ") + g.id + " shorter than minimum track width");
    }
    if (polyline_distance(g.p0, left_) > kGateBarrierTolerance) {
      throw ValidationError(std::string("gate ") + g.id + " p0 not on left barrier");
    }
    if (polyline_distance(g.p1, right_) > kGateBarrierTolerance) {
      throw ValidationError(std::string("gate ") + g.id + " p1 not on right barrier");
    }
  }

  if (!std::isfinite(spawn_.x) || !std::isfinite(spawn_.y) || !std::isfinite(spawn_.heading) ||
      !contains(spawn_.position())) {
    throw ValidationError("spawn outside track");
  }
  spawn_.heading = normalize_angle(spawn_.heading);
}

bool Track::contains(Vec2 p) const {
  bool inside = false;
  for (std::uint32_t i : grid_.row(p.y)) {
    const auto& s = segments_[i];
    if ((s.a.y > p.y) != (s.b.y > p.y)) {
      const double x = s.a.x + (p.y - s.a.y) * (s.b.x - s.a.x) / (s.b.y - s.a.y);
      if (x > p.x) inside = !inside;
    }
  }
  return inside;
}

double Track::raycast_unchecked(Vec2 o, Vec2 d, double max_range) const {
  double best = max_range;
  const double cell = grid_.cell_size();
  const Vec2 g0 = grid_.origin();
  int ix = grid_.cell_x(o.x);
  int iy = grid_.cell_y(o.y);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int step_x = d.x > 0.0 ? 1 : -1;
  const int step_y = d.y > 0.0 ? 1 : -1;
  double t_max_x = d.x != 0.0 ? (g0.x + (ix + (d.x > 0.0)) * cell - o.x) / d.x : kInf;
  double t_max_y = d.y != 0.0 ? (g0.y + (iy + (d.y > 0.0)) * cell - o.y) / d.y : kInf;
  const double t_delta_x = d.x != 0.0 ? cell / std::abs(d.x) : kInf;
  const double t_delta_y = d.y != 0.0 ? cell / std::abs(d.y) : kInf;
  double t_enter = 0.0;
  while (grid_.in_bounds(ix, iy) && t_enter <= best) {
    for (std::uint32_t i : grid_.cell(ix, iy)) {
      best = std::min(best, ray_segment_distance(o, d, segments_[i]));
    }
    const double t_exit = std::min(t_max_x, t_max_y);
    if (best <= t_exit) break;
    if (t_max_x < t_max_y) {
      ix += step_x;
      t_enter = t_max_x;
      t_max_x += t_delta_x;
    } else {
      iy += step_y;
      t_enter = t_max_y;
      t_max_y += t_delta_y;
    }
  }
  return std::max(best, 0.0);
}

double cast_ray(const Track& track, Vec2 origin, Vec2 direction, double max_range) {
  if (!track.contains(origin)) return 0.0;
  return track.raycast_unchecked(origin, direction, max_range);
}

bool gate_crossed(const Gate& gate, Vec2 prev, Vec2 curr) {
  const double o1 = orient(gate.p0, gate.p1, prev);
  const double o2 = orient(gate.p0, gate.p1, curr);
  const double o3 = orient(prev, curr, gate.p0);
  const double o4 = orient(prev, curr, gate.p1);
  if (o1 == 0.0 && o2 == 0.0 && o3 == 0.0 && o4 == 0.0) return false;
  const auto opposite = [](double a, double b) { return (a <= 0.0 && b >= 0.0) || (a >= 0.0 && b <= 0.0); };
  return opposite(o1, o2) && opposite(o3, o4);
}

std::array<Vec2, 4> footprint_corners(const Pose2D& pose, double half_length, double half_width) {
  const Vec2 f = pose.forward() * half_length;
  const Vec2 l = Vec2{-std::sin(pose.heading), std::cos(pose.heading)} * half_width;
  const Vec2 c = pose.position();
  return {c + f + l, c + f - l, c - f - l, c - f + l};
}

bool collides(const Track& track, const Pose2D& pose, double half_length, double half_width) {
  const auto corners = footprint_corners(pose, half_length, half_width);
  double minx = corners[0].x, maxx = corners[0].x, miny = corners[0].y, maxy = corners[0].y;
  for (const auto& c : corners) {
    minx = std::min(minx, c.x);
    maxx = std::max(maxx, c.x);
    miny = std::min(miny, c.y);
    maxy = std::max(maxy, c.y);
  }
  const auto& grid = track.grid();
  const auto segs = track.segments();
  for (int iy = grid.cell_y(miny); iy <= grid.cell_y(maxy); ++iy) {
    for (int ix = grid.cell_x(minx); ix <= grid.cell_x(maxx); ++ix) {
      for (std::uint32_t i : grid.cell(ix, iy)) {
        for (int k = 0; k < 4; ++k) {
          if (segments_intersect({corners[k], corners[(k + 1) % 4]}, segs[i])) return true;
        }
      }
    }
  }
  for (const auto& c : corners) {
    if (!track.contains(c)) return true;
  }
  return false;
}

}  // namespace racelab
