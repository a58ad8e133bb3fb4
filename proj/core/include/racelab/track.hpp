#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "racelab/geometry.hpp"

namespace racelab {

inline constexpr int kCheckpointCount = 14;
inline constexpr double kGateBarrierTolerance = 0.5;  // m
inline constexpr double kMinTrackWidth = 4.0;         // m

struct Gate {
  char id{'A'};
  Vec2 p0;  // on the left barrier
  Vec2 p1;  // on the right barrier
};

// Uniform grid over barrier segments. Cells store segment indices.
class SegmentGrid {
 public:
  SegmentGrid() = default;
  SegmentGrid(std::span<const Segment> segments, double cell_size);

  double cell_size() const { return cell_; }
  Vec2 origin() const { return origin_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  bool in_bounds(int ix, int iy) const { return ix >= 0 && iy >= 0 && ix < nx_ && iy < ny_; }
  int cell_x(double x) const;
  int cell_y(double y) const;
  std::span<const std::uint32_t> cell(int ix, int iy) const;
  // Segments whose y-extent overlaps the row containing y, for parity tests.
  std::span<const std::uint32_t> row(double y) const;

 private:
  Vec2 origin_;
  double cell_{1.0};
  int nx_{0};
  int ny_{0};
  std::vector<std::vector<std::uint32_t>> cells_;
  std::vector<std::vector<std::uint32_t>> rows_;
};

// The racetrack. Immutable once constructed; the constructor rejects any
// invariant violation with a ValidationError naming it.
class Track {
 public:
  Track(std::string name, std::vector<Vec2> left_barrier, std::vector<Vec2> right_barrier,
        std::vector<Gate> checkpoints, Pose2D spawn,
        std::map<std::string, std::string> metadata = {});

  const std::string& name() const { return name_; }
  const std::vector<Vec2>& left_barrier() const { return left_; }
  const std::vector<Vec2>& right_barrier() const { return right_; }
  const std::vector<Gate>& checkpoints() const { return gates_; }
  const Pose2D& spawn() const { return spawn_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  std::span<const Segment> segments() const { return segments_; }
  const SegmentGrid& grid() const { return grid_; }

  // Inside the left polyline xor inside the right polyline (even-odd rule over
  // all barrier segments).
  bool contains(Vec2 p) const;

  // cast_ray without the inside-region check on the origin.
  double raycast_unchecked(Vec2 origin, Vec2 dir, double max_range) const;

 private:
  std::string name_;
  std::vector<Vec2> left_;
  std::vector<Vec2> right_;
  std::vector<Gate> gates_;
  Pose2D spawn_;
  std::map<std::string, std::string> metadata_;
  std::vector<Segment> segments_;
  SegmentGrid grid_;
};

// Distance to the nearest barrier along the ray, capped at max_range. Returns 0
// when origin is outside the drivable region.
double cast_ray(const Track& track, Vec2 origin, Vec2 direction, double max_range);

// True iff prev->curr intersects the gate segment. Shared-endpoint touches
// count; collinear overlap does not.
bool gate_crossed(const Gate& gate, Vec2 prev, Vec2 curr);

// Oriented-rectangle footprint against the barriers.
bool collides(const Track& track, const Pose2D& pose, double half_length, double half_width);

std::array<Vec2, 4> footprint_corners(const Pose2D& pose, double half_length, double half_width);

// --- file format -----------------------------------------------------------

Track parse_track(const std::string& text);
std::string track_to_text(const Track& track);
Track load_track(const std::filesystem::path& path);
void save_track(const Track& track, const std::filesystem::path& path);

// --- generators --------------------------------------------------------------

enum class TrackKind { kOval, kMiniOasis };

struct TrackParams {
  double length_x{200.0};  // oval: centerline extent along x (m)
  double length_y{120.0};  // oval: centerline extent along y (m)
  double width{12.0};      // m
  double scale{1.0};       // mini_oasis: uniform scale of the layout
};

TrackKind parse_track_kind(const std::string& s);
Track generate_track(TrackKind kind, const TrackParams& params = {});

}  // namespace racelab
