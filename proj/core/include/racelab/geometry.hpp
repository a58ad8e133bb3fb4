#pragma once

#include <cmath>
#include <numbers>

namespace racelab {

struct Vec2 {
  double x{0.0};
  double y{0.0};

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// Signed area of (a, b, c): > 0 for a left turn.
constexpr double orient(Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); }

// Maps any angle into (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

struct Pose2D {
  double x{0.0};
  double y{0.0};
  double heading{0.0};  // rad, (-pi, pi]

  Vec2 position() const { return {x, y}; }
  Vec2 forward() const { return {std::cos(heading), std::sin(heading)}; }
  bool operator==(const Pose2D&) const = default;
};

struct Segment {
  Vec2 a;
  Vec2 b;
};

// Closed-segment intersection test; touching endpoints and collinear overlap count.
bool segments_intersect(const Segment& s, const Segment& t);

// Distance along origin + t*dir (dir unit) to segment s, or +inf when the ray misses.
double ray_segment_distance(Vec2 origin, Vec2 dir, const Segment& s);

}  // namespace racelab
