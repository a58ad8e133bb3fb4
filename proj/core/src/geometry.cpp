#include "racelab/geometry.hpp"

#include <algorithm>
#include <limits>

namespace racelab {
namespace {

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

bool segments_intersect(const Segment& s, const Segment& t) {
  const int o1 = sign(orient(s.a, s.b, t.a));
  const int o2 = sign(orient(s.a, s.b, t.b));
  const int o3 = sign(orient(t.a, t.b, s.a));
  const int o4 = sign(orient(t.a, t.b, s.b));
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(s.a, s.b, t.a)) return true;
  if (o2 == 0 && on_segment(s.a, s.b, t.b)) return true;
  if (o3 == 0 && on_segment(t.a, t.b, s.a)) return true;
  if (o4 == 0 && on_segment(t.a, t.b, s.b)) return true;
  return false;
}

double ray_segment_distance(Vec2 origin, Vec2 dir, const Segment& s) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const Vec2 e = s.b - s.a;
  const Vec2 w = s.a - origin;
  const double denom = cross(dir, e);
  if (denom == 0.0) {
    if (cross(w, dir) != 0.0) return kInf;
    // Collinear: nearest endpoint ahead of the origin.
    const double ta = dot(s.a - origin, dir);
    const double tb = dot(s.b - origin, dir);
    if (ta < 0.0 && tb < 0.0) return kInf;
    if (ta < 0.0 || tb < 0.0) return 0.0;
    return std::min(ta, tb);
  }
  const double t = cross(w, e) / denom;
  const double u = cross(w, dir) / denom;
  if (t < 0.0 || u < 0.0 || u > 1.0) return kInf;
  return t;
}

}  // namespace racelab
