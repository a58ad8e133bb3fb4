#pragma once

// Test fixtures and independent reference computations. Nothing here calls
// into the code under test beyond building Track values.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "racelab/track.hpp"

namespace racelab::testing {

inline std::filesystem::path temp_dir(const std::string& name) {
  const char* base = std::getenv("RACELAB_TEST_TMP");
  std::filesystem::path dir = base ? std::filesystem::path(base) : std::filesystem::temp_directory_path() / "racelab_tests";
  dir /= name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Rectangular loop driven counter-clockwise. The bottom straight runs along +x
// from x = 0 to x = length with walls at y = 0 (right) and y = width (left);
// the car spawns on its centreline facing +x. Eight gates sit on that straight
// at x = 60, 160, ..., 760.
inline Track corridor_track(double length = 1000.0, double height = 112.0, double width = 12.0) {
  const double L = length, H = height, w = width;
  std::vector<Vec2> outer{{0, 0}, {L, 0}, {L, H}, {0, H}, {0, 0}};
  std::vector<Vec2> inner{{w, w}, {L - w, w}, {L - w, H - w}, {w, H - w}, {w, w}};
  std::vector<Gate> gates;
  char id = 'A';
  for (int k = 0; k < 8; ++k) {
    const double x = 60.0 + 100.0 * k;
    gates.push_back({id++, {x, w}, {x, 0}});
  }
  for (double y : {H / 3, 2 * H / 3}) gates.push_back({id++, {L - w, y}, {L, y}});
  for (double x : {L - 100.0, L / 2, 100.0}) gates.push_back({id++, {x, H - w}, {x, H}});
  gates.push_back({id++, {w, H / 2}, {0, H / 2}});
  return Track("corridor", inner, outer, gates, Pose2D{20.0, w / 2, 0.0});
}

// Annulus approximated by regular polygons, driven counter-clockwise.
inline Track ring_track(int vertices = 64, double r_in = 50.0, double r_out = 62.0) {
  std::vector<Vec2> inner, outer;
  for (int i = 0; i <= vertices; ++i) {
    const double a = 2.0 * std::numbers::pi * (i % vertices) / vertices;
    inner.push_back({r_in * std::cos(a), r_in * std::sin(a)});
    outer.push_back({r_out * std::cos(a), r_out * std::sin(a)});
  }
  std::vector<Gate> gates;
  for (int k = 0; k < kCheckpointCount; ++k) {
    const double a = 2.0 * std::numbers::pi * (k + 0.5) / kCheckpointCount;
    const Vec2 d{std::cos(a), std::sin(a)};
    gates.push_back({static_cast<char>('A' + k), d * r_in, d * r_out});
  }
  return Track("ring", inner, outer, gates, Pose2D{0.5 * (r_in + r_out), 0.0, std::numbers::pi / 2});
}

// Even-odd point-in-polygon over one closed polyline, by brute force.
inline bool oracle_inside_polygon(const std::vector<Vec2>& poly, Vec2 p) {
  bool inside = false;
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    const Vec2 a = poly[i], b = poly[i + 1];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

inline bool oracle_in_region(const Track& t, Vec2 p) {
  return oracle_inside_polygon(t.left_barrier(), p) != oracle_inside_polygon(t.right_barrier(), p);
}

inline double oracle_point_segment(Vec2 p, Vec2 a, Vec2 b) {
  const double ex = b.x - a.x, ey = b.y - a.y;
  const double l2 = ex * ex + ey * ey;
  double s = l2 > 0 ? ((p.x - a.x) * ex + (p.y - a.y) * ey) / l2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  return std::hypot(p.x - (a.x + s * ex), p.y - (a.y + s * ey));
}

inline double oracle_barrier_distance(const Track& t, Vec2 p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto* line : {&t.left_barrier(), &t.right_barrier()}) {
    for (std::size_t i = 0; i + 1 < line->size(); ++i) {
      best = std::min(best, oracle_point_segment(p, (*line)[i], (*line)[i + 1]));
    }
  }
  return best;
}

// Brute-force ray marcher. Each step advances by the distance to the nearest
// barrier segment (never past a wall) and stops within `eps` of one.
inline double oracle_march(const Track& t, Vec2 o, Vec2 d, double max_range, double eps = 1e-7) {
  double s = 0.0;
  for (int it = 0; it < 200000 && s < max_range; ++it) {
    const double clearance = oracle_barrier_distance(t, {o.x + s * d.x, o.y + s * d.y});
    if (clearance < eps) return s;
    s += clearance;
  }
  return std::min(s, max_range);
}

// Equilibrium speed of the longitudinal model by bisection:
// throttle * F_max = drag * u^2 + rolling * m * g.
inline double oracle_equilibrium_speed(double throttle, double f_max, double drag, double rolling,
                                       double mass, double g) {
  double lo = 0.0, hi = 200.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (throttle * f_max - drag * mid * mid - rolling * mass * g > 0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Advantage of step t from the nested-sum definition:
// A_t = sum_{l>=0} (gamma lambda)^l delta_{t+l}, truncated at the first done.
inline std::vector<double> oracle_gae(const std::vector<double>& r, const std::vector<double>& v,
                                      const std::vector<std::uint8_t>& done, double boot, double gamma,
                                      double lambda) {
  const std::size_t n = r.size();
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      const double next_v = done[k] ? 0.0 : (k + 1 < n ? v[k + 1] : boot);
      const double delta = r[k] + gamma * next_v - v[k];
      adv[t] += weight * delta;
      if (done[k]) break;
      weight *= gamma * lambda;
    }
  }
  return adv;
}

}  // namespace racelab::testing
