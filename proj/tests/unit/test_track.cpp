#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "racelab/errors.hpp"
#include "racelab/race_env.hpp"
#include "racelab/track.hpp"

namespace racelab {
namespace {

using testing::corridor_track;
using testing::oracle_in_region;
using testing::ring_track;

constexpr double kPi = std::numbers::pi;

std::string bundled(const std::string& name) { return std::string(RACELAB_DATA_DIR) + "/tracks/" + name; }

nlohmann::json track_json(const Track& t) { return nlohmann::json::parse(track_to_text(t)); }

std::string expect_validation_error(const std::string& text) {
  try {
    parse_track(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  ADD_FAILURE() << "expected a ValidationError";
  return {};
}

TEST(Track, BundledMiniOasisHasFourteenGatesAtoN) {
  const Track t = load_track(bundled("mini_oasis.json"));
  ASSERT_EQ(t.checkpoints().size(), 14u);
  for (int i = 0; i < 14; ++i) EXPECT_EQ(t.checkpoints()[i].id, 'A' + i);
  EXPECT_EQ(t.name(), "mini_oasis");
}

TEST(Track, ThirteenGatesIsRejected) {
  auto doc = track_json(corridor_track());
  doc["checkpoints"].erase(doc["checkpoints"].size() - 1);
  EXPECT_NE(expect_validation_error(doc.dump()).find("checkpoint count"), std::string::npos);
}

TEST(Track, SpawnOutsideIsRejected) {
  auto doc = track_json(corridor_track());
  doc["spawn"]["x"] = 500.0;
  doc["spawn"]["y"] = 56.0;  // in the infield
  const Track reference = corridor_track();
  ASSERT_FALSE(oracle_in_region(reference, {500.0, 56.0}));
  EXPECT_NE(expect_validation_error(doc.dump()).find("spawn outside track"), std::string::npos);
}

TEST(Track, OtherInvariantViolationsAreNamed) {
  {
    auto doc = track_json(corridor_track());
    doc["left_barrier"].erase(doc["left_barrier"].size() - 1);
    EXPECT_NE(expect_validation_error(doc.dump()).find("not closed"), std::string::npos);
  }
  {
    auto doc = track_json(corridor_track());
    std::swap(doc["checkpoints"][0], doc["checkpoints"][1]);
    EXPECT_NE(expect_validation_error(doc.dump()).find("checkpoint order"), std::string::npos);
  }
  {
    auto doc = track_json(corridor_track());
    doc["checkpoints"][0]["p1"] = {60.0, 9.0};
    EXPECT_NE(expect_validation_error(doc.dump()).find("shorter than minimum track width"), std::string::npos);
  }
  {
    auto doc = track_json(corridor_track());
    doc["checkpoints"][2]["p0"] = {260.0, 6.0};
    doc["checkpoints"][2]["p1"] = {260.0, -6.0};
    EXPECT_NE(expect_validation_error(doc.dump()).find("not on left barrier"), std::string::npos);
  }
  {
    // A bow-tie left barrier.
    auto doc = track_json(corridor_track());
    doc["left_barrier"] = {{12, 12}, {988, 100}, {988, 12}, {12, 100}, {12, 12}};
    EXPECT_NE(expect_validation_error(doc.dump()).find("self-intersects"), std::string::npos);
  }
}

TEST(Track, MalformedFileIsParseError) {
  EXPECT_THROW(parse_track("{ not json"), ParseError);
  EXPECT_THROW(parse_track(R"({"name": "x"})"), ParseError);
  EXPECT_THROW(load_track("/nonexistent/track.json"), ParseError);
}

TEST(Track, SaveLoadRoundTripIsBitExact) {
  const Track t = generate_track(TrackKind::kMiniOasis);
  const auto dir = testing::temp_dir("track_roundtrip");
  save_track(t, dir / "t.json");
  const Track u = load_track(dir / "t.json");
  EXPECT_EQ(t.left_barrier(), u.left_barrier());
  EXPECT_EQ(t.right_barrier(), u.right_barrier());
  ASSERT_EQ(t.checkpoints().size(), u.checkpoints().size());
  for (std::size_t i = 0; i < t.checkpoints().size(); ++i) {
    EXPECT_EQ(t.checkpoints()[i].id, u.checkpoints()[i].id);
    EXPECT_EQ(t.checkpoints()[i].p0, u.checkpoints()[i].p0);
    EXPECT_EQ(t.checkpoints()[i].p1, u.checkpoints()[i].p1);
  }
  EXPECT_EQ(t.spawn(), u.spawn());
  EXPECT_EQ(t.metadata(), u.metadata());
}

TEST(Track, BundledFilesMatchGenerators) {
  for (auto [kind, file] : {std::pair{TrackKind::kOval, "oval.json"}, {TrackKind::kMiniOasis, "mini_oasis.json"}}) {
    const Track g = generate_track(kind);
    const Track f = load_track(bundled(file));
    EXPECT_EQ(g.left_barrier(), f.left_barrier()) << file;
    EXPECT_EQ(g.spawn(), f.spawn()) << file;
  }
}

TEST(TrackGen, OvalIsClosedWithEquallySpacedGates) {
  const Track t = generate_track(TrackKind::kOval, {200.0, 120.0, 12.0, 1.0});
  EXPECT_EQ(t.left_barrier().front(), t.left_barrier().back());
  EXPECT_EQ(t.right_barrier().front(), t.right_barrier().back());
  ASSERT_EQ(t.checkpoints().size(), 14u);

  // Arc length along the sampled centreline between consecutive gate midpoints.
  std::vector<Vec2> mid;
  for (std::size_t i = 0; i < t.left_barrier().size(); ++i) {
    mid.push_back((t.left_barrier()[i] + t.right_barrier()[i]) * 0.5);
  }
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < mid.size(); ++i) cum.push_back(cum.back() + norm(mid[i] - mid[i - 1]));
  const auto arc_position = [&](Vec2 p) {
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t i = 0; i + 1 < mid.size(); ++i) {
      const double d = testing::oracle_point_segment(p, mid[i], mid[i + 1]);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    return cum[best] + norm(p - mid[best]);
  };
  std::vector<double> s;
  for (const auto& g : t.checkpoints()) s.push_back(arc_position((g.p0 + g.p1) * 0.5));
  const double total = cum.back();
  for (int i = 0; i < 14; ++i) {
    double gap = s[(i + 1) % 14] - s[i];
    if (gap < 0) gap += total;
    EXPECT_NEAR(gap, total / 14.0, 0.05) << "gate " << char('A' + i);
  }
}

TEST(TrackGen, MiniOasisHasTheFeatureMix) {
  const Track t = generate_track(TrackKind::kMiniOasis);
  std::vector<Vec2> mid;
  for (std::size_t i = 0; i + 1 < t.left_barrier().size(); ++i) {
    mid.push_back((t.left_barrier()[i] + t.right_barrier()[i]) * 0.5);
  }
  const std::size_t n = mid.size();
  // Signed curvature per vertex from the turn between adjacent chords.
  struct Run {
    int cls;  // 0 straight, otherwise sign of turn
    double radius_sum{0}, length{0}, turn{0};
    int count{0};
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = mid[(i + n - 1) % n], b = mid[i], c = mid[(i + 1) % n];
    const double h1 = std::atan2(b.y - a.y, b.x - a.x), h2 = std::atan2(c.y - b.y, c.x - b.x);
    const double dh = std::remainder(h2 - h1, 2 * kPi);
    const double ds = 0.5 * (norm(b - a) + norm(c - b));
    const double kappa = dh / ds;
    const int cls = std::abs(kappa) < 1e-4 ? 0 : (kappa > 0 ? 1 : -1);
    const double radius = cls ? 1.0 / std::abs(kappa) : 0.0;
    const bool same = !runs.empty() && runs.back().cls == cls &&
                      (cls == 0 || std::abs(radius - runs.back().radius_sum / runs.back().count) < 0.05 * radius);
    if (!same) runs.push_back({cls});
    auto& r = runs.back();
    r.radius_sum += radius;
    r.length += ds;
    r.turn += dh;
    ++r.count;
  }
  int large = 0, sharp = 0, long_straight = 0;
  for (const auto& r : runs) {
    if (r.cls == 0) {
      if (r.length >= 150.0) ++long_straight;
      continue;
    }
    const double radius = r.radius_sum / r.count;
    const double turn_deg = std::abs(r.turn) * 180.0 / kPi;
    if (turn_deg < 10.0) continue;
    if (radius >= 60.0 && turn_deg >= 60.0) ++large;
    if (radius <= 40.0 && turn_deg >= 45.0) ++sharp;
  }
  EXPECT_GE(large, 3);
  EXPECT_GE(sharp, 4);
  EXPECT_GE(long_straight, 1);
  EXPECT_EQ(t.checkpoints().size(), 14u);
}

TEST(TrackGen, InfeasibleDimensionsAreRejected) {
  try {
    generate_track(TrackKind::kOval, {200.0, 120.0, 300.0, 1.0});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("infeasible dimensions"), std::string::npos);
  }
  EXPECT_THROW(generate_track(TrackKind::kOval, {200.0, 120.0, 6.0, 1.0}), ValidationError);
  EXPECT_THROW(generate_track(TrackKind::kOval, {-1.0, 120.0, 12.0, 1.0}), ValidationError);
}

TEST(TrackGen, GeneratedTracksSurviveRoundTrip) {
  for (auto kind : {TrackKind::kOval, TrackKind::kMiniOasis}) {
    const Track t = generate_track(kind);
    const Track u = parse_track(track_to_text(t));
    EXPECT_EQ(t.left_barrier(), u.left_barrier());
    EXPECT_EQ(t.right_barrier(), u.right_barrier());
  }
}

TEST(Raycast, PerpendicularToCorridorWall) {
  const Track t = corridor_track();
  EXPECT_NEAR(cast_ray(t, {300.0, 6.0}, {0.0, 1.0}, 50.0), 6.0, 1e-12);
  EXPECT_NEAR(cast_ray(t, {300.0, 6.0}, {0.0, -1.0}, 50.0), 6.0, 1e-12);
}

TEST(Raycast, AlongCorridorIsCapped) {
  const Track t = corridor_track();
  EXPECT_EQ(cast_ray(t, {300.0, 6.0}, {1.0, 0.0}, 50.0), 50.0);
}

TEST(Raycast, OutsideOriginReturnsZero) {
  const Track t = corridor_track();
  EXPECT_EQ(cast_ray(t, {500.0, 56.0}, {1.0, 0.0}, 50.0), 0.0);
}

TEST(Raycast, MatchesBruteForceMarcherOnMiniOasis) {
  const Track t = generate_track(TrackKind::kMiniOasis);
  double minx = 1e300, maxx = -1e300, miny = 1e300, maxy = -1e300;
  for (const auto& p : t.left_barrier()) {
    minx = std::min(minx, p.x), maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y), maxy = std::max(maxy, p.y);
  }
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> ux(minx, maxx), uy(miny, maxy), ua(-kPi, kPi);
  double worst = 0.0;
  int poses = 0;
  while (poses < 200) {
    const Vec2 o{ux(rng), uy(rng)};
    if (!oracle_in_region(t, o)) continue;
    ++poses;
    for (int k = 0; k < 5; ++k) {
      const double a = ua(rng);
      const Vec2 d{std::cos(a), std::sin(a)};
      worst = std::max(worst, std::abs(cast_ray(t, o, d, 50.0) - testing::oracle_march(t, o, d, 50.0)));
    }
  }
  EXPECT_LT(worst, 0.01);
}

TEST(Raycast, MonotoneInMaxRange) {
  const Track t = generate_track(TrackKind::kOval);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ua(-kPi, kPi), ur(0.1, 80.0);
  const Pose2D s = t.spawn();
  for (int i = 0; i < 500; ++i) {
    const double a = ua(rng);
    const Vec2 d{std::cos(a), std::sin(a)};
    double r1 = ur(rng), r2 = ur(rng);
    if (r1 > r2) std::swap(r1, r2);
    EXPECT_EQ(cast_ray(t, s.position(), d, r1), std::min(r1, cast_ray(t, s.position(), d, r2)));
  }
}

TEST(Raycast, NonCollidingPosesSeePositiveRanges) {
  const Track t = generate_track(TrackKind::kMiniOasis);
  const VehicleParams vp;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ua(-kPi, kPi);
  int checked = 0;
  const auto& left = t.left_barrier();
  const auto& right = t.right_barrier();
  for (std::size_t i = 0; i + 1 < left.size() && checked < 2000; i += 1) {
    std::uniform_real_distribution<double> uf(0.05, 0.95);
    const Vec2 p = left[i] + (right[i] - left[i]) * uf(rng);
    const Pose2D pose{p.x, p.y, ua(rng)};
    if (collides(t, pose, vp.half_length, vp.half_width)) continue;
    ++checked;
    for (const Vec2 d : ray_directions(pose.heading)) EXPECT_GT(cast_ray(t, p, d, 50.0), 0.0);
  }
  EXPECT_GT(checked, 500);
}

TEST(GateCrossed, CleanCrossingAndMiss) {
  const Gate g{'A', {-5, 0}, {5, 0}};
  EXPECT_TRUE(gate_crossed(g, {0, -1}, {0, 1}));
  EXPECT_FALSE(gate_crossed(g, {0, 1}, {0, 2}));
}

TEST(GateCrossed, EndpointTouchCountsCollinearOverlapDoesNot) {
  const Gate g{'A', {-5, 0}, {5, 0}};
  EXPECT_TRUE(gate_crossed(g, {0, 1}, {0, 0}));    // ends on the gate
  EXPECT_TRUE(gate_crossed(g, {5, -1}, {5, 1}));   // passes the gate endpoint
  EXPECT_FALSE(gate_crossed(g, {-2, 0}, {3, 0}));  // collinear overlap
}

// Exact integer oracle: parametric intersection with rational bounds checks.
bool oracle_crossing(long long ax, long long ay, long long bx, long long by, long long px, long long py,
                     long long qx, long long qy) {
  const long long rx = qx - px, ry = qy - py;  // moving segment p -> q
  const long long ux = bx - ax, uy = by - ay;  // gate a -> b
  const auto cr = [](long long x1, long long y1, long long x2, long long y2) { return x1 * y2 - y1 * x2; };
  const long long denom = cr(rx, ry, ux, uy);
  const long long wx = ax - px, wy = ay - py;
  if (denom == 0) return false;  // parallel or collinear (or a zero-length move)
  long long s_num = cr(wx, wy, ux, uy);
  long long t_num = cr(wx, wy, rx, ry);
  long long d = denom;
  if (d < 0) {
    d = -d;
    s_num = -s_num;
    t_num = -t_num;
  }
  return s_num >= 0 && s_num <= d && t_num >= 0 && t_num <= d;
}

TEST(GateCrossed, MatchesExactOracleOnRandomIntegerSegments) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> c(-4, 4);
  int crossings = 0;
  for (int i = 0; i < 10000; ++i) {
    int ax = c(rng), ay = c(rng), bx = c(rng), by = c(rng);
    if (ax == bx && ay == by) continue;
    const int px = c(rng), py = c(rng), qx = c(rng), qy = c(rng);
    const Gate g{'A', {double(ax), double(ay)}, {double(bx), double(by)}};
    const bool expected = oracle_crossing(ax, ay, bx, by, px, py, qx, qy);
    crossings += expected;
    ASSERT_EQ(gate_crossed(g, {double(px), double(py)}, {double(qx), double(qy)}), expected)
        << "gate (" << ax << "," << ay << ")-(" << bx << "," << by << ") move (" << px << "," << py << ")-(" << qx
        << "," << qy << ")";
    ASSERT_EQ(gate_crossed(g, {double(qx), double(qy)}, {double(px), double(py)}), expected);
  }
  EXPECT_GT(crossings, 500);
}

TEST(Collides, CentredOnStraightIsClear) {
  const Track t = corridor_track();
  EXPECT_FALSE(collides(t, {300.0, 6.0, 0.0}, 2.4, 0.95));
}

TEST(Collides, HalfMetreFromWallOverlaps) {
  const Track t = corridor_track();
  EXPECT_TRUE(collides(t, {300.0, 0.5, 0.0}, 2.4, 0.95));
  EXPECT_TRUE(collides(t, {300.0, 11.5, 0.0}, 2.4, 0.95));
}

TEST(Collides, MatchesBoundarySamplingOracle) {
  const Track t = ring_track(64);
  const double hl = 2.4, hw = 0.95;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ur(46.0, 66.0), ua(-kPi, kPi);
  const double perimeter = 4 * (hl + hw);
  const int samples = static_cast<int>(std::ceil(perimeter / 0.01));
  int hits = 0, compared = 0;
  for (int i = 0; i < 10000; ++i) {
    const double r = ur(rng), a = ua(rng);
    const Pose2D pose{r * std::cos(a), r * std::sin(a), ua(rng)};
    const auto corners = footprint_corners(pose, hl, hw);
    // Skip poses whose boundary lies within the sampling resolution of a wall.
    double clearance = 1e300;
    for (int k = 0; k < 4; ++k) {
      const Vec2 p = corners[k], q = corners[(k + 1) % 4];
      clearance = std::min(clearance, testing::oracle_barrier_distance(t, p));
      for (const auto* line : {&t.left_barrier(), &t.right_barrier()}) {
        for (const auto& v : *line) clearance = std::min(clearance, testing::oracle_point_segment(v, p, q));
      }
    }
    bool outside = false;
    for (int s = 0; s < samples && !outside; ++s) {
      const double u = perimeter * s / samples;
      double along = u;
      int edge = 0;
      const double lens[4] = {2 * hw, 2 * hl, 2 * hw, 2 * hl};
      while (along > lens[edge]) along -= lens[edge++];
      const Vec2 p = corners[edge], q = corners[(edge + 1) % 4];
      const Vec2 x = p + (q - p) * (along / lens[edge]);
      outside = !oracle_in_region(t, x);
    }
    if (clearance < 0.01 && !outside) continue;
    ++compared;
    hits += outside;
    ASSERT_EQ(collides(t, pose, hl, hw), outside) << "pose " << pose.x << "," << pose.y << "," << pose.heading;
  }
  EXPECT_GT(compared, 9000);
  EXPECT_GT(hits, 1000);
  EXPECT_LT(hits, compared - 1000);
}

TEST(Pose, HeadingNormalization) {
  EXPECT_DOUBLE_EQ(normalize_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(normalize_angle(-kPi), kPi);
  EXPECT_NEAR(normalize_angle(3 * kPi / 2), -kPi / 2, 1e-15);
  EXPECT_NEAR(normalize_angle(7.0), 7.0 - 2 * kPi, 1e-15);
  auto doc = track_json(corridor_track());
  doc["spawn"]["heading"] = 2 * kPi + 0.25;
  EXPECT_NEAR(parse_track(doc.dump()).spawn().heading, 0.25, 1e-12);
}

}  // namespace
}  // namespace racelab
