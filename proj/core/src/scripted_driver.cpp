#include "racelab/scripted_driver.hpp"

#include <algorithm>
#include <numbers>

namespace racelab {

double ScriptedDriver::demand(const Observation& obs) const {
  // Hit points in the body frame (x forward, y left), metres.
  const auto hit = [&](int i) {
    const double bearing = (-90.0 + kRaySpacingDeg * i) * std::numbers::pi / 180.0;
    const double r = obs.ray(i) * 50.0;
    return Vec2{r * std::cos(bearing), r * std::sin(bearing)};
  };
  // Wall tangents from the two side rays on each flank.
  const Vec2 right_wall = hit(1) - hit(0);
  const Vec2 left_wall = hit(kNumRays - 2) - hit(kNumRays - 1);
  const double heading_error =
      0.5 * (std::atan2(right_wall.y, right_wall.x) + std::atan2(left_wall.y, left_wall.x));
  const double lateral_offset = 0.5 * (hit(0).y + hit(kNumRays - 1).y);  // + = room on the left

  double longest = 0.0;
  for (int i = 0; i < kNumRays; ++i) longest = std::max(longest, obs.ray(i));
  double bearing_sum = 0.0;
  double weight = 0.0;
  for (int i = 0; i < kNumRays; ++i) {
    if (obs.ray(i) >= gains_.open_fraction * longest) {
      const double bearing = (-90.0 + kRaySpacingDeg * i) * std::numbers::pi / 180.0;
      bearing_sum += bearing * obs.ray(i);
      weight += obs.ray(i);
    }
  }
  const double open_bearing = weight > 0.0 ? bearing_sum / weight : 0.0;  // + = left
  const double d = gains_.heading_gain * heading_error + gains_.centering_gain * lateral_offset +
                   gains_.open_gain * open_bearing;
  return std::clamp(d, -1.0, 1.0);
}

SteerAction ScriptedDriver::act(const Observation& obs) {
  accumulator_ += demand(obs);
  if (accumulator_ > 0.5) {
    accumulator_ -= 1.0;
    return SteerAction(-1);
  }
  if (accumulator_ < -0.5) {
    accumulator_ += 1.0;
    return SteerAction(1);
  }
  return SteerAction(0);
}

}  // namespace racelab
