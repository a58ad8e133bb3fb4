#pragma once

#include "racelab/race_env.hpp"

namespace racelab {

// Reactive ray-following controller used as a stand-in demonstrator. It reads
// only the observation, like the learned policy. A continuous steering demand
// (bearing of the open part of the scan plus a side-wall centering term) is
// turned into discrete -1/0/+1 commands by first-order sigma-delta modulation,
// so the command switches frequently instead of holding full lock.
struct ScriptedDriverGains {
  double heading_gain{1.0};    // demand per rad of heading error to the wall tangent
  double centering_gain{0.08};  // demand per metre of lateral offset from the midline
  double open_gain{1.0};       // demand per rad of open-direction bearing
  double open_fraction{0.92};  // rays within this fraction of the longest count as open
};

class ScriptedDriver {
 public:
  explicit ScriptedDriver(ScriptedDriverGains gains = {}) : gains_(gains) {}

  SteerAction act(const Observation& obs);
  void reset() { accumulator_ = 0.0; }

  // Steering demand in [-1, 1], + = left.
  double demand(const Observation& obs) const;
  const ScriptedDriverGains& gains() const { return gains_; }

 private:
  ScriptedDriverGains gains_;
  double accumulator_{0.0};
};

}  // namespace racelab
