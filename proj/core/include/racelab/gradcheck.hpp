#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace racelab::nn {

struct GradCheckResult {
  std::string loss;
  int coordinates{0};
  double max_rel_error{0.0};
  double max_abs_error{0.0};
  bool passed{false};
};

struct GradCheckOptions {
  int coordinates{64};
  double step{1e-5};        // central-difference step h
  double tolerance{1e-4};   // on relative error
  double scale_floor{1e-6};  // denominators below this count as this
  std::uint64_t seed{7};
  int batch{16};
};

// Central finite differences against the analytic gradient for every loss the
// trainer optimises: PPO clipped surrogate, value MSE, entropy bonus, BC
// cross-entropy, GAIL BCE, ICM forward MSE, ICM inverse cross-entropy.
// Relative error = |analytic - numeric| / max(|analytic|, |numeric|, scale_floor).
std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options = {});

}  // namespace racelab::nn
