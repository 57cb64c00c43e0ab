#pragma once

#include <cstdint>
#include <vector>

namespace rdm {

// Variance schedule and derived quantities. Index convention: arrays are
// stored for t = 1..T at [t-1]; alpha_bar(0) == 1 so that diffusing with
// t = 0 is the identity. Immutable after construction.
struct NoiseSchedule {
  int T = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> betas;             // beta_t, length T
  std::vector<double> alphas;            // 1 - beta_t
  std::vector<double> alpha_bars;        // prod_{s<=t} alpha_s
  std::vector<double> posterior_sigmas;  // sigma_t = sqrt(beta_t)

  double beta(int t) const { return betas.at(t - 1); }
  double alpha(int t) const { return alphas.at(t - 1); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars.at(t - 1); }
  double sigma(int t) const { return posterior_sigmas.at(t - 1); }
};

// beta_t linear from beta_start to beta_end over T steps.
// Throws std::invalid_argument on T < 1 or bounds outside 0 < start <= end < 1.
NoiseSchedule linear_schedule(int T, double beta_start, double beta_end);

// Strictly decreasing diffusion step indices from T down to 1, endpoints
// included, evenly spaced, length n_steps (round to nearest, ties toward the
// larger index). n_steps == 1 yields {T}.
std::vector<int> ddim_subschedule(const NoiseSchedule& schedule, int n_steps);

}  // namespace rdm
