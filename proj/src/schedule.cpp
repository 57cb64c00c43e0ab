#include "rdm/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rdm {

NoiseSchedule linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("linear_schedule: T must be >= 1, got " + std::to_string(T));
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw std::invalid_argument("linear_schedule: requires 0 < beta_start <= beta_end < 1");

  NoiseSchedule s;
  s.T = T;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  s.posterior_sigmas.resize(T);
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double beta =
        T == 1 ? beta_start : beta_start + (beta_end - beta_start) * static_cast<double>(t - 1) / (T - 1);
    s.betas[t - 1] = beta;
    s.alphas[t - 1] = 1.0 - beta;
    prod *= s.alphas[t - 1];
    s.alpha_bars[t - 1] = prod;
    s.posterior_sigmas[t - 1] = std::sqrt(beta);
  }
  return s;
}

std::vector<int> ddim_subschedule(const NoiseSchedule& schedule, int n_steps) {
  const int T = schedule.T;
  if (n_steps < 1 || n_steps > T)
    throw std::invalid_argument("ddim_subschedule: n_steps must be in [1, T], got " + std::to_string(n_steps));
  if (n_steps == 1) return {T};

  std::vector<int> steps;
  steps.reserve(n_steps);
  const double stride = static_cast<double>(T - 1) / (n_steps - 1);
  for (int k = 0; k < n_steps; ++k) {
    // round half up = toward the larger index
    const int t = static_cast<int>(std::floor(static_cast<double>(T) - k * stride + 0.5));
    if (steps.empty() || t < steps.back()) steps.push_back(t);
  }
  if (steps.front() != T) steps.front() = T;
  if (steps.back() != 1) steps.back() = 1;
  return steps;
}

}  // namespace rdm
