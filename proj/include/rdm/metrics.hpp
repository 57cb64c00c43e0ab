#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rdm/flow.hpp"
#include "rdm/sampler.hpp"

namespace rdm {

// Mean and covariance over per-frame feature vectors.
struct GaussianStats {
  int D = 0;
  std::vector<double> mean;  // D
  std::vector<double> cov;   // D x D row-major, symmetric
};

// Stats over all rows of all given matrices (unbiased covariance).
GaussianStats gaussian_stats(const std::vector<Tensor>& frame_sources);

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)), the matrix square root
// taken via symmetric eigen-decomposition of Sa^(1/2) Sb Sa^(1/2) with
// negative eigenvalues clipped at 0.
double frechet_gaussian(const GaussianStats& a, const GaussianStats& b);

// Max over samples of ||inverse_n(forward_n(x)) - x||_inf. Non-finite
// intermediates count as an infinite residual, never a crash.
double flow_roundtrip_residual(const FlowModel& flow, const Tensor& cond, const std::vector<Tensor>& samples,
                               int n);

// Largest depth n <= n_max whose residual stays <= threshold before the
// first crossing (0 if depth 1 already exceeds it).
int flow_stable_depth(const FlowModel& flow, const Tensor& cond, const std::vector<Tensor>& samples, int n_max,
                      double threshold = 1e-3);

struct BenchRun {
  SamplerPlan plan;
  CallCounter counter;
  double wall_ms = 0.0;
  double wall_ms_std = 0.0;
  std::optional<double> frechet;
  std::optional<double> mse;
};

// CSV with one row per run. speedup_vs_ar is the denoiser-call ratio against
// the autoregressive row at matching (L, n_steps); left empty (with a
// warning on stderr) when that baseline row is absent.
std::string bench_report(const std::vector<BenchRun>& runs);

inline const char* bench_csv_header() {
  return "mode,L,n_steps,t_start,denoiser_calls,flow_calls,wall_ms,wall_ms_std,frechet,mse,speedup_vs_ar";
}

}  // namespace rdm
