#include "rdm/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>

namespace rdm {

namespace {

// Jacobi rotations; fine for the small symmetric matrices used here.
void sym_eigen(const std::vector<double>& m, int n, std::vector<double>& eigvals, std::vector<double>& eigvecs) {
  std::vector<double> a = m;
  eigvecs.assign(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) eigvecs[i * n + i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a[p * n + q]) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * a[p * n + q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = eigvecs[k * n + p], vkq = eigvecs[k * n + q];
          eigvecs[k * n + p] = c * vkp - s * vkq;
          eigvecs[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  eigvals.resize(n);
  for (int i = 0; i < n; ++i) eigvals[i] = a[i * n + i];
}

std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b, int n) {
  std::vector<double> c(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double aik = a[i * n + k];
      for (int j = 0; j < n; ++j) c[i * n + j] += aik * b[k * n + j];
    }
  return c;
}

// Symmetric PSD square root via eigen-decomposition, negatives clipped at 0.
std::vector<double> sym_sqrt(const std::vector<double>& m, int n) {
  std::vector<double> vals, vecs;
  sym_eigen(m, n, vals, vecs);
  std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += vecs[i * n + k] * std::sqrt(std::max(0.0, vals[k])) * vecs[j * n + k];
      out[i * n + j] = acc;
    }
  return out;
}

}  // namespace

GaussianStats gaussian_stats(const std::vector<Tensor>& frame_sources) {
  if (frame_sources.empty()) throw std::invalid_argument("gaussian_stats: no input");
  const int D = static_cast<int>(frame_sources[0].cols());
  int64_t n = 0;
  GaussianStats st;
  st.D = D;
  st.mean.assign(D, 0.0);
  st.cov.assign(static_cast<size_t>(D) * D, 0.0);

  for (const auto& m : frame_sources) {
    if (m.cols() != D) throw std::invalid_argument("gaussian_stats: feature dimension mismatch");
    for (int64_t r = 0; r < m.rows(); ++r, ++n)
      for (int d = 0; d < D; ++d) st.mean[d] += m(r, d);
  }
  if (n < 2) throw std::invalid_argument("gaussian_stats: needs at least 2 frames");
  for (int d = 0; d < D; ++d) st.mean[d] /= static_cast<double>(n);

  for (const auto& m : frame_sources)
    for (int64_t r = 0; r < m.rows(); ++r)
      for (int a = 0; a < D; ++a) {
        const double da = m(r, a) - st.mean[a];
        for (int b = 0; b < D; ++b) st.cov[a * D + b] += da * (m(r, b) - st.mean[b]);
      }
  for (auto& v : st.cov) v /= static_cast<double>(n - 1);
  return st;
}

double frechet_gaussian(const GaussianStats& a, const GaussianStats& b) {
  if (a.D != b.D)
    throw std::invalid_argument("frechet_gaussian: dimension mismatch " + std::to_string(a.D) + " vs " +
                                std::to_string(b.D));
  const int D = a.D;
  double dist = 0.0;
  for (int d = 0; d < D; ++d) {
    const double diff = a.mean[d] - b.mean[d];
    dist += diff * diff;
  }
  double tr_a = 0.0, tr_b = 0.0;
  for (int d = 0; d < D; ++d) {
    tr_a += a.cov[d * D + d];
    tr_b += b.cov[d * D + d];
  }
  const std::vector<double> sqrt_a = sym_sqrt(a.cov, D);
  const std::vector<double> inner = matmul_sq(matmul_sq(sqrt_a, b.cov, D), sqrt_a, D);
  std::vector<double> vals, vecs;
  sym_eigen(inner, D, vals, vecs);
  double tr_sqrt = 0.0;
  for (double v : vals) tr_sqrt += std::sqrt(std::max(0.0, v));
  return dist + tr_a + tr_b - 2.0 * tr_sqrt;
}

double flow_roundtrip_residual(const FlowModel& flow, const Tensor& cond, const std::vector<Tensor>& samples,
                               int n) {
  if (samples.empty()) throw std::invalid_argument("flow_roundtrip_residual: no samples");
  double worst = 0.0;
  for (const auto& x : samples) {
    try {
      FlowContext ctx = flow.make_context(cond);
      Tensor y = flow.apply_n(x, ctx, n).first;
      Tensor back = flow.inverse_n(y, ctx, n).first;
      if (!all_finite(back)) return std::numeric_limits<double>::infinity();
      worst = std::max(worst, max_abs_diff(back, x));
    } catch (const numerical_error&) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return worst;
}

int flow_stable_depth(const FlowModel& flow, const Tensor& cond, const std::vector<Tensor>& samples, int n_max,
                      double threshold) {
  int depth = 0;
  for (int n = 1; n <= n_max; ++n) {
    if (flow_roundtrip_residual(flow, cond, samples, n) > threshold) break;
    depth = n;
  }
  return depth;
}

std::string bench_report(const std::vector<BenchRun>& runs) {
  if (runs.empty()) throw std::invalid_argument("bench_report: no runs");
  std::string out = bench_csv_header();
  out += "\n";
  char buf[128];
  for (const auto& run : runs) {
    // matching autoregressive baseline for the speedup column
    const BenchRun* baseline = nullptr;
    for (const auto& other : runs) {
      if (other.plan.mode == SamplerMode::kAutoregressive && other.plan.L_target == run.plan.L_target &&
          other.plan.n_steps == run.plan.n_steps) {
        baseline = &other;
        break;
      }
    }
    out += sampler_mode_name(run.plan.mode);
    std::snprintf(buf, sizeof(buf), ",%d,%d,%d,%lld,%lld,%.3f,%.3f", run.plan.L_target, run.plan.n_steps,
                  run.plan.t_start, static_cast<long long>(run.counter.denoiser_calls),
                  static_cast<long long>(run.counter.flow_forward_calls + run.counter.flow_inverse_calls),
                  run.wall_ms, run.wall_ms_std);
    out += buf;
    if (run.frechet.has_value()) {
      std::snprintf(buf, sizeof(buf), ",%.6g", *run.frechet);
      out += buf;
    } else {
      out += ",";
    }
    if (run.mse.has_value()) {
      std::snprintf(buf, sizeof(buf), ",%.6g", *run.mse);
      out += buf;
    } else {
      out += ",";
    }
    if (baseline != nullptr && run.counter.denoiser_calls > 0) {
      std::snprintf(buf, sizeof(buf), ",%.6g",
                    static_cast<double>(baseline->counter.denoiser_calls) /
                        static_cast<double>(run.counter.denoiser_calls));
      out += buf;
    } else {
      if (baseline == nullptr)
        std::cerr << "bench_report: no autoregressive baseline for L=" << run.plan.L_target
                  << " n_steps=" << run.plan.n_steps << ", speedup left empty\n";
      out += ",";
    }
    out += "\n";
  }
  return out;
}

}  // namespace rdm
