#include <cmath>

#include "doctest.h"
#include "rdm/grid.hpp"

using namespace rdm;

namespace {

FlowConfig flow_cfg(int D, int K) {
  FlowConfig cfg;
  cfg.feature_dim = D;
  cfg.num_blocks = K;
  cfg.net_hidden = 8;
  cfg.context_dim = 6;
  cfg.sigma_inf = 0.0;
  return cfg;
}

void set_constant_nets(FlowModel& flow, double s_val, double t_val) {
  for (int k = 0; k < flow.config().num_blocks; ++k) {
    for (const char* net : {"s", "t"}) {
      const std::string base = "block" + std::to_string(k) + "." + net + ".";
      for (auto& v : flow.params().at(base + "w1").values()) v = 0.0;
      for (auto& v : flow.params().at(base + "b1").values()) v = 0.0;
      for (auto& v : flow.params().at(base + "w2").values()) v = 0.0;
      for (auto& v : flow.params().at(base + "b2").values()) v = *net == 's' ? s_val : t_val;
    }
  }
}

}  // namespace

TEST_CASE("segment counts for the standard geometries") {
  Rng rng(1);
  Tensor seq196 = randn(rng, 196, 3);
  CHECK(segment(seq196, 4, PadMode::kStrict).S == 49);
  CHECK(segment(seq196, 7, PadMode::kStrict).S == 28);
}

TEST_CASE("segment padding repeats the last frame, strict mode rejects") {
  Rng rng(2);
  Tensor seq = randn(rng, 10, 2);
  CHECK_THROWS_AS(segment(seq, 3, PadMode::kStrict), std::invalid_argument);

  SegmentedSequence padded = segment(seq, 3, PadMode::kRepeatLast, 1);
  CHECK(padded.S == 4);
  CHECK(padded.L == 3);
  CHECK(padded.label == 1);
  // frames 10 and 11 repeat frame 9
  CHECK(padded.segments[2](2, 0) == seq(9, 0));
  CHECK(padded.segments[2](3, 0) == seq(9, 0));
  CHECK(padded.segments[2](3, 1) == seq(9, 1));

  CHECK_THROWS_AS(segment(seq, 0, PadMode::kStrict), std::invalid_argument);
  CHECK_THROWS_AS(segment(seq, 11, PadMode::kStrict), std::invalid_argument);
}

TEST_CASE("diffuse_only: t = 0 is the identity, x0 = 0 leaves scaled noise") {
  Rng rng(3);
  NoiseSchedule sched = linear_schedule(100, 1e-4, 0.02);
  Tensor x0 = randn(rng, 4, 3);
  Tensor eps = randn(rng, 4, 3);

  Tensor same = diffuse_only(x0, 0, eps, sched);
  CHECK(max_abs_diff(same, x0) == 0.0);

  Tensor zero = Tensor::zeros(4, 3);
  Tensor noise_only = diffuse_only(zero, 50, eps, sched);
  const double coef = std::sqrt(1.0 - sched.alpha_bar(50));
  for (int64_t e = 0; e < eps.numel(); ++e)
    CHECK(noise_only.data()[e] == doctest::Approx(coef * eps.data()[e]).epsilon(1e-15));

  CHECK_THROWS_AS(diffuse_only(x0, -1, eps, sched), std::invalid_argument);
  CHECK_THROWS_AS(diffuse_only(x0, 101, eps, sched), std::invalid_argument);
  CHECK_THROWS_AS(diffuse_only(x0, 5, Tensor::zeros(3, 4), sched), std::invalid_argument);
}

TEST_CASE("diffuse_only empirical mean approaches sqrt(alpha_bar) x0") {
  Rng rng(4);
  NoiseSchedule sched = linear_schedule(100, 1e-4, 0.02);
  Tensor x0 = Tensor::from_vec(1, 2, {1.5, -0.75});
  const int t = 40, n = 10000;
  double acc0 = 0.0, acc1 = 0.0;
  for (int k = 0; k < n; ++k) {
    Tensor eps = randn(rng, 1, 2);
    Tensor xt = diffuse_only(x0, t, eps, sched);
    acc0 += xt(0, 0);
    acc1 += xt(0, 1);
  }
  const double expect0 = std::sqrt(sched.alpha_bar(t)) * 1.5;
  const double expect1 = std::sqrt(sched.alpha_bar(t)) * -0.75;
  const double se = std::sqrt((1.0 - sched.alpha_bar(t)) / n);  // std of the mean
  CHECK(std::abs(acc0 / n - expect0) <= 3 * se);
  CHECK(std::abs(acc1 / n - expect1) <= 3 * se);
}

TEST_CASE("diffuse_only per-entry variance tracks 1 - alpha_bar") {
  Rng rng(5);
  NoiseSchedule sched = linear_schedule(100, 1e-4, 0.02);
  Tensor zero = Tensor::zeros(1, 1);
  for (int t : {1, 50, 100}) {
    const int n = 40000;
    double sq = 0.0;
    for (int k = 0; k < n; ++k) {
      Tensor eps = randn(rng, 1, 1);
      const double x = diffuse_only(zero, t, eps, sched).item();
      sq += x * x;
    }
    const double var = sq / n;
    const double expect = 1.0 - sched.alpha_bar(t);
    CHECK(std::abs(var - expect) / expect < 0.05);
  }
}

TEST_CASE("grid sample with i = 0 or an identity flow is plain diffusion") {
  Rng rng(6);
  NoiseSchedule sched = linear_schedule(50, 1e-3, 0.05);
  FlowModel ident(flow_cfg(4, 3), rng);  // fresh model = identity flow
  Tensor cond = randn(rng, 1, 6, 0.5);
  Tensor x00 = randn(rng, 5, 4);
  Tensor eps = randn(rng, 5, 4);

  Tensor plain = diffuse_only(x00, 20, eps, sched);
  GridSample i0 = grid_noisy_sample(x00, 0, 20, eps, ident, cond, sched);
  CHECK(max_abs_diff(i0.value, plain) == 0.0);
  CHECK(i0.logdet.item() == 0.0);

  for (int i : {1, 2, 3}) {
    GridSample gi = grid_noisy_sample(x00, i, 20, eps, ident, cond, sched);
    CHECK(max_abs_diff(gi.value, plain) == 0.0);  // independent of i
  }
}

TEST_CASE("grid sample composes diffusion with the affine coupling by hand") {
  Rng rng(7);
  NoiseSchedule sched = linear_schedule(50, 1e-3, 0.05);
  FlowModel flow(flow_cfg(2, 1), rng);
  set_constant_nets(flow, 0.05, 0.3);
  Tensor cond = randn(rng, 1, 6, 0.5);
  Tensor x00 = Tensor::from_vec(2, 2, {0.4, -1.0, 1.2, 0.8});
  Tensor eps = Tensor::from_vec(2, 2, {0.3, 0.1, -0.2, 0.5});
  const int t = 17;

  GridSample g = grid_noisy_sample(x00, 1, t, eps, flow, cond, sched);
  const double sa = std::sqrt(sched.alpha_bar(t)), se = std::sqrt(1.0 - sched.alpha_bar(t));
  for (int r = 0; r < 2; ++r) {
    const double d0 = sa * x00(r, 0) + se * eps(r, 0);
    const double d1 = sa * x00(r, 1) + se * eps(r, 1);
    CHECK(g.value(r, 0) == doctest::Approx(d0).epsilon(1e-14));  // kept feature
    CHECK(g.value(r, 1) == doctest::Approx(d1 * std::exp(0.05) + 0.3).epsilon(1e-14));
  }
  CHECK(g.logdet.item() == doctest::Approx(2 * 0.05).epsilon(1e-14));  // 2 frames, 1 entry each
  CHECK(g.ctx.index == 1);
  CHECK_THROWS_AS(grid_noisy_sample(x00, -1, t, eps, flow, cond, sched), std::invalid_argument);
}

TEST_CASE("noise shared across the temporal axis correlates the grid columns") {
  Rng rng(8);
  NoiseSchedule sched = linear_schedule(50, 1e-3, 0.05);
  FlowModel flow(flow_cfg(2, 2), rng);
  set_constant_nets(flow, 0.08, 0.1);
  Tensor cond = randn(rng, 1, 6, 0.5);
  Tensor x00 = Tensor::zeros(1, 2);
  const int t = 25, n = 4000;

  double sum0 = 0.0, sum1 = 0.0, sum00 = 0.0, sum11 = 0.0, sum01 = 0.0;
  for (int k = 0; k < n; ++k) {
    Tensor eps = randn(rng, 1, 2);  // the same draw builds both columns
    const double a = grid_noisy_sample(x00, 0, t, eps, flow, cond, sched).value(0, 0);
    const double b = grid_noisy_sample(x00, 1, t, eps, flow, cond, sched).value(0, 0);
    sum0 += a;
    sum1 += b;
    sum00 += a * a;
    sum11 += b * b;
    sum01 += a * b;
  }
  const double cov = sum01 / n - (sum0 / n) * (sum1 / n);
  const double var_a = sum00 / n - (sum0 / n) * (sum0 / n);
  const double var_b = sum11 / n - (sum1 / n) * (sum1 / n);
  CHECK(cov / std::sqrt(var_a * var_b) > 0.9);  // affine transport of the very same noise
}
