#include <cmath>
#include <cstring>

#include "doctest.h"
#include "oracles.hpp"
#include "rdm/cli.hpp"
#include "rdm/training.hpp"

using namespace rdm;

namespace {

ModelConfig tiny_model_cfg(int L = 2, int T = 20) {
  ModelConfig mc;
  mc.L = L;
  mc.num_labels = 2;
  mc.T = T;
  mc.beta_start = 1e-3;
  mc.beta_end = 0.05;
  mc.flow = {2, 2, 8, 6, -0.1, 0.1, 0.0};
  mc.denoiser = {4, 2, 16, 3, 4, 6, false, 4};
  return mc;
}

std::vector<SegmentedSequence> make_batch(int n, const ModelConfig& mc, Rng& rng) {
  std::vector<SegmentedSequence> out;
  for (int b = 0; b < n; ++b) {
    Tensor seq = randn(rng, mc.L * mc.denoiser.seg_frames, mc.denoiser.feature_dim, 0.7);
    out.push_back(segment(seq, mc.L, PadMode::kStrict, b % mc.num_labels));
  }
  return out;
}

}  // namespace

TEST_CASE("weight_w: uniform is 1, snr matches the closed form") {
  NoiseSchedule sched = linear_schedule(1000, 1e-4, 0.02);
  CHECK(weight_w(1, WeightMode::kUniform, sched) == 1.0);
  CHECK(weight_w(777, WeightMode::kUniform, sched) == 1.0);

  // beta_1^2 / (2 sigma^2 alpha_1 (1 - ab_1)) with sigma^2 = beta_1
  // = 1e-4 / (2 * 0.9999 * 1e-4) = 0.50005...
  CHECK(weight_w(1, WeightMode::kSnr, sched) == doctest::Approx(0.500050005).epsilon(1e-9));
  for (int t = 1; t <= 1000; ++t) {
    const double w = weight_w(t, WeightMode::kSnr, sched);
    CHECK(w > 0.0);
    CHECK(std::isfinite(w));
  }
  CHECK_THROWS_AS(weight_w(0, WeightMode::kUniform, sched), std::invalid_argument);
  CHECK_THROWS_AS(weight_w(1001, WeightMode::kUniform, sched), std::invalid_argument);
}

TEST_CASE("simple_loss hand evaluations") {
  NoiseSchedule sched = linear_schedule(10, 1e-3, 0.02);
  Tensor x = Tensor::from_vec(1, 2, {0.4, -0.2});

  CHECK(simple_loss(x, x, Tensor::zeros(1, 1), 3, WeightMode::kUniform, sched).item() == 0.0);

  // mse = 2.0 exactly when every entry differs by sqrt(2)
  Tensor shifted = Tensor::from_vec(1, 2, {0.4 + std::sqrt(2.0), -0.2 + std::sqrt(2.0)});
  CHECK(simple_loss(x, shifted, Tensor::zeros(1, 1), 3, WeightMode::kUniform, sched).item() ==
        doctest::Approx(2.0).epsilon(1e-15));
  CHECK(simple_loss(x, shifted, Tensor::scalar(0.1), 3, WeightMode::kUniform, sched).item() ==
        doctest::Approx(2.0 * std::exp(-0.1)).epsilon(1e-12));
  CHECK(simple_loss(x, shifted, Tensor::scalar(0.1), 3, WeightMode::kUniform, sched).item() ==
        doctest::Approx(1.809675).epsilon(1e-6));

  CHECK_THROWS_AS(
      simple_loss(x, shifted, Tensor::scalar(std::nan("")), 3, WeightMode::kUniform, sched),
      numerical_error);
}

TEST_CASE("training descends on a fixed batch") {
  // Fixed seed, fully deterministic run; the factor-2 drop was verified on
  // this configuration once and is frozen here.
  Rng rng(101);
  ModelConfig mc = tiny_model_cfg();
  RdmModel model(mc, rng);
  std::vector<SegmentedSequence> batch;
  for (int b = 0; b < 8; ++b) {
    Tensor seq = Tensor::zeros(8, 2);
    const double phase = 0.7 * b;
    for (int f = 0; f < 8; ++f) {
      seq.at(f, 0) = std::sin(0.6 * f + phase);
      seq.at(f, 1) = std::cos(0.6 * f + phase);
    }
    batch.push_back(segment(seq, 2, PadMode::kStrict, b % 2));
  }

  TrainConfig tc;
  tc.lr_flow = 1e-3;  // small model trains faster than the full-scale defaults
  tc.lr_denoiser = 2e-3;
  tc.sigma_inf = 0.0;
  TrainerState opt(tc);

  double first = 0.0, last = 0.0;
  for (int step = 1; step <= 200; ++step) {
    const LossBreakdown bd = training_step(batch, model, opt, tc, rng);
    if (step == 1) first = bd.total;
    last = bd.total;
    CHECK(std::isfinite(bd.total));
  }
  CHECK(last < 0.5 * first);
  CHECK(opt.step == 200);
}

TEST_CASE("loss breakdown composes as documented") {
  Rng rng(102);
  ModelConfig mc = tiny_model_cfg();
  RdmModel model(mc, rng);
  std::vector<SegmentedSequence> batch = make_batch(4, mc, rng);
  TrainConfig tc;
  tc.sigma_inf = 0.0;
  tc.lambda_flow = 0.7;
  TrainerState opt(tc);
  const LossBreakdown bd = training_step(batch, model, opt, tc, rng);
  CHECK(bd.total == doctest::Approx(bd.diffusion + 0.7 * bd.flow).epsilon(1e-9));
  CHECK(bd.det_weight == doctest::Approx(1.0).epsilon(1e-12));  // identity-init flow
}

TEST_CASE("grid point draws are uniform (chi-squared)") {
  // the (t, i) protocol used by training_step, at 1e4 draws
  Rng rng(103);
  const int T = 10, L = 4, n = 10000;
  std::vector<int> t_count(T, 0), i_count(L, 0);
  for (int k = 0; k < n; ++k) {
    t_count[rng.uniform_int(1, T) - 1] += 1;
    i_count[rng.uniform_int(0, L - 1)] += 1;
  }
  double chi_t = 0.0;
  for (int c : t_count) {
    const double expect = static_cast<double>(n) / T;
    chi_t += (c - expect) * (c - expect) / expect;
  }
  double chi_i = 0.0;
  for (int c : i_count) {
    const double expect = static_cast<double>(n) / L;
    chi_i += (c - expect) * (c - expect) / expect;
  }
  CHECK(chi_t < 21.666);  // chi2(dof=9) critical value at p = 0.01
  CHECK(chi_i < 11.345);  // chi2(dof=3) critical value at p = 0.01
}

TEST_CASE("L = 1 with lambda_flow = 0 degenerates to plain DDPM bit for bit") {
  ModelConfig mc = tiny_model_cfg(/*L=*/1, /*T=*/20);

  TrainConfig tc;
  tc.lambda_flow = 0.0;
  tc.sigma_inf = 0.0;

  // losses and gradients from the recurrent path
  Rng init_a(500);
  RdmModel model_a(mc, init_a);
  Rng data_rng(7);
  std::vector<SegmentedSequence> batch = make_batch(6, mc, data_rng);

  Rng step_rng_a(901);
  model_a.flow.params().zero_grad();
  model_a.denoiser.params().zero_grad();
  model_a.cond.params().zero_grad();
  double loss_a;
  {
    Tape tape;
    Tensor total;
    for (size_t b = 0; b < batch.size(); ++b) {
      const int t = static_cast<int>(step_rng_a.uniform_int(1, mc.T));
      const int i = static_cast<int>(step_rng_a.uniform_int(0, mc.L - 1));
      Tensor eps = randn(step_rng_a, batch[b].S, batch[b].D);
      Tensor item = item_training_loss(model_a, batch[b], t, i, eps, tc, nullptr);
      total = b == 0 ? item : add(total, item);
    }
    total = scale(total, 1.0 / static_cast<double>(batch.size()));
    loss_a = total.item();
    tape.backward(total);
  }

  // reference DDPM on an identically initialized model
  Rng init_b(500);
  RdmModel model_b(mc, init_b);
  Rng step_rng_b(901);
  model_b.flow.params().zero_grad();
  model_b.denoiser.params().zero_grad();
  model_b.cond.params().zero_grad();
  double loss_b;
  {
    Tape tape;
    Tensor total = oracles::reference_ddpm_loss(model_b, batch, tc.w_mode, step_rng_b);
    loss_b = total.item();
    tape.backward(total);
  }

  CHECK(std::memcmp(&loss_a, &loss_b, sizeof(double)) == 0);
  auto grads_equal = [](const ParamStore& x, const ParamStore& y) {
    auto it = y.begin();
    for (const auto& [name, p] : x) {
      const auto& q = it->second;
      if (std::memcmp(p.grad().data(), q.grad().data(), p.grad().size() * sizeof(double)) != 0) return false;
      ++it;
    }
    return true;
  };
  CHECK(grads_equal(model_a.denoiser.params(), model_b.denoiser.params()));
  CHECK(grads_equal(model_a.cond.params(), model_b.cond.params()));
  // flow receives no gradient at all on this path
  for (const auto& [name, p] : model_a.flow.params())
    for (double g : p.grad()) CHECK(g == 0.0);
}

TEST_CASE("det weight stays inside the clamp bound") {
  Rng rng(104);
  ModelConfig mc = tiny_model_cfg(3, 10);
  RdmModel model(mc, rng);
  for (auto& [name, p] : model.flow.params())
    for (auto& v : p.values()) v = 0.2 * rng.normal();

  Tensor x00 = randn(rng, mc.denoiser.seg_frames, mc.denoiser.feature_dim);
  Tensor eps = randn(rng, mc.denoiser.seg_frames, mc.denoiser.feature_dim);
  Tensor cond = model.cond.embed(0);
  for (int i : {0, 1, 2, 3}) {
    GridSample g = grid_noisy_sample(x00, i, 5, eps, model.flow, cond, model.schedule);
    const double bound = 0.1 * mc.denoiser.seg_frames * (mc.denoiser.feature_dim / 2) *
                         mc.flow.num_blocks * i;
    const double w = std::exp(-g.logdet.item());
    CHECK(w >= std::exp(-bound) - 1e-12);
    CHECK(w <= std::exp(bound) + 1e-12);
  }
}

TEST_CASE("full training loss gradients match finite differences") {
  CHECK(rdm::cli::training_gradcheck(31415) <= 1e-4);
}

TEST_CASE("non-finite losses abort naming the grid point") {
  Rng rng(105);
  ModelConfig mc = tiny_model_cfg();
  RdmModel model(mc, rng);
  for (auto& v : model.denoiser.params().at("ff.w_out").values())
    v = std::numeric_limits<double>::infinity();
  std::vector<SegmentedSequence> batch = make_batch(1, mc, rng);
  TrainConfig tc;
  tc.sigma_inf = 0.0;
  TrainerState opt(tc);
  Rng step_rng(1);
  CHECK_THROWS_WITH_AS(training_step(batch, model, opt, tc, step_rng), doctest::Contains("grid point"),
                       numerical_error);
}

TEST_CASE("training_loss_fixed validates its inputs") {
  Rng rng(106);
  ModelConfig mc = tiny_model_cfg();
  RdmModel model(mc, rng);
  std::vector<SegmentedSequence> batch = make_batch(2, mc, rng);
  TrainConfig tc;
  CHECK_THROWS_AS(
      training_loss_fixed(model, batch, {{0, 1}}, {randn(rng, 4, 2), randn(rng, 4, 2)}, tc),
      std::invalid_argument);
  CHECK_THROWS_AS(training_loss_fixed(model, {}, {}, {}, tc), std::invalid_argument);
}
