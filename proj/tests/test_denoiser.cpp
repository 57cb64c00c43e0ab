#include <cmath>
#include <cstring>

#include "doctest.h"
#include "rdm/denoiser.hpp"

using namespace rdm;

namespace {

DenoiserConfig small_cfg(bool attention = false) {
  DenoiserConfig cfg;
  cfg.seg_frames = 3;
  cfg.feature_dim = 2;
  cfg.hidden = 8;
  cfg.depth = 3;
  cfg.encode_width = 4;
  cfg.cond_width = 5;
  cfg.use_attention = attention;
  cfg.attn_dim = 4;
  return cfg;
}

}  // namespace

TEST_CASE("encode_step closed form") {
  Tensor zero = encode_step(0, 8);
  for (int k = 0; k < 4; ++k) {
    CHECK(zero(0, 2 * k) == 0.0);
    CHECK(zero(0, 2 * k + 1) == 1.0);
  }
  Tensor one = encode_step(1, 8);
  CHECK(one(0, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  CHECK(one(0, 1) == doctest::Approx(std::cos(1.0)).epsilon(1e-15));

  CHECK_THROWS_AS(encode_step(0, 7), std::invalid_argument);
  CHECK_THROWS_AS(encode_step(-1, 8), std::invalid_argument);
}

TEST_CASE("encodings are pairwise distinct over the step range") {
  const int width = 32, T = 1000;
  std::vector<Tensor> codes;
  codes.reserve(T + 1);
  for (int t = 0; t <= T; ++t) codes.push_back(encode_step(t, width));
  for (int a = 0; a <= T; ++a)
    for (int b = a + 1; b <= T; ++b) {
      if (max_abs_diff(codes[a], codes[b]) <= 1e-6) {
        FAIL("steps ", a, " and ", b, " collide");
      }
    }
  CHECK(true);
}

TEST_CASE("zeroed final layer yields the bias regardless of input") {
  Rng rng(1);
  DenoiserModel den(small_cfg(), rng);
  for (auto& v : den.params().at("ff.w_out").values()) v = 0.0;
  auto& bias = den.params().at("ff.b_out").values();
  for (size_t e = 0; e < bias.size(); ++e) bias[e] = 0.1 * static_cast<double>(e);

  Tensor cond = randn(rng, 1, 5);
  Tensor a = den.predict(randn(rng, 3, 2), randn(rng, 3, 2), 5, 1, cond);
  Tensor b = den.predict(randn(rng, 3, 2), randn(rng, 3, 2), 9, 0, cond);
  CHECK(max_abs_diff(a, b) == 0.0);
  CHECK(a(1, 0) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("prediction is deterministic and shape-invariant across (t, i)") {
  Rng rng(2);
  DenoiserModel den(small_cfg(), rng);
  Tensor x = randn(rng, 3, 2), prev = randn(rng, 3, 2), cond = randn(rng, 1, 5);
  Tensor first = den.predict(x, prev, 7, 2, cond);
  Tensor second = den.predict(x, prev, 7, 2, cond);
  CHECK(std::memcmp(first.data(), second.data(), sizeof(double) * first.numel()) == 0);

  for (int t : {0, 1, 50})
    for (int i : {0, 1, 5}) {
      Tensor out = den.predict(x, prev, t, i, cond);
      CHECK(out.rows() == 3);
      CHECK(out.cols() == 2);
    }
}

TEST_CASE("i = 0 zero-segment convention matches the shared constant") {
  Rng rng(3);
  DenoiserModel den(small_cfg(), rng);
  Tensor z = den.zero_segment();
  CHECK(z.rows() == 3);
  CHECK(z.cols() == 2);
  for (double v : z.values()) CHECK(v == 0.0);
}

TEST_CASE("prediction rejects mismatched shapes") {
  Rng rng(4);
  DenoiserModel den(small_cfg(), rng);
  Tensor x = randn(rng, 3, 2), cond = randn(rng, 1, 5);
  CHECK_THROWS_AS(den.predict(randn(rng, 2, 3), x, 1, 0, cond), std::invalid_argument);
  CHECK_THROWS_AS(den.predict(x, randn(rng, 4, 2), 1, 0, cond), std::invalid_argument);
  CHECK_THROWS_AS(den.predict(x, x, 1, 0, randn(rng, 1, 4)), std::invalid_argument);
}

TEST_CASE("gradients through predict + mse match finite differences") {
  Rng rng(5);
  DenoiserModel den(small_cfg(), rng);
  Tensor target = randn(rng, 3, 2);
  Tensor cond_fixed = randn(rng, 1, 5);

  // segment inputs live in the store too: gradient flows to both of them
  ParamStore inputs;
  inputs.add("x_it", randn(rng, 3, 2));
  inputs.add("x_prev", randn(rng, 3, 2));

  auto f = [&](ParamStore& ps) {
    return mse(den.predict(ps.at("x_it"), ps.at("x_prev"), 4, 1, cond_fixed), target);
  };
  CHECK(grad_check(f, inputs, 1e-5) <= 1e-4);

  // and to every model parameter
  Tensor x = randn(rng, 3, 2), prev = randn(rng, 3, 2);
  auto g = [&](ParamStore&) { return mse(den.predict(x, prev, 4, 1, cond_fixed), target); };
  CHECK(grad_check(g, den.params(), 1e-5) <= 1e-4);
}

TEST_CASE("attention variant: shapes, determinism, and gradients") {
  Rng rng(6);
  DenoiserModel den(small_cfg(true), rng);
  Tensor x = randn(rng, 3, 2), prev = randn(rng, 3, 2), cond = randn(rng, 1, 5);
  Tensor out = den.predict(x, prev, 3, 1, cond);
  CHECK(out.rows() == 3);
  CHECK(out.cols() == 2);
  Tensor again = den.predict(x, prev, 3, 1, cond);
  CHECK(std::memcmp(out.data(), again.data(), sizeof(double) * out.numel()) == 0);

  Tensor target = randn(rng, 3, 2);
  auto g = [&](ParamStore&) { return mse(den.predict(x, prev, 3, 1, cond), target); };
  CHECK(grad_check(g, den.params(), 1e-5) <= 1e-4);
}
