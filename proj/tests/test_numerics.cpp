#include <cmath>
#include <cstring>

#include "doctest.h"
#include "rdm/cli.hpp"
#include "rdm/numerics.hpp"

using namespace rdm;

TEST_CASE("matmul identity and hand-computed product") {
  Tensor eye = Tensor::from_vec(2, 2, {1, 0, 0, 1});
  Tensor a = Tensor::from_vec(2, 2, {3.5, -1.25, 0.75, 2.0});
  Tensor out = matmul(eye, a);
  for (int64_t i = 0; i < 4; ++i) CHECK(out.data()[i] == a.data()[i]);

  // hand multiplication oracle
  Tensor x = Tensor::from_vec(2, 2, {1, 2, 3, 4});
  Tensor y = Tensor::from_vec(2, 2, {5, 6, 7, 8});
  Tensor z = matmul(x, y);
  CHECK(z(0, 0) == 19);
  CHECK(z(0, 1) == 22);
  CHECK(z(1, 0) == 43);
  CHECK(z(1, 1) == 50);
}

TEST_CASE("shape mismatches name the op and shapes") {
  Tensor a = Tensor::zeros(2, 3);
  Tensor b = Tensor::zeros(3, 2);
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), std::invalid_argument);
  CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
  CHECK_THROWS_AS(mse(a, b), std::invalid_argument);
}

TEST_CASE("backward: x squared has gradient 2x") {
  ParamStore ps;
  ps.add("x", Tensor::scalar(3.0));
  ps.zero_grad();
  Tape tape;
  Tensor loss = mul(ps.at("x"), ps.at("x"));
  tape.backward(loss);
  CHECK(ps.at("x").grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor v = Tensor::zeros(2, 2).set_requires_grad(true);
  Tape tape;
  Tensor y = scale(v, 2.0);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("two-layer tanh network gradients match finite differences") {
  Rng rng(42);
  ParamStore ps;
  ps.add("w1", randn(rng, 3, 5, 0.5));
  ps.add("b1", randn(rng, 1, 5, 0.2));
  ps.add("w2", randn(rng, 5, 2, 0.5));
  ps.add("b2", randn(rng, 1, 2, 0.2));
  Tensor input = randn(rng, 4, 3);
  Tensor target = randn(rng, 4, 2);

  auto f = [&](ParamStore& p) {
    Tensor h = tanh(add(matmul(input, p.at("w1")), p.at("b1")));
    Tensor out = add(matmul(h, p.at("w2")), p.at("b2"));
    return mse(out, target);
  };
  CHECK(grad_check(f, ps, 1e-5) <= 1e-4);
}

TEST_CASE("parameter not on the tape keeps a zero gradient") {
  ParamStore ps;
  ps.add("used", Tensor::scalar(2.0));
  ps.add("unused", Tensor::scalar(5.0));
  ps.zero_grad();
  Tape tape;
  Tensor loss = mul(ps.at("used"), ps.at("used"));
  tape.backward(loss);
  CHECK(ps.at("unused").grad()[0] == 0.0);
}

TEST_CASE("forward and backward are deterministic") {
  auto run = [](std::vector<double>& grads) {
    Rng rng(7);
    ParamStore ps;
    ps.add("w", randn(rng, 4, 4, 0.3));
    Tensor x = randn(rng, 4, 4);
    ps.zero_grad();
    Tape tape;
    Tensor loss = mse(tanh(matmul(x, ps.at("w"))), x);
    tape.backward(loss);
    grads = ps.at("w").grad();
    return loss.item();
  };
  std::vector<double> g1, g2;
  const double l1 = run(g1);
  const double l2 = run(g2);
  CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("hardtanh output stays inside the bounds") {
  Rng rng(3);
  Tensor x = randn(rng, 8, 8, 5.0);
  Tensor y = hardtanh(x, -0.1, 0.1);
  for (double v : y.values()) {
    CHECK(v >= -0.1);
    CHECK(v <= 0.1);
  }
}

TEST_CASE("broadcast add reduces gradients over rows") {
  ParamStore ps;
  ps.add("bias", Tensor::from_vec(1, 2, {0.5, -0.5}));
  Tensor x = Tensor::from_vec(3, 2, {1, 2, 3, 4, 5, 6});
  auto f = [&](ParamStore& p) { return sum(add(x, p.at("bias"))); };
  CHECK(grad_check(f, ps, 1e-5) <= 1e-6);
  ps.zero_grad();
  {
    Tape tape;
    Tensor loss = sum(add(x, ps.at("bias")));
    tape.backward(loss);
  }
  CHECK(ps.at("bias").grad()[0] == doctest::Approx(3.0));
  CHECK(ps.at("bias").grad()[1] == doctest::Approx(3.0));
}

TEST_CASE("adam: zero gradients and zero learning rate leave parameters unchanged") {
  ParamStore ps;
  ps.add("p", Tensor::from_vec(1, 3, {1.0, -2.0, 3.0}));
  AdamState st;
  st.lr = 0.1;

  ps.zero_grad();
  adam_step(ps, st);
  CHECK(ps.at("p")(0, 0) == 1.0);
  CHECK(ps.at("p")(0, 1) == -2.0);
  CHECK(ps.at("p")(0, 2) == 3.0);
  CHECK(st.step_count == 1);

  AdamState zero_lr;
  zero_lr.lr = 0.0;
  ps.at("p").grad() = {10.0, -10.0, 5.0};
  adam_step(ps, zero_lr);
  CHECK(ps.at("p")(0, 0) == 1.0);
}

TEST_CASE("adam first step is -lr * sign(g) up to eps") {
  // bias-correction algebra: m_hat = g, v_hat = g^2, update = lr g/(|g|+eps)
  ParamStore ps;
  ps.add("p", Tensor::scalar(0.0));
  AdamState st;
  st.lr = 1e-3;
  ps.at("p").grad() = {0.7};
  adam_step(ps, st);
  CHECK(ps.at("p").item() == doctest::Approx(-1e-3).epsilon(1e-6));

  ParamStore ps2;
  ps2.add("p", Tensor::scalar(0.0));
  AdamState st2;
  st2.lr = 1e-3;
  ps2.at("p").grad() = {-123.0};
  adam_step(ps2, st2);
  CHECK(ps2.at("p").item() == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("adam requires gradients and clears them afterwards") {
  ParamStore ps;
  ps.add("weights", Tensor::scalar(1.0));
  AdamState st;
  CHECK_THROWS_WITH_AS(adam_step(ps, st), doctest::Contains("weights"), std::invalid_argument);

  ps.at("weights").grad() = {2.0};
  adam_step(ps, st);
  CHECK(ps.at("weights").grad()[0] == 0.0);
}

TEST_CASE("grad_check: sum of squares and eps guard") {
  ParamStore ps;
  ps.add("v", Tensor::from_vec(1, 3, {0.3, -1.2, 2.0}));
  auto f = [](ParamStore& p) { return sum(mul(p.at("v"), p.at("v"))); };
  CHECK(grad_check(f, ps, 1e-5) <= 1e-6);
  CHECK_THROWS_AS(grad_check(f, ps, 1e-2), std::invalid_argument);
  CHECK_THROWS_AS(grad_check(f, ps, 1e-8), std::invalid_argument);
}

TEST_CASE("grad_check flags a corrupted gradient path") {
  // clone() drops the gradient of one factor, halving the analytic result;
  // the detector must see a large relative error
  ParamStore ps;
  ps.add("v", Tensor::from_vec(1, 2, {1.5, -2.5}));
  auto f = [](ParamStore& p) { return sum(mul(p.at("v"), p.at("v").clone())); };
  CHECK(grad_check(f, ps, 1e-5) > 0.1);
}

TEST_CASE("forward_op dispatch covers the op vocabulary") {
  Tensor a = Tensor::from_vec(2, 2, {1, 2, 3, 4});
  Tensor b = Tensor::from_vec(2, 2, {2, 2, 2, 2});
  CHECK(forward_op(OpKind::kAdd, {a, b})(1, 1) == 6);
  CHECK(forward_op(OpKind::kMul, {a, b})(1, 0) == 6);
  CHECK(forward_op(OpKind::kSub, {a, b})(0, 0) == -1);
  CHECK(forward_op(OpKind::kSum, {a}).item() == 10);
  CHECK(forward_op(OpKind::kMean, {a}).item() == 2.5);
  OpAttrs attrs;
  attrs.c = 3.0;
  CHECK(forward_op(OpKind::kScale, {a}, attrs)(0, 1) == 6);
  attrs = OpAttrs{};
  attrs.c0 = 1;
  attrs.c1 = 2;
  Tensor sl = forward_op(OpKind::kSlice, {a}, attrs);
  CHECK(sl.rows() == 2);
  CHECK(sl.cols() == 1);
  CHECK(sl(1, 0) == 4);
  CHECK(forward_op(OpKind::kTranspose, {a})(0, 1) == 3);
  CHECK_THROWS_AS(forward_op(OpKind::kMatmul, {a}), std::invalid_argument);
}

TEST_CASE("full op vocabulary passes the gradcheck suite") {
  CHECK(rdm::cli::numerics_gradcheck(2024) <= 1e-5);
}
