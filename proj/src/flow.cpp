#include "rdm/flow.hpp"

#include <cmath>
#include <string>

#include "rdm/condition.hpp"

namespace rdm {

namespace {

std::string blk(int k, const char* net, const char* leaf) {
  return "block" + std::to_string(k) + "." + net + "." + leaf;
}

// log|det| of a small dense matrix via LU with partial pivoting.
double log_abs_det(std::vector<double> a, int n) {
  double logdet = 0.0;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    if (std::abs(a[piv * n + col]) < 1e-300)
      throw numerical_error("logdet_check: singular finite-difference Jacobian");
    if (piv != col)
      for (int c = 0; c < n; ++c) std::swap(a[piv * n + c], a[col * n + c]);
    logdet += std::log(std::abs(a[col * n + col]));
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      for (int c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
    }
  }
  return logdet;
}

}  // namespace

CondEncoder::CondEncoder(int num_labels, int width, Rng& rng) : num_labels_(num_labels), width_(width) {
  if (num_labels < 1 || width < 1) throw std::invalid_argument("CondEncoder: bad dimensions");
  params_.add("embed", randn(rng, num_labels, width, 1.0 / std::sqrt(static_cast<double>(width))));
}

Tensor CondEncoder::embed(int label) const {
  if (label < 0 || label >= num_labels_)
    throw std::invalid_argument("CondEncoder: label " + std::to_string(label) + " out of range");
  return slice_rows(params_.at("embed"), label, label + 1);
}

FlowModel::FlowModel(const FlowConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.feature_dim < 2) throw std::invalid_argument("FlowModel: feature_dim must be >= 2");
  if (cfg.num_blocks < 1) throw std::invalid_argument("FlowModel: num_blocks must be >= 1");
  if (!(cfg.clamp_lo < cfg.clamp_hi)) throw std::invalid_argument("FlowModel: clamp_lo must be < clamp_hi");

  const int D = cfg.feature_dim, H = cfg.context_dim, W = cfg.net_hidden;
  const double in_std = 1.0 / std::sqrt(static_cast<double>(D + H));
  for (int k = 0; k < cfg.num_blocks; ++k) {
    for (const char* net : {"s", "t"}) {
      params_.add(blk(k, net, "w1"), randn(rng, D + H, W, in_std));
      params_.add(blk(k, net, "b1"), Tensor::zeros(1, W));
      params_.add(blk(k, net, "w2"), Tensor::zeros(W, D));  // identity flow at init
      params_.add(blk(k, net, "b2"), Tensor::zeros(1, D));
    }
  }
  const double lstm_std = 1.0 / std::sqrt(static_cast<double>(D + H));
  params_.add("lstm.w_ih", randn(rng, D + H, 4 * H, lstm_std));
  params_.add("lstm.w_hh", randn(rng, H, 4 * H, 1.0 / std::sqrt(static_cast<double>(H))));
  params_.add("lstm.b", Tensor::zeros(1, 4 * H));
}

Tensor FlowModel::keep_mask(int k, int64_t frames) const {
  Tensor m = Tensor::zeros(frames, cfg_.feature_dim);
  for (int64_t r = 0; r < frames; ++r)
    for (int d = 0; d < cfg_.feature_dim; ++d)
      if (d % 2 == k % 2) m.at(r, d) = 1.0;
  return m;
}

Tensor FlowModel::transform_mask(int k, int64_t frames) const {
  Tensor m = Tensor::zeros(frames, cfg_.feature_dim);
  for (int64_t r = 0; r < frames; ++r)
    for (int d = 0; d < cfg_.feature_dim; ++d)
      if (d % 2 != k % 2) m.at(r, d) = 1.0;
  return m;
}

void FlowModel::advance(FlowContext& ctx, const Tensor& segment) const {
  const int H = cfg_.context_dim;
  const int64_t S = segment.rows();
  Tensor pool = matmul(Tensor::full(1, S, 1.0 / static_cast<double>(S)), segment);  // 1 x D
  Tensor u = concat_cols({pool, ctx.cond});
  Tensor gates = add(add(matmul(u, params_.at("lstm.w_ih")), matmul(ctx.h, params_.at("lstm.w_hh"))),
                     params_.at("lstm.b"));
  Tensor gi = sigmoid(slice_cols(gates, 0, H));
  Tensor gf = sigmoid(slice_cols(gates, H, 2 * H));
  Tensor gg = tanh(slice_cols(gates, 2 * H, 3 * H));
  Tensor go = sigmoid(slice_cols(gates, 3 * H, 4 * H));
  ctx.c = add(mul(gf, ctx.c), mul(gi, gg));
  ctx.h = mul(go, tanh(ctx.c));
}

FlowContext FlowModel::make_context(const Tensor& cond_embedding) const {
  if (cond_embedding.rows() != 1 || cond_embedding.cols() != cfg_.context_dim)
    throw std::invalid_argument("make_context: condition embedding must be 1 x context_dim");
  FlowContext ctx;
  ctx.cond = cond_embedding;
  ctx.h = Tensor::zeros(1, cfg_.context_dim);
  ctx.c = Tensor::zeros(1, cfg_.context_dim);
  advance(ctx, Tensor::zeros(1, cfg_.feature_dim));
  return ctx;
}

FlowModel::NetOut FlowModel::block_nets(int k, const Tensor& current, const Tensor& ctx_vec,
                                        const Tensor* inflation) const {
  const int64_t S = current.rows();
  Tensor keep = keep_mask(k, S);
  Tensor tmask = transform_mask(k, S);
  Tensor net_in = mul(current, keep);
  if (inflation != nullptr) net_in = add(net_in, mul(*inflation, keep));
  Tensor ctx_rows = matmul(Tensor::full(S, 1, 1.0), ctx_vec);  // tile context per frame
  Tensor inp = concat_cols({net_in, ctx_rows});

  auto mlp = [&](const char* net) {
    Tensor h1 = tanh(add(matmul(inp, params_.at(blk(k, net, "w1"))), params_.at(blk(k, net, "b1"))));
    return add(matmul(h1, params_.at(blk(k, net, "w2"))), params_.at(blk(k, net, "b2")));
  };
  NetOut out;
  out.log_scale = mul(hardtanh(mlp("s"), cfg_.clamp_lo, cfg_.clamp_hi), tmask);
  out.shift = mul(mlp("t"), tmask);
  return out;
}

std::pair<Tensor, Tensor> FlowModel::forward(const Tensor& x, FlowContext& ctx, Rng* inflate_rng) const {
  if (x.cols() != cfg_.feature_dim)
    throw std::invalid_argument("flow_forward: segment has " + std::to_string(x.cols()) +
                                " features, model expects " + std::to_string(cfg_.feature_dim));
  Tensor inflation;
  const bool inflate = inflate_rng != nullptr && cfg_.sigma_inf > 0.0;
  if (inflate) inflation = randn(*inflate_rng, x.rows(), x.cols(), cfg_.sigma_inf);

  Tensor cur = x;
  std::vector<Tensor> block_logdets;
  block_logdets.reserve(cfg_.num_blocks);
  for (int k = 0; k < cfg_.num_blocks; ++k) {
    NetOut nets = block_nets(k, cur, ctx.h, inflate ? &inflation : nullptr);
    cur = add(mul(cur, exp(nets.log_scale)), nets.shift);
    if (!all_finite(cur))
      throw numerical_error("flow_forward: non-finite value after block " + std::to_string(k) +
                            " in application " + std::to_string(ctx.index));
    block_logdets.push_back(sum(nets.log_scale));
  }
  Tensor logdet = block_logdets[0];
  for (size_t k = 1; k < block_logdets.size(); ++k) logdet = add(logdet, block_logdets[k]);

  ctx.cache.push_back(ctx.h);
  ctx.logdets.push_back(logdet);
  advance(ctx, cur);
  ctx.index += 1;
  return {cur, logdet};
}

std::pair<Tensor, Tensor> FlowModel::inverse(const Tensor& y, const FlowContext& ctx, int app_index) const {
  if (app_index < 0 || app_index >= static_cast<int>(ctx.cache.size()))
    throw std::invalid_argument("flow_inverse: no cached context for application " + std::to_string(app_index));
  const Tensor& ctx_vec = ctx.cache[static_cast<size_t>(app_index)];

  Tensor cur = y;
  for (int k = cfg_.num_blocks - 1; k >= 0; --k) {
    NetOut nets = block_nets(k, cur, ctx_vec, nullptr);
    cur = mul(sub(cur, nets.shift), exp(scale(nets.log_scale, -1.0)));
    if (!all_finite(cur))
      throw numerical_error("flow_inverse: non-finite value after block " + std::to_string(k) +
                            " in application " + std::to_string(app_index));
  }
  // The inverse of the cached application has exactly the negated forward
  // log-determinant; recomputing it from the approximately recovered
  // intermediates would break the exact antisymmetry.
  return {cur, scale(ctx.logdets[static_cast<size_t>(app_index)], -1.0)};
}

std::pair<Tensor, Tensor> FlowModel::apply_n(const Tensor& x, FlowContext& ctx, int n, Rng* inflate_rng) const {
  if (n < 0) throw std::invalid_argument("flow_apply_n: n must be >= 0");
  Tensor cur = x;
  Tensor logdet = Tensor::zeros(1, 1);
  for (int step = 0; step < n; ++step) {
    auto [y, ld] = forward(cur, ctx, inflate_rng);
    cur = y;
    logdet = step == 0 ? ld : add(logdet, ld);
  }
  return {cur, logdet};
}

std::pair<Tensor, Tensor> FlowModel::inverse_n(const Tensor& y, const FlowContext& ctx, int n) const {
  if (n < 0) throw std::invalid_argument("flow_inverse_n: n must be >= 0");
  if (n > static_cast<int>(ctx.cache.size()))
    throw std::invalid_argument("flow_inverse_n: cannot reconstruct " + std::to_string(n) +
                                " contexts, cache holds " + std::to_string(ctx.cache.size()));
  if (n == 0) return {y, Tensor::zeros(1, 1)};
  Tensor cur = y;
  const int last = static_cast<int>(ctx.cache.size());
  for (int step = 0; step < n; ++step) cur = inverse(cur, ctx, last - 1 - step).first;
  // Accumulate cached forward logdets in increasing application order,
  // mirroring apply_n bit for bit, then negate.
  Tensor fwd = ctx.logdets[static_cast<size_t>(last - n)];
  for (int a = last - n + 1; a < last; ++a) fwd = add(fwd, ctx.logdets[static_cast<size_t>(a)]);
  return {cur, scale(fwd, -1.0)};
}

Tensor inflate_input(const Tensor& x, double sigma_inf, Rng& rng) {
  if (sigma_inf < 0.0) throw std::invalid_argument("inflate_input: sigma_inf must be >= 0");
  if (sigma_inf == 0.0) return x.clone();
  Tensor noise = randn(rng, x.rows(), x.cols(), sigma_inf);
  return add(x, noise);
}

double logdet_check(const FlowModel& flow, const FlowContext& ctx, const Tensor& frame, double fd_eps) {
  const int D = flow.config().feature_dim;
  if (D > 6) throw std::invalid_argument("logdet_check: feature_dim must be <= 6 for a dense Jacobian");
  if (frame.rows() != 1 || frame.cols() != D)
    throw std::invalid_argument("logdet_check: expects a single 1 x D frame");

  FlowContext base = ctx;
  auto [y0, ld] = flow.forward(frame, base, nullptr);
  (void)y0;
  const double analytic = ld.item();

  std::vector<double> jac(static_cast<size_t>(D * D));
  for (int b = 0; b < D; ++b) {
    Tensor xp = frame.clone(), xm = frame.clone();
    xp.at(0, b) += fd_eps;
    xm.at(0, b) -= fd_eps;
    FlowContext cp = ctx, cm = ctx;
    Tensor yp = flow.forward(xp, cp, nullptr).first;
    Tensor ym = flow.forward(xm, cm, nullptr).first;
    for (int a = 0; a < D; ++a) jac[a * D + b] = (yp(0, a) - ym(0, a)) / (2.0 * fd_eps);
  }
  const double fd_logdet = log_abs_det(std::move(jac), D);
  return std::abs(analytic - fd_logdet) / std::max(1.0, std::abs(analytic));
}

}  // namespace rdm
