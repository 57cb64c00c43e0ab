#include "rdm/training.hpp"

#include <cmath>
#include <string>

namespace rdm {

double weight_w(int t, WeightMode mode, const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.T)
    throw std::invalid_argument("weight_w: t=" + std::to_string(t) + " outside [1, T]");
  if (mode == WeightMode::kUniform) return 1.0;
  const double beta = schedule.beta(t);
  const double sigma2 = beta;  // fixed reverse variance
  return beta * beta / (2.0 * sigma2 * schedule.alpha(t) * (1.0 - schedule.alpha_bar(t)));
}

Tensor simple_loss(const Tensor& x_i0, const Tensor& x_hat, const Tensor& logdet, int t, WeightMode mode,
                   const NoiseSchedule& schedule) {
  if (logdet.numel() != 1) throw std::invalid_argument("simple_loss: logdet must be scalar");
  if (!std::isfinite(logdet.item())) throw numerical_error("simple_loss: non-finite logdet");
  Tensor det_weight = exp(scale(logdet, -1.0));
  Tensor weighted = mul(det_weight, mse(x_i0, x_hat));
  Tensor out = scale(weighted, weight_w(t, mode, schedule));
  if (!std::isfinite(out.item())) throw numerical_error("simple_loss: non-finite loss");
  return out;
}

namespace {

Tensor item_loss_impl(RdmModel& model, const SegmentedSequence& item, int t, int i, const Tensor& eps,
                      const TrainConfig& cfg, Rng* inflate, LossBreakdown* parts) {
  const NoiseSchedule& sched = model.schedule;
  Tensor cond = model.cond.embed(item.label);

  // x^i_t: noise enters at the temporal origin only, the flow transports it.
  FlowContext ctx = model.flow.make_context(cond);
  Tensor x0t = diffuse_only(item.segments[0], t, eps, sched);
  auto [x_it, logdet] = model.flow.apply_n(x0t, ctx, i, inflate);

  Tensor x_prev;
  if (i == 0) {
    x_prev = model.denoiser.zero_segment();
  } else {
    FlowContext ctx_prev = model.flow.make_context(cond);
    Tensor x0tm1 = diffuse_only(item.segments[0], t - 1, eps, sched);
    x_prev = model.flow.apply_n(x0tm1, ctx_prev, i - 1, inflate).first;
  }

  Tensor x_hat = model.denoiser.predict(x_it, x_prev, t, i, cond);
  Tensor loss = simple_loss(item.segments[i], x_hat, logdet, t, cfg.w_mode, sched);
  if (parts != nullptr) {
    parts->diffusion += loss.item();
    parts->det_weight += std::exp(-logdet.item());
  }

  if (cfg.lambda_flow > 0.0 && i >= 1) {
    // Flow supervision on the clean chain: teacher-forced context over the
    // true segments, then one application of x^{i-1}_0 against x^i_0.
    FlowContext ctx_clean = model.flow.make_context(cond);
    for (int j = 1; j < i; ++j) model.flow.advance_context(ctx_clean, item.segments[j]);
    Tensor pred = model.flow.forward(item.segments[i - 1], ctx_clean, inflate).first;
    Tensor flow_term = mse(pred, item.segments[i]);
    if (parts != nullptr) parts->flow += flow_term.item();
    loss = add(loss, scale(flow_term, cfg.lambda_flow));
  }

  if (!std::isfinite(loss.item())) throw numerical_error("loss is not finite");
  return loss;
}

void check_batch(const std::vector<SegmentedSequence>& batch) {
  if (batch.empty()) throw std::invalid_argument("training: empty batch");
  const int L = batch[0].L, S = batch[0].S, D = batch[0].D;
  for (const auto& item : batch)
    if (item.L != L || item.S != S || item.D != D)
      throw std::invalid_argument("training: batch items have mismatched (L, S, D)");
}

}  // namespace

Tensor item_training_loss(RdmModel& model, const SegmentedSequence& item, int t, int i, const Tensor& eps,
                          const TrainConfig& cfg, Rng* inflate, LossBreakdown* parts) {
  try {
    return item_loss_impl(model, item, t, i, eps, cfg, inflate, parts);
  } catch (const numerical_error& e) {
    throw numerical_error("training: non-finite loss at grid point (i=" + std::to_string(i) +
                          ", t=" + std::to_string(t) + "): " + e.what());
  }
}

LossBreakdown training_step(const std::vector<SegmentedSequence>& batch, RdmModel& model, TrainerState& opt,
                            const TrainConfig& cfg, Rng& rng) {
  check_batch(batch);
  const int L = batch[0].L, S = batch[0].S, D = batch[0].D;

  model.flow.params().zero_grad();
  model.denoiser.params().zero_grad();
  model.cond.params().zero_grad();

  Rng* inflate = cfg.sigma_inf > 0.0 ? &rng : nullptr;
  const double saved_sigma = model.flow.config().sigma_inf;
  model.flow.set_sigma_inf(cfg.sigma_inf);

  LossBreakdown bd;
  Tensor total;
  {
    Tape tape;
    for (size_t b = 0; b < batch.size(); ++b) {
      const int t = static_cast<int>(rng.uniform_int(1, model.schedule.T));
      const int i = static_cast<int>(rng.uniform_int(0, L - 1));
      Tensor eps = randn(rng, S, D);
      Tensor item_loss = item_training_loss(model, batch[b], t, i, eps, cfg, inflate, &bd);
      total = b == 0 ? item_loss : add(total, item_loss);
    }
    total = scale(total, 1.0 / static_cast<double>(batch.size()));
    tape.backward(total);
  }

  const double n = static_cast<double>(batch.size());
  bd.diffusion /= n;
  bd.det_weight /= n;
  bd.flow /= n;
  bd.total = total.item();

  adam_step(model.flow.params(), opt.flow);
  adam_step(model.denoiser.params(), opt.denoiser);
  adam_step(model.cond.params(), opt.cond);
  opt.step += 1;

  model.flow.set_sigma_inf(saved_sigma);
  return bd;
}

Tensor training_loss_fixed(RdmModel& model, const std::vector<SegmentedSequence>& batch,
                           const std::vector<GridPoint>& draws, const std::vector<Tensor>& eps_list,
                           const TrainConfig& cfg) {
  check_batch(batch);
  if (draws.size() != batch.size() || eps_list.size() != batch.size())
    throw std::invalid_argument("training_loss_fixed: draws/eps must match batch size");
  Tensor total;
  for (size_t b = 0; b < batch.size(); ++b) {
    Tensor item_loss = item_training_loss(model, batch[b], draws[b].t, draws[b].i, eps_list[b], cfg, nullptr);
    total = b == 0 ? item_loss : add(total, item_loss);
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

double training_loss_grad_check(RdmModel& model, const std::vector<SegmentedSequence>& batch,
                                const std::vector<GridPoint>& draws, const std::vector<Tensor>& eps_list,
                                const TrainConfig& cfg, double fd_eps) {
  ParamStore* stores[] = {&model.flow.params(), &model.denoiser.params(), &model.cond.params()};
  for (auto* ps : stores) ps->zero_grad();
  {
    Tape tape;
    Tensor loss = training_loss_fixed(model, batch, draws, eps_list, cfg);
    tape.backward(loss);
  }
  std::map<std::string, std::vector<double>> analytic[3];
  for (int s = 0; s < 3; ++s)
    for (auto& [name, p] : *stores[s]) analytic[s][name] = p.grad();

  auto eval = [&]() { return training_loss_fixed(model, batch, draws, eps_list, cfg).item(); };

  double max_err = 0.0;
  for (int s = 0; s < 3; ++s) {
    for (auto& [name, p] : *stores[s]) {
      double* pv = p.data();
      const auto& a = analytic[s][name];
      for (size_t e = 0; e < p.values().size(); ++e) {
        const double orig = pv[e];
        pv[e] = orig + fd_eps;
        const double fp = eval();
        pv[e] = orig - fd_eps;
        const double fm = eval();
        pv[e] = orig;
        const double fd = (fp - fm) / (2.0 * fd_eps);
        const double err = std::abs(a[e] - fd) / std::max(1.0, std::abs(a[e]));
        max_err = std::max(max_err, err);
      }
    }
  }
  return max_err;
}

}  // namespace rdm
