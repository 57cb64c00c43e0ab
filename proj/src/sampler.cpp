#include "rdm/sampler.hpp"

#include <cmath>
#include <string>

namespace rdm {

namespace {

// Chain of diffusion levels visited by a run, highest first, plus the flag
// selecting the DDIM update form.
struct Chain {
  std::vector<int> steps;
  bool use_ddim = false;
};

Chain make_chain(const SamplerPlan& plan, const NoiseSchedule& schedule) {
  Chain c;
  const int n = plan.n_steps;
  if (n == 0 || n == schedule.T) {
    c.steps.resize(schedule.T);
    for (int t = schedule.T; t >= 1; --t) c.steps[schedule.T - t] = t;
    c.use_ddim = false;
  } else {
    c.steps = ddim_subschedule(schedule, n);
    c.use_ddim = true;
  }
  return c;
}

int effective_t_start(const SamplerPlan& plan, const NoiseSchedule& schedule) {
  if (plan.t_start > 0) {
    if (plan.t_start > schedule.T)
      throw std::invalid_argument("sampler plan: t_start exceeds T");
    return plan.t_start;
  }
  return std::max(1, schedule.T - 3);
}

// Position at which segment j receives its first denoiser update.
std::vector<int> entry_positions(int L_target, int t_start, const Chain& chain) {
  int p_start = 0;
  while (p_start < static_cast<int>(chain.steps.size()) && chain.steps[p_start] > t_start) ++p_start;
  std::vector<int> pos(L_target);
  pos[0] = 0;
  for (int j = 1; j < L_target; ++j) pos[j] = std::max(j, p_start + j - 1);
  return pos;
}

}  // namespace

const char* sampler_mode_name(SamplerMode mode) {
  switch (mode) {
    case SamplerMode::kStaircase: return "staircase";
    case SamplerMode::kDisentangled: return "disentangled";
    case SamplerMode::kAutoregressive: return "autoregressive";
    case SamplerMode::kVolume: return "volume";
  }
  return "?";
}

SamplerMode sampler_mode_from_name(const std::string& name) {
  if (name == "staircase") return SamplerMode::kStaircase;
  if (name == "disentangled") return SamplerMode::kDisentangled;
  if (name == "autoregressive") return SamplerMode::kAutoregressive;
  if (name == "volume") return SamplerMode::kVolume;
  throw std::invalid_argument("unknown sampler mode '" + name + "'");
}

DenoiseFn make_denoise_fn(const RdmModel& model, int label) {
  Tensor cond = model.cond.embed(label);
  const DenoiserModel* den = &model.denoiser;
  return [den, cond](const Tensor& x_it, const Tensor& x_prev, int t, int i) {
    return den->predict(x_it, x_prev, t, i, cond);
  };
}

SamplerInputs sampler_inputs(const RdmModel& model, int label) {
  SamplerInputs in;
  in.flow = &model.flow;
  in.denoise = make_denoise_fn(model, label);
  in.schedule = &model.schedule;
  in.cond = model.cond.embed(label);
  in.S = model.cfg.denoiser.seg_frames;
  in.D = model.cfg.denoiser.feature_dim;
  return in;
}

Tensor reverse_step(const Tensor& x0_t, int t, int t_next, const Tensor& x_hat0, const NoiseSchedule& schedule,
                    Rng& rng, double eta, bool use_ddim) {
  if (t < 1 || t > schedule.T)
    throw std::invalid_argument("reverse_step: t=" + std::to_string(t) + " outside [1, T]");
  if (t_next < 0 || t_next >= t) throw std::invalid_argument("reverse_step: requires 0 <= t_next < t");
  if (x0_t.rows() != x_hat0.rows() || x0_t.cols() != x_hat0.cols())
    throw std::invalid_argument("reverse_step: x0_t and x_hat0 shapes differ");

  const double ab_t = schedule.alpha_bar(t);
  const double sa = std::sqrt(ab_t);
  const double se = std::sqrt(1.0 - ab_t);
  const size_t n = x0_t.values().size();
  Tensor out = Tensor::zeros(x0_t.rows(), x0_t.cols());
  const double* xv = x0_t.data();
  const double* xh = x_hat0.data();
  double* ov = out.data();

  if (!use_ddim) {
    // DDPM ancestral; t_next is t-1 by construction of the full chain.
    const double beta = schedule.beta(t);
    const double ia = 1.0 / std::sqrt(schedule.alpha(t));
    const double bc = beta / se;
    for (size_t e = 0; e < n; ++e) {
      const double eps_hat = (xv[e] - sa * xh[e]) / se;
      ov[e] = (xv[e] - bc * eps_hat) * ia;
    }
    if (t > 1) {
      std::vector<double> z(n);
      rng.fill_normal(z.data(), n);
      const double sigma = schedule.sigma(t);
      for (size_t e = 0; e < n; ++e) ov[e] += sigma * z[e];
    }
  } else {
    const double ab_n = schedule.alpha_bar(t_next);
    const double san = std::sqrt(ab_n);
    double sigma = 0.0;
    if (eta > 0.0 && ab_n < 1.0)
      sigma = eta * std::sqrt((1.0 - ab_n) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_n);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_n - sigma * sigma));
    for (size_t e = 0; e < n; ++e) {
      const double eps_hat = (xv[e] - sa * xh[e]) / se;
      ov[e] = san * xh[e] + dir * eps_hat;
    }
    if (eta > 0.0) {
      // one draw per call regardless of sigma, so accounting stays exact
      std::vector<double> z(n);
      rng.fill_normal(z.data(), n);
      for (size_t e = 0; e < n; ++e) ov[e] += sigma * z[e];
    }
  }
  return out;
}

SampleResult staircase_sample(const SamplerInputs& in, const SamplerPlan& plan, Rng& rng) {
  const NoiseSchedule& sched = *in.schedule;
  const Chain chain = make_chain(plan, sched);
  const int n = static_cast<int>(chain.steps.size());
  const int t_start = effective_t_start(plan, sched);
  const int L = plan.L_target;
  if (L < 1) throw std::invalid_argument("staircase plan: L_target must be >= 1");
  const std::vector<int> entry = entry_positions(L, t_start, chain);
  if (entry[L - 1] > n - 1)
    throw std::invalid_argument("staircase plan: t_start=" + std::to_string(t_start) +
                                " cannot introduce all " + std::to_string(L) +
                                " segments before the chain ends (need position " +
                                std::to_string(entry[L - 1]) + " of " + std::to_string(n) + ")");

  struct Live {
    Tensor origin;    // pull-back of the segment state to the temporal origin
    Tensor level;     // materialized x^j_t
    FlowContext ctx;  // cache of the ascent that produced `level`
  };

  SampleResult res;
  std::vector<Live> live;
  live.reserve(L);
  {
    Live seg0;
    seg0.origin = randn(rng, in.S, in.D);
    seg0.level = seg0.origin;
    seg0.ctx = in.flow != nullptr ? in.flow->make_context(in.cond) : FlowContext{};
    live.push_back(std::move(seg0));
  }
  Tensor zeros_seg = Tensor::zeros(in.S, in.D);
  int next_j = 1;

  for (int p = 0; p < n; ++p) {
    const int t = chain.steps[p];
    const int t_next = p + 1 < n ? chain.steps[p + 1] : 0;

    // Introduce the next segment by extending the neighbor's flow path once.
    if (next_j < L && entry[next_j] == p) {
      Live seg;
      Live& prev = live.back();
      FlowContext ctx = prev.ctx;
      seg.level = in.flow->forward(prev.level, ctx).first;
      res.counter.flow_forward_calls += 1;
      seg.origin = prev.origin;
      seg.ctx = std::move(ctx);
      live.push_back(std::move(seg));
      ++next_j;
    }

    for (size_t j = 0; j < live.size(); ++j) {
      const Tensor& x_prev = j == 0 ? zeros_seg : live[j - 1].level;
      Tensor x_hat = in.denoise(live[j].level, x_prev, t, static_cast<int>(j));
      res.counter.denoiser_calls += 1;
      Tensor x_hat0 = x_hat;
      if (j > 0) {
        x_hat0 = in.flow->inverse_n(x_hat, live[j].ctx, static_cast<int>(j)).first;
        res.counter.flow_inverse_calls += static_cast<int64_t>(j);
      }
      live[j].origin = reverse_step(live[j].origin, t, t_next, x_hat0, sched, rng, plan.eta, chain.use_ddim);
      if (j == 0) {
        live[j].level = live[j].origin;
      } else {
        FlowContext ctx = in.flow->make_context(in.cond);
        live[j].level = in.flow->apply_n(live[j].origin, ctx, static_cast<int>(j)).first;
        res.counter.flow_forward_calls += static_cast<int64_t>(j);
        live[j].ctx = std::move(ctx);
      }
    }
  }

  for (auto& seg : live) {
    res.segments.push_back(seg.level);
    res.noise_proxy.push_back(frame_increment_statistic(seg.level));
  }
  return res;
}

SampleResult disentangled_sample(const SamplerInputs& in, const SamplerPlan& plan, Rng& rng) {
  const NoiseSchedule& sched = *in.schedule;
  const Chain chain = make_chain(plan, sched);
  const int n = static_cast<int>(chain.steps.size());

  SampleResult res;
  Tensor zeros_seg = Tensor::zeros(in.S, in.D);
  Tensor x = randn(rng, in.S, in.D);
  for (int p = 0; p < n; ++p) {
    const int t = chain.steps[p];
    const int t_next = p + 1 < n ? chain.steps[p + 1] : 0;
    Tensor x_hat = in.denoise(x, zeros_seg, t, 0);
    res.counter.denoiser_calls += 1;
    x = reverse_step(x, t, t_next, x_hat, sched, rng, plan.eta, chain.use_ddim);
  }
  res.segments.push_back(x);
  FlowContext ctx = in.flow != nullptr ? in.flow->make_context(in.cond) : FlowContext{};
  for (int j = 1; j < plan.L_target; ++j) {
    x = in.flow->forward(x, ctx).first;
    res.counter.flow_forward_calls += 1;
    res.segments.push_back(x);
  }
  for (const auto& seg : res.segments) res.noise_proxy.push_back(frame_increment_statistic(seg));
  return res;
}

SampleResult autoregressive_sample(const SamplerInputs& in, const SamplerPlan& plan, Rng& rng) {
  const NoiseSchedule& sched = *in.schedule;
  const Chain chain = make_chain(plan, sched);
  const int n = static_cast<int>(chain.steps.size());

  SampleResult res;
  Tensor zeros_seg = Tensor::zeros(in.S, in.D);
  for (int j = 0; j < plan.L_target; ++j) {
    const Tensor& prev_clean = j == 0 ? zeros_seg : res.segments[j - 1];
    Tensor x = randn(rng, in.S, in.D);
    for (int p = 0; p < n; ++p) {
      const int t = chain.steps[p];
      const int t_next = p + 1 < n ? chain.steps[p + 1] : 0;
      Tensor x_hat = in.denoise(x, prev_clean, t, j);
      res.counter.denoiser_calls += 1;
      x = reverse_step(x, t, t_next, x_hat, sched, rng, plan.eta, chain.use_ddim);
    }
    res.segments.push_back(x);
  }
  for (const auto& seg : res.segments) res.noise_proxy.push_back(frame_increment_statistic(seg));
  return res;
}

SampleResult volume_sample(const SamplerInputs& in, const SamplerPlan& plan, Rng& rng) {
  const NoiseSchedule& sched = *in.schedule;
  const Chain chain = make_chain(plan, sched);
  const int n = static_cast<int>(chain.steps.size());

  SampleResult res;
  Tensor zeros_seg = Tensor::zeros(in.S, in.D);
  std::vector<Tensor> states;
  for (int j = 0; j < plan.L_target; ++j) states.push_back(randn(rng, in.S, in.D));
  for (int p = 0; p < n; ++p) {
    const int t = chain.steps[p];
    const int t_next = p + 1 < n ? chain.steps[p + 1] : 0;
    // One whole-volume pass: counted once, costs L denoiser evaluations.
    for (int j = 0; j < plan.L_target; ++j) {
      Tensor x_hat = in.denoise(states[j], zeros_seg, t, j);
      states[j] = reverse_step(states[j], t, t_next, x_hat, sched, rng, plan.eta, chain.use_ddim);
    }
    res.counter.denoiser_calls += 1;
  }
  res.segments = std::move(states);
  for (const auto& seg : res.segments) res.noise_proxy.push_back(frame_increment_statistic(seg));
  return res;
}

SampleResult run_sampler(const SamplerInputs& in, const SamplerPlan& plan, Rng& rng) {
  switch (plan.mode) {
    case SamplerMode::kStaircase: return staircase_sample(in, plan, rng);
    case SamplerMode::kDisentangled: return disentangled_sample(in, plan, rng);
    case SamplerMode::kAutoregressive: return autoregressive_sample(in, plan, rng);
    case SamplerMode::kVolume: return volume_sample(in, plan, rng);
  }
  throw std::invalid_argument("run_sampler: unknown mode");
}

SampleResult rollout_beyond(const SamplerInputs& in, const SamplerPlan& plan, Rng& rng) {
  SampleResult res = staircase_sample(in, plan, rng);
  for (size_t j = 0; j < res.segments.size(); ++j) {
    if (!all_finite(res.segments[j]))
      throw numerical_error("rollout_beyond: non-finite values in segment " + std::to_string(j));
  }
  return res;
}

CallCounter predict_calls(const SamplerPlan& plan, const NoiseSchedule& schedule) {
  const Chain chain = make_chain(plan, schedule);
  const int n = static_cast<int>(chain.steps.size());
  const int L = plan.L_target;
  CallCounter c;
  switch (plan.mode) {
    case SamplerMode::kStaircase: {
      const int t_start = effective_t_start(plan, schedule);
      const std::vector<int> entry = entry_positions(L, t_start, chain);
      if (L >= 1 && entry[L - 1] > n - 1)
        throw std::invalid_argument("predict_calls: staircase plan cannot finish");
      for (int j = 0; j < L; ++j) {
        const int64_t updates = n - entry[j];
        c.denoiser_calls += updates;
        if (j >= 1) {
          c.flow_forward_calls += 1 + static_cast<int64_t>(j) * updates;
          c.flow_inverse_calls += static_cast<int64_t>(j) * updates;
        }
      }
      break;
    }
    case SamplerMode::kDisentangled:
      c.denoiser_calls = n;
      c.flow_forward_calls = L - 1;
      break;
    case SamplerMode::kAutoregressive:
      c.denoiser_calls = static_cast<int64_t>(L) * n;
      break;
    case SamplerMode::kVolume:
      c.denoiser_calls = n;  // per-call cost scales with L in reports
      break;
  }
  return c;
}

double frame_increment_statistic(const Tensor& segment) {
  const int64_t S = segment.rows(), D = segment.cols();
  if (S < 2) return 0.0;
  double acc = 0.0;
  for (int64_t s = 1; s < S; ++s)
    for (int64_t d = 0; d < D; ++d) {
      const double diff = segment(s, d) - segment(s - 1, d);
      acc += diff * diff;
    }
  return acc / static_cast<double>((S - 1) * D);
}

}  // namespace rdm
