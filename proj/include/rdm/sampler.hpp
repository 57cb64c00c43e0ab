#pragma once

#include <functional>
#include <vector>

#include "rdm/flow.hpp"
#include "rdm/model.hpp"
#include "rdm/schedule.hpp"

namespace rdm {

enum class SamplerMode { kStaircase, kDisentangled, kAutoregressive, kVolume };

const char* sampler_mode_name(SamplerMode mode);
SamplerMode sampler_mode_from_name(const std::string& name);

struct SamplerPlan {
  SamplerMode mode = SamplerMode::kStaircase;
  int t_start = 0;    // staircase entry step; 0 = default max(1, T - 3)
  int n_steps = 0;    // 0 or T = full DDPM chain; < T activates the DDIM subschedule
  int L_target = 4;   // segments to emit; may exceed the trained L (rollout)
  double eta = 0.0;   // DDIM stochasticity, ignored on the full chain
  uint64_t seed = 1;
};

struct CallCounter {
  int64_t denoiser_calls = 0;
  int64_t flow_forward_calls = 0;  // whole coupling-stack applications
  int64_t flow_inverse_calls = 0;
};

// x_hat^i_0 = f(x^i_t, x^{i-1}_{t-1}, t, i). Tests inject oracles here.
using DenoiseFn = std::function<Tensor(const Tensor& x_it, const Tensor& x_prev, int t, int i)>;

DenoiseFn make_denoise_fn(const RdmModel& model, int label);

// Everything a sampling run reads; models are immutable while sampling.
struct SamplerInputs {
  const FlowModel* flow = nullptr;
  DenoiseFn denoise;
  const NoiseSchedule* schedule = nullptr;
  Tensor cond;  // 1 x context_dim embedding for flow contexts
  int S = 0;
  int D = 0;
};

SamplerInputs sampler_inputs(const RdmModel& model, int label);

struct SampleResult {
  std::vector<Tensor> segments;      // L_target clean segments
  CallCounter counter;
  std::vector<double> noise_proxy;   // per-segment mean squared frame-to-frame increment
};

// One reverse update at the temporal origin. x_hat0 is the predicted clean
// segment already mapped to the origin. Full chain (use_ddim == false):
// DDPM ancestral with sigma_t = sqrt(beta_t), no noise drawn at t == 1.
// Subschedule (use_ddim == true): DDIM t -> t_next; eta == 0 is
// deterministic, eta > 0 consumes exactly one noise draw per call.
Tensor reverse_step(const Tensor& x0_t, int t, int t_next, const Tensor& x_hat0, const NoiseSchedule& schedule,
                    Rng& rng, double eta, bool use_ddim);

// Staircase route (one new segment per reverse step):
// segment 0 starts at t = T from N(0, I); segment j >= 1 enters at chain
// position P_j = max(j, P_start + j - 1) (P_start = positions above t_start)
// by flowing the then-current neighbor state forward once. Each live segment
// keeps its origin pull-back: per step the prediction descends j inverse
// applications, the reverse update runs at the origin, and the segment is
// re-materialized with j forward applications.
// Throws std::invalid_argument before any compute if t_start cannot
// introduce every segment before the chain ends.
SampleResult staircase_sample(const SamplerInputs& in, const SamplerPlan& plan, Rng& rng);

// Segment 0 fully denoised, segments 1..L-1 rolled out by the flow alone.
SampleResult disentangled_sample(const SamplerInputs& in, const SamplerPlan& plan, Rng& rng);

// MD-x style baseline: each segment fully denoised conditioned on the
// finished clean neighbor (zeros for segment 0). No flow involvement.
SampleResult autoregressive_sample(const SamplerInputs& in, const SamplerPlan& plan, Rng& rng);

// Whole-sequence emulation: all segments denoised jointly with no temporal
// conditioning; one counted denoiser call per step covers the whole volume
// (per-call cost scales with L in reports).
SampleResult volume_sample(const SamplerInputs& in, const SamplerPlan& plan, Rng& rng);

SampleResult run_sampler(const SamplerInputs& in, const SamplerPlan& plan, Rng& rng);

// Staircase continuation past the training horizon. Fails with
// numerical_error naming the segment index if any output is non-finite.
SampleResult rollout_beyond(const SamplerInputs& in, const SamplerPlan& plan, Rng& rng);

// Closed-form call counts for a plan; instrumented counters must match
// these exactly on every configuration.
CallCounter predict_calls(const SamplerPlan& plan, const NoiseSchedule& schedule);

// mean over frames s >= 1 and dims of (x[s] - x[s-1])^2; the degradation
// observable for beyond-horizon rollout.
double frame_increment_statistic(const Tensor& segment);

}  // namespace rdm
