#pragma once

#include <utility>
#include <vector>

#include "rdm/numerics.hpp"

namespace rdm {

struct FlowConfig {
  int feature_dim = 4;    // D, must be >= 2 so every mask keeps and transforms something
  int num_blocks = 6;     // K coupling blocks, mask parity alternating
  int net_hidden = 32;    // hidden width of the per-block scale/shift nets
  int context_dim = 64;   // H: recurrent hidden size == condition embedding width
  double clamp_lo = -0.1; // hardtanh limits applied to the raw log-scale
  double clamp_hi = 0.1;
  double sigma_inf = 0.01;  // conditioning-input inflation std during training
};

// Per-traversal value owned by one thread. `h` is the context vector the
// next application will consume; `cache` stores the vector each previous
// application consumed so inversion can replay the exact conditioning, and
// `logdets` the matching forward log-determinants so the inverse can report
// the exact negation.
struct FlowContext {
  Tensor cond;                 // 1 x H condition embedding
  Tensor h, c;                 // recurrent cell state, 1 x H each
  std::vector<Tensor> cache;   // context vector used by application 0..index-1
  std::vector<Tensor> logdets; // forward logdet of each application
  int index = 0;               // applications performed on this traversal
};

// Conditional affine-coupling stack with a recurrent (LSTM-cell) context.
// One "application" maps a whole segment a single temporal step forward,
// transforming each frame's D-vector independently; the context is constant
// within an application, which keeps the Jacobian triangular and the
// log-determinant an exact sum of clamped log-scales.
class FlowModel {
 public:
  FlowModel() = default;
  // Coupling output layers start at zero, so a fresh model is the identity.
  FlowModel(const FlowConfig& cfg, Rng& rng);

  const FlowConfig& config() const { return cfg_; }
  void set_sigma_inf(double v) { cfg_.sigma_inf = v; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Fresh context for one traversal: zero hidden state advanced once with a
  // zero segment summary so the condition informs the first application.
  FlowContext make_context(const Tensor& cond_embedding) const;

  // One application. Uses ctx.h as the (constant) context vector, records it
  // in ctx.cache, then advances the recurrent state with the output's pooled
  // summary. With inflate_rng set and sigma_inf > 0, a single noise draw per
  // application perturbs the tensors feeding the scale/shift nets; the
  // coupled values themselves are never inflated.
  // Throws numerical_error naming the block on non-finite intermediates.
  std::pair<Tensor, Tensor> forward(const Tensor& x, FlowContext& ctx, Rng* inflate_rng = nullptr) const;

  // Exact algebraic inverse of the application whose context vector sits at
  // ctx.cache[app_index]. Returned logdet is that of the inverse map, the
  // exact negation of the forward sum.
  std::pair<Tensor, Tensor> inverse(const Tensor& y, const FlowContext& ctx, int app_index) const;

  // n forward applications (n == 0 is the identity). Returns the segment and
  // cumulative logdet; ctx ends up holding the full cache.
  std::pair<Tensor, Tensor> apply_n(const Tensor& x, FlowContext& ctx, int n, Rng* inflate_rng = nullptr) const;

  // Inverts the last n applications recorded in ctx. Throws if the cache is
  // too short to reconstruct the contexts.
  std::pair<Tensor, Tensor> inverse_n(const Tensor& y, const FlowContext& ctx, int n) const;

  // Teacher-forced context update: advances the recurrent state with a given
  // segment without transforming anything. Used when conditioning on known
  // clean segments.
  void advance_context(FlowContext& ctx, const Tensor& segment) const { advance(ctx, segment); }

 private:
  struct NetOut {
    Tensor log_scale;  // clamped, already masked to the transformed entries
    Tensor shift;      // masked likewise
  };
  NetOut block_nets(int k, const Tensor& current, const Tensor& ctx_vec, const Tensor* inflation) const;
  void advance(FlowContext& ctx, const Tensor& segment) const;
  Tensor keep_mask(int k, int64_t frames) const;
  Tensor transform_mask(int k, int64_t frames) const;

  FlowConfig cfg_;
  ParamStore params_;
};

// x + eps with eps ~ N(0, sigma_inf^2 I); sigma_inf == 0 returns a copy.
Tensor inflate_input(const Tensor& x, double sigma_inf, Rng& rng);

// Relative error between the analytic logdet of one application on a single
// frame and log|det| of its central finite-difference Jacobian. Guarded to
// D <= 6 where the dense Jacobian is tractable.
double logdet_check(const FlowModel& flow, const FlowContext& ctx, const Tensor& frame, double fd_eps = 1e-6);

}  // namespace rdm
