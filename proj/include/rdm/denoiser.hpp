#pragma once

#include "rdm/numerics.hpp"

namespace rdm {

struct DenoiserConfig {
  int seg_frames = 14;      // S
  int feature_dim = 4;      // D
  int hidden = 128;         // W
  int depth = 3;            // weight layers; tanh between all but the last
  int encode_width = 32;    // E, sinusoidal step-encoding width (even)
  int cond_width = 64;      // condition embedding width
  bool use_attention = false;  // single-head self-attention variant
  int attn_dim = 32;
};

// Interleaved sin/cos at geometric frequencies 10000^(-2k/width).
// Entry 2k = sin(t * w_k), entry 2k+1 = cos(t * w_k). Throws on odd width.
Tensor encode_step(int t, int width);

// f_theta(x^i_t, x^{i-1}_{t-1}, t, i, condition) -> predicted clean segment.
// By convention i == 0 passes the all-zeros segment as x_prev; the samplers
// share zero_segment() below so both sides agree exactly.
class DenoiserModel {
 public:
  DenoiserModel() = default;
  DenoiserModel(const DenoiserConfig& cfg, Rng& rng);

  const DenoiserConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  Tensor predict(const Tensor& x_it, const Tensor& x_prev, int t, int i, const Tensor& cond) const;

  Tensor zero_segment() const { return Tensor::zeros(cfg_.seg_frames, cfg_.feature_dim); }

 private:
  Tensor predict_feedforward(const Tensor& x_it, const Tensor& x_prev, int t, int i, const Tensor& cond) const;
  Tensor predict_attention(const Tensor& x_it, const Tensor& x_prev, int t, int i, const Tensor& cond) const;

  DenoiserConfig cfg_;
  ParamStore params_;
};

}  // namespace rdm
