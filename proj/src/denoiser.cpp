#include "rdm/denoiser.hpp"

#include <cmath>
#include <string>

namespace rdm {

Tensor encode_step(int t, int width) {
  if (t < 0) throw std::invalid_argument("encode_step: t must be >= 0");
  if (width < 2 || width % 2 != 0)
    throw std::invalid_argument("encode_step: width must be even and >= 2, got " + std::to_string(width));
  Tensor out = Tensor::zeros(1, width);
  for (int k = 0; k < width / 2; ++k) {
    const double freq = std::pow(10000.0, -2.0 * k / static_cast<double>(width));
    out.at(0, 2 * k) = std::sin(t * freq);
    out.at(0, 2 * k + 1) = std::cos(t * freq);
  }
  return out;
}

DenoiserModel::DenoiserModel(const DenoiserConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.depth < 2) throw std::invalid_argument("DenoiserModel: depth must be >= 2");
  if (cfg.encode_width % 2 != 0) throw std::invalid_argument("DenoiserModel: encode_width must be even");
  const int sd = cfg.seg_frames * cfg.feature_dim;

  if (!cfg.use_attention) {
    const int in_dim = 2 * sd + 2 * cfg.encode_width + cfg.cond_width;
    int prev = in_dim;
    for (int l = 0; l < cfg.depth - 1; ++l) {
      params_.add("ff.w" + std::to_string(l), randn(rng, prev, cfg.hidden, 1.0 / std::sqrt((double)prev)));
      params_.add("ff.b" + std::to_string(l), Tensor::zeros(1, cfg.hidden));
      prev = cfg.hidden;
    }
    params_.add("ff.w_out", randn(rng, prev, sd, 0.01 / std::sqrt((double)prev)));
    params_.add("ff.b_out", Tensor::zeros(1, sd));
  } else {
    const int tok = 2 * cfg.feature_dim + 2 * cfg.encode_width + cfg.cond_width;
    const int W = cfg.hidden, A = cfg.attn_dim;
    params_.add("attn.w_in", randn(rng, tok, W, 1.0 / std::sqrt((double)tok)));
    params_.add("attn.b_in", Tensor::zeros(1, W));
    params_.add("attn.wq", randn(rng, W, A, 1.0 / std::sqrt((double)W)));
    params_.add("attn.wk", randn(rng, W, A, 1.0 / std::sqrt((double)W)));
    params_.add("attn.wv", randn(rng, W, A, 1.0 / std::sqrt((double)W)));
    params_.add("attn.wo", randn(rng, A, W, 1.0 / std::sqrt((double)A)));
    params_.add("attn.bo", Tensor::zeros(1, W));
    params_.add("attn.w_out", randn(rng, W, cfg.feature_dim, 0.01 / std::sqrt((double)W)));
    params_.add("attn.b_out", Tensor::zeros(1, cfg.feature_dim));
  }
}

Tensor DenoiserModel::predict(const Tensor& x_it, const Tensor& x_prev, int t, int i, const Tensor& cond) const {
  if (x_it.rows() != cfg_.seg_frames || x_it.cols() != cfg_.feature_dim)
    throw std::invalid_argument("denoise_predict: x_it shape (" + std::to_string(x_it.rows()) + "," +
                                std::to_string(x_it.cols()) + ") does not match model segment shape");
  if (x_prev.rows() != x_it.rows() || x_prev.cols() != x_it.cols())
    throw std::invalid_argument("denoise_predict: x_prev shape does not match x_it");
  if (cond.rows() != 1 || cond.cols() != cfg_.cond_width)
    throw std::invalid_argument("denoise_predict: condition must be 1 x cond_width");
  return cfg_.use_attention ? predict_attention(x_it, x_prev, t, i, cond)
                            : predict_feedforward(x_it, x_prev, t, i, cond);
}

Tensor DenoiserModel::predict_feedforward(const Tensor& x_it, const Tensor& x_prev, int t, int i,
                                          const Tensor& cond) const {
  const int sd = cfg_.seg_frames * cfg_.feature_dim;
  Tensor in = concat_cols({reshape(x_it, 1, sd), reshape(x_prev, 1, sd), encode_step(t, cfg_.encode_width),
                           encode_step(i, cfg_.encode_width), cond});
  Tensor h = in;
  for (int l = 0; l < cfg_.depth - 1; ++l) {
    h = tanh(add(matmul(h, params_.at("ff.w" + std::to_string(l))), params_.at("ff.b" + std::to_string(l))));
  }
  Tensor out = add(matmul(h, params_.at("ff.w_out")), params_.at("ff.b_out"));
  return reshape(out, cfg_.seg_frames, cfg_.feature_dim);
}

Tensor DenoiserModel::predict_attention(const Tensor& x_it, const Tensor& x_prev, int t, int i,
                                        const Tensor& cond) const {
  const int64_t S = cfg_.seg_frames;
  Tensor ones = Tensor::full(S, 1, 1.0);
  Tensor enc_t = matmul(ones, encode_step(t, cfg_.encode_width));
  Tensor enc_i = matmul(ones, encode_step(i, cfg_.encode_width));
  Tensor cond_rows = matmul(ones, cond);
  Tensor tokens = concat_cols({x_it, x_prev, enc_t, enc_i, cond_rows});

  Tensor h = tanh(add(matmul(tokens, params_.at("attn.w_in")), params_.at("attn.b_in")));
  Tensor q = matmul(h, params_.at("attn.wq"));
  Tensor k = matmul(h, params_.at("attn.wk"));
  Tensor v = matmul(h, params_.at("attn.wv"));
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(cfg_.attn_dim)));
  Tensor attn = matmul(softmax_rows(scores), v);
  Tensor h2 = tanh(add(matmul(attn, params_.at("attn.wo")), params_.at("attn.bo")));
  return add(matmul(h2, params_.at("attn.w_out")), params_.at("attn.b_out"));
}

}  // namespace rdm
