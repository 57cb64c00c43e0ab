#pragma once

#include "rdm/numerics.hpp"

namespace rdm {

// Learned embedding table over a small discrete label set; stands in for a
// text encoder. Width matches the flow context width so the embedding can be
// fed to both the flow's recurrent cell and the denoiser input.
class CondEncoder {
 public:
  CondEncoder() = default;
  CondEncoder(int num_labels, int width, Rng& rng);

  int num_labels() const { return num_labels_; }
  int width() const { return width_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // 1 x width row of the table; gradient flows to that row only.
  Tensor embed(int label) const;

 private:
  int num_labels_ = 0;
  int width_ = 0;
  ParamStore params_;
};

}  // namespace rdm
