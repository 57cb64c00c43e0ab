#pragma once

#include <vector>

#include "rdm/flow.hpp"
#include "rdm/numerics.hpp"
#include "rdm/schedule.hpp"

namespace rdm {

// A point on the 2D lattice: temporal step i, diffusion step t.
struct GridPoint {
  int i = 0;
  int t = 0;
};

enum class PadMode { kRepeatLast, kStrict };

// A sequence of frames split into L equal segments of S frames x D features.
struct SegmentedSequence {
  int L = 0;
  int S = 0;
  int D = 0;
  int label = 0;
  std::vector<Tensor> segments;  // L tensors, each S x D
};

// Splits an F x D sequence into L segments. When L does not divide F,
// kRepeatLast pads by repeating the final frame up to the next multiple;
// kStrict rejects.
SegmentedSequence segment(const Tensor& sequence, int L, PadMode pad_mode, int label = 0);

// Closed-form forward noising at the temporal origin:
// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, with alpha_bar_0 = 1.
Tensor diffuse_only(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule);

struct GridSample {
  Tensor value;    // x^i_t
  Tensor logdet;   // cumulative logdet of the i flow applications (scalar)
  FlowContext ctx; // traversal context, cache usable for inversion
};

// x^i_t built the way training sees it: noise injected at the temporal
// origin only and transported by the flow i times.
GridSample grid_noisy_sample(const Tensor& x00, int i, int t, const Tensor& eps, const FlowModel& flow,
                             const Tensor& cond_embedding, const NoiseSchedule& schedule,
                             Rng* inflate_rng = nullptr);

}  // namespace rdm
