#include "rdm/grid.hpp"

#include <cmath>
#include <string>

namespace rdm {

SegmentedSequence segment(const Tensor& sequence, int L, PadMode pad_mode, int label) {
  const int64_t F = sequence.rows();
  const int64_t D = sequence.cols();
  if (L < 1 || F < L)
    throw std::invalid_argument("segment: requires F >= L >= 1, got F=" + std::to_string(F) +
                                " L=" + std::to_string(L));

  int64_t padded = F;
  if (F % L != 0) {
    if (pad_mode == PadMode::kStrict)
      throw std::invalid_argument("segment: " + std::to_string(L) + " does not divide " + std::to_string(F) +
                                  " frames in strict mode");
    padded = ((F + L - 1) / L) * L;
  }
  const int64_t S = padded / L;

  SegmentedSequence out;
  out.L = L;
  out.S = static_cast<int>(S);
  out.D = static_cast<int>(D);
  out.label = label;
  out.segments.reserve(L);
  for (int i = 0; i < L; ++i) {
    Tensor seg = Tensor::zeros(S, D);
    for (int64_t r = 0; r < S; ++r) {
      const int64_t src = std::min<int64_t>(i * S + r, F - 1);  // repeat last frame past F
      for (int64_t c = 0; c < D; ++c) seg.at(r, c) = sequence(src, c);
    }
    out.segments.push_back(seg);
  }
  return out;
}

Tensor diffuse_only(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule) {
  if (t < 0 || t > schedule.T)
    throw std::invalid_argument("diffuse_only: t=" + std::to_string(t) + " outside [0, " +
                                std::to_string(schedule.T) + "]");
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols())
    throw std::invalid_argument("diffuse_only: x0 and eps shapes differ");
  const double ab = schedule.alpha_bar(t);
  return add(scale(x0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

GridSample grid_noisy_sample(const Tensor& x00, int i, int t, const Tensor& eps, const FlowModel& flow,
                             const Tensor& cond_embedding, const NoiseSchedule& schedule, Rng* inflate_rng) {
  if (i < 0) throw std::invalid_argument("grid_noisy_sample: i must be >= 0");
  GridSample out;
  out.ctx = flow.make_context(cond_embedding);
  Tensor x0t = diffuse_only(x00, t, eps, schedule);
  auto [value, logdet] = flow.apply_n(x0t, out.ctx, i, inflate_rng);
  out.value = value;
  out.logdet = logdet;
  return out;
}

}  // namespace rdm
