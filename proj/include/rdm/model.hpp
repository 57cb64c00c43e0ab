#pragma once

#include "rdm/condition.hpp"
#include "rdm/denoiser.hpp"
#include "rdm/flow.hpp"
#include "rdm/schedule.hpp"

namespace rdm {

// Everything needed to train or sample, bundled. Segment geometry lives in
// the denoiser config (S x D); the flow shares D and the condition encoder
// shares the context width.
struct ModelConfig {
  int L = 4;  // segments per training sequence
  int num_labels = 4;
  FlowConfig flow;
  DenoiserConfig denoiser;
  int T = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

struct RdmModel {
  ModelConfig cfg;
  FlowModel flow;
  DenoiserModel denoiser;
  CondEncoder cond;
  NoiseSchedule schedule;

  RdmModel() = default;
  RdmModel(const ModelConfig& c, Rng& rng)
      : cfg(c),
        flow(c.flow, rng),
        denoiser(c.denoiser, rng),
        cond(c.num_labels, c.flow.context_dim, rng),
        schedule(linear_schedule(c.T, c.beta_start, c.beta_end)) {}
};

}  // namespace rdm
