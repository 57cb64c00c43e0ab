#pragma once

#include <cstdint>
#include <vector>

#include "rdm/grid.hpp"
#include "rdm/model.hpp"

namespace rdm {

enum class WeightMode { kUniform, kSnr };

struct TrainConfig {
  double lr_flow = 1e-4;
  double lr_denoiser = 2e-4;
  int batch_size = 16;
  int epochs = 1;
  int steps = 0;  // > 0 overrides the epoch count in cmd_train
  WeightMode w_mode = WeightMode::kUniform;
  double lambda_flow = 1.0;  // auxiliary flow-supervision weight
  double sigma_inf = 0.01;
  uint64_t seed = 1;
  int replicate = 1;          // epoch-level data replication factor
  int checkpoint_every = 0;   // 0 = only at the end
};

struct LossBreakdown {
  double diffusion = 0.0;   // batch mean of w(t) exp(-logdet) mse
  double det_weight = 0.0;  // batch mean of exp(-logdet)
  double flow = 0.0;        // batch mean of the auxiliary flow term
  double total = 0.0;       // diffusion + lambda_flow * flow
};

// w(t): uniform -> 1; snr -> beta_t^2 / (2 sigma_t^2 alpha_t (1 - alpha_bar_t))
// with sigma_t^2 = beta_t.
double weight_w(int t, WeightMode mode, const NoiseSchedule& schedule);

// w(t) * exp(-logdet) * mean squared error; exp(-logdet) realizes the
// inverse flow-Jacobian determinant weight. All tensors stay on the tape.
Tensor simple_loss(const Tensor& x_i0, const Tensor& x_hat, const Tensor& logdet, int t, WeightMode mode,
                   const NoiseSchedule& schedule);

// Optimizer bundle: the flow trains at lr_flow, the denoiser and condition
// embedding at lr_denoiser.
struct TrainerState {
  AdamState flow;
  AdamState denoiser;
  AdamState cond;
  int64_t step = 0;

  explicit TrainerState(const TrainConfig& cfg) {
    flow.lr = cfg.lr_flow;
    denoiser.lr = cfg.lr_denoiser;
    cond.lr = cfg.lr_denoiser;
  }
  TrainerState() : TrainerState(TrainConfig{}) {}
};

// One joint flow+denoiser update on a batch of segmented sequences.
// Per item: draws t ~ U{1..T}, i ~ U{0..L-1} and a single noise segment,
// builds x^i_t and x^{i-1}_{t-1} by transporting origin noise through the
// flow, predicts the clean segment, and minimizes
//   w(t) exp(-logdet) ||x^i_0 - x_hat||^2 + lambda_flow ||f_phi(x^{i-1}_0) - x^i_0||^2.
// Throws numerical_error naming the grid point (i, t) on a non-finite loss.
LossBreakdown training_step(const std::vector<SegmentedSequence>& batch, RdmModel& model, TrainerState& opt,
                            const TrainConfig& cfg, Rng& rng);

// Loss of a single batch item at a fixed grid point with fixed noise;
// the exact term training_step averages. inflate == nullptr disables the
// conditioning-input inflation.
Tensor item_training_loss(RdmModel& model, const SegmentedSequence& item, int t, int i, const Tensor& eps,
                          const TrainConfig& cfg, Rng* inflate, LossBreakdown* parts = nullptr);

// Deterministic batch loss for pre-drawn (t, i) grid points and noise.
Tensor training_loss_fixed(RdmModel& model, const std::vector<SegmentedSequence>& batch,
                           const std::vector<GridPoint>& draws, const std::vector<Tensor>& eps_list,
                           const TrainConfig& cfg);

// Central finite differences of training_loss_fixed over every flow,
// denoiser, and condition-embedding parameter entry; returns the max
// relative error against the tape gradients.
double training_loss_grad_check(RdmModel& model, const std::vector<SegmentedSequence>& batch,
                                const std::vector<GridPoint>& draws, const std::vector<Tensor>& eps_list,
                                const TrainConfig& cfg, double fd_eps = 1e-5);

}  // namespace rdm
