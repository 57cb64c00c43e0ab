#pragma once

#include <array>
#include <optional>
#include <string>

#include "rdm/model.hpp"
#include "rdm/training.hpp"

namespace rdm {

// Checkpoint container: magic "RDMCKPT1", u64 little-endian header length,
// JSON header (config, parameter manifest, training step, rng state), then
// raw little-endian float64 blobs in manifest order. Optimizer moments are
// included so a resumed run continues exactly. Save -> load -> save is
// byte-identical.
struct CheckpointExtras {
  int64_t train_step = 0;
  std::array<uint64_t, 4> rng_state{};
  std::optional<TrainerState> trainer;
};

void save_checkpoint(const std::string& path, const RdmModel& model, const CheckpointExtras& extras);

RdmModel load_checkpoint(const std::string& path, CheckpointExtras* extras = nullptr);

}  // namespace rdm
