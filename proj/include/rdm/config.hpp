#pragma once

#include <string>
#include <vector>

#include "rdm/model.hpp"
#include "rdm/sampler.hpp"
#include "rdm/training.hpp"

namespace rdm {

struct DataParams {
  std::string generator = "lissajous";  // lissajous | damped
  int n_train = 2048;
  int n_test = 256;
  int frames = 56;
  int dims = 4;
  int labels = 4;
  uint64_t seed = 7;
  double amplitude = 1.0;
  std::string export_csv;  // optional CSV dump path for cmd_gen
};

struct Paths {
  std::string dataset;
  std::string checkpoint;
  std::string out;      // command output file
  std::string metrics;  // training metrics CSV
};

// Full run configuration: flat key=value file with section prefixes
// (data., model., flow., denoiser., train., sampler., eval., bench.,
// paths.), command-line overrides applied afterwards. Unknown keys are
// rejected. The README documents the whole key table.
struct RunConfig {
  DataParams data;
  TrainConfig train;
  SamplerPlan plan;
  int sample_count = 16;
  int sample_label = 0;
  int eval_samples = 256;
  int bench_reps = 5;
  std::vector<int> bench_L{1, 4, 7};
  bool resume = false;
  Paths paths;

  // model hyperparameters; segment geometry (S, D) is derived from the
  // dataset at train time
  int model_L = 4;
  int model_T = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int flow_blocks = 6;
  int flow_hidden = 32;
  int flow_context = 64;
  double flow_clamp = 0.1;
  double flow_sigma_inf = 0.01;
  int denoiser_hidden = 128;
  int denoiser_depth = 3;
  int denoiser_encode_width = 32;
  bool denoiser_attention = false;
  int denoiser_attn_dim = 32;

  // Assembles the model config once segment geometry is known.
  ModelConfig model_config(int seg_frames, int feature_dim, int num_labels) const;
};

// Applies one "key=value" assignment; throws std::invalid_argument on
// unknown keys or unparsable values.
void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value);

// Parses a config file (empty path = defaults) then the overrides in order.
RunConfig parse_run_config(const std::string& path, const std::vector<std::string>& overrides);

// Canonical key=value dump of the fully resolved configuration.
std::string resolved_config(const RunConfig& cfg);

}  // namespace rdm
