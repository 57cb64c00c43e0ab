#pragma once

#include <string>
#include <vector>

#include "rdm/numerics.hpp"

namespace rdm {

struct NormStats {
  std::vector<double> mean;  // per feature dim
  std::vector<double> std;   // floored at 1e-6 to guard constant dims
};

// Labeled synthetic temporal dataset. Sequences are N tensors of F x D.
// n_train marks the train/test partition: indices [0, n_train) vs the rest.
struct SyntheticDataset {
  int N = 0;
  int F = 0;
  int D = 0;
  int num_labels = 0;
  int n_train = 0;
  std::vector<Tensor> sequences;
  std::vector<int> labels;
  std::string generator;
  uint64_t seed = 0;
  bool normalized = false;
  NormStats stats;  // populated once normalize() has run
};

// Lissajous curves: dims come in (sin, sin) pairs with a label-specific
// frequency ratio and base phase, plus per-sample phase/frequency jitter.
// Values lie in [-amplitude, amplitude]. Throws on odd D.
SyntheticDataset gen_lissajous(int n, int F, int D, int num_labels, uint64_t seed, double amplitude = 1.0);

// Exponentially damped oscillations, one (sin, cos) pair per two dims with
// label-specific damping and frequency; envelope strictly decreasing.
SyntheticDataset gen_damped_oscillator(int n, int F, int D, int num_labels, uint64_t seed,
                                       double amplitude = 1.0);

// Stats over the training split only.
NormStats compute_norm_stats(const SyntheticDataset& ds);

void normalize(SyntheticDataset& ds);    // computes train stats, applies to all
void normalize(SyntheticDataset& ds, const NormStats& stats);
void denormalize(SyntheticDataset& ds);  // exact inverse up to roundoff

// Container format: 16-byte magic, u64 little-endian header length, JSON
// header (shapes, labels, stats, version), then the float64 little-endian
// payload. Writes are atomic (temp file + rename). Corrupt or truncated
// input raises format_error naming the byte offset.
void save_dataset(const SyntheticDataset& ds, const std::string& path);
SyntheticDataset load_dataset(const std::string& path);

// One row per frame: seq_id,frame,label,d0..d{D-1}.
void export_csv(const SyntheticDataset& ds, const std::string& path);

// Temp-file + rename write, shared by everything that emits files.
void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace rdm
