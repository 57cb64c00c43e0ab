#include "rdm/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace rdm {

namespace {

constexpr char kMagic[16] = {'R', 'D', 'M', 'D', 'A', 'T', 'A', '1', 0, 0, 0, 0, 0, 0, 0, 0};
constexpr int kVersion = 1;
constexpr double kTwoPi = 6.283185307179586476925286766559;

// Lissajous frequency-ratio families cycled by label.
constexpr int kRatios[][2] = {{1, 2}, {3, 2}, {3, 4}, {5, 4}, {5, 6}, {2, 3}, {4, 5}, {1, 3}};
constexpr int kNumRatios = 8;

void append_u64_le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f64_le(std::string& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  append_u64_le(out, bits);
}

uint64_t read_u64_le(const std::string& bytes, size_t off) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[off + i])) << (8 * i);
  return v;
}

double read_f64_le(const std::string& bytes, size_t off) {
  const uint64_t bits = read_u64_le(bytes, off);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

SyntheticDataset gen_lissajous(int n, int F, int D, int num_labels, uint64_t seed, double amplitude) {
  if (D % 2 != 0) throw std::invalid_argument("gen_lissajous: D must be even, got " + std::to_string(D));
  if (n < 1 || F < 1 || num_labels < 1) throw std::invalid_argument("gen_lissajous: bad dimensions");

  SyntheticDataset ds;
  ds.N = n;
  ds.F = F;
  ds.D = D;
  ds.num_labels = num_labels;
  ds.n_train = n;
  ds.generator = "lissajous";
  ds.seed = seed;
  ds.labels.resize(n);
  ds.sequences.resize(n);

  Rng root(seed);
#pragma omp parallel for schedule(static)
  for (int idx = 0; idx < n; ++idx) {
    Rng rng = root.split(static_cast<uint64_t>(idx));
    const int label = static_cast<int>(rng.uniform_int(0, num_labels - 1));
    ds.labels[idx] = label;
    Tensor seq = Tensor::zeros(F, D);
    const double base_phase = kTwoPi * static_cast<double>(label) / (2.0 * num_labels);
    for (int p = 0; p < D / 2; ++p) {
      const auto& ratio = kRatios[(label + p) % kNumRatios];
      const double jitter = 1.0 + 0.02 * rng.normal();
      const double fa = ratio[0] * jitter;
      const double fb = ratio[1] * jitter;
      const double phase_a = base_phase + 0.2 * rng.normal();
      const double phase_b = 0.2 * rng.normal();
      for (int t = 0; t < F; ++t) {
        const double tau = static_cast<double>(t) / F;
        seq.at(t, 2 * p) = amplitude * std::sin(kTwoPi * fa * tau + phase_a);
        seq.at(t, 2 * p + 1) = amplitude * std::sin(kTwoPi * fb * tau + phase_b);
      }
    }
    ds.sequences[idx] = seq;
  }
  return ds;
}

SyntheticDataset gen_damped_oscillator(int n, int F, int D, int num_labels, uint64_t seed, double amplitude) {
  if (n < 1 || F < 1 || D < 1 || num_labels < 1)
    throw std::invalid_argument("gen_damped_oscillator: bad dimensions");

  SyntheticDataset ds;
  ds.N = n;
  ds.F = F;
  ds.D = D;
  ds.num_labels = num_labels;
  ds.n_train = n;
  ds.generator = "damped";
  ds.seed = seed;
  ds.labels.resize(n);
  ds.sequences.resize(n);

  Rng root(seed);
#pragma omp parallel for schedule(static)
  for (int idx = 0; idx < n; ++idx) {
    Rng rng = root.split(static_cast<uint64_t>(idx));
    const int label = static_cast<int>(rng.uniform_int(0, num_labels - 1));
    ds.labels[idx] = label;
    Tensor seq = Tensor::zeros(F, D);
    for (int p = 0; p < (D + 1) / 2; ++p) {
      const double gamma = 1.0 + 0.75 * label + 0.1 * rng.uniform();  // per unit duration
      const double omega = kTwoPi * (2.0 + label + p) * (1.0 + 0.02 * rng.normal());
      const double phase = kTwoPi * rng.uniform();
      for (int t = 0; t < F; ++t) {
        const double tau = static_cast<double>(t) / F;
        const double env = amplitude * std::exp(-gamma * tau);
        seq.at(t, 2 * p) = env * std::sin(omega * tau + phase);
        if (2 * p + 1 < D) seq.at(t, 2 * p + 1) = env * std::cos(omega * tau + phase);
      }
    }
    ds.sequences[idx] = seq;
  }
  return ds;
}

NormStats compute_norm_stats(const SyntheticDataset& ds) {
  if (ds.n_train < 1 || ds.n_train > ds.N)
    throw std::invalid_argument("compute_norm_stats: invalid train split size");
  NormStats st;
  st.mean.assign(ds.D, 0.0);
  st.std.assign(ds.D, 0.0);
  const int64_t frames = static_cast<int64_t>(ds.n_train) * ds.F;
  for (int i = 0; i < ds.n_train; ++i)
    for (int t = 0; t < ds.F; ++t)
      for (int d = 0; d < ds.D; ++d) st.mean[d] += ds.sequences[i](t, d);
  for (int d = 0; d < ds.D; ++d) st.mean[d] /= static_cast<double>(frames);
  for (int i = 0; i < ds.n_train; ++i)
    for (int t = 0; t < ds.F; ++t)
      for (int d = 0; d < ds.D; ++d) {
        const double diff = ds.sequences[i](t, d) - st.mean[d];
        st.std[d] += diff * diff;
      }
  for (int d = 0; d < ds.D; ++d) st.std[d] = std::max(std::sqrt(st.std[d] / static_cast<double>(frames)), 1e-6);
  return st;
}

void normalize(SyntheticDataset& ds, const NormStats& stats) {
  if (ds.normalized) throw std::invalid_argument("normalize: dataset is already normalized");
  for (auto& seq : ds.sequences)
    for (int t = 0; t < ds.F; ++t)
      for (int d = 0; d < ds.D; ++d) seq.at(t, d) = (seq(t, d) - stats.mean[d]) / stats.std[d];
  ds.stats = stats;
  ds.normalized = true;
}

void normalize(SyntheticDataset& ds) { normalize(ds, compute_norm_stats(ds)); }

void denormalize(SyntheticDataset& ds) {
  if (!ds.normalized) throw std::invalid_argument("denormalize: dataset is not normalized");
  for (auto& seq : ds.sequences)
    for (int t = 0; t < ds.F; ++t)
      for (int d = 0; d < ds.D; ++d) seq.at(t, d) = seq(t, d) * ds.stats.std[d] + ds.stats.mean[d];
  ds.normalized = false;
}

void save_dataset(const SyntheticDataset& ds, const std::string& path) {
  nlohmann::json h;
  h["version"] = kVersion;
  h["n"] = ds.N;
  h["frames"] = ds.F;
  h["dims"] = ds.D;
  h["num_labels"] = ds.num_labels;
  h["n_train"] = ds.n_train;
  h["labels"] = ds.labels;
  h["generator"] = ds.generator;
  h["seed"] = std::to_string(ds.seed);  // string: JSON numbers lose u64 precision
  h["normalized"] = ds.normalized;
  h["stats_mean"] = ds.stats.mean;
  h["stats_std"] = ds.stats.std;
  const std::string header = h.dump();

  std::string bytes;
  bytes.reserve(24 + header.size() + static_cast<size_t>(ds.N) * ds.F * ds.D * 8);
  bytes.append(kMagic, 16);
  append_u64_le(bytes, header.size());
  bytes.append(header);
  for (const auto& seq : ds.sequences)
    for (double v : seq.values()) append_f64_le(bytes, v);
  write_text_atomic(path, bytes);
}

SyntheticDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open dataset '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 24) throw format_error("dataset truncated at byte offset " + std::to_string(bytes.size()));
  if (std::memcmp(bytes.data(), kMagic, 16) != 0) throw format_error("bad dataset magic at byte offset 0");
  const uint64_t hlen = read_u64_le(bytes, 16);
  if (24 + hlen > bytes.size())
    throw format_error("dataset header truncated at byte offset " + std::to_string(bytes.size()));

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(24, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("dataset header is not valid JSON: ") + e.what());
  }
  const int version = h.at("version").get<int>();
  if (version != kVersion)
    throw format_error("unsupported dataset version: expected " + std::to_string(kVersion) + ", found " +
                       std::to_string(version));

  SyntheticDataset ds;
  ds.N = h.at("n").get<int>();
  ds.F = h.at("frames").get<int>();
  ds.D = h.at("dims").get<int>();
  ds.num_labels = h.at("num_labels").get<int>();
  ds.n_train = h.at("n_train").get<int>();
  ds.labels = h.at("labels").get<std::vector<int>>();
  ds.generator = h.at("generator").get<std::string>();
  ds.seed = std::stoull(h.at("seed").get<std::string>());
  ds.normalized = h.at("normalized").get<bool>();
  ds.stats.mean = h.at("stats_mean").get<std::vector<double>>();
  ds.stats.std = h.at("stats_std").get<std::vector<double>>();

  if (static_cast<int>(ds.labels.size()) != ds.N) throw format_error("dataset label count mismatch");
  const size_t payload_off = 24 + hlen;
  const size_t need = payload_off + static_cast<size_t>(ds.N) * ds.F * ds.D * 8;
  if (bytes.size() < need)
    throw format_error("dataset payload truncated at byte offset " + std::to_string(bytes.size()) +
                       ", expected " + std::to_string(need));

  size_t off = payload_off;
  ds.sequences.reserve(ds.N);
  for (int i = 0; i < ds.N; ++i) {
    Tensor seq = Tensor::zeros(ds.F, ds.D);
    for (int64_t e = 0; e < seq.numel(); ++e, off += 8) seq.data()[e] = read_f64_le(bytes, off);
    ds.sequences.push_back(seq);
  }
  return ds;
}

void export_csv(const SyntheticDataset& ds, const std::string& path) {
  std::string out = "seq_id,frame,label";
  for (int d = 0; d < ds.D; ++d) out += ",d" + std::to_string(d);
  out += "\n";
  char buf[64];
  for (int i = 0; i < ds.N; ++i) {
    for (int t = 0; t < ds.F; ++t) {
      out += std::to_string(i) + "," + std::to_string(t) + "," + std::to_string(ds.labels[i]);
      for (int d = 0; d < ds.D; ++d) {
        std::snprintf(buf, sizeof(buf), ",%.17g", ds.sequences[i](t, d));
        out += buf;
      }
      out += "\n";
    }
  }
  write_text_atomic(path, out);
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("cannot open '" + tmp + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw format_error("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw format_error("cannot rename '" + tmp + "' to '" + path + "'");
}

}  // namespace rdm
