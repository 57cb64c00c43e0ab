#include "rdm/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "rdm/data.hpp"

namespace rdm {

namespace {

constexpr char kMagic[8] = {'R', 'D', 'M', 'C', 'K', 'P', 'T', '1'};
constexpr int kVersion = 1;

void append_u64_le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t read_u64_le(const std::string& bytes, size_t off) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[off + i])) << (8 * i);
  return v;
}

void append_doubles(std::string& out, const double* p, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    uint64_t bits;
    std::memcpy(&bits, p + i, 8);
    append_u64_le(out, bits);
  }
}

void read_doubles(const std::string& bytes, size_t off, double* p, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    const uint64_t bits = read_u64_le(bytes, off + 8 * i);
    std::memcpy(p + i, &bits, 8);
  }
}

nlohmann::json config_json(const ModelConfig& c) {
  nlohmann::json j;
  j["L"] = c.L;
  j["num_labels"] = c.num_labels;
  j["T"] = c.T;
  j["beta_start"] = c.beta_start;
  j["beta_end"] = c.beta_end;
  j["flow"] = {{"feature_dim", c.flow.feature_dim}, {"num_blocks", c.flow.num_blocks},
               {"net_hidden", c.flow.net_hidden},   {"context_dim", c.flow.context_dim},
               {"clamp_lo", c.flow.clamp_lo},       {"clamp_hi", c.flow.clamp_hi},
               {"sigma_inf", c.flow.sigma_inf}};
  j["denoiser"] = {{"seg_frames", c.denoiser.seg_frames}, {"feature_dim", c.denoiser.feature_dim},
                   {"hidden", c.denoiser.hidden},         {"depth", c.denoiser.depth},
                   {"encode_width", c.denoiser.encode_width}, {"cond_width", c.denoiser.cond_width},
                   {"use_attention", c.denoiser.use_attention}, {"attn_dim", c.denoiser.attn_dim}};
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.L = j.at("L").get<int>();
  c.num_labels = j.at("num_labels").get<int>();
  c.T = j.at("T").get<int>();
  c.beta_start = j.at("beta_start").get<double>();
  c.beta_end = j.at("beta_end").get<double>();
  const auto& f = j.at("flow");
  c.flow.feature_dim = f.at("feature_dim").get<int>();
  c.flow.num_blocks = f.at("num_blocks").get<int>();
  c.flow.net_hidden = f.at("net_hidden").get<int>();
  c.flow.context_dim = f.at("context_dim").get<int>();
  c.flow.clamp_lo = f.at("clamp_lo").get<double>();
  c.flow.clamp_hi = f.at("clamp_hi").get<double>();
  c.flow.sigma_inf = f.at("sigma_inf").get<double>();
  const auto& d = j.at("denoiser");
  c.denoiser.seg_frames = d.at("seg_frames").get<int>();
  c.denoiser.feature_dim = d.at("feature_dim").get<int>();
  c.denoiser.hidden = d.at("hidden").get<int>();
  c.denoiser.depth = d.at("depth").get<int>();
  c.denoiser.encode_width = d.at("encode_width").get<int>();
  c.denoiser.cond_width = d.at("cond_width").get<int>();
  c.denoiser.use_attention = d.at("use_attention").get<bool>();
  c.denoiser.attn_dim = d.at("attn_dim").get<int>();
  return c;
}

struct BlobWriter {
  nlohmann::json manifest = nlohmann::json::array();
  std::string blobs;

  void add(const std::string& store, const std::string& name, int64_t rows, int64_t cols, const double* p) {
    manifest.push_back({{"store", store},
                        {"name", name},
                        {"rows", rows},
                        {"cols", cols},
                        {"offset", blobs.size()}});
    append_doubles(blobs, p, static_cast<size_t>(rows * cols));
  }
};

void add_store(BlobWriter& w, const std::string& store, const ParamStore& params) {
  for (const auto& [name, t] : params) w.add(store, name, t.rows(), t.cols(), t.data());
}

void add_adam(BlobWriter& w, const std::string& store, const AdamState& st, const ParamStore& params) {
  for (const auto& [name, t] : params) {
    const auto mi = st.m.find(name);
    const auto vi = st.v.find(name);
    std::vector<double> zero;
    const double* mp;
    const double* vp;
    if (mi != st.m.end() && !mi->second.empty()) {
      mp = mi->second.data();
    } else {
      zero.assign(static_cast<size_t>(t.numel()), 0.0);
      mp = zero.data();
    }
    w.add(store + ".m", name, t.rows(), t.cols(), mp);
    if (vi != st.v.end() && !vi->second.empty()) {
      vp = vi->second.data();
    } else {
      zero.assign(static_cast<size_t>(t.numel()), 0.0);
      vp = zero.data();
    }
    w.add(store + ".v", name, t.rows(), t.cols(), vp);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const RdmModel& model, const CheckpointExtras& extras) {
  BlobWriter w;
  add_store(w, "flow", model.flow.params());
  add_store(w, "denoiser", model.denoiser.params());
  add_store(w, "cond", model.cond.params());
  if (extras.trainer.has_value()) {
    add_adam(w, "adam.flow", extras.trainer->flow, model.flow.params());
    add_adam(w, "adam.denoiser", extras.trainer->denoiser, model.denoiser.params());
    add_adam(w, "adam.cond", extras.trainer->cond, model.cond.params());
  }

  nlohmann::json h;
  h["version"] = kVersion;
  h["config"] = config_json(model.cfg);
  h["train_step"] = extras.train_step;
  h["rng_state"] = {std::to_string(extras.rng_state[0]), std::to_string(extras.rng_state[1]),
                    std::to_string(extras.rng_state[2]), std::to_string(extras.rng_state[3])};
  h["params"] = w.manifest;
  if (extras.trainer.has_value()) {
    h["adam"] = {{"flow_steps", extras.trainer->flow.step_count},
                 {"denoiser_steps", extras.trainer->denoiser.step_count},
                 {"cond_steps", extras.trainer->cond.step_count},
                 {"lr_flow", extras.trainer->flow.lr},
                 {"lr_denoiser", extras.trainer->denoiser.lr},
                 {"lr_cond", extras.trainer->cond.lr},
                 {"trainer_step", extras.trainer->step}};
  }
  const std::string header = h.dump();

  std::string bytes;
  bytes.reserve(16 + header.size() + w.blobs.size());
  bytes.append(kMagic, 8);
  append_u64_le(bytes, header.size());
  bytes.append(header);
  bytes.append(w.blobs);
  write_text_atomic(path, bytes);
}

RdmModel load_checkpoint(const std::string& path, CheckpointExtras* extras) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 16)
    throw format_error("checkpoint truncated at byte offset " + std::to_string(bytes.size()));
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw format_error("bad checkpoint magic at byte offset 0");
  const uint64_t hlen = read_u64_le(bytes, 8);
  if (16 + hlen > bytes.size())
    throw format_error("checkpoint header truncated at byte offset " + std::to_string(bytes.size()));

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const int version = h.at("version").get<int>();
  if (version != kVersion)
    throw format_error("unsupported checkpoint version: expected " + std::to_string(kVersion) + ", found " +
                       std::to_string(version));

  Rng init_rng(0);  // parameter values are overwritten below
  RdmModel model(config_from_json(h.at("config")), init_rng);

  TrainerState trainer;
  const bool has_adam = h.contains("adam");
  if (has_adam) {
    trainer.flow.step_count = h["adam"].at("flow_steps").get<int64_t>();
    trainer.denoiser.step_count = h["adam"].at("denoiser_steps").get<int64_t>();
    trainer.cond.step_count = h["adam"].at("cond_steps").get<int64_t>();
    trainer.flow.lr = h["adam"].at("lr_flow").get<double>();
    trainer.denoiser.lr = h["adam"].at("lr_denoiser").get<double>();
    trainer.cond.lr = h["adam"].at("lr_cond").get<double>();
    trainer.step = h["adam"].at("trainer_step").get<int64_t>();
  }

  const size_t blob_off = 16 + hlen;
  for (const auto& entry : h.at("params")) {
    const std::string store = entry.at("store").get<std::string>();
    const std::string name = entry.at("name").get<std::string>();
    const int64_t rows = entry.at("rows").get<int64_t>();
    const int64_t cols = entry.at("cols").get<int64_t>();
    const size_t off = blob_off + entry.at("offset").get<size_t>();
    const size_t count = static_cast<size_t>(rows * cols);
    if (off + 8 * count > bytes.size())
      throw format_error("checkpoint blob for " + store + "/" + name + " truncated at byte offset " +
                         std::to_string(bytes.size()));

    auto fill_param = [&](ParamStore& ps) {
      Tensor& t = ps.at(name);
      if (t.rows() != rows || t.cols() != cols)
        throw format_error("checkpoint parameter " + store + "/" + name + " has shape " +
                           std::to_string(rows) + "x" + std::to_string(cols) + ", model expects " +
                           std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
      read_doubles(bytes, off, t.data(), count);
    };
    auto fill_adam = [&](std::map<std::string, std::vector<double>>& slot) {
      auto& v = slot[name];
      v.resize(count);
      read_doubles(bytes, off, v.data(), count);
    };

    if (store == "flow") fill_param(model.flow.params());
    else if (store == "denoiser") fill_param(model.denoiser.params());
    else if (store == "cond") fill_param(model.cond.params());
    else if (store == "adam.flow.m") fill_adam(trainer.flow.m);
    else if (store == "adam.flow.v") fill_adam(trainer.flow.v);
    else if (store == "adam.denoiser.m") fill_adam(trainer.denoiser.m);
    else if (store == "adam.denoiser.v") fill_adam(trainer.denoiser.v);
    else if (store == "adam.cond.m") fill_adam(trainer.cond.m);
    else if (store == "adam.cond.v") fill_adam(trainer.cond.v);
    else throw format_error("checkpoint references unknown store '" + store + "'");
  }

  if (extras != nullptr) {
    extras->train_step = h.at("train_step").get<int64_t>();
    const auto rs = h.at("rng_state").get<std::vector<std::string>>();
    if (rs.size() != 4) throw format_error("checkpoint rng_state must have 4 words");
    for (int i = 0; i < 4; ++i) extras->rng_state[i] = std::stoull(rs[i]);
    if (has_adam) extras->trainer = std::move(trainer);
    else extras->trainer.reset();
  }
  return model;
}

}  // namespace rdm
