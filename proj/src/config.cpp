#include "rdm/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace rdm {

namespace {

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int n = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (...) {
    throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (...) {
    throw std::invalid_argument("config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("config: key '" + key + "' expects 0/1, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(to_int(key, part));
  if (out.empty()) throw std::invalid_argument("config: key '" + key + "' expects a comma list");
  return out;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

ModelConfig RunConfig::model_config(int seg_frames, int feature_dim, int num_labels) const {
  ModelConfig m;
  m.L = model_L;
  m.num_labels = num_labels;
  m.T = model_T;
  m.beta_start = beta_start;
  m.beta_end = beta_end;
  m.flow.feature_dim = feature_dim;
  m.flow.num_blocks = flow_blocks;
  m.flow.net_hidden = flow_hidden;
  m.flow.context_dim = flow_context;
  m.flow.clamp_lo = -flow_clamp;
  m.flow.clamp_hi = flow_clamp;
  m.flow.sigma_inf = flow_sigma_inf;
  m.denoiser.seg_frames = seg_frames;
  m.denoiser.feature_dim = feature_dim;
  m.denoiser.hidden = denoiser_hidden;
  m.denoiser.depth = denoiser_depth;
  m.denoiser.encode_width = denoiser_encode_width;
  m.denoiser.cond_width = flow_context;
  m.denoiser.use_attention = denoiser_attention;
  m.denoiser.attn_dim = denoiser_attn_dim;
  return m;
}

void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "data.generator") {
    if (value != "lissajous" && value != "damped")
      throw std::invalid_argument("config: data.generator must be lissajous or damped");
    cfg.data.generator = value;
  } else if (key == "data.n_train") cfg.data.n_train = to_int(key, value);
  else if (key == "data.n_test") cfg.data.n_test = to_int(key, value);
  else if (key == "data.frames") cfg.data.frames = to_int(key, value);
  else if (key == "data.dims") cfg.data.dims = to_int(key, value);
  else if (key == "data.labels") cfg.data.labels = to_int(key, value);
  else if (key == "data.seed") cfg.data.seed = to_u64(key, value);
  else if (key == "data.amplitude") cfg.data.amplitude = to_double(key, value);
  else if (key == "data.export_csv") cfg.data.export_csv = value;
  else if (key == "model.L") cfg.model_L = to_int(key, value);
  else if (key == "model.T") cfg.model_T = to_int(key, value);
  else if (key == "model.beta_start") cfg.beta_start = to_double(key, value);
  else if (key == "model.beta_end") cfg.beta_end = to_double(key, value);
  else if (key == "flow.blocks") cfg.flow_blocks = to_int(key, value);
  else if (key == "flow.hidden") cfg.flow_hidden = to_int(key, value);
  else if (key == "flow.context") cfg.flow_context = to_int(key, value);
  else if (key == "flow.clamp") cfg.flow_clamp = to_double(key, value);
  else if (key == "flow.sigma_inf") cfg.flow_sigma_inf = to_double(key, value);
  else if (key == "denoiser.hidden") cfg.denoiser_hidden = to_int(key, value);
  else if (key == "denoiser.depth") cfg.denoiser_depth = to_int(key, value);
  else if (key == "denoiser.encode_width") cfg.denoiser_encode_width = to_int(key, value);
  else if (key == "denoiser.attention") cfg.denoiser_attention = to_bool(key, value);
  else if (key == "denoiser.attn_dim") cfg.denoiser_attn_dim = to_int(key, value);
  else if (key == "train.lr_flow") cfg.train.lr_flow = to_double(key, value);
  else if (key == "train.lr_denoiser") cfg.train.lr_denoiser = to_double(key, value);
  else if (key == "train.batch") cfg.train.batch_size = to_int(key, value);
  else if (key == "train.epochs") cfg.train.epochs = to_int(key, value);
  else if (key == "train.steps") cfg.train.steps = to_int(key, value);
  else if (key == "train.w_mode") {
    if (value == "uniform") cfg.train.w_mode = WeightMode::kUniform;
    else if (value == "snr") cfg.train.w_mode = WeightMode::kSnr;
    else throw std::invalid_argument("config: train.w_mode must be uniform or snr");
  } else if (key == "train.lambda_flow") cfg.train.lambda_flow = to_double(key, value);
  else if (key == "train.sigma_inf") cfg.train.sigma_inf = to_double(key, value);
  else if (key == "train.seed") cfg.train.seed = to_u64(key, value);
  else if (key == "train.replicate") cfg.train.replicate = to_int(key, value);
  else if (key == "train.checkpoint_every") cfg.train.checkpoint_every = to_int(key, value);
  else if (key == "train.resume") cfg.resume = to_bool(key, value);
  else if (key == "sampler.mode") cfg.plan.mode = sampler_mode_from_name(value);
  else if (key == "sampler.t_start") cfg.plan.t_start = to_int(key, value);
  else if (key == "sampler.n_steps") cfg.plan.n_steps = to_int(key, value);
  else if (key == "sampler.L_target") cfg.plan.L_target = to_int(key, value);
  else if (key == "sampler.eta") cfg.plan.eta = to_double(key, value);
  else if (key == "sampler.seed") cfg.plan.seed = to_u64(key, value);
  else if (key == "sampler.count") cfg.sample_count = to_int(key, value);
  else if (key == "sampler.label") cfg.sample_label = to_int(key, value);
  else if (key == "eval.samples") cfg.eval_samples = to_int(key, value);
  else if (key == "bench.reps") cfg.bench_reps = to_int(key, value);
  else if (key == "bench.L_list") cfg.bench_L = to_int_list(key, value);
  else if (key == "paths.dataset") cfg.paths.dataset = value;
  else if (key == "paths.checkpoint") cfg.paths.checkpoint = value;
  else if (key == "paths.out") cfg.paths.out = value;
  else if (key == "paths.metrics") cfg.paths.metrics = value;
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

RunConfig parse_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not key=value: '" + t + "'");
      apply_config_kv(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
  }
  for (const auto& ov : overrides) {
    const size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: override is not key=value: '" + ov + "'");
    apply_config_kv(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }
  return cfg;
}

std::string resolved_config(const RunConfig& c) {
  std::ostringstream os;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  os << "data.generator=" << c.data.generator << "\n"
     << "data.n_train=" << c.data.n_train << "\n"
     << "data.n_test=" << c.data.n_test << "\n"
     << "data.frames=" << c.data.frames << "\n"
     << "data.dims=" << c.data.dims << "\n"
     << "data.labels=" << c.data.labels << "\n"
     << "data.seed=" << c.data.seed << "\n"
     << "data.amplitude=" << num(c.data.amplitude) << "\n"
     << "data.export_csv=" << c.data.export_csv << "\n"
     << "model.L=" << c.model_L << "\n"
     << "model.T=" << c.model_T << "\n"
     << "model.beta_start=" << num(c.beta_start) << "\n"
     << "model.beta_end=" << num(c.beta_end) << "\n"
     << "flow.blocks=" << c.flow_blocks << "\n"
     << "flow.hidden=" << c.flow_hidden << "\n"
     << "flow.context=" << c.flow_context << "\n"
     << "flow.clamp=" << num(c.flow_clamp) << "\n"
     << "flow.sigma_inf=" << num(c.flow_sigma_inf) << "\n"
     << "denoiser.hidden=" << c.denoiser_hidden << "\n"
     << "denoiser.depth=" << c.denoiser_depth << "\n"
     << "denoiser.encode_width=" << c.denoiser_encode_width << "\n"
     << "denoiser.attention=" << (c.denoiser_attention ? 1 : 0) << "\n"
     << "denoiser.attn_dim=" << c.denoiser_attn_dim << "\n"
     << "train.lr_flow=" << num(c.train.lr_flow) << "\n"
     << "train.lr_denoiser=" << num(c.train.lr_denoiser) << "\n"
     << "train.batch=" << c.train.batch_size << "\n"
     << "train.epochs=" << c.train.epochs << "\n"
     << "train.steps=" << c.train.steps << "\n"
     << "train.w_mode=" << (c.train.w_mode == WeightMode::kUniform ? "uniform" : "snr") << "\n"
     << "train.lambda_flow=" << num(c.train.lambda_flow) << "\n"
     << "train.sigma_inf=" << num(c.train.sigma_inf) << "\n"
     << "train.seed=" << c.train.seed << "\n"
     << "train.replicate=" << c.train.replicate << "\n"
     << "train.checkpoint_every=" << c.train.checkpoint_every << "\n"
     << "train.resume=" << (c.resume ? 1 : 0) << "\n"
     << "sampler.mode=" << sampler_mode_name(c.plan.mode) << "\n"
     << "sampler.t_start=" << c.plan.t_start << "\n"
     << "sampler.n_steps=" << c.plan.n_steps << "\n"
     << "sampler.L_target=" << c.plan.L_target << "\n"
     << "sampler.eta=" << num(c.plan.eta) << "\n"
     << "sampler.seed=" << c.plan.seed << "\n"
     << "sampler.count=" << c.sample_count << "\n"
     << "sampler.label=" << c.sample_label << "\n"
     << "eval.samples=" << c.eval_samples << "\n"
     << "bench.reps=" << c.bench_reps << "\n";
  os << "bench.L_list=";
  for (size_t i = 0; i < c.bench_L.size(); ++i) os << (i ? "," : "") << c.bench_L[i];
  os << "\n"
     << "paths.dataset=" << c.paths.dataset << "\n"
     << "paths.checkpoint=" << c.paths.checkpoint << "\n"
     << "paths.out=" << c.paths.out << "\n"
     << "paths.metrics=" << c.paths.metrics << "\n";
  return os.str();
}

}  // namespace rdm
