// SPDX-License-Identifier: Apache-2.0

#include "fcnet/config.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace fcnet {

namespace {

const std::set<std::string> kModelKeys = {
    "depth", "preset", "fusion_m", "correction", "variant", "order", "fusion_channels",
    "fusion_downsample_factor", "fusion_min_lowres", "guided_radius", "guided_eps", "leaky_slope",
    "global_residual"};

const std::set<std::string> kTrainKeys = {"lr",        "lr_decay",   "lr_decay_every", "epochs",
                                          "max_steps", "lambda_ps",  "loss_terms",     "region_size",
                                          "seed",      "max_side",   "checkpoint_every"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (!in || !in.eof()) throw FormatError("config: bad value for " + key + ": '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw FormatError("config: bad boolean for " + key + ": '" + value + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) parts.push_back(trim(part));
  return parts;
}

std::string format_float(float v) {
  std::ostringstream out;
  out.precision(9);
  out << v;
  return out.str();
}

}  // namespace

float TrainConfig::lr_at_epoch(int epoch) const {
  const int decays = lr_decay_every > 0 ? (epoch - 1) / lr_decay_every : 0;
  return static_cast<float>(lr * std::pow(static_cast<double>(lr_decay), decays));
}

void TrainConfig::validate() const {
  if (!(lr > 0.0f)) throw InvalidArgument("train: lr must be > 0");
  if (epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
  if (max_steps < 0) throw InvalidArgument("train: max_steps must be >= 0");
  if (region_size < 1) throw InvalidArgument("train: region_size must be >= 1");
  if (lambda_ps < 0.0f) throw InvalidArgument("train: lambda_ps must be >= 0");
  LossTerms::from_name(loss_terms);
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw FormatError("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw FormatError("config line " + std::to_string(line_no) + ": empty key");
    kv[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

void check_known_keys(const KeyValues& kv) {
  for (const auto& [k, _] : kv)
    if (!kModelKeys.count(k) && !kTrainKeys.count(k)) throw FormatError("config: unknown key '" + k + "'");
}

ModelConfig model_config_from(const KeyValues& kv) {
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  int depth = 4;
  if (auto v = get("depth")) depth = parse_number<int>("depth", *v);
  SizePreset preset = SizePreset::LargeToSmall;
  if (auto v = get("preset")) preset = parse_size_preset(*v);
  ModelConfig cfg;
  if (depth >= 1 && depth <= 4) {
    cfg = ModelConfig::preset(preset, depth);
  } else {
    cfg.depth = depth;
    cfg.fusion_m.clear();
    cfg.correction.clear();
  }
  if (auto v = get("fusion_m")) {
    cfg.fusion_m.clear();
    for (const auto& p : split(*v, ',')) cfg.fusion_m.push_back(parse_number<int>("fusion_m", p));
  }
  if (auto v = get("correction")) {
    cfg.correction.clear();
    for (const auto& p : split(*v, ',')) {
      const auto x = p.find('x');
      if (x == std::string::npos) throw FormatError("config: correction entries look like 4x24, got '" + p + "'");
      CorrectionBlockConfig c;
      c.levels = parse_number<int>("correction", p.substr(0, x));
      c.base_channels = parse_number<int>("correction", p.substr(x + 1));
      cfg.correction.push_back(c);
    }
  }
  if (auto v = get("variant")) cfg.variant = parse_variant(*v);
  if (auto v = get("order")) cfg.order = parse_order(*v);
  if (auto v = get("fusion_channels")) cfg.fusion.channels = parse_number<int>("fusion_channels", *v);
  if (auto v = get("fusion_downsample_factor"))
    cfg.fusion.downsample_factor = parse_number<int>("fusion_downsample_factor", *v);
  if (auto v = get("fusion_min_lowres")) cfg.fusion.min_lowres = parse_number<int>("fusion_min_lowres", *v);
  if (auto v = get("guided_radius")) cfg.fusion.guided_radius = parse_number<int>("guided_radius", *v);
  if (auto v = get("guided_eps")) cfg.fusion.guided_eps = parse_number<float>("guided_eps", *v);
  if (auto v = get("leaky_slope")) cfg.leaky_slope = parse_number<float>("leaky_slope", *v);
  if (auto v = get("global_residual")) cfg.global_residual = parse_bool("global_residual", *v);
  // Per-block copies mirror the model-wide switches.
  for (auto& c : cfg.correction) {
    c.global_residual = cfg.global_residual;
    c.leaky_slope = cfg.leaky_slope;
  }
  cfg.fusion.leaky_slope = cfg.leaky_slope;
  cfg.validate();
  return cfg;
}

TrainConfig train_config_from(const KeyValues& kv) {
  TrainConfig cfg;
  for (const auto& [k, v] : kv) {
    if (k == "lr") cfg.lr = parse_number<float>(k, v);
    else if (k == "lr_decay") cfg.lr_decay = parse_number<float>(k, v);
    else if (k == "lr_decay_every") cfg.lr_decay_every = parse_number<int>(k, v);
    else if (k == "epochs") cfg.epochs = parse_number<int>(k, v);
    else if (k == "max_steps") cfg.max_steps = parse_number<int>(k, v);
    else if (k == "lambda_ps") cfg.lambda_ps = parse_number<float>(k, v);
    else if (k == "loss_terms") cfg.loss_terms = v;
    else if (k == "region_size") cfg.region_size = parse_number<int>(k, v);
    else if (k == "seed") cfg.seed = parse_number<std::uint64_t>(k, v);
    else if (k == "max_side") cfg.max_side = parse_number<int>(k, v);
    else if (k == "checkpoint_every") cfg.checkpoint_every = parse_number<int>(k, v);
  }
  cfg.validate();
  return cfg;
}

std::string to_text(const ModelConfig& cfg) {
  std::ostringstream out;
  out << "depth=" << cfg.depth << "\n";
  out << "fusion_m=";
  for (std::size_t i = 0; i < cfg.fusion_m.size(); ++i) out << (i ? "," : "") << cfg.fusion_m[i];
  out << "\ncorrection=";
  for (std::size_t i = 0; i < cfg.correction.size(); ++i)
    out << (i ? "," : "") << cfg.correction[i].levels << "x" << cfg.correction[i].base_channels;
  out << "\nvariant=" << to_string(cfg.variant) << "\n";
  out << "order=" << to_string(cfg.order) << "\n";
  out << "fusion_channels=" << cfg.fusion.channels << "\n";
  out << "fusion_downsample_factor=" << cfg.fusion.downsample_factor << "\n";
  out << "fusion_min_lowres=" << cfg.fusion.min_lowres << "\n";
  out << "guided_radius=" << cfg.fusion.guided_radius << "\n";
  out << "guided_eps=" << format_float(cfg.fusion.guided_eps) << "\n";
  out << "leaky_slope=" << format_float(cfg.leaky_slope) << "\n";
  out << "global_residual=" << (cfg.global_residual ? "true" : "false") << "\n";
  return out.str();
}

std::string to_text(const TrainConfig& cfg) {
  std::ostringstream out;
  out << "lr=" << format_float(cfg.lr) << "\n";
  out << "lr_decay=" << format_float(cfg.lr_decay) << "\n";
  out << "lr_decay_every=" << cfg.lr_decay_every << "\n";
  out << "epochs=" << cfg.epochs << "\n";
  out << "max_steps=" << cfg.max_steps << "\n";
  out << "lambda_ps=" << format_float(cfg.lambda_ps) << "\n";
  out << "loss_terms=" << cfg.loss_terms << "\n";
  out << "region_size=" << cfg.region_size << "\n";
  out << "seed=" << cfg.seed << "\n";
  out << "max_side=" << cfg.max_side << "\n";
  out << "checkpoint_every=" << cfg.checkpoint_every << "\n";
  return out.str();
}

}  // namespace fcnet
