#include "megalap/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace megalap {

void TrainConfig::validate() const {
  if (init_lr <= 0 || power <= 0 || power > 1 || n_epoch <= 0 || momentum < 0 || weight_decay < 0 || batch_size <= 0)
    throw std::invalid_argument("train config: all values must be positive and power must lie in (0,1]");
}

void AppConfig::apply_desk_preset() {
  net.input_h = 64;
  net.input_w = 64;
  train.n_epoch = 40;
  train.batch_size = 4;
  synth.height = 64;
  synth.width = 64;
}

void AppConfig::apply_full_preset() {
  net.input_h = 352;
  net.input_w = 352;
  train.n_epoch = 200;
  train.batch_size = 16;
  synth.height = 352;
  synth.width = 352;
}

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<i64> parse_int_list(const std::string& v) {
  std::vector<i64> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoll(item));
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void AppConfig::set(const std::string& key, const std::string& value) {
  if (key == "depth") net.depth = std::stoi(value);
  else if (key == "stem_channels") net.stem_channels = std::stoll(value);
  else if (key == "channel_schedule") net.channel_schedule = parse_int_list(value);
  else if (key == "input_h") net.input_h = std::stoll(value);
  else if (key == "input_w") net.input_w = std::stoll(value);
  else if (key == "hf_derivation") {
    if (value == "base_downsample") net.hf_derivation = HfDerivation::BaseDownsample;
    else if (value == "per_level_band_pass") net.hf_derivation = HfDerivation::PerLevelBandPass;
    else throw std::invalid_argument("config: unknown hf_derivation '" + value + "'");
  } else if (key == "hf_normalize") net.hf_normalize = parse_bool(key, value);
  else if (key == "hf_interpolate") net.hf_interpolate = parse_bool(key, value);
  else if (key == "ega.use_reverse") net.ega.use_reverse = parse_bool(key, value);
  else if (key == "ega.use_boundary") net.ega.use_boundary = parse_bool(key, value);
  else if (key == "ega.use_hf") net.ega.use_hf = parse_bool(key, value);
  else if (key == "ega.use_cbam") net.ega.use_cbam = parse_bool(key, value);
  else if (key == "ega.cbam_reduction") net.ega.cbam_reduction = std::stoll(value);
  else if (key == "ega.spatial_kernel") net.ega.spatial_kernel = std::stoll(value);
  else if (key == "ega.signed_boundary") net.ega.signed_boundary = parse_bool(key, value);
  else if (key == "train.init_lr") train.init_lr = std::stod(value);
  else if (key == "train.power") train.power = std::stod(value);
  else if (key == "train.n_epoch") train.n_epoch = std::stoi(value);
  else if (key == "train.momentum") train.momentum = std::stod(value);
  else if (key == "train.weight_decay") train.weight_decay = std::stod(value);
  else if (key == "train.batch_size") train.batch_size = std::stoll(value);
  else if (key == "train.seed") train.seed = std::stoull(value);
  else if (key == "train.augment") train.augment = parse_bool(key, value);
  else if (key == "synth.count") synth.count = std::stoll(value);
  else if (key == "synth.height") synth.height = std::stoll(value);
  else if (key == "synth.width") synth.width = std::stoll(value);
  else if (key == "synth.blob_min") synth.blob_min = std::stoll(value);
  else if (key == "synth.blob_max") synth.blob_max = std::stoll(value);
  else if (key == "synth.boundary_softness") synth.boundary_softness = std::stod(value);
  else if (key == "synth.texture_amplitude") synth.texture_amplitude = std::stod(value);
  else if (key == "synth.contrast") synth.contrast = std::stod(value);
  else if (key == "synth.seed") synth.seed = std::stoull(value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

AppConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  AppConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void save_config(const std::string& path, const AppConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write config: " + path);
  os << "# network\n";
  os << "depth = " << cfg.net.depth << "\n";
  os << "stem_channels = " << cfg.net.stem_channels << "\n";
  if (!cfg.net.channel_schedule.empty()) {
    os << "channel_schedule = ";
    for (size_t i = 0; i < cfg.net.channel_schedule.size(); ++i)
      os << (i ? "," : "") << cfg.net.channel_schedule[i];
    os << "\n";
  }
  os << "input_h = " << cfg.net.input_h << "\n";
  os << "input_w = " << cfg.net.input_w << "\n";
  os << "hf_derivation = "
     << (cfg.net.hf_derivation == HfDerivation::BaseDownsample ? "base_downsample" : "per_level_band_pass") << "\n";
  os << "hf_normalize = " << (cfg.net.hf_normalize ? "true" : "false") << "\n";
  os << "hf_interpolate = " << (cfg.net.hf_interpolate ? "true" : "false") << "\n";
  os << "\n# attention block\n";
  os << "ega.use_reverse = " << (cfg.net.ega.use_reverse ? "true" : "false") << "\n";
  os << "ega.use_boundary = " << (cfg.net.ega.use_boundary ? "true" : "false") << "\n";
  os << "ega.use_hf = " << (cfg.net.ega.use_hf ? "true" : "false") << "\n";
  os << "ega.use_cbam = " << (cfg.net.ega.use_cbam ? "true" : "false") << "\n";
  os << "ega.cbam_reduction = " << cfg.net.ega.cbam_reduction << "\n";
  os << "ega.spatial_kernel = " << cfg.net.ega.spatial_kernel << "\n";
  os << "ega.signed_boundary = " << (cfg.net.ega.signed_boundary ? "true" : "false") << "\n";
  os << "\n# training\n";
  os << "train.init_lr = " << cfg.train.init_lr << "\n";
  os << "train.power = " << cfg.train.power << "\n";
  os << "train.n_epoch = " << cfg.train.n_epoch << "\n";
  os << "train.momentum = " << cfg.train.momentum << "\n";
  os << "train.weight_decay = " << cfg.train.weight_decay << "\n";
  os << "train.batch_size = " << cfg.train.batch_size << "\n";
  os << "train.seed = " << cfg.train.seed << "\n";
  os << "train.augment = " << (cfg.train.augment ? "true" : "false") << "\n";
  os << "\n# synthetic data\n";
  os << "synth.count = " << cfg.synth.count << "\n";
  os << "synth.height = " << cfg.synth.height << "\n";
  os << "synth.width = " << cfg.synth.width << "\n";
  os << "synth.blob_min = " << cfg.synth.blob_min << "\n";
  os << "synth.blob_max = " << cfg.synth.blob_max << "\n";
  os << "synth.boundary_softness = " << cfg.synth.boundary_softness << "\n";
  os << "synth.texture_amplitude = " << cfg.synth.texture_amplitude << "\n";
  os << "synth.contrast = " << cfg.synth.contrast << "\n";
  os << "synth.seed = " << cfg.synth.seed << "\n";
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace megalap
