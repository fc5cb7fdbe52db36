#pragma once

#include <string>

#include "megalap/data.hpp"
#include "megalap/network.hpp"

namespace megalap {

struct TrainConfig {
  double init_lr = 1e-3;
  double power = 0.9;
  int n_epoch = 200;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  i64 batch_size = 16;
  uint64_t seed = 0;
  bool augment = true;
  void validate() const;
};

/// Whole-application configuration, stored as a flat "key = value" file with
/// '#' comments. See the README for the key list. Unknown keys are rejected.
struct AppConfig {
  NetworkConfig net;
  TrainConfig train;
  SynthConfig synth;

  /// Desk-scale preset: 64x64 inputs, 40 epochs, batch 4.
  void apply_desk_preset();
  /// Full-scale preset: 352x352 inputs, 200 epochs, batch 16.
  void apply_full_preset();

  void set(const std::string& key, const std::string& value);
};

AppConfig load_config(const std::string& path);
void save_config(const std::string& path, const AppConfig& cfg);

}  // namespace megalap
