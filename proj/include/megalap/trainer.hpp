#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "megalap/config.hpp"
#include "megalap/loss.hpp"
#include "megalap/metrics.hpp"
#include "megalap/network.hpp"

namespace megalap {

/// Polynomial decay evaluated at epoch granularity:
///   lr = init_lr * (1 - epoch/n_epoch)^power.
/// Valid for 0 <= epoch <= n_epoch; strictly decreasing, 0 at the end.
double lr_at(i64 epoch, const TrainConfig& cfg);

struct EpochStat {
  i64 epoch = 0;
  double lr = 0;
  double loss = 0;
  double seconds = 0;  // wall time; excluded from determinism comparisons
};

struct RunRecord {
  std::vector<EpochStat> epochs;
  MetricsReport final_metrics;  // held-out split, or training split if none
  i64 steps = 0;
  i64 param_count = 0;
};

nlohmann::json metrics_to_json(const MetricsReport& report);
nlohmann::json run_record_to_json(const RunRecord& record);
/// Plain-text table of dataset means (one row per label), used by eval and
/// the ablation harness.
std::string metrics_table(const std::vector<std::pair<std::string, MetricScores>>& rows);

/// Seeded training loop: per step augment the batch, derive the
/// high-frequency maps, run the forward pass, apply the deep-supervision
/// loss and one SGD step at the epoch's learning rate. A non-finite loss
/// aborts with the label of the first non-finite tensor on the tape.
RunRecord train_network(Meganet& net, const AppConfig& cfg, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, bool verbose = false);

/// Full-resolution probability map for one image, [1,H,W].
Tensor predict_full(Meganet& net, const Tensor& image);

MetricsReport evaluate_network(Meganet& net, const std::vector<Sample>& samples);

struct AblationRow {
  std::string label;
  AppConfig config;
  double final_loss = 0;
  MetricScores train_scores;
  bool completed = false;
};

/// The component-toggle grid (6 rows: everything off; one of
/// reverse/boundary/hf off each; recalibration off; everything on) plus the
/// two high-frequency derivations. Each row trains a fresh seeded network.
std::vector<AblationRow> run_ablation(const AppConfig& base, const std::vector<Sample>& train_set, bool verbose = false);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace megalap
