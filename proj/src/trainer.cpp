#include "megalap/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace megalap {

double lr_at(i64 epoch, const TrainConfig& cfg) {
  cfg.validate();
  if (epoch < 0 || epoch > cfg.n_epoch)
    throw std::invalid_argument("lr_at: epoch " + std::to_string(epoch) + " outside [0," +
                                std::to_string(cfg.n_epoch) + "]");
  return cfg.init_lr * std::pow(1.0 - static_cast<double>(epoch) / static_cast<double>(cfg.n_epoch), cfg.power);
}

nlohmann::json metrics_to_json(const MetricsReport& report) {
  auto scores_json = [](const MetricScores& s) {
    return nlohmann::json{{"mdice", s.mdice},   {"miou", s.miou},           {"f_beta_w", s.f_beta_w},
                          {"s_alpha", s.s_alpha}, {"e_phi_max", s.e_phi_max}, {"mae", s.mae}};
  };
  nlohmann::json j;
  j["per_image"] = nlohmann::json::array();
  for (const auto& [id, s] : report.per_image) {
    nlohmann::json row = scores_json(s);
    row["id"] = id;
    j["per_image"].push_back(row);
  }
  j["dataset_mean"] = scores_json(report.dataset_mean);
  return j;
}

nlohmann::json run_record_to_json(const RunRecord& record) {
  nlohmann::json j;
  j["param_count"] = record.param_count;
  j["steps"] = record.steps;
  j["epochs"] = nlohmann::json::array();
  for (const EpochStat& e : record.epochs)
    j["epochs"].push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}, {"seconds", e.seconds}});
  j["final_metrics"] = metrics_to_json(record.final_metrics);
  return j;
}

std::string metrics_table(const std::vector<std::pair<std::string, MetricScores>>& rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %7s %7s %7s %7s %7s %7s\n", "name", "mDice", "mIoU", "Fbw", "Sa",
                "Emax", "MAE");
  out += line;
  for (const auto& [name, s] : rows) {
    std::snprintf(line, sizeof(line), "%-24s %7.4f %7.4f %7.4f %7.4f %7.4f %7.4f\n", name.c_str(), s.mdice, s.miou,
                  s.f_beta_w, s.s_alpha, s.e_phi_max, s.mae);
    out += line;
  }
  return out;
}

namespace {

[[noreturn]] void diagnose_non_finite(Tape& tape, i64 epoch) {
  for (size_t i = 0; i < tape.size(); ++i) {
    Node& n = tape.node(i);
    if (!all_finite(n.value))
      throw std::runtime_error("training aborted at epoch " + std::to_string(epoch) +
                               ": non-finite values in tensor '" + n.label + "' (tape node " + std::to_string(i) +
                               ")");
  }
  throw std::runtime_error("training aborted at epoch " + std::to_string(epoch) +
                           ": non-finite loss with no non-finite tape tensor");
}

Tensor stack_images(const std::vector<Sample>& batch) {
  const i64 h = batch[0].image.extent(1), w = batch[0].image.extent(2);
  Tensor out({static_cast<i64>(batch.size()), 3, h, w});
  for (size_t b = 0; b < batch.size(); ++b)
    for (i64 i = 0; i < 3 * h * w; ++i) out[static_cast<i64>(b) * 3 * h * w + i] = batch[b].image[i];
  return out;
}

std::vector<Tensor> stacked_gt_levels(const std::vector<Sample>& batch, int depth) {
  std::vector<std::vector<Tensor>> per_sample;
  per_sample.reserve(batch.size());
  for (const Sample& s : batch) per_sample.push_back(downscale_gt(s.mask, depth));
  std::vector<Tensor> levels;
  for (int lv = 0; lv < depth; ++lv) {
    std::vector<Tensor> masks;
    masks.reserve(batch.size());
    for (const auto& pyr : per_sample) masks.push_back(pyr[static_cast<size_t>(lv)]);
    levels.push_back(stack_masks(masks));
  }
  return levels;
}

}  // namespace

RunRecord train_network(Meganet& net, const AppConfig& cfg, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, bool verbose) {
  cfg.train.validate();
  if (train_set.empty()) throw std::invalid_argument("train_network: empty training set");

  Rng rng(cfg.train.seed);
  RunRecord record;
  record.param_count = net.params().total_count();

  const int depth = net.config().depth;
  const bool use_hf = net.config().ega.use_hf;
  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t{0});

  Tape tape;
  for (i64 epoch = 0; epoch < cfg.train.n_epoch; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, cfg.train);
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<i64>(i) - 1))]);

    double epoch_loss = 0;
    i64 batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.train.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.train.batch_size));
      std::vector<Sample> batch;
      for (size_t k = start; k < end; ++k) {
        const Sample& s = train_set[order[k]];
        batch.push_back(cfg.train.augment ? augment(s, rng) : s);
      }

      std::vector<Tensor> hf;
      if (use_hf) {
        std::vector<Tensor> rgb;
        for (const Sample& s : batch) rgb.push_back(s.image);
        hf = net.make_hf_batch(rgb);
      }

      tape.reset();
      ForwardResult result = net.forward(tape, stack_images(batch), hf);
      Var loss = total_loss(result.logits, stacked_gt_levels(batch, depth));
      if (!std::isfinite(loss.value()[0])) diagnose_non_finite(tape, epoch);
      backward(loss);
      sgd_step(net.params().all(), lr, cfg.train.momentum, cfg.train.weight_decay);

      epoch_loss += loss.value()[0];
      ++batches;
      ++record.steps;
    }

    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    record.epochs.push_back({epoch, lr, epoch_loss / static_cast<double>(batches), seconds});
    if (verbose)
      std::printf("epoch %3lld  lr %.6f  loss %.6f  (%.2fs)\n", static_cast<long long>(epoch), lr,
                  record.epochs.back().loss, seconds);
  }
  tape.reset();

  record.final_metrics = evaluate_network(net, val_set.empty() ? train_set : val_set);
  return record;
}

Tensor predict_full(Meganet& net, const Tensor& image) {
  if (image.rank() != 3 || image.extent(0) != 3)
    throw std::invalid_argument("predict_full: expected [3,H,W], got " + shape_string(image.shape()));
  Tape tape;
  const i64 h = image.extent(1), w = image.extent(2);
  Tensor batch({1, 3, h, w});
  for (i64 i = 0; i < image.numel(); ++i) batch[i] = image[i];
  std::vector<Tensor> hf;
  if (net.config().ega.use_hf) hf = net.make_hf_batch({image});
  ForwardResult result = net.forward(tape, batch, hf);
  const Tensor& prob = result.full_res_prob.value();  // [1,1,H,W]
  Tensor out({1, h, w});
  for (i64 i = 0; i < h * w; ++i) out[i] = prob[i];
  return out;
}

MetricsReport evaluate_network(Meganet& net, const std::vector<Sample>& samples) {
  std::vector<std::string> ids;
  std::vector<Tensor> preds, gts;
  for (const Sample& s : samples) {
    ids.push_back(s.id);
    preds.push_back(predict_full(net, s.image));
    gts.push_back(s.mask);
  }
  return evaluate_dataset(ids, preds, gts);
}

std::vector<AblationRow> run_ablation(const AppConfig& base, const std::vector<Sample>& train_set, bool verbose) {
  struct RowSpec {
    const char* label;
    bool reverse, boundary, hf, cbam;
    HfDerivation derivation;
  };
  const RowSpec specs[] = {
      {"#1 none", false, false, false, false, HfDerivation::BaseDownsample},
      {"#2 no reverse", false, true, true, true, HfDerivation::BaseDownsample},
      {"#3 no boundary", true, false, true, true, HfDerivation::BaseDownsample},
      {"#4 no hf", true, true, false, true, HfDerivation::BaseDownsample},
      {"#5 no recalib", true, true, true, false, HfDerivation::BaseDownsample},
      {"#6 full", true, true, true, true, HfDerivation::BaseDownsample},
      {"hf per-level", true, true, true, true, HfDerivation::PerLevelBandPass},
  };

  std::vector<AblationRow> rows;
  for (const RowSpec& spec : specs) {
    AblationRow row;
    row.label = spec.label;
    row.config = base;
    row.config.net.ega.use_reverse = spec.reverse;
    row.config.net.ega.use_boundary = spec.boundary;
    row.config.net.ega.use_hf = spec.hf;
    row.config.net.ega.use_cbam = spec.cbam;
    row.config.net.hf_derivation = spec.derivation;
    if (verbose) std::printf("[ablate] %s\n", spec.label);
    try {
      Meganet net(row.config.net, row.config.train.seed);
      RunRecord rec = train_network(net, row.config, train_set, {}, false);
      row.final_loss = rec.epochs.back().loss;
      row.train_scores = rec.final_metrics.dataset_mean;
      row.completed = true;
    } catch (const std::exception& e) {
      row.completed = false;
      row.label += std::string("  [failed: ") + e.what() + "]";
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %3s %3s %3s %7s %9s %7s %7s\n", "config", "rev", "bnd", "hf", "recal",
                "loss", "mDice", "mIoU");
  out += line;
  auto flag = [](bool b) { return b ? "+" : "-"; };
  for (const AblationRow& r : rows) {
    if (r.config.net.hf_derivation != HfDerivation::BaseDownsample) continue;
    std::snprintf(line, sizeof(line), "%-16s %3s %3s %3s %7s %9.4f %7.4f %7.4f%s\n", r.label.c_str(),
                  flag(r.config.net.ega.use_reverse), flag(r.config.net.ega.use_boundary),
                  flag(r.config.net.ega.use_hf), flag(r.config.net.ega.use_cbam), r.final_loss,
                  r.train_scores.mdice, r.train_scores.miou, r.completed ? "" : "  FAILED");
    out += line;
  }
  out += "\nhigh-frequency derivation:\n";
  std::snprintf(line, sizeof(line), "%-24s %9s %7s %7s\n", "derivation", "loss", "mDice", "mIoU");
  out += line;
  for (const AblationRow& r : rows) {
    const bool base_row = r.config.net.hf_derivation == HfDerivation::BaseDownsample;
    if (base_row && r.label != "#6 full") continue;
    std::snprintf(line, sizeof(line), "%-24s %9.4f %7.4f %7.4f%s\n",
                  base_row ? "base downsample" : "per-level band-pass", r.final_loss, r.train_scores.mdice,
                  r.train_scores.miou, r.completed ? "" : "  FAILED");
    out += line;
  }
  return out;
}

}  // namespace megalap
