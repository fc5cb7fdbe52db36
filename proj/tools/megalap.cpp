// Command-line front end: training, evaluation, inference, ablations,
// gradient checks and the pyramid/attention debug dumps.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "megalap/gradcheck.hpp"
#include "megalap/image_io.hpp"
#include "megalap/trainer.hpp"

using namespace megalap;
namespace fs = std::filesystem;

namespace {

struct ConfigCliOptions {
  std::string config_file;
  std::string preset;
  std::vector<std::string> overrides;
};

void add_config_options(CLI::App* cmd, ConfigCliOptions& opts) {
  cmd->add_option("--config", opts.config_file, "configuration file (key = value lines)");
  cmd->add_option("--preset", opts.preset,
                  "desk (64x64, 40 epochs, batch 4) or full (352x352, 200 epochs, batch 16)")
      ->check(CLI::IsMember({"desk", "full"}));
  cmd->add_option("--set", opts.overrides, "override a single config key, e.g. --set train.n_epoch=10")->take_all();
}

AppConfig resolve_config(const ConfigCliOptions& opts) {
  AppConfig cfg;
  cfg.apply_desk_preset();  // desk scale is the default everywhere
  if (!opts.config_file.empty()) cfg = load_config(opts.config_file);
  if (opts.preset == "desk") cfg.apply_desk_preset();
  if (opts.preset == "full") cfg.apply_full_preset();
  for (const std::string& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

std::vector<Sample> training_samples(const std::string& data_dir, const AppConfig& cfg, std::vector<Sample>* val) {
  if (!data_dir.empty()) {
    Dataset ds = load_dataset(data_dir);
    if (val) *val = ds.val;
    return ds.train;
  }
  std::printf("no --data directory given; generating %lld synthetic samples (seed %llu)\n",
              static_cast<long long>(cfg.synth.count), static_cast<unsigned long long>(cfg.synth.seed));
  return generate_samples(cfg.synth);
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(2) << "\n";
}

void dump_map(const fs::path& dir, const std::string& name, const Tensor& map4d, i64 batch_index) {
  const i64 h = map4d.extent(2), w = map4d.extent(3);
  Tensor plane({1, h, w});
  for (i64 i = 0; i < h * w; ++i) plane[i] = map4d[batch_index * h * w + i];
  write_png((dir / (name + ".png")).string(), gray_tensor_to_image(plane, true));
}

Meganet load_network(const std::string& ckpt, std::string config_file) {
  if (config_file.empty()) config_file = (fs::path(ckpt).parent_path() / "config.resolved.cfg").string();
  const AppConfig cfg = load_config(config_file);
  Meganet net(cfg.net, /*seed=*/0);
  load_checkpoint(ckpt, net.params());
  return net;
}

int cmd_train(const ConfigCliOptions& cfg_opts, const std::string& data_dir, const std::string& out_dir,
              uint64_t seed, bool verbose) {
  AppConfig cfg = resolve_config(cfg_opts);
  cfg.train.seed = seed;
  if (cfg.synth.seed == 0) cfg.synth.seed = seed;

  std::vector<Sample> val;
  const std::vector<Sample> train_set = training_samples(data_dir, cfg, &val);

  Meganet net(cfg.net, cfg.train.seed);
  std::printf("network: depth %d, %lld parameters\n", cfg.net.depth,
              static_cast<long long>(net.params().total_count()));

  const RunRecord record = train_network(net, cfg, train_set, val, verbose);

  fs::create_directories(out_dir);
  save_checkpoint((fs::path(out_dir) / "model.ckpt").string(), net.params());
  save_config((fs::path(out_dir) / "config.resolved.cfg").string(), cfg);
  write_json((fs::path(out_dir) / "run_record.json").string(), run_record_to_json(record));

  std::printf("final loss %.6f after %lld steps\n", record.epochs.back().loss,
              static_cast<long long>(record.steps));
  std::printf("%s", metrics_table({{"held-out mean", record.final_metrics.dataset_mean}}).c_str());
  std::printf("artifacts written to %s\n", out_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& report_path) {
  std::vector<std::pair<std::string, fs::path>> entries;
  for (const auto& entry : fs::directory_iterator(pred_dir)) {
    if (!entry.is_regular_file()) continue;
    entries.push_back({entry.path().stem().string(), entry.path()});
  }
  std::sort(entries.begin(), entries.end());  // directory order is not deterministic

  std::vector<std::string> ids;
  std::vector<Tensor> preds, gts;
  for (const auto& [id, path] : entries) {
    const fs::path gt_path = fs::path(gt_dir) / path.filename();
    if (!fs::exists(gt_path)) {
      std::fprintf(stderr, "warning: no ground truth for %s, skipping\n", id.c_str());
      continue;
    }
    ids.push_back(id);
    preds.push_back(image_to_gray_tensor(read_image_file(path.string())));
    gts.push_back(read_mask(gt_path.string()));
  }

  const MetricsReport report = evaluate_dataset(ids, preds, gts);
  std::vector<std::pair<std::string, MetricScores>> rows = report.per_image;
  rows.push_back({"mean", report.dataset_mean});
  std::printf("%s", metrics_table(rows).c_str());
  if (!report_path.empty()) write_json(report_path, metrics_to_json(report));
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& config_file, const std::string& input,
              const std::string& output, const std::string& attention_dir) {
  Meganet net = load_network(ckpt, config_file);
  const Tensor image = image_to_rgb_tensor(read_image_file(input));
  if (!output.empty()) {
    const Tensor prob = predict_full(net, image);
    Tensor mask(prob.shape());
    for (i64 i = 0; i < prob.numel(); ++i) mask[i] = prob[i] >= 0.5 ? 1.0 : 0.0;
    write_mask(output, mask);
    std::printf("wrote %s\n", output.c_str());
  }
  if (!attention_dir.empty()) {
    fs::create_directories(attention_dir);
    Tape tape;
    Tensor batch({1, 3, image.extent(1), image.extent(2)});
    for (i64 i = 0; i < image.numel(); ++i) batch[i] = image[i];
    std::vector<Tensor> hf;
    if (net.config().ega.use_hf) hf = net.make_hf_batch({image});
    const ForwardResult result = net.forward(tape, batch, hf);
    for (size_t lv = 0; lv < result.ega.size(); ++lv) {
      const EgaOutput& e = result.ega[lv];
      dump_map(attention_dir, "mask_" + std::to_string(lv), e.mask.value(), 0);
      if (e.reverse.defined()) dump_map(attention_dir, "reverse_" + std::to_string(lv), e.reverse.value(), 0);
      if (e.boundary.defined()) dump_map(attention_dir, "boundary_" + std::to_string(lv), e.boundary.value(), 0);
    }
    std::printf("attention maps written to %s\n", attention_dir.c_str());
  }
  return 0;
}

int cmd_pyramid(const std::string& input, int levels, const std::string& out_dir, bool raw, bool per_level) {
  const Tensor rgb = image_to_rgb_tensor(read_image_file(input));
  fs::create_directories(out_dir);
  const PyramidStack stack = build_pyramid(luminance(rgb), levels);
  nlohmann::json manifest;
  auto record = [&](const std::string& name, const Tensor& t) {
    write_png((fs::path(out_dir) / (name + ".png")).string(), gray_tensor_to_image(t, true));
    manifest[name] = {{"min", min_value(t)}, {"max", max_value(t)}, {"height", t.extent(1)}, {"width", t.extent(2)}};
  };
  for (size_t k = 0; k < stack.gaussian.size(); ++k) record("gaussian_" + std::to_string(k), stack.gaussian[k]);
  for (size_t k = 0; k < stack.band_pass.size(); ++k) record("band_pass_" + std::to_string(k), stack.band_pass[k]);
  const HighFreqSet hf =
      high_freq_set(rgb, levels, per_level ? HfDerivation::PerLevelBandPass : HfDerivation::BaseDownsample, !raw);
  for (size_t k = 0; k < hf.levels.size(); ++k) record("high_freq_" + std::to_string(k), hf.levels[k]);
  write_json((fs::path(out_dir) / "manifest.json").string(), manifest);
  std::printf("pyramid dump written to %s\n", out_dir.c_str());
  return 0;
}

int cmd_ablate(const ConfigCliOptions& cfg_opts, const std::string& data_dir, uint64_t seed,
               const std::string& report_path, int epochs) {
  AppConfig cfg = resolve_config(cfg_opts);
  cfg.train.seed = seed;
  if (cfg.synth.seed == 0) cfg.synth.seed = seed;
  if (epochs > 0) cfg.train.n_epoch = epochs;
  const std::vector<Sample> train_set = training_samples(data_dir, cfg, nullptr);

  const std::vector<AblationRow> rows = run_ablation(cfg, train_set, true);
  std::printf("%s", ablation_table(rows).c_str());

  if (!report_path.empty()) {
    nlohmann::json j = nlohmann::json::array();
    for (const AblationRow& r : rows)
      j.push_back({{"label", r.label},
                   {"use_reverse", r.config.net.ega.use_reverse},
                   {"use_boundary", r.config.net.ega.use_boundary},
                   {"use_hf", r.config.net.ega.use_hf},
                   {"use_cbam", r.config.net.ega.use_cbam},
                   {"hf_derivation", r.config.net.hf_derivation == HfDerivation::BaseDownsample
                                         ? "base_downsample"
                                         : "per_level_band_pass"},
                   {"final_loss", r.final_loss},
                   {"train_mdice", r.train_scores.mdice},
                   {"train_miou", r.train_scores.miou},
                   {"completed", r.completed}});
    write_json(report_path, j);
  }
  for (const AblationRow& r : rows)
    if (!r.completed) return 1;
  return 0;
}

int cmd_gradcheck(uint64_t seed, double tolerance) {
  const GradCheckReport report = gradcheck_all(seed, tolerance);
  for (const auto& e : report.entries)
    std::printf("%-28s max rel err %.3e  %s\n", e.name.c_str(), e.max_rel_err, e.pass ? "ok" : "FAIL");
  std::printf("%zu checks, tolerance %.1e: %s\n", report.entries.size(), report.tolerance,
              report.all_pass() ? "all passed" : "FAILURES");
  return report.all_pass() ? 0 : 1;
}

int cmd_generate(const ConfigCliOptions& cfg_opts, const std::string& out_dir, uint64_t seed, i64 count,
                 double val_fraction) {
  AppConfig cfg = resolve_config(cfg_opts);
  cfg.synth.seed = seed;
  if (count > 0) cfg.synth.count = count;
  const auto samples = generate_samples(cfg.synth);
  write_dataset(out_dir, samples, val_fraction);
  std::printf("wrote %zu samples to %s\n", samples.size(), out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-scale edge-guided attention segmentation toolkit"};
  app.require_subcommand(1);

  ConfigCliOptions train_cfg, ablate_cfg, gen_cfg;
  std::string data_dir, out_dir = "run_out", pred_dir, gt_dir, report_path;
  std::string ckpt, config_file, input, output = "prediction.png", attention_dir;
  uint64_t seed = 0;
  double tolerance = 1e-4, val_fraction = 0.0;
  int levels = 4, epochs = 0;
  i64 count = 0;
  bool verbose = false, raw = false, per_level = false;

  CLI::App* train = app.add_subcommand("train", "train a network on a dataset directory (or synthetic data)");
  add_config_options(train, train_cfg);
  train->add_option("--data", data_dir, "dataset directory (images/, masks/, manifest.json)");
  train->add_option("--out", out_dir, "output directory for checkpoint, config and run record");
  train->add_option("--seed", seed, "rng seed")->required();
  train->add_flag("--verbose", verbose, "per-epoch progress");

  CLI::App* eval = app.add_subcommand("eval", "score a directory of predictions against ground truth");
  eval->add_option("--pred-dir", pred_dir)->required();
  eval->add_option("--gt-dir", gt_dir)->required();
  eval->add_option("--report", report_path, "write the metrics report as JSON");

  CLI::App* infer = app.add_subcommand("infer", "predict a mask for one image");
  infer->add_option("--ckpt", ckpt)->required();
  infer->add_option("--config", config_file, "defaults to config.resolved.cfg next to the checkpoint");
  infer->add_option("--input", input)->required();
  infer->add_option("--out", output, "output mask png");
  infer->add_option("--dump-attention", attention_dir, "also dump per-level attention heatmaps here");

  CLI::App* dump = app.add_subcommand("dump-attention", "write per-level attention heatmaps for one image");
  dump->add_option("--ckpt", ckpt)->required();
  dump->add_option("--config", config_file);
  dump->add_option("--input", input)->required();
  dump->add_option("--out-dir", attention_dir)->required();

  CLI::App* pyramid = app.add_subcommand("pyramid", "dump pyramid levels and high-frequency maps for one image");
  pyramid->add_option("--input", input)->required();
  pyramid->add_option("--levels", levels, "pyramid depth");
  pyramid->add_option("--out-dir", out_dir)->required();
  pyramid->add_flag("--raw-laplacian", raw, "skip |.| + min-max normalization of the high-frequency maps");
  pyramid->add_flag("--per-level", per_level, "derive high-frequency maps per level instead of from the base");

  CLI::App* ablate = app.add_subcommand("ablate", "train the component-toggle grid and derivation toggle");
  add_config_options(ablate, ablate_cfg);
  ablate->add_option("--data", data_dir);
  ablate->add_option("--seed", seed)->required();
  ablate->add_option("--epochs", epochs, "override epochs for the ablation runs");
  ablate->add_option("--report", report_path, "write the comparison table as JSON");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every operation");
  gradcheck->add_option("--seed", seed);
  gradcheck->add_option("--tolerance", tolerance);

  CLI::App* gen = app.add_subcommand("generate-data", "write a synthetic dataset directory");
  add_config_options(gen, gen_cfg);
  gen->add_option("--out", out_dir)->required();
  gen->add_option("--seed", seed)->required();
  gen->add_option("--count", count);
  gen->add_option("--val-fraction", val_fraction);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_cfg, data_dir, out_dir, seed, verbose);
    if (eval->parsed()) return cmd_eval(pred_dir, gt_dir, report_path);
    if (infer->parsed()) return cmd_infer(ckpt, config_file, input, output, attention_dir);
    if (dump->parsed()) return cmd_infer(ckpt, config_file, input, "", attention_dir);
    if (pyramid->parsed()) return cmd_pyramid(input, levels, out_dir, raw, per_level);
    if (ablate->parsed()) return cmd_ablate(ablate_cfg, data_dir, seed, report_path, epochs);
    if (gradcheck->parsed()) return cmd_gradcheck(seed ? seed : 1234, tolerance);
    if (gen->parsed()) return cmd_generate(gen_cfg, out_dir, seed, count, val_fraction);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
