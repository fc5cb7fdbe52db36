#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>

#include "doctest.h"
#include "megalap/trainer.hpp"

using namespace megalap;
namespace fs = std::filesystem;

namespace {

AppConfig tiny_config(uint64_t seed) {
  AppConfig cfg;
  cfg.apply_desk_preset();
  cfg.net.depth = 2;
  cfg.net.stem_channels = 4;
  cfg.net.ega.cbam_reduction = 2;
  cfg.net.input_h = 32;
  cfg.net.input_w = 32;
  cfg.synth.height = 32;
  cfg.synth.width = 32;
  cfg.synth.count = 2;
  cfg.synth.seed = seed;
  cfg.train.seed = seed;
  cfg.train.n_epoch = 2;
  cfg.train.batch_size = 2;
  return cfg;
}

}  // namespace

TEST_CASE("learning-rate schedule endpoints and midpoint") {
  TrainConfig cfg;
  cfg.n_epoch = 200;
  CHECK(lr_at(0, cfg) == 1e-3);  // exact
  CHECK(lr_at(cfg.n_epoch, cfg) == 0.0);
  // frozen from a 40-digit evaluation of 1e-3 * (1 - 100/200)^0.9
  CHECK(lr_at(100, cfg) == doctest::Approx(0.0005358867312681465821).epsilon(1e-14));
  // and of 1e-3 * (1 - 37/200)^0.9
  CHECK(lr_at(37, cfg) == doctest::Approx(0.0008318439222842327022).epsilon(1e-14));
  CHECK_THROWS_AS(lr_at(-1, cfg), std::invalid_argument);
  CHECK_THROWS_AS(lr_at(201, cfg), std::invalid_argument);
}

TEST_CASE("learning rate decreases strictly over the whole schedule") {
  TrainConfig cfg;
  cfg.n_epoch = 200;
  for (double power : {0.3, 0.9, 1.0}) {
    cfg.power = power;
    double prev = lr_at(0, cfg);
    for (i64 e = 1; e <= cfg.n_epoch; ++e) {
      const double lr = lr_at(e, cfg);
      CHECK(lr < prev);
      prev = lr;
    }
  }
}

TEST_CASE("config file round-trips every key") {
  AppConfig cfg;
  cfg.apply_desk_preset();
  cfg.net.depth = 4;
  cfg.net.stem_channels = 8;
  cfg.net.channel_schedule = {8, 16, 24, 40};
  cfg.net.hf_derivation = HfDerivation::PerLevelBandPass;
  cfg.net.hf_interpolate = true;
  cfg.net.ega.use_boundary = false;
  cfg.net.ega.signed_boundary = true;
  cfg.train.init_lr = 0.25;
  cfg.train.n_epoch = 17;
  cfg.train.seed = 99;
  cfg.train.augment = false;
  cfg.synth.count = 5;
  cfg.synth.boundary_softness = 2.5;

  const std::string path = (fs::temp_directory_path() / "megalap_cfg_test.cfg").string();
  save_config(path, cfg);
  const AppConfig back = load_config(path);
  CHECK(back.net.depth == 4);
  CHECK(back.net.channel_schedule == std::vector<i64>{8, 16, 24, 40});
  CHECK(back.net.hf_derivation == HfDerivation::PerLevelBandPass);
  CHECK(back.net.hf_interpolate == true);
  CHECK(back.net.ega.use_boundary == false);
  CHECK(back.net.ega.signed_boundary == true);
  CHECK(back.train.init_lr == 0.25);
  CHECK(back.train.n_epoch == 17);
  CHECK(back.train.seed == 99);
  CHECK(back.train.augment == false);
  CHECK(back.synth.count == 5);
  CHECK(back.synth.boundary_softness == 2.5);
  fs::remove(path);
}

TEST_CASE("config rejects unknown keys and malformed lines") {
  AppConfig cfg;
  CHECK_THROWS_WITH_AS(cfg.set("not_a_key", "1"), doctest::Contains("unknown key"), std::invalid_argument);
  const std::string path = (fs::temp_directory_path() / "megalap_cfg_bad.cfg").string();
  {
    std::ofstream os(path);
    os << "depth 5\n";
  }
  CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("expected 'key = value'"), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("a short training run is deterministic and decreases the loss") {
  const AppConfig cfg = tiny_config(5);
  const auto samples = generate_samples(cfg.synth);

  Meganet net_a(cfg.net, cfg.train.seed);
  RunRecord a = train_network(net_a, cfg, samples, {});
  Meganet net_b(cfg.net, cfg.train.seed);
  RunRecord b = train_network(net_b, cfg, samples, {});

  REQUIRE(a.epochs.size() == 2);
  CHECK(a.steps == 2);
  for (size_t i = 0; i < a.epochs.size(); ++i) {
    CHECK(a.epochs[i].loss == b.epochs[i].loss);  // bitwise
    CHECK(a.epochs[i].lr == b.epochs[i].lr);
  }
  for (size_t i = 0; i < net_a.params().all().size(); ++i) {
    const Parameter* pa = net_a.params().all()[i];
    const Parameter* pb = net_b.params().all()[i];
    for (i64 j = 0; j < pa->value.numel(); ++j) CHECK(pa->value[j] == pb->value[j]);
  }
  CHECK(a.param_count == net_a.params().total_count());
  CHECK(a.final_metrics.per_image.size() == samples.size());
}

TEST_CASE("run record serializes with the documented fields") {
  const AppConfig cfg = tiny_config(6);
  const auto samples = generate_samples(cfg.synth);
  Meganet net(cfg.net, cfg.train.seed);
  const RunRecord rec = train_network(net, cfg, samples, {});
  const nlohmann::json j = run_record_to_json(rec);
  CHECK(j.contains("param_count"));
  CHECK(j.at("steps").get<i64>() == rec.steps);
  CHECK(j.at("epochs").size() == 2);
  CHECK(j.at("epochs")[0].contains("lr"));
  CHECK(j.at("epochs")[0].contains("loss"));
  CHECK(j.at("final_metrics").contains("dataset_mean"));
  CHECK(j.at("final_metrics").at("dataset_mean").contains("mdice"));
}

TEST_CASE("prediction helper returns a full-resolution probability map") {
  const AppConfig cfg = tiny_config(7);
  const auto samples = generate_samples(cfg.synth);
  Meganet net(cfg.net, cfg.train.seed);
  const Tensor prob = predict_full(net, samples[0].image);
  CHECK(prob.shape() == std::vector<i64>{1, 32, 32});
  for (i64 i = 0; i < prob.numel(); ++i) {
    CHECK(prob[i] > 0.0);
    CHECK(prob[i] < 1.0);
  }
}
