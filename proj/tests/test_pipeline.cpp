#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "synood/cli.hpp"
#include "synood/config.hpp"
#include "synood/error.hpp"
#include "synood/evaluation.hpp"
#include "synood/pipeline.hpp"
#include "synood/toydata.hpp"
#include "testutil.hpp"

using namespace synood;
using testutil::run_cli;
using testutil::TempDir;

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Shared fixture: one tiny but fully trained experiment, reused read-only by
// every pipeline-level test case in this binary.
// ---------------------------------------------------------------------------

namespace {

ExperimentConfig tiny_experiment() {
  ExperimentConfig config;
  config.seed = 33;
  config.classifier.class_count = 2;
  config.classifier.channels = 4;
  config.generator.class_count = 2;
  config.generator.latent_dim = 8;
  config.generator.channel_mult = 2;
  config.discriminator.class_count = 2;
  config.discriminator.channels = 2;
  config.cb.class_count = 2;
  config.cb.channels = 2;
  config.train_classifier.learning_rate = 2e-3;
  config.train_classifier.batch_size = 16;
  config.train_classifier.steps = 60;
  config.train_generator.learning_rate = 1e-3;
  config.train_generator.batch_size = 8;
  config.train_generator.steps = 6;
  config.train_cb.learning_rate = 1e-3;
  config.train_cb.batch_size = 8;
  config.train_cb.steps = 4;
  return with_seed(std::move(config), 33);
}

struct Fixture {
  TempDir data_dir{"pipe-data"};
  TempDir model_dir{"pipe-models"};
  ExperimentConfig config;
  SplitResult splits;
  Dataset ood;
  Dataset external;
  TrainedModels models;
};

Fixture& fx() {
  static Fixture f;
  static const bool ready = [] {
    ToyDataConfig toy;
    toy.class_count = 2;
    toy.count = 80;
    toy.ood_count = 24;
    toy.external_count = 12;
    toy.seed = 77;
    write_toy_shapes(toy, f.data_dir.str());

    DatasetManifest manifest;
    manifest.name = "toy";
    manifest.root = f.data_dir.str("in_d.bin");
    Dataset in_d = load_dataset(manifest, Source::IN_D_TRAIN);
    manifest.root = f.data_dir.str("ood.bin");
    f.ood = load_dataset(manifest, Source::OOD_TEST);
    manifest.root = f.data_dir.str("external.bin");
    f.external = load_dataset(manifest, Source::EXTERNAL_UNLABELED);

    f.config = tiny_experiment();
    f.splits = split(in_d, {0.6, 0.3, 0.1}, f.config.seed);
    f.models = train_all(f.config, f.splits, &f.external, f.model_dir.str());
    return true;
  }();
  REQUIRE(ready);
  return f;
}

DetectionPipeline calibrated_pipeline() {
  Fixture& f = fx();
  DetectionPipeline pipeline = make_pipeline(f.config, f.models);
  pipeline.calibrate(f.splits.val);
  return pipeline;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

TEST_CASE("experiment config round-trips through JSON and disk") {
  ExperimentConfig config = tiny_experiment();
  config.in_d.name = "toyset";
  config.in_d.root = "/data/in_d.bin";
  config.in_d.image_count = 80;
  config.in_d.class_count = 2;
  config.in_d.split_fractions = {0.6, 0.3, 0.1};
  config.mask.style = MaskStyle::PATCHED;
  config.mask.ratio_high = 0.25;
  config.mask.patch_size = 8;
  config.cascade.target_tpr = 0.9;
  config.cascade.joint_calibration = true;
  config.unconditioned = true;
  config = with_seed(std::move(config), 99);

  nlohmann::json j = config_to_json(config);
  ExperimentConfig back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  CHECK(back.seed == 99);
  CHECK(back.mask.style == MaskStyle::PATCHED);
  CHECK(back.train_generator.seed == 99);
  CHECK(back.train_generator.unconditioned);
  CHECK(back.train_cb.mask_spec.patch_size == 8);
  CHECK(back.in_d.split_fractions[1] == 0.3);
  // Class counts are wired from the In-D manifest.
  CHECK(back.generator.class_count == 2);
  CHECK(back.cb.class_count == 2);

  TempDir dir("config");
  save_config(dir.str("exp.json"), config);
  ExperimentConfig loaded = load_config(dir.str("exp.json"));
  CHECK(config_to_json(loaded) == j);
}

TEST_CASE("config parsing fails loudly on unknown keys and bad values") {
  nlohmann::json base = config_to_json(tiny_experiment());

  nlohmann::json top_typo = base;
  top_typo["sede"] = 5;
  CHECK_THROWS_AS(config_from_json(top_typo), ValidationError);

  nlohmann::json nested_typo = base;
  nested_typo["generator"]["latent_dimm"] = 16;
  CHECK_THROWS_WITH_AS(config_from_json(nested_typo),
                       "config: unknown key 'generator.latent_dimm'", ValidationError);

  nlohmann::json bad_scorer = base;
  bad_scorer["cascade"]["scorers"] = {"cb", "psnr"};
  CHECK_THROWS_AS(config_from_json(bad_scorer), ValidationError);

  nlohmann::json bad_tpr = base;
  bad_tpr["cascade"]["target_tpr"] = 1.0;
  CHECK_THROWS_AS(config_from_json(bad_tpr), ValidationError);

  nlohmann::json bad_latent = base;
  bad_latent["generator"]["latent_dim"] = 0;
  CHECK_THROWS_AS(config_from_json(bad_latent), ValidationError);

  nlohmann::json bad_mask = base;
  bad_mask["mask"]["style"] = "checkerboard";
  CHECK_THROWS_AS(config_from_json(bad_mask), ValidationError);

  nlohmann::json bad_ratio = base;
  bad_ratio["mask"]["ratio_low"] = 0.5;
  bad_ratio["mask"]["ratio_high"] = 0.2;
  CHECK_THROWS_AS(config_from_json(bad_ratio), ValidationError);

  nlohmann::json bad_fracs = base;
  bad_fracs["data"]["in_d"]["split_fractions"] = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(config_from_json(bad_fracs), ValidationError);
}

TEST_CASE("load_config distinguishes missing files from malformed ones") {
  TempDir dir("config-io");
  CHECK_THROWS_AS(load_config(dir.str("absent.json")), IoError);
  {
    std::ofstream out(dir.str("broken.json"));
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_config(dir.str("broken.json")), ValidationError);
}

// ---------------------------------------------------------------------------
// Pipeline mechanics
// ---------------------------------------------------------------------------

TEST_CASE("pipeline refuses untrained models and null wiring") {
  Rng init(1);
  ClassifierConfig ccfg;
  ccfg.channels = 2;
  ClassifierModel classifier(ccfg, init);
  GeneratorConfig gcfg;
  gcfg.latent_dim = 8;
  gcfg.channel_mult = 2;
  GeneratorModel generator(gcfg, init);
  CbConfig bcfg;
  bcfg.channels = 2;
  ConditionalBinaryClassifier cb(bcfg, init);

  CHECK_THROWS_AS(DetectionPipeline(nullptr, &generator, &cb, MaskSpec{}, CascadeConfig{}, 1),
                  ValidationError);

  DetectionPipeline pipeline(&classifier, &generator, &cb, MaskSpec{}, CascadeConfig{}, 1);
  Tensor x({3, 32, 32}, 0.5);
  CHECK_THROWS_AS(pipeline.score_sample(x, 0), StateError);
  CHECK_THROWS_AS(pipeline.detect(x, 0), StateError);
  Dataset val;
  val.class_count = 2;
  CHECK_THROWS_AS(pipeline.calibrate(val), StateError);
}

TEST_CASE("score_sample is deterministic and independent of visit order") {
  DetectionPipeline pipeline = calibrated_pipeline();
  const Dataset& test = fx().splits.test;
  REQUIRE(test.size() >= 3);

  // Score 0 then 2, and 2 then 0: per-sample streams must make the order
  // irrelevant.
  auto s0_first = pipeline.score_sample(test.items[0].pixels, 0);
  auto s2_second = pipeline.score_sample(test.items[2].pixels, 2);
  auto s2_first = pipeline.score_sample(test.items[2].pixels, 2);
  auto s0_second = pipeline.score_sample(test.items[0].pixels, 0);
  CHECK(s0_first == s0_second);
  CHECK(s2_first == s2_second);
  CHECK(s0_first.size() == 3);
  CHECK(s0_first.count(kScorerCb) == 1);
  CHECK(s0_first.count(kScorerSsim) == 1);
  CHECK(s0_first.count(kScorerFeature) == 1);

  // The reported label matches the protected classifier.
  int predicted = -1;
  SynthesisPair pair;
  pipeline.score_sample(test.items[0].pixels, 0, &predicted, &pair);
  CHECK(predicted == fx().models.classifier->predict(test.items[0].pixels));
  CHECK(pair.label == predicted);
  CHECK(pair.x_prime.shape() == std::vector<int>{3, 32, 32});

  // detect() is exactly cascade().decide() over score_sample().
  CascadeDecision via_detect = pipeline.detect(test.items[1].pixels, 1);
  CascadeDecision via_scores =
      pipeline.cascade().decide(pipeline.score_sample(test.items[1].pixels, 1));
  CHECK(via_detect.is_ood == via_scores.is_ood);
  CHECK(via_detect.fused_score == via_scores.fused_score);
  CHECK(via_detect.scores == via_scores.scores);
}

TEST_CASE("stochastic synthesis stays reproducible per sample index") {
  DetectionPipeline pipeline = calibrated_pipeline();
  const Tensor& x = fx().splits.test.items[0].pixels;
  auto deterministic = pipeline.score_sample(x, 0);

  pipeline.set_deterministic(false);
  CHECK_FALSE(pipeline.deterministic());
  auto stochastic_a = pipeline.score_sample(x, 0);
  auto stochastic_b = pipeline.score_sample(x, 0);
  CHECK(stochastic_a == stochastic_b);
  // Latent noise moves the synthesis, so at least one scorer must move.
  CHECK(stochastic_a != deterministic);
}

TEST_CASE("calibration meets its per-scorer pass-rate target on the calibration set") {
  DetectionPipeline pipeline = calibrated_pipeline();
  const Dataset& val = fx().splits.val;

  const CalibrationResult& cal = pipeline.cascade().calibration();
  for (const std::string& name : pipeline.cascade().config().scorers) {
    CHECK(cal.pass_rates.at(name) >= 0.95 - 1e-12);

    // Recount from scratch: the threshold really keeps >= 95% of the set.
    int kept = 0;
    for (std::size_t i = 0; i < val.items.size(); ++i) {
      auto scores = pipeline.score_sample(val.items[i].pixels, static_cast<std::uint64_t>(i));
      if (scores.at(name) >= cal.thresholds.at(name)) ++kept;
    }
    CHECK(static_cast<double>(kept) / val.size() >= 0.95 - 1e-12);
  }

  // Union bound over the cascade: at most sum of per-scorer rejections.
  int flagged = 0;
  for (std::size_t i = 0; i < val.items.size(); ++i) {
    if (pipeline.detect(val.items[i].pixels, static_cast<std::uint64_t>(i)).is_ood) ++flagged;
  }
  const double budget =
      static_cast<double>(pipeline.cascade().config().scorers.size()) * 0.05 + 1e-12;
  CHECK(static_cast<double>(flagged) / val.size() <= budget);
}

TEST_CASE("attaching and running the detector never perturbs the classifier") {
  Fixture& f = fx();
  Tensor batch({4, 3, 32, 32});
  for (int i = 0; i < 4; ++i) {
    const Tensor& px = f.splits.test.items[static_cast<std::size_t>(i)].pixels;
    std::copy(px.data(), px.data() + px.size(), batch.data() + i * px.size());
  }

  Tensor before = f.models.classifier->logits(batch);
  const double checksum_before = f.models.classifier->params().value_checksum();

  DetectionPipeline pipeline = calibrated_pipeline();
  for (int i = 0; i < 4; ++i) {
    pipeline.detect(f.splits.test.items[static_cast<std::size_t>(i)].pixels,
                    static_cast<std::uint64_t>(i));
  }

  Tensor after = f.models.classifier->logits(batch);
  REQUIRE(before.size() == after.size());
  CHECK(std::memcmp(before.data(), after.data(),
                    sizeof(double) * static_cast<std::size_t>(before.size())) == 0);
  CHECK(f.models.classifier->params().value_checksum() == checksum_before);
}

TEST_CASE("train_all artifacts reload into an equivalent pipeline") {
  Fixture& f = fx();
  CHECK(fs::exists(f.model_dir.str("classifier_final.ckpt")));
  CHECK(fs::exists(f.model_dir.str("generator_final.ckpt")));
  CHECK(fs::exists(f.model_dir.str("discriminator_final.ckpt")));
  CHECK(fs::exists(f.model_dir.str("cb_final.ckpt")));

  TrainedModels loaded = load_models(f.config, f.model_dir.str());
  CHECK(loaded.classifier->trained());
  CHECK(loaded.generator->trained());
  CHECK(loaded.cb->trained());
  CHECK(loaded.classifier->params().value_checksum() ==
        f.models.classifier->params().value_checksum());
  CHECK(loaded.generator->params().value_checksum() ==
        f.models.generator->params().value_checksum());
  CHECK(loaded.cb->params().value_checksum() == f.models.cb->params().value_checksum());

  // The reloaded pipeline reproduces the original scores bit-for-bit.
  DetectionPipeline original = calibrated_pipeline();
  DetectionPipeline reloaded = make_pipeline(f.config, loaded);
  reloaded.cascade().set_calibration(original.cascade().calibration());
  const Tensor& x = f.splits.test.items[0].pixels;
  CHECK(original.score_sample(x, 0) == reloaded.score_sample(x, 0));

  CHECK_THROWS_AS(load_models(f.config, f.data_dir.str()), IoError);
}

TEST_CASE("calibration persists through its JSON side-car") {
  DetectionPipeline pipeline = calibrated_pipeline();
  TempDir dir("thresholds");
  const std::string path = dir.str("thresholds.json");
  save_calibration(path, pipeline.cascade().calibration());
  CalibrationResult loaded = load_calibration(path);
  CHECK(loaded.thresholds == pipeline.cascade().calibration().thresholds);
  CHECK(loaded.pass_rates == pipeline.cascade().calibration().pass_rates);

  CHECK_THROWS_AS(load_calibration(dir.str("missing.json")), IoError);
  {
    std::ofstream out(dir.str("broken.json"));
    out << "{ nope";
  }
  CHECK_THROWS_AS(load_calibration(dir.str("broken.json")), IoError);
  {
    std::ofstream out(dir.str("empty.json"));
    out << "{}";
  }
  CHECK_THROWS_AS(load_calibration(dir.str("empty.json")), IoError);
}

// ---------------------------------------------------------------------------
// Benchmark evaluation
// ---------------------------------------------------------------------------

TEST_CASE("run_benchmark reports per-scorer and fused metrics with decisions") {
  DetectionPipeline pipeline = calibrated_pipeline();
  Fixture& f = fx();

  std::vector<ScoreRow> rows;
  BenchmarkReport report = run_benchmark(pipeline, f.splits.test, f.ood, &rows);

  CHECK(report.in_count == f.splits.test.size());
  CHECK(report.ood_count == f.ood.size());
  CHECK(report.has_decisions);
  CHECK(report.flagged_in_rate >= 0.0);
  CHECK(report.flagged_in_rate <= 1.0);
  CHECK(report.flagged_ood_rate >= 0.0);
  CHECK(report.flagged_ood_rate <= 1.0);

  REQUIRE(report.rows.size() == 4);  // cb, ssim, feature, fused
  CHECK(report.rows[0].name == kScorerCb);
  CHECK(report.rows[1].name == kScorerSsim);
  CHECK(report.rows[2].name == kScorerFeature);
  CHECK(report.rows[3].name == "fused");
  for (const DetectorMetrics& m : report.rows) {
    CHECK(m.auroc >= 0.0);
    CHECK(m.auroc <= 1.0);
    CHECK(m.fpr_at_tpr95 >= 0.0);
    CHECK(m.fpr_at_tpr95 <= 1.0);
  }

  // One row per (sample, scorer) plus the fused margin per sample.
  const int samples = f.splits.test.size() + f.ood.size();
  CHECK(rows.size() == static_cast<std::size_t>(samples) * 4);

  CHECK_THROWS_AS(run_benchmark(pipeline, Dataset{}, f.ood, nullptr), ValidationError);

  DetectionPipeline uncalibrated = make_pipeline(f.config, f.models);
  CHECK_THROWS_AS(run_benchmark(uncalibrated, f.splits.test, f.ood, nullptr), StateError);
}

TEST_CASE("offline evaluation over the exported CSV matches the live benchmark") {
  DetectionPipeline pipeline = calibrated_pipeline();
  Fixture& f = fx();
  std::vector<ScoreRow> rows;
  BenchmarkReport live = run_benchmark(pipeline, f.splits.test, f.ood, &rows);

  TempDir dir("scores");
  const std::string path = dir.str("scores.csv");
  write_scores_csv(path, rows);
  std::vector<ScoreRow> back = read_scores_csv(path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].sample_id == rows[i].sample_id);
    CHECK(back[i].scorer == rows[i].scorer);
    CHECK(back[i].source == rows[i].source);
    CHECK(back[i].score == rows[i].score);  // %.17g survives the round trip
  }

  BenchmarkReport offline = evaluate_rows(back);
  CHECK_FALSE(offline.has_decisions);
  CHECK(offline.in_count == live.in_count);
  CHECK(offline.ood_count == live.ood_count);
  std::map<std::string, DetectorMetrics> by_name;
  for (const DetectorMetrics& m : offline.rows) by_name[m.name] = m;
  for (const DetectorMetrics& m : live.rows) {
    REQUIRE(by_name.count(m.name) == 1);
    CHECK(by_name[m.name].auroc == m.auroc);
    CHECK(by_name[m.name].fpr_at_tpr95 == m.fpr_at_tpr95);
    CHECK(by_name[m.name].aupr_in == m.aupr_in);
    CHECK(by_name[m.name].aupr_out == m.aupr_out);
  }
  // run_benchmark and evaluate_rows both keep "fused" last.
  CHECK(offline.rows.back().name == "fused");
}

TEST_CASE("scores CSV reader rejects malformed files") {
  TempDir dir("bad-csv");
  CHECK_THROWS_AS(read_scores_csv(dir.str("missing.csv")), IoError);

  const std::string wrong_header = dir.str("header.csv");
  {
    std::ofstream out(wrong_header);
    out << "id,name,value\n";
  }
  CHECK_THROWS_AS(read_scores_csv(wrong_header), ValidationError);

  const std::string short_row = dir.str("short.csv");
  {
    std::ofstream out(short_row);
    out << "sample_id,scorer_name,score,source\n";
    out << "a,cb,1.5\n";
  }
  CHECK_THROWS_AS(read_scores_csv(short_row), ValidationError);

  const std::string bad_number = dir.str("number.csv");
  {
    std::ofstream out(bad_number);
    out << "sample_id,scorer_name,score,source\n";
    out << "a,cb,not-a-number,in_d_test\n";
  }
  CHECK_THROWS_AS(read_scores_csv(bad_number), ValidationError);

  CHECK_THROWS_AS(evaluate_rows({{"a", "cb", 1.0, "in_d_train"}}), ValidationError);
  CHECK_THROWS_AS(evaluate_rows({}), ValidationError);
}

TEST_CASE("report serialization gates decision rates on their presence") {
  BenchmarkReport report;
  report.rows.push_back({"cb", 0.25, 0.9, 0.85, 0.8});
  report.in_count = 10;
  report.ood_count = 20;

  nlohmann::json offline = report_to_json(report);
  CHECK(offline["in_count"] == 10);
  CHECK(offline["detectors"].size() == 1);
  CHECK(offline["detectors"][0]["auroc"] == 0.9);
  CHECK_FALSE(offline.contains("flagged_in_rate"));
  std::string text = report_to_text(report);
  CHECK(text.find("detector") != std::string::npos);
  CHECK(text.find("cb") != std::string::npos);
  CHECK(text.find("flagged") == std::string::npos);

  report.has_decisions = true;
  report.flagged_in_rate = 0.05;
  report.flagged_ood_rate = 0.75;
  nlohmann::json live = report_to_json(report);
  CHECK(live["flagged_in_rate"] == 0.05);
  CHECK(report_to_text(report).find("flagged") != std::string::npos);
}

TEST_CASE("source names are stable identifiers") {
  CHECK(std::string(source_name(Source::IN_D_TRAIN)) == "in_d_train");
  CHECK(std::string(source_name(Source::IN_D_VAL)) == "in_d_val");
  CHECK(std::string(source_name(Source::IN_D_TEST)) == "in_d_test");
  CHECK(std::string(source_name(Source::OOD_TEST)) == "ood_test");
  CHECK(std::string(source_name(Source::EXTERNAL_UNLABELED)) == "external_unlabeled");
}

// ---------------------------------------------------------------------------
// CLI surface (fast paths only; full runs belong to the acceptance gate)
// ---------------------------------------------------------------------------

TEST_CASE("cli exit codes: usage, configuration and runtime errors") {
  CHECK(run_cli({"--help"}) == 0);
  CHECK(run_cli({}) == 2);                     // a subcommand is required
  CHECK(run_cli({"frobnicate"}) == 2);         // unknown subcommand
  CHECK(run_cli({"gen-toy-data"}) == 2);       // missing --out
  CHECK(run_cli({"ablate", "--config", "x.json", "--kind", "nonsense", "--out", "y"}) == 2);

  TempDir dir("cli-codes");
  // Missing config file: a usage problem, not a runtime failure.
  CHECK(run_cli({"train-classifier", "--config", dir.str("absent.json"), "--out",
                 dir.str("out")}) == 2);
}

TEST_CASE("cli gen-toy-data writes records and a ready-to-run config") {
  TempDir dir("cli-toy");
  const std::string data_dir = dir.str("data");
  const std::string config_path = dir.str("exp.json");
  CHECK(run_cli({"gen-toy-data", "--out", data_dir, "--count", "24", "--ood-count", "8",
                 "--external-count", "4", "--seed", "5", "--config-out", config_path}) == 0);
  CHECK(fs::exists(fs::path(data_dir) / "in_d.bin"));
  CHECK(fs::exists(fs::path(data_dir) / "ood.bin"));
  CHECK(fs::exists(fs::path(data_dir) / "external.bin"));

  ExperimentConfig config = load_config(config_path);
  CHECK(config.in_d.image_count == 24);
  CHECK(config.in_d.class_count == 2);
  CHECK(config.ood.image_count == 8);
  CHECK(config.in_d.root == (fs::path(data_dir) / "in_d.bin").string());
}

TEST_CASE("cli detect fails with exit 3 when checkpoints are absent") {
  TempDir dir("cli-detect");
  const std::string config_path = dir.str("exp.json");
  save_config(config_path, tiny_experiment());
  ToyDataConfig toy;
  toy.count = 4;
  toy.ood_count = 0;
  write_toy_shapes(toy, dir.str());
  CHECK(run_cli({"detect", "--config", config_path, "--models", dir.str(), "--input",
                 dir.str("in_d.bin")}) == 3);
}

TEST_CASE("cli evaluate consumes an exported scores CSV offline") {
  TempDir dir("cli-eval");
  const std::string config_path = dir.str("exp.json");
  save_config(config_path, tiny_experiment());

  std::vector<ScoreRow> rows;
  Rng rng(8);
  for (int i = 0; i < 30; ++i) {
    rows.push_back({"in#" + std::to_string(i), "cb", rng.uniform(0.5, 2.0), "in_d_test"});
    rows.push_back({"ood#" + std::to_string(i), "cb", rng.uniform(-2.0, 1.0), "ood_test"});
  }
  const std::string csv = dir.str("scores.csv");
  write_scores_csv(csv, rows);
  const std::string out_dir = dir.str("report");
  CHECK(run_cli({"evaluate", "--config", config_path, "--scores", csv, "--out", out_dir}) == 0);
  CHECK(fs::exists(fs::path(out_dir) / "metrics.txt"));

  std::ifstream in((fs::path(out_dir) / "metrics.json").string());
  REQUIRE(in.good());
  nlohmann::json report;
  in >> report;
  CHECK(report["in_count"] == 30);
  CHECK(report["detectors"][0]["name"] == "cb");
  CHECK_FALSE(report.contains("flagged_in_rate"));
}
