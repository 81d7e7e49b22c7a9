#include "synood/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "synood/checkpoint.hpp"
#include "synood/error.hpp"
#include "synood/training.hpp"

namespace synood {

namespace fs = std::filesystem;

DetectionPipeline::DetectionPipeline(const ClassifierModel* classifier,
                                     const GeneratorModel* generator,
                                     const ConditionalBinaryClassifier* cb, MaskSpec mask_spec,
                                     CascadeConfig cascade, std::uint64_t seed,
                                     bool unconditioned)
    : classifier_(classifier),
      generator_(generator),
      cb_(cb),
      mask_spec_(mask_spec),
      cascade_(std::move(cascade)),
      seed_(seed),
      unconditioned_(unconditioned) {
  if (classifier_ == nullptr || generator_ == nullptr || cb_ == nullptr) {
    throw ValidationError("DetectionPipeline: all three models are required");
  }
}

void DetectionPipeline::check_ready() const {
  if (!classifier_->trained()) {
    throw StateError("DetectionPipeline: the classifier has not been trained");
  }
  if (!generator_->trained()) {
    throw StateError("DetectionPipeline: the generator has not been trained");
  }
  if (!cb_->trained()) {
    throw StateError("DetectionPipeline: the binary classifier has not been trained");
  }
}

std::map<std::string, double> DetectionPipeline::score_sample(const Tensor& pixels,
                                                              std::uint64_t sample_index,
                                                              int* predicted_label,
                                                              SynthesisPair* pair_out) const {
  check_ready();
  const int predicted = classifier_->predict(pixels);
  if (predicted_label != nullptr) *predicted_label = predicted;
  const int cond = unconditioned_ ? 0 : predicted;

  // Per-sample stream: scoring is independent of the order samples arrive in.
  Rng mask_rng = Rng::stream(seed_, "detect-mask", sample_index);
  SynthesisPair pair =
      generator_->synthesize(pixels, cond, mask_spec_, mask_rng, deterministic_);
  if (pair_out != nullptr) *pair_out = pair;

  std::map<std::string, double> scores;
  for (const std::string& name : cascade_.config().scorers) {
    scores[name] = scorer_value(name, *cb_, pixels, pair.x_prime, cond);
  }
  return scores;
}

void DetectionPipeline::calibrate(const Dataset& validation) {
  check_ready();
  if (validation.items.empty()) {
    throw ValidationError("DetectionPipeline: calibration set is empty");
  }
  std::map<std::string, std::vector<double>> collected;
  for (std::size_t i = 0; i < validation.items.size(); ++i) {
    std::map<std::string, double> scores =
        score_sample(validation.items[i].pixels, static_cast<std::uint64_t>(i));
    for (const auto& [name, value] : scores) collected[name].push_back(value);
  }
  cascade_.calibrate(collected);
}

CascadeDecision DetectionPipeline::detect(const Tensor& pixels, std::uint64_t sample_index,
                                          int* predicted_label) const {
  return cascade_.decide(score_sample(pixels, sample_index, predicted_label));
}

TrainedModels train_all(const ExperimentConfig& config, const SplitResult& splits,
                        const Dataset* external, const std::string& out_dir) {
  const bool artifacts = !out_dir.empty();
  if (artifacts) fs::create_directories(out_dir);

  TrainedModels models;
  {
    Rng init = Rng::stream(config.seed, "init-classifier");
    models.classifier = std::make_unique<ClassifierModel>(config.classifier, init);
  }
  train_classifier(*models.classifier, splits.train, splits.val, config.train_classifier);
  if (artifacts) {
    save_checkpoint((fs::path(out_dir) / "classifier_final.ckpt").string(),
                    models.classifier->params(),
                    {{"kind", "classifier"},
                     {"class_count", config.classifier.class_count},
                     {"channels", config.classifier.channels}});
  }

  {
    Rng init = Rng::stream(config.seed, "init-generator");
    models.generator = std::make_unique<GeneratorModel>(config.generator, init);
  }
  DiscriminatorModel disc = [&] {
    Rng init = Rng::stream(config.seed, "init-discriminator");
    return DiscriminatorModel(config.discriminator, init);
  }();
  train_generator(*models.generator, disc, splits.train, config.train_generator, out_dir);

  {
    Rng init = Rng::stream(config.seed, "init-cb");
    models.cb = std::make_unique<ConditionalBinaryClassifier>(config.cb, init);
  }
  Dataset pseudo;
  const Dataset* cb_external = nullptr;
  if (external != nullptr && !external->items.empty()) {
    pseudo = *external;
    pseudo.items = pseudo_label(*models.classifier, std::move(pseudo.items));
    pseudo.class_count = config.cb.class_count;
    cb_external = &pseudo;
  }
  train_binary_classifier(*models.cb, *models.generator, splits.train, cb_external,
                          config.train_cb);
  if (artifacts) {
    save_checkpoint((fs::path(out_dir) / "cb_final.ckpt").string(), models.cb->params(),
                    {{"kind", "cb"},
                     {"class_count", config.cb.class_count},
                     {"channels", config.cb.channels}});
  }
  return models;
}

TrainedModels load_models(const ExperimentConfig& config, const std::string& dir) {
  TrainedModels models;
  Rng init(0);  // values are overwritten by the checkpoints
  models.classifier = std::make_unique<ClassifierModel>(config.classifier, init);
  models.generator = std::make_unique<GeneratorModel>(config.generator, init);
  models.cb = std::make_unique<ConditionalBinaryClassifier>(config.cb, init);
  load_checkpoint((fs::path(dir) / "classifier_final.ckpt").string(),
                  models.classifier->params());
  load_checkpoint((fs::path(dir) / "generator_final.ckpt").string(), models.generator->params());
  load_checkpoint((fs::path(dir) / "cb_final.ckpt").string(), models.cb->params());
  models.classifier->mark_trained();
  models.generator->mark_trained();
  models.cb->mark_trained();
  return models;
}

DetectionPipeline make_pipeline(const ExperimentConfig& config, const TrainedModels& models) {
  return DetectionPipeline(models.classifier.get(), models.generator.get(), models.cb.get(),
                           config.mask, config.cascade, config.seed, config.unconditioned);
}

void save_calibration(const std::string& path, const CalibrationResult& calibration) {
  nlohmann::json j{{"thresholds", calibration.thresholds},
                   {"pass_rates", calibration.pass_rates}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write calibration '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed while writing calibration '" + path + "'");
}

CalibrationResult load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("calibration '" + path + "' is not valid JSON: " + std::string(e.what()));
  }
  CalibrationResult result;
  if (!j.contains("thresholds") || !j["thresholds"].is_object()) {
    throw IoError("calibration '" + path + "' is missing its thresholds");
  }
  for (const auto& item : j["thresholds"].items()) {
    result.thresholds[item.key()] = item.value().get<double>();
  }
  if (j.contains("pass_rates")) {
    for (const auto& item : j["pass_rates"].items()) {
      result.pass_rates[item.key()] = item.value().get<double>();
    }
  }
  return result;
}

}  // namespace synood
