#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "synood/classifier.hpp"
#include "synood/config.hpp"
#include "synood/dataset.hpp"
#include "synood/generator.hpp"
#include "synood/scoring.hpp"

namespace synood {

// Everything the detector needs at inference time. The protected classifier
// is used read-only: detection never changes its logits.
class DetectionPipeline {
 public:
  DetectionPipeline(const ClassifierModel* classifier, const GeneratorModel* generator,
                    const ConditionalBinaryClassifier* cb, MaskSpec mask_spec,
                    CascadeConfig cascade, std::uint64_t seed, bool unconditioned = false);

  // Scores one [3,H,W] image: classifier prediction, deterministic masked
  // synthesis under that label, then every configured scorer. The mask draw
  // depends only on (seed, sample_index), not on call order.
  std::map<std::string, double> score_sample(const Tensor& pixels, std::uint64_t sample_index,
                                             int* predicted_label = nullptr,
                                             SynthesisPair* pair_out = nullptr) const;

  // Per-scorer thresholds from an In-D validation set.
  void calibrate(const Dataset& validation);

  CascadeDecision detect(const Tensor& pixels, std::uint64_t sample_index,
                         int* predicted_label = nullptr) const;

  Cascade& cascade() { return cascade_; }
  const Cascade& cascade() const { return cascade_; }
  const MaskSpec& mask_spec() const { return mask_spec_; }
  std::uint64_t seed() const { return seed_; }
  bool unconditioned() const { return unconditioned_; }
  // Deterministic synthesis (z = mu) is the default; turning it off draws the
  // latent noise from the same per-sample stream as the mask.
  void set_deterministic(bool deterministic) { deterministic_ = deterministic; }
  bool deterministic() const { return deterministic_; }
  const ConditionalBinaryClassifier& cb() const { return *cb_; }
  const ClassifierModel& classifier() const { return *classifier_; }
  const GeneratorModel& generator() const { return *generator_; }

 private:
  void check_ready() const;  // all models present and trained

  const ClassifierModel* classifier_;
  const GeneratorModel* generator_;
  const ConditionalBinaryClassifier* cb_;
  MaskSpec mask_spec_;
  Cascade cascade_;
  std::uint64_t seed_;
  bool unconditioned_;
  bool deterministic_ = true;
};

// Owning bundle of the three trained models of one experiment.
struct TrainedModels {
  std::unique_ptr<ClassifierModel> classifier;
  std::unique_ptr<GeneratorModel> generator;
  std::unique_ptr<ConditionalBinaryClassifier> cb;
};

// Full training orchestration: classifier (cross-entropy), then generator +
// discriminator (adversarial), then C_b against the frozen generator, with
// external data pseudo-labeled by the trained classifier. Checkpoints land
// under `out_dir` when non-empty.
TrainedModels train_all(const ExperimentConfig& config, const SplitResult& splits,
                        const Dataset* external, const std::string& out_dir = "");

// Rebuilds models from checkpoints written by train_all / the CLI.
TrainedModels load_models(const ExperimentConfig& config, const std::string& dir);

DetectionPipeline make_pipeline(const ExperimentConfig& config, const TrainedModels& models);

// Threshold persistence (JSON side-car next to the checkpoints).
void save_calibration(const std::string& path, const CalibrationResult& calibration);
CalibrationResult load_calibration(const std::string& path);

}  // namespace synood
