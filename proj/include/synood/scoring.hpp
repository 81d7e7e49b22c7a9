#pragma once

#include <map>
#include <string>
#include <vector>

#include "synood/autodiff.hpp"
#include "synood/classifier.hpp"
#include "synood/dataset.hpp"
#include "synood/generator.hpp"
#include "synood/nn.hpp"
#include "synood/rng.hpp"
#include "synood/training.hpp"

namespace synood {

// Scorer identifiers used throughout calibration, detection and reports.
// Every scorer is oriented so that higher means "more In-D-like".
inline constexpr const char* kScorerCb = "cb";
inline constexpr const char* kScorerSsim = "ssim";
inline constexpr const char* kScorerFeature = "feature";

struct CbConfig {
  int class_count = 2;
  int channels = 32;
};

// Conditional binary classifier C_b: judges whether an (input, synthesis)
// pair is semantically consistent under the conditioning label. The pair is
// fed as a channel concatenation [x, x'] through a residual trunk; the label
// enters through a projection term on the pooled features.
class ConditionalBinaryClassifier {
 public:
  ConditionalBinaryClassifier(const CbConfig& config, Rng& init_rng);

  VarPtr score_graph(VarPtr pair, const std::vector<int>& labels) const;  // [N,6,H,W] -> [N,1]
  VarPtr features_graph(VarPtr pair) const;  // pooled trunk features, [N,feature_dim]

  // Forward-only consistency score of one pair under `label`.
  double score(const Tensor& x, const Tensor& x_prime, int label) const;
  Tensor scores(const Tensor& pairs, const std::vector<int>& labels) const;  // [N]
  // Backbone embedding of a single image (fed as the degenerate pair [x,x]).
  Tensor features(const Tensor& x) const;
  int feature_dim() const { return trunk_.feature_dim; }

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const CbConfig& config() const { return config_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

 private:
  CbConfig config_;
  ParamStore params_;
  ResNetTrunk trunk_;
  Linear head_;
  Embedding proj_embed_;
  bool trained_ = false;
};

// Stacks x and x' into the [1,6,H,W] pair layout C_b consumes.
Tensor make_pair(const Tensor& x, const Tensor& x_prime);

double cb_score(const ConditionalBinaryClassifier& cb, const Tensor& x, const Tensor& x_prime,
                int label);

// Image-quality scorers: "ssim" compares the pair directly; "feature" is the
// negated L2 distance between C_b backbone embeddings (and therefore needs
// the backbone). Unknown ids raise ValidationError.
double iqa_score(const std::string& scorer_id, const Tensor& x, const Tensor& x_prime,
                 const ConditionalBinaryClassifier* backbone = nullptr);

// Dispatch over all scorer ids, including "cb".
double scorer_value(const std::string& scorer_id, const ConditionalBinaryClassifier& cb,
                    const Tensor& x, const Tensor& x_prime, int label);

struct CbTrainStats {
  std::vector<double> losses;
  double final_loss = 0.0;
};

// Hinge training of C_b against a frozen, trained generator. Positive pairs
// synthesize under the item's own label; negative pairs under a uniformly
// mismatched label. `external` (optional) contributes additional negative
// pairs only; its items must already carry pseudo-labels.
CbTrainStats train_binary_classifier(ConditionalBinaryClassifier& cb, const GeneratorModel& gen,
                                     const Dataset& in_d_train, const Dataset* external,
                                     const TrainConfig& config);

struct CascadeConfig {
  std::vector<std::string> scorers{kScorerCb, kScorerSsim, kScorerFeature};
  double target_tpr = 0.95;
  // When true, the allowed false-reject budget (1 - target_tpr) is split
  // evenly across scorers instead of being granted to each one.
  bool joint_calibration = false;
};

struct CalibrationResult {
  std::map<std::string, double> thresholds;
  std::map<std::string, double> pass_rates;  // fraction of calibration scores kept
};

// Per-scorer thresholds from In-D validation scores: the k-th smallest value
// with k = floor(n * (1 - tpr_share)), so at least the target fraction of
// validation samples passes each scorer (ties pass). Requires >= 20 scores
// per scorer.
CalibrationResult calibrate_thresholds(const CascadeConfig& config,
                                       const std::map<std::string, std::vector<double>>& scores);

struct CascadeDecision {
  bool is_ood = false;
  std::string flagged_by;  // first scorer below threshold, in cascade order
  double fused_score = 0.0;  // min over scorers of (score - threshold)
  std::map<std::string, double> scores;
};

// Threshold cascade over the configured scorers: a sample is OOD as soon as
// any scorer falls below its calibrated threshold.
class Cascade {
 public:
  explicit Cascade(CascadeConfig config);

  void calibrate(const std::map<std::string, std::vector<double>>& validation_scores);
  void set_calibration(CalibrationResult calibration);
  bool calibrated() const { return calibrated_; }
  const CascadeConfig& config() const { return config_; }
  const CalibrationResult& calibration() const;  // StateError when uncalibrated

  CascadeDecision decide(const std::map<std::string, double>& scores) const;

 private:
  CascadeConfig config_;
  CalibrationResult calibration_;
  bool calibrated_ = false;
};

}  // namespace synood
