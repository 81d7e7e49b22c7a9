#include "synood/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "synood/error.hpp"
#include "synood/losses.hpp"
#include "synood/masking.hpp"

namespace synood {

namespace {

void check_label_range(const std::vector<int>& labels, int class_count, const char* who) {
  for (int y : labels) {
    if (y < 0 || y >= class_count) {
      throw ValidationError(std::string(who) + ": label " + std::to_string(y) +
                            " outside [0, " + std::to_string(class_count) + ")");
    }
  }
}

// Interleaves two [N,3,H,W] batches into the [N,6,H,W] pair layout.
Tensor build_pairs(const Tensor& x, const Tensor& x_prime) {
  if (!x.same_shape(x_prime) || x.ndim() != 4 || x.dim(1) != 3) {
    throw ValidationError("build_pairs: expected matching [N,3,H,W] batches");
  }
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t plane = static_cast<std::size_t>(3) * h * w;
  Tensor out({n, 6, h, w});
  for (int i = 0; i < n; ++i) {
    std::copy(x.data() + i * plane, x.data() + (i + 1) * plane, out.data() + i * 2 * plane);
    std::copy(x_prime.data() + i * plane, x_prime.data() + (i + 1) * plane,
              out.data() + i * 2 * plane + plane);
  }
  return out;
}

std::vector<int> effective_labels(const std::vector<int>& labels, bool unconditioned) {
  if (!unconditioned) return labels;
  return std::vector<int>(labels.size(), 0);
}

}  // namespace

ConditionalBinaryClassifier::ConditionalBinaryClassifier(const CbConfig& config, Rng& init_rng)
    : config_(config) {
  if (config.class_count < 2) {
    throw ValidationError("ConditionalBinaryClassifier: class_count must be at least 2");
  }
  if (config.channels < 1) {
    throw ValidationError("ConditionalBinaryClassifier: channels must be positive");
  }
  trunk_ = ResNetTrunk::create(params_, "cb.trunk", 6, config.channels, init_rng);
  head_ = Linear::create(params_, "cb.head", trunk_.feature_dim, 1, init_rng);
  proj_embed_ = Embedding::create(params_, "cb.proj_embed", config.class_count,
                                  trunk_.feature_dim, init_rng);
}

VarPtr ConditionalBinaryClassifier::score_graph(VarPtr pair,
                                                const std::vector<int>& labels) const {
  const Tensor& t = pair->val;
  if (t.ndim() != 4 || t.dim(1) != 6) {
    throw ValidationError("ConditionalBinaryClassifier: pair input must be [N,6,H,W]");
  }
  if (t.dim(0) != static_cast<int>(labels.size())) {
    throw ValidationError("ConditionalBinaryClassifier: one label per pair required");
  }
  check_label_range(labels, config_.class_count, "ConditionalBinaryClassifier");
  VarPtr feats = trunk_.forward(pair);
  VarPtr projection = rowwise_dot(proj_embed_(labels), feats);
  return add(head_(feats), projection);
}

VarPtr ConditionalBinaryClassifier::features_graph(VarPtr pair) const {
  const Tensor& t = pair->val;
  if (t.ndim() != 4 || t.dim(1) != 6) {
    throw ValidationError("ConditionalBinaryClassifier: pair input must be [N,6,H,W]");
  }
  return trunk_.forward(pair);
}

double ConditionalBinaryClassifier::score(const Tensor& x, const Tensor& x_prime,
                                          int label) const {
  VarPtr out = score_graph(constant(make_pair(x, x_prime)), {label});
  const double value = out->scalar();
  if (!std::isfinite(value)) {
    throw NumericError("ConditionalBinaryClassifier: non-finite score");
  }
  return value;
}

Tensor ConditionalBinaryClassifier::scores(const Tensor& pairs,
                                           const std::vector<int>& labels) const {
  VarPtr out = score_graph(constant(pairs), labels);
  if (!out->val.all_finite()) {
    throw NumericError("ConditionalBinaryClassifier: non-finite scores");
  }
  return out->val.reshaped({out->val.dim(0)});
}

Tensor ConditionalBinaryClassifier::features(const Tensor& x) const {
  VarPtr out = features_graph(constant(make_pair(x, x)));
  return out->val.reshaped({trunk_.feature_dim});
}

Tensor make_pair(const Tensor& x, const Tensor& x_prime) {
  if (x.ndim() != 3 || x.dim(0) != 3 || !x.same_shape(x_prime)) {
    throw ValidationError("make_pair: expected two matching [3,H,W] images");
  }
  const int h = x.dim(1), w = x.dim(2);
  Tensor pair({1, 6, h, w});
  std::copy(x.data(), x.data() + x.size(), pair.data());
  std::copy(x_prime.data(), x_prime.data() + x_prime.size(), pair.data() + x.size());
  return pair;
}

double cb_score(const ConditionalBinaryClassifier& cb, const Tensor& x, const Tensor& x_prime,
                int label) {
  return cb.score(x, x_prime, label);
}

double iqa_score(const std::string& scorer_id, const Tensor& x, const Tensor& x_prime,
                 const ConditionalBinaryClassifier* backbone) {
  if (scorer_id == kScorerSsim) {
    return ssim_value(x, x_prime);
  }
  if (scorer_id == kScorerFeature) {
    if (backbone == nullptr) {
      throw ValidationError("iqa_score: the feature scorer needs a backbone model");
    }
    Tensor fx = backbone->features(x);
    Tensor fp = backbone->features(x_prime);
    double sq = 0.0;
    for (std::int64_t i = 0; i < fx.size(); ++i) {
      const double d = fx[i] - fp[i];
      sq += d * d;
    }
    return -std::sqrt(sq);
  }
  throw ValidationError("iqa_score: unknown scorer '" + scorer_id + "'");
}

double scorer_value(const std::string& scorer_id, const ConditionalBinaryClassifier& cb,
                    const Tensor& x, const Tensor& x_prime, int label) {
  if (scorer_id == kScorerCb) return cb.score(x, x_prime, label);
  return iqa_score(scorer_id, x, x_prime, &cb);
}

CbTrainStats train_binary_classifier(ConditionalBinaryClassifier& cb, const GeneratorModel& gen,
                                     const Dataset& in_d_train, const Dataset* external,
                                     const TrainConfig& config) {
  if (!gen.trained()) {
    throw StateError("train_binary_classifier: the generator has not been trained");
  }
  if (in_d_train.items.empty()) {
    throw ValidationError("train_binary_classifier: training set is empty");
  }
  if (config.batch_size < 1) {
    throw ValidationError("train_binary_classifier: batch_size must be >= 1");
  }
  const int k = cb.config().class_count;
  if (k != gen.config().class_count || k != in_d_train.class_count) {
    throw ValidationError("train_binary_classifier: class counts of the binary classifier, "
                          "generator and dataset must agree");
  }
  const bool use_external = external != nullptr && !external->items.empty();
  if (use_external) {
    for (const LabeledImage& item : external->items) {
      if (item.label < 0 || item.label >= k) {
        throw ValidationError("train_binary_classifier: external data must be pseudo-labeled "
                              "before use (offending item: " + item.origin + ")");
      }
    }
  }

  Adam opt(cb.params().vars(), config.adam());
  BatchIterator batches(in_d_train.size(), config.batch_size,
                        Rng::stream_seed(config.seed, "cb-batches"));
  BatchIterator ext_batches(use_external ? external->size() : 1, config.batch_size,
                            Rng::stream_seed(config.seed, "cb-ext"));
  Rng mask_rng = Rng::stream(config.seed, "cb-mask");
  Rng eps_rng = Rng::stream(config.seed, "cb-eps");
  Rng label_rng = Rng::stream(config.seed, "cb-neglabels");

  auto synthesize_batch = [&](const Tensor& images, const std::vector<int>& cond) {
    Tensor masked = mask_batch(images, config.mask_spec, mask_rng);
    LatentCode code = gen.encode(masked, cond, /*deterministic=*/false, &eps_rng);
    return gen.decode(code.z, cond);
  };

  CbTrainStats stats;
  stats.losses.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    Batch batch = gather_batch(in_d_train, batches.next());
    check_label_range(batch.labels, k, "train_binary_classifier");

    // Positive pairs: synthesis under the item's own label.
    std::vector<int> pos_cond = effective_labels(batch.labels, config.unconditioned);
    Tensor pos_pairs = build_pairs(batch.images, synthesize_batch(batch.images, pos_cond));

    // Negative pairs: synthesis under a mismatched label.
    std::vector<int> neg_labels(batch.labels.size());
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
      neg_labels[i] = sample_mismatched_label(label_rng, k, batch.labels[i]);
    }
    std::vector<int> neg_cond = effective_labels(neg_labels, config.unconditioned);
    Tensor neg_pairs = build_pairs(batch.images, synthesize_batch(batch.images, neg_cond));

    VarPtr pos_scores = cb.score_graph(constant(pos_pairs), pos_cond);
    VarPtr neg_scores = cb.score_graph(constant(neg_pairs), neg_cond);

    VarPtr loss = hinge_loss(pos_scores, neg_scores);
    if (use_external) {
      // External data only ever contributes negative pairs: its pseudo-label
      // merely pins down which labels count as mismatched.
      Batch ext = gather_batch(*external, ext_batches.next());
      std::vector<int> ext_neg(ext.labels.size());
      for (std::size_t i = 0; i < ext.labels.size(); ++i) {
        ext_neg[i] = sample_mismatched_label(label_rng, k, ext.labels[i]);
      }
      std::vector<int> ext_cond = effective_labels(ext_neg, config.unconditioned);
      Tensor ext_pairs = build_pairs(ext.images, synthesize_batch(ext.images, ext_cond));
      VarPtr ext_scores = cb.score_graph(constant(ext_pairs), ext_cond);
      loss = add(loss, hinge_loss(pos_scores, ext_scores));
    }

    const double value = loss->scalar();
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "train_binary_classifier: non-finite loss at step " << step;
      throw NumericError(msg.str());
    }
    cb.params().zero_grad();
    backward(loss);
    opt.step();
    stats.losses.push_back(value);
  }
  cb.mark_trained();
  stats.final_loss = stats.losses.empty() ? 0.0 : stats.losses.back();
  return stats;
}

CalibrationResult calibrate_thresholds(const CascadeConfig& config,
                                       const std::map<std::string, std::vector<double>>& scores) {
  if (config.scorers.empty()) {
    throw ValidationError("calibrate_thresholds: no scorers configured");
  }
  if (!(config.target_tpr > 0.0 && config.target_tpr < 1.0)) {
    throw ValidationError("calibrate_thresholds: target_tpr must lie in (0, 1)");
  }
  const double share = config.joint_calibration
                           ? (1.0 - config.target_tpr) / static_cast<double>(config.scorers.size())
                           : (1.0 - config.target_tpr);
  CalibrationResult result;
  for (const std::string& name : config.scorers) {
    auto it = scores.find(name);
    if (it == scores.end()) {
      throw ValidationError("calibrate_thresholds: no validation scores for scorer '" + name +
                            "'");
    }
    const std::vector<double>& vals = it->second;
    if (vals.size() < 20) {
      throw ValidationError("calibrate_thresholds: scorer '" + name + "' has only " +
                            std::to_string(vals.size()) +
                            " validation scores (at least 20 required)");
    }
    for (double v : vals) {
      if (!std::isfinite(v)) {
        throw NumericError("calibrate_thresholds: scorer '" + name +
                           "' has non-finite validation scores");
      }
    }
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    // The nudge keeps decimal budgets exact: 1 - 0.9 rounds to just under
    // 0.1, and without it floor(40 * share) would drop a whole sample below
    // the intended k (same idiom as the dataset split fractions).
    auto k = static_cast<std::size_t>(std::floor(n * share + 1e-9));
    if (k >= sorted.size()) k = sorted.size() - 1;
    const double threshold = sorted[k];
    const auto kept = static_cast<double>(
        std::count_if(sorted.begin(), sorted.end(), [&](double v) { return v >= threshold; }));
    result.thresholds[name] = threshold;
    result.pass_rates[name] = kept / n;
  }
  return result;
}

Cascade::Cascade(CascadeConfig config) : config_(std::move(config)) {
  if (config_.scorers.empty()) {
    throw ValidationError("Cascade: at least one scorer is required");
  }
  std::set<std::string> seen;
  for (const std::string& name : config_.scorers) {
    if (!seen.insert(name).second) {
      throw ValidationError("Cascade: duplicate scorer '" + name + "'");
    }
  }
  if (!(config_.target_tpr > 0.0 && config_.target_tpr < 1.0)) {
    throw ValidationError("Cascade: target_tpr must lie in (0, 1)");
  }
}

void Cascade::calibrate(const std::map<std::string, std::vector<double>>& validation_scores) {
  calibration_ = calibrate_thresholds(config_, validation_scores);
  calibrated_ = true;
}

void Cascade::set_calibration(CalibrationResult calibration) {
  for (const std::string& name : config_.scorers) {
    if (calibration.thresholds.find(name) == calibration.thresholds.end()) {
      throw ValidationError("Cascade: calibration is missing a threshold for scorer '" + name +
                            "'");
    }
  }
  calibration_ = std::move(calibration);
  calibrated_ = true;
}

const CalibrationResult& Cascade::calibration() const {
  if (!calibrated_) throw StateError("Cascade: not calibrated yet");
  return calibration_;
}

CascadeDecision Cascade::decide(const std::map<std::string, double>& scores) const {
  if (!calibrated_) {
    throw StateError("Cascade: decide() called before calibration");
  }
  CascadeDecision decision;
  bool first = true;
  for (const std::string& name : config_.scorers) {
    auto it = scores.find(name);
    if (it == scores.end()) {
      throw ValidationError("Cascade: missing score for scorer '" + name + "'");
    }
    const double margin = it->second - calibration_.thresholds.at(name);
    if (first || margin < decision.fused_score) decision.fused_score = margin;
    first = false;
    // Strictly below threshold flags OOD; a tie passes.
    if (!decision.is_ood && it->second < calibration_.thresholds.at(name)) {
      decision.is_ood = true;
      decision.flagged_by = name;
    }
    decision.scores[name] = it->second;
  }
  return decision;
}

}  // namespace synood
