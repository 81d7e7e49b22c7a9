#include "synood/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "synood/error.hpp"
#include "synood/metrics.hpp"
#include "synood/training.hpp"

namespace synood {

const char* source_name(Source source) {
  switch (source) {
    case Source::IN_D_TRAIN: return "in_d_train";
    case Source::IN_D_VAL: return "in_d_val";
    case Source::IN_D_TEST: return "in_d_test";
    case Source::OOD_TEST: return "ood_test";
    case Source::EXTERNAL_UNLABELED: return "external_unlabeled";
  }
  throw ValidationError("source_name: unknown source tag");
}

namespace {

constexpr const char* kFusedName = "fused";

std::string sample_id_of(const LabeledImage& item, Source source, std::size_t index) {
  if (!item.origin.empty()) return item.origin;
  std::ostringstream id;
  id << source_name(source) << '#' << index;
  return id.str();
}

DetectorMetrics compute_metrics(std::string name, const std::vector<double>& in_scores,
                                const std::vector<double>& ood_scores) {
  DetectorMetrics m;
  m.name = std::move(name);
  m.fpr_at_tpr95 = fpr_at_tpr(in_scores, ood_scores, 0.95);
  m.auroc = auroc(in_scores, ood_scores);
  m.aupr_in = aupr_in(in_scores, ood_scores);
  m.aupr_out = aupr_out(in_scores, ood_scores);
  return m;
}

// Scores of one whole dataset, per scorer, plus the fused cascade margin and
// OOD flags for calibrated pipelines.
struct SetScores {
  std::map<std::string, std::vector<double>> by_scorer;
  std::vector<double> fused;
  int flagged = 0;
};

SetScores score_set(const DetectionPipeline& pipeline, const Dataset& dataset, Source source,
                    std::vector<ScoreRow>* rows_out) {
  SetScores out;
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    const LabeledImage& item = dataset.items[i];
    std::map<std::string, double> scores =
        pipeline.score_sample(item.pixels, static_cast<std::uint64_t>(i));
    CascadeDecision decision = pipeline.cascade().decide(scores);
    out.fused.push_back(decision.fused_score);
    if (decision.is_ood) ++out.flagged;
    for (const auto& [name, value] : scores) out.by_scorer[name].push_back(value);
    if (rows_out != nullptr) {
      const std::string id = sample_id_of(item, source, i);
      for (const auto& [name, value] : scores) {
        rows_out->push_back({id, name, value, source_name(source)});
      }
      rows_out->push_back({id, kFusedName, decision.fused_score, source_name(source)});
    }
  }
  return out;
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const std::string& n : names) {
    if (!out.empty()) out += '+';
    out += n;
  }
  return out;
}

}  // namespace

void write_scores_csv(const std::string& path, const std::vector<ScoreRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write scores CSV '" + path + "'");
  out << "sample_id,scorer_name,score,source\n";
  out << std::setprecision(17);
  for (const ScoreRow& row : rows) {
    out << row.sample_id << ',' << row.scorer << ',' << row.score << ',' << row.source << '\n';
  }
  if (!out) throw IoError("failed while writing scores CSV '" + path + "'");
}

std::vector<ScoreRow> read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scores CSV '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "sample_id,scorer_name,score,source") {
    throw ValidationError("scores CSV '" + path + "' has an unexpected header");
  }
  std::vector<ScoreRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::array<std::string, 4> fields;
    std::size_t start = 0;
    for (int f = 0; f < 3; ++f) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        throw ValidationError("scores CSV '" + path + "' line " + std::to_string(line_no) +
                              " does not have 4 fields");
      }
      fields[static_cast<std::size_t>(f)] = line.substr(start, comma - start);
      start = comma + 1;
    }
    fields[3] = line.substr(start);
    ScoreRow row;
    row.sample_id = fields[0];
    row.scorer = fields[1];
    try {
      row.score = std::stod(fields[2]);
    } catch (const std::exception&) {
      throw ValidationError("scores CSV '" + path + "' line " + std::to_string(line_no) +
                            " has a non-numeric score");
    }
    row.source = fields[3];
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json report_to_json(const BenchmarkReport& report) {
  nlohmann::json detectors = nlohmann::json::array();
  for (const DetectorMetrics& m : report.rows) {
    detectors.push_back({{"name", m.name},
                         {"fpr_at_tpr95", m.fpr_at_tpr95},
                         {"auroc", m.auroc},
                         {"aupr_in", m.aupr_in},
                         {"aupr_out", m.aupr_out}});
  }
  nlohmann::json j{{"in_count", report.in_count},
                   {"ood_count", report.ood_count},
                   {"detectors", detectors}};
  if (report.has_decisions) {
    j["flagged_in_rate"] = report.flagged_in_rate;
    j["flagged_ood_rate"] = report.flagged_ood_rate;
  }
  return j;
}

std::string report_to_text(const BenchmarkReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << std::left << std::setw(16) << "detector" << std::right << std::setw(14)
      << "fpr_at_tpr95" << std::setw(10) << "auroc" << std::setw(10) << "aupr_in"
      << std::setw(10) << "aupr_out" << '\n';
  for (const DetectorMetrics& m : report.rows) {
    out << std::left << std::setw(16) << m.name << std::right << std::setw(14) << m.fpr_at_tpr95
        << std::setw(10) << m.auroc << std::setw(10) << m.aupr_in << std::setw(10) << m.aupr_out
        << '\n';
  }
  if (report.has_decisions) {
    out << "in_d_test: " << report.in_count << " samples, " << std::setprecision(2)
        << 100.0 * report.flagged_in_rate << "% flagged OOD\n";
    out << "ood_test:  " << report.ood_count << " samples, " << 100.0 * report.flagged_ood_rate
        << "% flagged OOD\n";
  } else {
    out << "in_d_test: " << report.in_count << " samples, ood_test: " << report.ood_count
        << " samples\n";
  }
  return out.str();
}

BenchmarkReport run_benchmark(const DetectionPipeline& pipeline, const Dataset& in_test,
                              const Dataset& ood_test, std::vector<ScoreRow>* rows_out) {
  if (!pipeline.cascade().calibrated()) {
    throw StateError("run_benchmark: the pipeline has not been calibrated");
  }
  if (in_test.items.empty() || ood_test.items.empty()) {
    throw ValidationError("run_benchmark: both test sets must be non-empty");
  }
  SetScores in_scores = score_set(pipeline, in_test, Source::IN_D_TEST, rows_out);
  SetScores ood_scores = score_set(pipeline, ood_test, Source::OOD_TEST, rows_out);

  BenchmarkReport report;
  report.in_count = in_test.size();
  report.ood_count = ood_test.size();
  report.has_decisions = true;
  report.flagged_in_rate = static_cast<double>(in_scores.flagged) / in_test.size();
  report.flagged_ood_rate = static_cast<double>(ood_scores.flagged) / ood_test.size();
  for (const std::string& name : pipeline.cascade().config().scorers) {
    report.rows.push_back(
        compute_metrics(name, in_scores.by_scorer.at(name), ood_scores.by_scorer.at(name)));
  }
  report.rows.push_back(compute_metrics(kFusedName, in_scores.fused, ood_scores.fused));
  return report;
}

BenchmarkReport evaluate_rows(const std::vector<ScoreRow>& rows) {
  std::vector<std::string> order;  // scorers in first-appearance order
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> grouped;
  for (const ScoreRow& row : rows) {
    const bool is_in = row.source == "in_d_test";
    const bool is_ood = row.source == "ood_test";
    if (!is_in && !is_ood) {
      throw ValidationError("evaluate_rows: unsupported source '" + row.source +
                            "' (expected in_d_test or ood_test)");
    }
    auto it = grouped.find(row.scorer);
    if (it == grouped.end()) {
      order.push_back(row.scorer);
      it = grouped.emplace(row.scorer, std::pair<std::vector<double>, std::vector<double>>{})
               .first;
    }
    (is_in ? it->second.first : it->second.second).push_back(row.score);
  }
  if (grouped.empty()) throw ValidationError("evaluate_rows: no score rows given");

  // Keep the fused pseudo-scorer last, like run_benchmark does.
  auto fused_pos = std::find(order.begin(), order.end(), kFusedName);
  if (fused_pos != order.end()) {
    order.erase(fused_pos);
    order.push_back(kFusedName);
  }
  BenchmarkReport report;
  for (const std::string& name : order) {
    const auto& [in_scores, ood_scores] = grouped.at(name);
    report.rows.push_back(compute_metrics(name, in_scores, ood_scores));
    report.in_count = static_cast<int>(in_scores.size());
    report.ood_count = static_cast<int>(ood_scores.size());
  }
  return report;
}

nlohmann::json ablation_to_json(const AblationReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const AblationRow& row : report.rows) {
    rows.push_back({{"variant", row.variant},
                    {"seed", row.seed},
                    {"fpr_at_tpr95", row.fused.fpr_at_tpr95},
                    {"auroc", row.fused.auroc},
                    {"aupr_in", row.fused.aupr_in},
                    {"aupr_out", row.fused.aupr_out}});
  }
  nlohmann::json summary = nlohmann::json::array();
  for (const AblationSummaryRow& row : report.summary) {
    summary.push_back({{"variant", row.variant},
                       {"runs", row.runs},
                       {"auroc_mean", row.auroc_mean},
                       {"auroc_std", row.auroc_std},
                       {"fpr_mean", row.fpr_mean},
                       {"fpr_std", row.fpr_std}});
  }
  return {{"kind", report.kind}, {"rows", rows}, {"summary", summary}};
}

std::string ablation_to_text(const AblationReport& report) {
  std::ostringstream out;
  out << "ablation: " << report.kind << '\n';
  out << std::fixed << std::setprecision(4);
  out << std::left << std::setw(24) << "variant" << std::right << std::setw(6) << "runs"
      << std::setw(12) << "auroc" << std::setw(10) << "(std)" << std::setw(12) << "fpr@95"
      << std::setw(10) << "(std)" << '\n';
  for (const AblationSummaryRow& row : report.summary) {
    out << std::left << std::setw(24) << row.variant << std::right << std::setw(6) << row.runs
        << std::setw(12) << row.auroc_mean << std::setw(10) << row.auroc_std << std::setw(12)
        << row.fpr_mean << std::setw(10) << row.fpr_std << '\n';
  }
  return out.str();
}

namespace {

// Generator + C_b training against an already-trained classifier (so variants
// that only differ in mask or conditioning don't retrain it).
struct VariantModels {
  std::unique_ptr<GeneratorModel> generator;
  std::unique_ptr<ConditionalBinaryClassifier> cb;
};

VariantModels train_variant(const ExperimentConfig& config, const SplitResult& splits,
                            const Dataset* pseudo_external) {
  VariantModels models;
  {
    Rng init = Rng::stream(config.seed, "init-generator");
    models.generator = std::make_unique<GeneratorModel>(config.generator, init);
  }
  Rng disc_init = Rng::stream(config.seed, "init-discriminator");
  DiscriminatorModel disc(config.discriminator, disc_init);
  train_generator(*models.generator, disc, splits.train, config.train_generator, "");
  {
    Rng init = Rng::stream(config.seed, "init-cb");
    models.cb = std::make_unique<ConditionalBinaryClassifier>(config.cb, init);
  }
  train_binary_classifier(*models.cb, *models.generator, splits.train, pseudo_external,
                          config.train_cb);
  return models;
}

AblationRow benchmark_variant(const std::string& variant, const ExperimentConfig& config,
                              const ClassifierModel& classifier, const VariantModels& models,
                              const SplitResult& splits, const Dataset& ood) {
  DetectionPipeline pipeline(&classifier, models.generator.get(), models.cb.get(), config.mask,
                             config.cascade, config.seed, config.unconditioned);
  pipeline.calibrate(splits.val);
  BenchmarkReport report = run_benchmark(pipeline, splits.test, ood);
  AblationRow row;
  row.variant = variant;
  row.seed = config.seed;
  row.fused = report.rows.back();
  row.fused.name = variant;
  return row;
}

void summarize(AblationReport& report) {
  std::vector<std::string> variants;
  for (const AblationRow& row : report.rows) {
    if (std::find(variants.begin(), variants.end(), row.variant) == variants.end()) {
      variants.push_back(row.variant);
    }
  }
  for (const std::string& variant : variants) {
    std::vector<double> aurocs, fprs;
    for (const AblationRow& row : report.rows) {
      if (row.variant != variant) continue;
      aurocs.push_back(row.fused.auroc);
      fprs.push_back(row.fused.fpr_at_tpr95);
    }
    AblationSummaryRow s;
    s.variant = variant;
    s.runs = static_cast<int>(aurocs.size());
    s.auroc_mean = mean_of(aurocs);
    s.auroc_std = sample_std(aurocs);
    s.fpr_mean = mean_of(fprs);
    s.fpr_std = sample_std(fprs);
    report.summary.push_back(std::move(s));
  }
}

}  // namespace

AblationReport run_ablation(const std::string& kind, const ExperimentConfig& base_config,
                            const Dataset& in_d_full, const Dataset& ood,
                            const Dataset* external,
                            const std::vector<std::uint64_t>& seeds,
                            const std::vector<std::string>& variant_filter) {
  if (kind != kAblationMasking && kind != kAblationScorers && kind != kAblationConditioning) {
    throw ValidationError("run_ablation: unknown kind '" + kind + "'");
  }
  if (seeds.empty()) throw ValidationError("run_ablation: at least one seed is required");
  const auto wanted = [&variant_filter](const std::string& name) {
    return variant_filter.empty() ||
           std::find(variant_filter.begin(), variant_filter.end(), name) != variant_filter.end();
  };
  {
    std::vector<std::string> known;
    if (kind == kAblationMasking) {
      for (MaskStyle style :
           {MaskStyle::NONE, MaskStyle::RANDOMLY, MaskStyle::FIXED_LOW, MaskStyle::FIXED_HIGH,
            MaskStyle::PATCHED, MaskStyle::SHUFFLING}) {
        known.emplace_back(mask_style_name(style));
      }
    } else if (kind == kAblationConditioning) {
      known = {"conditioned", "unconditioned"};
    } else {
      const std::vector<std::string>& universe = base_config.cascade.scorers;
      for (std::uint32_t bits = 1; bits < (1u << universe.size()); ++bits) {
        std::vector<std::string> subset;
        for (std::size_t s = 0; s < universe.size(); ++s) {
          if (bits & (1u << s)) subset.push_back(universe[s]);
        }
        known.push_back(join_names(subset));
      }
    }
    for (const std::string& name : variant_filter) {
      if (std::find(known.begin(), known.end(), name) == known.end()) {
        throw ValidationError("run_ablation: unknown variant '" + name + "' for kind '" + kind +
                              "'");
      }
    }
  }

  AblationReport report;
  report.kind = kind;
  for (std::uint64_t seed : seeds) {
    const ExperimentConfig config = with_seed(base_config, seed);
    SplitResult splits = split(in_d_full, config.in_d.split_fractions, seed);

    // The classifier is independent of masking and conditioning: one per seed.
    Rng cls_init = Rng::stream(config.seed, "init-classifier");
    ClassifierModel classifier(config.classifier, cls_init);
    train_classifier(classifier, splits.train, splits.val, config.train_classifier);

    Dataset pseudo;
    const Dataset* cb_external = nullptr;
    if (external != nullptr && !external->items.empty()) {
      pseudo = *external;
      pseudo.items = pseudo_label(classifier, std::move(pseudo.items));
      pseudo.class_count = config.cb.class_count;
      cb_external = &pseudo;
    }

    if (kind == kAblationMasking) {
      for (MaskStyle style :
           {MaskStyle::NONE, MaskStyle::RANDOMLY, MaskStyle::FIXED_LOW, MaskStyle::FIXED_HIGH,
            MaskStyle::PATCHED, MaskStyle::SHUFFLING}) {
        if (!wanted(mask_style_name(style))) continue;
        ExperimentConfig variant_config = config;
        variant_config.mask.style = style;
        variant_config = with_seed(std::move(variant_config), seed);
        VariantModels models = train_variant(variant_config, splits, cb_external);
        report.rows.push_back(benchmark_variant(mask_style_name(style), variant_config,
                                                classifier, models, splits, ood));
      }
    } else if (kind == kAblationConditioning) {
      for (bool unconditioned : {false, true}) {
        if (!wanted(unconditioned ? "unconditioned" : "conditioned")) continue;
        ExperimentConfig variant_config = config;
        variant_config.unconditioned = unconditioned;
        variant_config = with_seed(std::move(variant_config), seed);
        VariantModels models = train_variant(variant_config, splits, cb_external);
        report.rows.push_back(benchmark_variant(unconditioned ? "unconditioned" : "conditioned",
                                                variant_config, classifier, models, splits,
                                                ood));
      }
    } else {  // scorer_combinations: one training, every non-empty subset
      VariantModels models = train_variant(config, splits, cb_external);
      DetectionPipeline pipeline(&classifier, models.generator.get(), models.cb.get(),
                                 config.mask, config.cascade, config.seed,
                                 config.unconditioned);
      // Collect raw scores once per set.
      auto collect = [&pipeline](const Dataset& set) {
        std::vector<std::map<std::string, double>> all;
        all.reserve(set.items.size());
        for (std::size_t i = 0; i < set.items.size(); ++i) {
          all.push_back(pipeline.score_sample(set.items[i].pixels, i));
        }
        return all;
      };
      const auto val_scores = collect(splits.val);
      const auto in_scores = collect(splits.test);
      const auto ood_scores = collect(ood);

      const std::vector<std::string>& universe = config.cascade.scorers;
      for (std::uint32_t bits = 1; bits < (1u << universe.size()); ++bits) {
        CascadeConfig subset_config = config.cascade;
        subset_config.scorers.clear();
        for (std::size_t s = 0; s < universe.size(); ++s) {
          if (bits & (1u << s)) subset_config.scorers.push_back(universe[s]);
        }
        if (!wanted(join_names(subset_config.scorers))) continue;
        Cascade cascade(subset_config);
        std::map<std::string, std::vector<double>> calib;
        for (const auto& sample : val_scores) {
          for (const std::string& name : subset_config.scorers) {
            calib[name].push_back(sample.at(name));
          }
        }
        cascade.calibrate(calib);
        auto fused_of = [&cascade](const std::vector<std::map<std::string, double>>& samples) {
          std::vector<double> fused;
          fused.reserve(samples.size());
          for (const auto& sample : samples) fused.push_back(cascade.decide(sample).fused_score);
          return fused;
        };
        AblationRow row;
        row.variant = join_names(subset_config.scorers);
        row.seed = seed;
        row.fused = compute_metrics(row.variant, fused_of(in_scores), fused_of(ood_scores));
        report.rows.push_back(std::move(row));
      }
    }
  }
  summarize(report);
  return report;
}

}  // namespace synood
