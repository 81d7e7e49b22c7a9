#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synood/config.hpp"
#include "synood/dataset.hpp"
#include "synood/pipeline.hpp"

namespace synood {

const char* source_name(Source source);

// One score of one sample under one scorer; the unit of the scores CSV
// ("sample_id,scorer_name,score,source").
struct ScoreRow {
  std::string sample_id;
  std::string scorer;  // scorer id, or "fused" for the cascade margin
  double score = 0.0;
  std::string source;  // e.g. "in_d_test", "ood_test"
};

void write_scores_csv(const std::string& path, const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> read_scores_csv(const std::string& path);

struct DetectorMetrics {
  std::string name;  // scorer id or "fused"
  double fpr_at_tpr95 = 0.0;
  double auroc = 0.0;
  double aupr_in = 0.0;
  double aupr_out = 0.0;
};

struct BenchmarkReport {
  std::vector<DetectorMetrics> rows;  // per scorer, then the fused cascade
  int in_count = 0;
  int ood_count = 0;
  // Fraction of each test set the calibrated cascade flags as OOD. Only
  // meaningful when the report came from a calibrated pipeline (offline
  // score-CSV evaluation has no thresholds).
  bool has_decisions = false;
  double flagged_in_rate = 0.0;
  double flagged_ood_rate = 0.0;
};

nlohmann::json report_to_json(const BenchmarkReport& report);
std::string report_to_text(const BenchmarkReport& report);  // aligned table

// Scores both test sets with a calibrated pipeline and computes detection
// metrics per scorer plus for the fused (min-margin) cascade score.
BenchmarkReport run_benchmark(const DetectionPipeline& pipeline, const Dataset& in_test,
                              const Dataset& ood_test,
                              std::vector<ScoreRow>* rows_out = nullptr);

// Offline evaluation over previously exported score rows.
BenchmarkReport evaluate_rows(const std::vector<ScoreRow>& rows);

// --- Ablations -------------------------------------------------------------

inline constexpr const char* kAblationMasking = "masking_styles";
inline constexpr const char* kAblationScorers = "scorer_combinations";
inline constexpr const char* kAblationConditioning = "label_conditioning";

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  DetectorMetrics fused;  // cascade-level metrics of this variant
};

struct AblationSummaryRow {
  std::string variant;
  int runs = 0;
  double auroc_mean = 0.0, auroc_std = 0.0;
  double fpr_mean = 0.0, fpr_std = 0.0;
};

struct AblationReport {
  std::string kind;
  std::vector<AblationRow> rows;             // one per variant x seed
  std::vector<AblationSummaryRow> summary;   // aggregated over seeds
};

nlohmann::json ablation_to_json(const AblationReport& report);
std::string ablation_to_text(const AblationReport& report);

// Re-runs the experiment per variant (retraining where the variant demands
// it) over the given seeds:
//   masking_styles       - one variant per masking style (6 rows per seed)
//   scorer_combinations  - every non-empty scorer subset, no retraining
//   label_conditioning   - conditioned vs. constant-label models
// A non-empty `variant_filter` restricts the run to the named variants
// (masking style names, "conditioned"/"unconditioned", or "+"-joined scorer
// subsets); unknown names raise ValidationError.
AblationReport run_ablation(const std::string& kind, const ExperimentConfig& config,
                            const Dataset& in_d_full, const Dataset& ood,
                            const Dataset* external, const std::vector<std::uint64_t>& seeds,
                            const std::vector<std::string>& variant_filter = {});

}  // namespace synood
