#pragma once

#include <vector>

namespace synood {

// Detection metrics. Convention throughout: higher score = more In-D-like,
// and In-D is the positive class.

// Threshold = largest score that still passes >= 95% (target_tpr) of the
// In-D scores; returns the fraction of OOD scores at or above it.
double fpr_at_tpr(const std::vector<double>& in_d_scores,
                  const std::vector<double>& ood_scores, double target_tpr = 0.95);

// P(in_d > ood) + 0.5 * P(tie), computed by rank statistic.
double auroc(const std::vector<double>& in_d_scores, const std::vector<double>& ood_scores);

// Area under the precision-recall curve with step-wise interpolation over
// descending-score thresholds; `pos` is the positive class.
double aupr(const std::vector<double>& pos_scores, const std::vector<double>& neg_scores);

// AUPR with In-D positive, and with OOD positive (scores negated so that
// higher means more OOD-like for the latter).
double aupr_in(const std::vector<double>& in_d_scores, const std::vector<double>& ood_scores);
double aupr_out(const std::vector<double>& in_d_scores, const std::vector<double>& ood_scores);

double mean_of(const std::vector<double>& xs);
// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
double sample_std(const std::vector<double>& xs);

}  // namespace synood
