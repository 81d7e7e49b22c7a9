#include "synood/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "synood/error.hpp"

namespace synood {

namespace {

void check_nonempty(const std::vector<double>& a, const std::vector<double>& b,
                    const char* op) {
  if (a.empty() || b.empty()) {
    throw ValidationError(std::string(op) + ": score lists must be nonempty");
  }
}

}  // namespace

double fpr_at_tpr(const std::vector<double>& in_d_scores,
                  const std::vector<double>& ood_scores, double target_tpr) {
  check_nonempty(in_d_scores, ood_scores, "fpr_at_tpr");
  if (target_tpr <= 0.0 || target_tpr > 1.0) {
    throw ValidationError("fpr_at_tpr: target_tpr must lie in (0,1]");
  }
  // The m-th largest In-D score (m = ceil(target * n)) is the largest
  // threshold passing at least `target` of the In-D set.
  std::vector<double> in_sorted = in_d_scores;
  std::sort(in_sorted.begin(), in_sorted.end(), std::greater<double>());
  const std::size_t n = in_sorted.size();
  const std::size_t m = static_cast<std::size_t>(
      std::ceil(target_tpr * static_cast<double>(n) - 1e-12));
  const double threshold = in_sorted[std::min(m, n) - 1];
  std::size_t fp = 0;
  for (double s : ood_scores) {
    if (s >= threshold) ++fp;
  }
  return static_cast<double>(fp) / static_cast<double>(ood_scores.size());
}

double auroc(const std::vector<double>& in_d_scores, const std::vector<double>& ood_scores) {
  check_nonempty(in_d_scores, ood_scores, "auroc");
  // Rank-sum form: sort the pooled scores once, give tied groups their mean
  // rank, then AUROC = (rank_sum_pos - n_pos(n_pos+1)/2) / (n_pos * n_neg).
  struct Entry {
    double score;
    bool positive;
  };
  std::vector<Entry> all;
  all.reserve(in_d_scores.size() + ood_scores.size());
  for (double s : in_d_scores) all.push_back({s, true});
  for (double s : ood_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    // 1-based ranks i+1 .. j share the mean rank.
    const double mean_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].positive) rank_sum_pos += mean_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(in_d_scores.size());
  const double nn = static_cast<double>(ood_scores.size());
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double aupr(const std::vector<double>& pos_scores, const std::vector<double>& neg_scores) {
  check_nonempty(pos_scores, neg_scores, "aupr");
  // Walk unique thresholds in descending order; at each, precision over all
  // samples >= threshold and recall over positives. Step-wise sum of
  // (recall_i - recall_{i-1}) * precision_i.
  std::vector<std::pair<double, bool>> all;
  all.reserve(pos_scores.size() + neg_scores.size());
  for (double s : pos_scores) all.emplace_back(s, true);
  for (double s : neg_scores) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  const double np = static_cast<double>(pos_scores.size());
  double area = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) {
      if (all[j].second) ++tp;
      ++seen;
      ++j;
    }
    const double recall = static_cast<double>(tp) / np;
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

double aupr_in(const std::vector<double>& in_d_scores, const std::vector<double>& ood_scores) {
  return aupr(in_d_scores, ood_scores);
}

double aupr_out(const std::vector<double>& in_d_scores,
                const std::vector<double>& ood_scores) {
  std::vector<double> pos, neg;
  pos.reserve(ood_scores.size());
  neg.reserve(in_d_scores.size());
  for (double s : ood_scores) pos.push_back(-s);
  for (double s : in_d_scores) neg.push_back(-s);
  return aupr(pos, neg);
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw ValidationError("mean_of: empty input");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace synood
