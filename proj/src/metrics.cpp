#include "tulip/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tulip/errors.hpp"

namespace tulip {

std::vector<double> midranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

namespace {

void check_sides(const std::vector<double>& id_scores, const std::vector<double>& ood_scores) {
  if (id_scores.empty() || ood_scores.empty()) throw DomainError("metrics need nonempty ID and OOD score sets");
  for (double s : id_scores) {
    if (std::isnan(s)) throw DomainError("NaN score");
  }
  for (double s : ood_scores) {
    if (std::isnan(s)) throw DomainError("NaN score");
  }
}

}  // namespace

double auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores) {
  check_sides(id_scores, ood_scores);
  std::vector<double> all(ood_scores);
  all.insert(all.end(), id_scores.begin(), id_scores.end());
  const std::vector<double> ranks = midranks(all);
  const double n_pos = static_cast<double>(ood_scores.size());
  const double n_neg = static_cast<double>(id_scores.size());
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < ood_scores.size(); ++i) rank_sum += ranks[i];
  // Mann-Whitney U of the positives divided by the number of pairs.
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double fpr_at_tpr(const std::vector<double>& id_scores, const std::vector<double>& ood_scores, double tpr_target) {
  check_sides(id_scores, ood_scores);
  if (!(tpr_target > 0.0 && tpr_target <= 1.0)) throw DomainError("TPR target must lie in (0, 1]");
  std::vector<double> pos(ood_scores);
  std::sort(pos.begin(), pos.end(), std::greater<>());
  // Smallest k with k / n >= target; the threshold is the k-th largest OOD score.
  const double n = static_cast<double>(pos.size());
  auto k = static_cast<std::size_t>(std::ceil(tpr_target * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, pos.size());
  const double threshold = pos[k - 1];
  const auto fp = std::count_if(id_scores.begin(), id_scores.end(), [&](double s) { return s >= threshold; });
  return static_cast<double>(fp) / static_cast<double>(id_scores.size());
}

const MethodMetrics& ScoreReport::get(const std::string& method) const {
  for (const auto& m : methods) {
    if (m.method == method) return m;
  }
  throw DomainError("no metrics for method '" + method + "'");
}

const std::vector<std::string>& score_methods() {
  static const std::vector<std::string> names{"tulip", "msp", "mls", "ebo", "ent"};
  return names;
}

}  // namespace tulip
