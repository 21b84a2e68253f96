#pragma once

#include <string>
#include <vector>

namespace tulip {

/// Probability that a random OOD score exceeds a random ID score, ties counted 1/2.
/// OOD is the positive class; higher scores mean "more OOD".
double auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores);

/// Fraction of ID scores at or above the largest threshold that keeps at least
/// `tpr_target` of the OOD scores at or above it.
double fpr_at_tpr(const std::vector<double>& id_scores, const std::vector<double>& ood_scores,
                  double tpr_target = 0.95);

/// Average ranks (1-based, ties share the midrank) of `values`.
std::vector<double> midranks(const std::vector<double>& values);

struct MethodMetrics {
  std::string method;
  double auroc = 0.0;
  double fpr95 = 0.0;
};

/// Metrics for every method over one ID / OOD pair.
struct ScoreReport {
  std::string ood_name;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  std::vector<MethodMetrics> methods;

  [[nodiscard]] const MethodMetrics& get(const std::string& method) const;
};

/// Method names in the score CSV, in column order.
const std::vector<std::string>& score_methods();

}  // namespace tulip
