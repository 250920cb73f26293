#ifndef WEIPER_EVAL_HPP_
#define WEIPER_EVAL_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace weiper {

// Mann-Whitney AUROC with ID as the positive (higher-scoring) class; tied
// pairs count one half.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

// FPR at the largest observed ID score t with |{id >= t}| / |id| >= tpr_target.
double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                  double tpr_target = 0.95);

struct SetResult {
  std::string name;
  bool near = false;
  double auroc = 0.0;
  double fpr95 = 0.0;
};

// Aggregates are unweighted means over the sets carrying each tag (NaN when a
// tag has no sets).
struct EvalReport {
  std::vector<SetResult> sets;
  double near_auroc = 0.0;
  double near_fpr95 = 0.0;
  double far_auroc = 0.0;
  double far_fpr95 = 0.0;

  // Header `dataset,tag,auroc,fpr95`, one row per set, then NEAR and FAR rows.
  std::string to_csv() const;
  std::string to_json() const;
};

struct ScoredOodSet {
  std::string name;
  bool near = false;
  std::vector<double> scores;
};

EvalReport evaluate(std::span<const double> id_scores, std::span<const ScoredOodSet> ood_sets,
                    double tpr_target = 0.95);

// Relative AUROC score across benchmarks: each column is divided by its best
// entry, then the columns are combined with fixed weights.
struct RelativeScoreColumn {
  std::string name;
  double weight = 0.0;
};

// CIFAR10, CIFAR100, ImageNet(ResNet50), ImageNet(ViT): 1/3, 1/3, 1/6, 1/6.
std::vector<RelativeScoreColumn> default_relative_score_columns();

struct AurocTable {
  std::vector<std::string> postprocessors;
  std::vector<RelativeScoreColumn> columns;
  // cells[p][c]; nullopt marks a missing result.
  std::vector<std::vector<std::optional<double>>> cells;
};

std::vector<double> relative_scores(const AurocTable& table);

}  // namespace weiper

#endif  // WEIPER_EVAL_HPP_
