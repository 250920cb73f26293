#include "weiper/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>

#include "json.hpp"
#include "weiper/error.hpp"

namespace weiper {

using nlohmann::json;

namespace {

void require_nonempty(std::span<const double> id, std::span<const double> ood) {
  if (id.empty() || ood.empty()) throw DataError("metric requires nonempty ID and OOD scores");
}

std::vector<double> sorted(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require_nonempty(id_scores, ood_scores);
  const auto id = sorted(id_scores);
  const auto ood = sorted(ood_scores);
  // Twice the Mann-Whitney U: 2 per ID-above-OOD pair, 1 per tie.
  std::uint64_t twice_u = 0;
  std::size_t below = 0;  // ID scores strictly below the current OOD value
  std::size_t i = 0;
  for (std::size_t o = 0; o < ood.size();) {
    const double v = ood[o];
    std::size_t same_ood = 0;
    while (o < ood.size() && ood[o] == v) {
      ++same_ood;
      ++o;
    }
    while (i < id.size() && id[i] < v) ++i;
    below = i;
    std::size_t ties = 0;
    while (i + ties < id.size() && id[i + ties] == v) ++ties;
    const std::size_t above = id.size() - below - ties;
    twice_u += same_ood * (2 * static_cast<std::uint64_t>(above) + ties);
  }
  return static_cast<double>(twice_u) /
         (2.0 * static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                  double tpr_target) {
  require_nonempty(id_scores, ood_scores);
  if (!(tpr_target > 0.0 && tpr_target <= 1.0)) throw ConfigError("TPR target must lie in (0, 1]");
  auto id = sorted(id_scores);
  std::reverse(id.begin(), id.end());
  const auto n_id = static_cast<double>(id.size());
  // Smallest count k whose fraction reaches the target, evaluated with the
  // same expression as the threshold sweep.
  std::size_t k = 1;
  while (static_cast<double>(k) / n_id < tpr_target) ++k;
  const double threshold = id[k - 1];
  std::size_t false_pos = 0;
  for (double s : ood_scores) false_pos += s >= threshold ? 1 : 0;
  return static_cast<double>(false_pos) / static_cast<double>(ood_scores.size());
}

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json finite_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

}  // namespace

std::string EvalReport::to_csv() const {
  std::string out = "dataset,tag,auroc,fpr95\n";
  for (const auto& s : sets) {
    out += s.name + "," + (s.near ? "near" : "far") + "," + format_double(s.auroc) + "," +
           format_double(s.fpr95) + "\n";
  }
  out += "NEAR,-," + format_double(near_auroc) + "," + format_double(near_fpr95) + "\n";
  out += "FAR,-," + format_double(far_auroc) + "," + format_double(far_fpr95) + "\n";
  return out;
}

std::string EvalReport::to_json() const {
  json doc;
  doc["sets"] = json::array();
  for (const auto& s : sets) {
    doc["sets"].push_back({{"dataset", s.name},
                           {"tag", s.near ? "near" : "far"},
                           {"auroc", s.auroc},
                           {"fpr95", s.fpr95}});
  }
  doc["near"] = {{"auroc", finite_or_null(near_auroc)}, {"fpr95", finite_or_null(near_fpr95)}};
  doc["far"] = {{"auroc", finite_or_null(far_auroc)}, {"fpr95", finite_or_null(far_fpr95)}};
  return doc.dump(2) + "\n";
}

EvalReport evaluate(std::span<const double> id_scores, std::span<const ScoredOodSet> ood_sets,
                    double tpr_target) {
  if (id_scores.empty()) throw DataError("evaluation requires ID scores");
  EvalReport report;
  double sums[2][2] = {};
  std::size_t counts[2] = {};
  for (const auto& set : ood_sets) {
    if (set.scores.empty()) throw DataError("no scores for OOD set '" + set.name + "'");
    SetResult r{set.name, set.near, auroc(id_scores, set.scores),
                fpr_at_tpr(id_scores, set.scores, tpr_target)};
    const int tag = set.near ? 0 : 1;
    sums[tag][0] += r.auroc;
    sums[tag][1] += r.fpr95;
    ++counts[tag];
    report.sets.push_back(std::move(r));
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto mean = [&](int tag, int metric) {
    return counts[tag] == 0 ? nan : sums[tag][metric] / static_cast<double>(counts[tag]);
  };
  report.near_auroc = mean(0, 0);
  report.near_fpr95 = mean(0, 1);
  report.far_auroc = mean(1, 0);
  report.far_fpr95 = mean(1, 1);
  return report;
}

std::vector<RelativeScoreColumn> default_relative_score_columns() {
  return {{"CIFAR10", 1.0 / 3.0},
          {"CIFAR100", 1.0 / 3.0},
          {"ImageNet(ResNet50)", 1.0 / 6.0},
          {"ImageNet(ViT)", 1.0 / 6.0}};
}

std::vector<double> relative_scores(const AurocTable& table) {
  const std::size_t n_cols = table.columns.size();
  if (n_cols == 0) throw DataError("relative score table has no columns");
  if (table.cells.size() != table.postprocessors.size()) {
    throw DataError("relative score table has mismatched rows");
  }
  std::vector<double> best(n_cols, 0.0);
  for (std::size_t p = 0; p < table.cells.size(); ++p) {
    if (table.cells[p].size() != n_cols) throw DataError("relative score table has ragged rows");
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (!table.cells[p][c]) {
        throw DataError("missing AUROC for " + table.postprocessors[p] + " on " +
                        table.columns[c].name);
      }
      best[c] = std::max(best[c], *table.cells[p][c]);
    }
  }
  std::vector<double> out(table.cells.size(), 0.0);
  for (std::size_t p = 0; p < table.cells.size(); ++p) {
    for (std::size_t c = 0; c < n_cols; ++c) {
      out[p] += table.columns[c].weight * (*table.cells[p][c] / best[c]);
    }
  }
  return out;
}

}  // namespace weiper
