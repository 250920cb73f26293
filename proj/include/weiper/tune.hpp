#ifndef WEIPER_TUNE_HPP_
#define WEIPER_TUNE_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "weiper/parallel.hpp"
#include "weiper/tensor.hpp"
#include "weiper/weiper_kld.hpp"

namespace weiper {

enum class TuneObjective {
  kNearAuroc,  // mean AUROC over near-OOD validation sets
  kAllAuroc,   // mean AUROC over every OOD validation set
};

// Discrete search ranges, enumerated lexicographically in this field order.
struct SearchRanges {
  std::vector<std::size_t> repeats{100};
  std::vector<double> delta{1.8, 2.0, 2.2, 2.4};
  std::vector<std::size_t> n_bins{60, 80, 100};
  std::vector<double> lambda1{0.1, 1.0, 2.5, 4.0};
  std::vector<double> lambda2{0.1, 0.25, 1.0, 2.5, 5.0};
  std::vector<std::size_t> s1{4, 8, 12, 20, 40};
  std::vector<std::size_t> s2{15, 25, 40};
  double eps = kDefaultEpsilon;
  std::uint64_t seed = 0;
  TuneObjective objective = TuneObjective::kNearAuroc;

  std::size_t combinations() const;
  void validate() const;
};

struct LeaderboardEntry {
  KldHyperparams hyper;
  double auroc = 0.0;  // objective value
  double fpr95 = 0.0;  // mean FPR95 over the same sets
};

struct TuneResult {
  KldHyperparams best;
  std::size_t best_index = 0;
  std::vector<LeaderboardEntry> leaderboard;  // enumeration order

  // Header `r,delta,n_bins,lambda1,lambda2,s1,s2,val_auroc,val_fpr95`.
  std::string leaderboard_csv() const;
};

// ID validation scores come from `val.id_val` (falling back to `val.id_test`).
// Perturbed weights are built once per (r, delta); histogram counts once per
// (r, delta, n_bins); the inner (lambda1, lambda2, s1, s2) loop only smooths
// and compares the stored histograms. Ties keep the earliest configuration.
TuneResult grid_search(MatrixView train, const DatasetBundle& val, const WeightMatrix& w,
                       const SearchRanges& ranges, const RunOptions& opts = {});

// Objective of one configuration fitted and scored from scratch.
LeaderboardEntry evaluate_configuration(MatrixView train, const DatasetBundle& val,
                                        const WeightMatrix& w, const KldHyperparams& hyper,
                                        TuneObjective objective, const RunOptions& opts = {});

}  // namespace weiper

#endif  // WEIPER_TUNE_HPP_
