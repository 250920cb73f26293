#include "weiper/tune.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <string>

#include "weiper/error.hpp"
#include "weiper/eval.hpp"
#include "weiper/scores.hpp"

namespace weiper {

std::size_t SearchRanges::combinations() const {
  return repeats.size() * delta.size() * n_bins.size() * lambda1.size() * lambda2.size() *
         s1.size() * s2.size();
}

void SearchRanges::validate() const {
  if (repeats.empty() || delta.empty() || n_bins.empty() || lambda1.empty() || lambda2.empty() ||
      s1.empty() || s2.empty()) {
    throw ConfigError("every hyperparameter range must hold at least one value");
  }
  // Each value must be admissible on its own.
  for (auto r : repeats)
    for (auto d : delta)
      for (auto nb : n_bins)
        for (auto l1 : lambda1)
          for (auto l2 : lambda2)
            for (auto a : s1)
              for (auto b : s2) KldHyperparams{r, d, nb, l1, l2, a, b, eps, seed}.validate();
}

std::string TuneResult::leaderboard_csv() const {
  std::string out = "r,delta,n_bins,lambda1,lambda2,s1,s2,val_auroc,val_fpr95\n";
  char line[256];
  for (const auto& e : leaderboard) {
    const auto& h = e.hyper;
    std::snprintf(line, sizeof(line), "%zu,%.17g,%zu,%.17g,%.17g,%zu,%zu,%.17g,%.17g\n",
                  h.repeats, h.delta, h.n_bins, h.lambda1, h.lambda2, h.s1, h.s2, e.auroc,
                  e.fpr95);
    out += line;
  }
  return out;
}

namespace {

struct EvalSet {
  std::string name;
  bool near = false;
  MatrixView features;
};

std::vector<EvalSet> objective_sets(const DatasetBundle& val, TuneObjective objective) {
  std::vector<EvalSet> sets;
  for (const auto& s : val.ood_sets) {
    if (objective == TuneObjective::kAllAuroc || s.near) sets.push_back({s.name, s.near, s.features.view()});
  }
  if (sets.empty()) {
    throw DataError(objective == TuneObjective::kNearAuroc
                        ? "tuning on near-OOD AUROC needs at least one near OOD validation set"
                        : "tuning needs at least one OOD validation set");
  }
  return sets;
}

MatrixView id_validation(const DatasetBundle& val) {
  return val.id_val ? val.id_val->view() : val.id_test.view();
}

LeaderboardEntry summarize(const KldHyperparams& hyper, std::span<const double> id_scores,
                           std::span<const ScoredOodSet> sets, TuneObjective objective) {
  const EvalReport report = evaluate(id_scores, sets);
  LeaderboardEntry entry{hyper, 0.0, 0.0};
  if (objective == TuneObjective::kNearAuroc) {
    entry.auroc = report.near_auroc;
    entry.fpr95 = report.near_fpr95;
  } else {
    for (const auto& s : report.sets) {
      entry.auroc += s.auroc;
      entry.fpr95 += s.fpr95;
    }
    entry.auroc /= static_cast<double>(report.sets.size());
    entry.fpr95 /= static_cast<double>(report.sets.size());
  }
  return entry;
}

// Per-sample histogram counts of one evaluation set for every n_bins value,
// both spaces, plus its MSP_W values.
struct SetCache {
  std::size_t n_samples = 0;
  std::vector<std::vector<std::uint32_t>> pen_counts;   // [bins idx][n * nb + b]
  std::vector<std::vector<std::uint32_t>> pert_counts;  // [bins idx][n * nb + b]
  std::vector<double> msp_w;
};

}  // namespace

LeaderboardEntry evaluate_configuration(MatrixView train, const DatasetBundle& val,
                                        const WeightMatrix& w, const KldHyperparams& hyper,
                                        TuneObjective objective, const RunOptions& opts) {
  const auto sets = objective_sets(val, objective);
  const WeiPerKldModel model = fit(train, w, hyper, opts);
  const auto id_scores = score(model, id_validation(val), opts);
  std::vector<ScoredOodSet> scored;
  for (const auto& s : sets) scored.push_back({s.name, s.near, score(model, s.features, opts)});
  return summarize(hyper, id_scores, scored, objective);
}

TuneResult grid_search(MatrixView train, const DatasetBundle& val, const WeightMatrix& w,
                       const SearchRanges& ranges, const RunOptions& opts) {
  ranges.validate();
  val.validate();
  if (train.cols() != w.n_features() || val.n_features() != w.n_features()) {
    throw DataError("tuning inputs disagree on K");
  }
  const auto sets = objective_sets(val, ranges.objective);
  std::vector<MatrixView> eval_views{id_validation(val)};
  for (const auto& s : sets) eval_views.push_back(s.features);

  const auto bias = w.bias();
  const auto [pen_min, pen_max] = std::minmax_element(train.data().begin(), train.data().end());
  const std::size_t n_nb = ranges.n_bins.size();

  TuneResult result;
  result.leaderboard.reserve(ranges.combinations());

  for (std::size_t r : ranges.repeats) {
    for (double delta : ranges.delta) {
      const PerturbedWeights pw =
          build_perturbed_weights(w, {r, delta, ranges.seed, kDefaultMemoryBudget}, opts.threads);
      const ValueRange pert_range = perturbed_value_range(train, pw, bias, opts);

      std::vector<BinSpec> pen_bins, pert_bins;
      for (std::size_t nb : ranges.n_bins) {
        pen_bins.push_back(fit_bin_spec(*pen_min, *pen_max, nb));
        pert_bins.push_back(fit_bin_spec(pert_range.lo, pert_range.hi, nb));
      }

      // Training means, summed as integers across samples.
      std::vector<std::vector<std::uint64_t>> pen_train(n_nb), pert_train(n_nb);
      for (std::size_t q = 0; q < n_nb; ++q) {
        pen_train[q].assign(ranges.n_bins[q], 0);
        pert_train[q].assign(ranges.n_bins[q], 0);
      }
      auto add_counts = [&](MatrixView rows, const std::vector<BinSpec>& specs,
                            std::vector<std::vector<std::uint64_t>>& totals) {
        std::mutex merge;
        parallel_for(rows.rows(), opts.threads, [&](std::size_t begin, std::size_t end) {
          std::vector<std::vector<std::uint64_t>> local(n_nb);
          std::vector<std::uint32_t> row_counts;
          for (std::size_t q = 0; q < n_nb; ++q) local[q].assign(specs[q].n_bins, 0);
          for (std::size_t n = begin; n < end; ++n) {
            for (std::size_t q = 0; q < n_nb; ++q) {
              row_counts.assign(specs[q].n_bins, 0);
              accumulate_counts(rows.row(n), specs[q], row_counts);
              for (std::size_t b = 0; b < row_counts.size(); ++b) local[q][b] += row_counts[b];
            }
          }
          std::lock_guard lock(merge);
          for (std::size_t q = 0; q < n_nb; ++q)
            for (std::size_t b = 0; b < local[q].size(); ++b) totals[q][b] += local[q][b];
        });
      };
      add_counts(train, pen_bins, pen_train);
      for_each_projected_batch(train, pw, bias, opts,
                               [&](std::size_t, MatrixView, MatrixView projected) {
                                 add_counts(projected, pert_bins, pert_train);
                               });

      // Per-sample counts and MSP_W of every evaluation set.
      std::vector<SetCache> caches(eval_views.size());
      for (std::size_t e = 0; e < eval_views.size(); ++e) {
        const MatrixView view = eval_views[e];
        SetCache& cache = caches[e];
        cache.n_samples = view.rows();
        cache.msp_w.assign(view.rows(), 0.0);
        cache.pen_counts.resize(n_nb);
        cache.pert_counts.resize(n_nb);
        for (std::size_t q = 0; q < n_nb; ++q) {
          cache.pen_counts[q].assign(view.rows() * ranges.n_bins[q], 0);
          cache.pert_counts[q].assign(view.rows() * ranges.n_bins[q], 0);
        }
        for_each_projected_batch(
            view, pw, bias, opts, [&](std::size_t first, MatrixView samples, MatrixView projected) {
              parallel_for(samples.rows(), opts.threads, [&](std::size_t begin, std::size_t end) {
                for (std::size_t n = begin; n < end; ++n) {
                  const std::size_t row = first + n;
                  cache.msp_w[row] = msp_w(projected.row(n), pw.repeats(), pw.n_classes());
                  for (std::size_t q = 0; q < n_nb; ++q) {
                    const std::size_t nb = ranges.n_bins[q];
                    accumulate_counts(samples.row(n), pen_bins[q],
                                      std::span(cache.pen_counts[q]).subspan(row * nb, nb));
                    accumulate_counts(projected.row(n), pert_bins[q],
                                      std::span(cache.pert_counts[q]).subspan(row * nb, nb));
                  }
                }
              });
            });
      }

      for (std::size_t q = 0; q < n_nb; ++q) {
        const std::size_t nb = ranges.n_bins[q];
        const MeanDensity pen_mean =
            mean_density_from_counts(pen_bins[q], pen_train[q], train.rows(), train.cols(), ranges.eps);
        const MeanDensity pert_mean =
            mean_density_from_counts(pert_bins[q], pert_train[q], train.rows(), pw.n_rows(), ranges.eps);

        // kl[e][kernel idx][n]
        auto kernel_kls = [&](const std::vector<std::size_t>& kernels, bool perturbed) {
          std::vector<std::vector<std::vector<double>>> kls(caches.size());
          for (std::size_t e = 0; e < caches.size(); ++e) {
            const SetCache& cache = caches[e];
            const auto& counts = perturbed ? cache.pert_counts[q] : cache.pen_counts[q];
            const MeanDensity& mean = perturbed ? pert_mean : pen_mean;
            const auto total = static_cast<double>(perturbed ? pw.n_rows() : train.cols());
            kls[e].assign(kernels.size(), std::vector<double>(cache.n_samples));
            parallel_for(cache.n_samples, opts.threads, [&](std::size_t begin, std::size_t end) {
              std::vector<double> probs(nb), scratch(nb);
              for (std::size_t n = begin; n < end; ++n) {
                for (std::size_t b = 0; b < nb; ++b) probs[b] = counts[n * nb + b] / total;
                for (std::size_t k = 0; k < kernels.size(); ++k) {
                  kls[e][k][n] = fingerprint_kl(probs, kernels[k], ranges.eps, mean, scratch);
                }
              }
            });
          }
          return kls;
        };
        const auto pen_kl = kernel_kls(ranges.s1, false);
        const auto pert_kl = kernel_kls(ranges.s2, true);

        std::vector<double> id_scores(caches[0].n_samples);
        std::vector<ScoredOodSet> scored;
        for (std::size_t e = 1; e < caches.size(); ++e) {
          scored.push_back({sets[e - 1].name, sets[e - 1].near,
                            std::vector<double>(caches[e].n_samples)});
        }
        for (double l1 : ranges.lambda1) {
          for (double l2 : ranges.lambda2) {
            for (std::size_t a = 0; a < ranges.s1.size(); ++a) {
              for (std::size_t b = 0; b < ranges.s2.size(); ++b) {
                for (std::size_t e = 0; e < caches.size(); ++e) {
                  auto& out = e == 0 ? id_scores : scored[e - 1].scores;
                  for (std::size_t n = 0; n < out.size(); ++n) {
                    out[n] = combine_terms({pen_kl[e][a][n], pert_kl[e][b][n], caches[e].msp_w[n]},
                                           l1, l2);
                  }
                }
                const KldHyperparams hyper{r, delta, nb, l1, l2, ranges.s1[a], ranges.s2[b],
                                           ranges.eps, ranges.seed};
                result.leaderboard.push_back(summarize(hyper, id_scores, scored, ranges.objective));
              }
            }
          }
        }
      }
    }
  }

  for (std::size_t i = 1; i < result.leaderboard.size(); ++i) {
    if (result.leaderboard[i].auroc > result.leaderboard[result.best_index].auroc) result.best_index = i;
  }
  result.best = result.leaderboard[result.best_index].hyper;
  return result;
}

}  // namespace weiper
