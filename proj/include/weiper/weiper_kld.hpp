#ifndef WEIPER_WEIPER_KLD_HPP_
#define WEIPER_WEIPER_KLD_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "weiper/density.hpp"
#include "weiper/parallel.hpp"
#include "weiper/perturb.hpp"
#include "weiper/tensor.hpp"

namespace weiper {

struct KldHyperparams {
  std::size_t repeats = 100;  // r
  double delta = 2.0;
  std::size_t n_bins = 100;
  double lambda1 = 2.5;  // weight of the perturbed-space KL term
  double lambda2 = 0.1;  // weight of MSP_W
  std::size_t s1 = 4;    // kernel size, penultimate space
  std::size_t s2 = 40;   // kernel size, perturbed space
  double eps = kDefaultEpsilon;
  std::uint64_t seed = 0;

  void validate() const;
  PerturbationConfig perturbation() const { return {repeats, delta, seed, kDefaultMemoryBudget}; }

  bool operator==(const KldHyperparams&) const = default;
};

struct WeiPerKldModel {
  WeightMatrix head;  // unperturbed weights; its bias is reused by every perturbed block
  PerturbedWeights perturbed_weights;
  BinSpec pen_bins;
  BinSpec pert_bins;
  MeanDensity pen_mean;
  MeanDensity pert_mean;
  KldHyperparams hyper;

  std::size_t n_features() const { return perturbed_weights.n_features(); }
};

// The three per-sample quantities the combined score is built from.
struct KldTerms {
  double pen_kl = 0.0;   // D_KL in the penultimate space (kernel s1)
  double pert_kl = 0.0;  // D_KL in the perturbed logit space (kernel s2)
  double msp_w = 0.0;
};

// -(pen_kl + lambda1 * pert_kl - lambda2 * msp_w): higher is more ID.
inline double combine_terms(const KldTerms& t, double lambda1, double lambda2) {
  return -(t.pen_kl + lambda1 * t.pert_kl - lambda2 * t.msp_w);
}

// Running min/max over a stream of values.
struct ValueRange {
  double lo = 0.0;
  double hi = 0.0;
  bool empty = true;

  void include(std::span<const float> values);
};

// Min/max of all perturbed logits of `samples`, streamed batch by batch.
ValueRange perturbed_value_range(MatrixView samples, const PerturbedWeights& pw,
                                 std::span<const float> bias, const RunOptions& opts);

// Sample-wise symmetric KL between the smoothed per-sample histogram and the
// mean. `probs` is the raw (unsmoothed) per-sample histogram; `scratch` must
// match its size.
double fingerprint_kl(std::span<const double> probs, std::size_t kernel_size, double eps,
                      const MeanDensity& mean, std::span<double> scratch);

WeiPerKldModel fit(MatrixView train, const WeightMatrix& w, const KldHyperparams& hyper,
                   const RunOptions& opts = {});

std::vector<KldTerms> score_terms(const WeiPerKldModel& model, MatrixView batch,
                                  const RunOptions& opts = {});

std::vector<double> score(const WeiPerKldModel& model, MatrixView batch,
                          const RunOptions& opts = {});

// Directory layout: weights.wpft, bias.wpft, perturbed_weights.wpft, pen_mean.wpft,
// pert_mean.wpft and model.json. model.json carries the mean histograms at
// full double precision; the WPFT copies are f32 for external tooling.
inline constexpr int kModelFormatVersion = 1;
void save_model(const std::filesystem::path& dir, const WeiPerKldModel& model);
WeiPerKldModel load_model(const std::filesystem::path& dir);

}  // namespace weiper

#endif  // WEIPER_WEIPER_KLD_HPP_
