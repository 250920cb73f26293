#ifndef WEIPER_SCORES_HPP_
#define WEIPER_SCORES_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "weiper/parallel.hpp"
#include "weiper/perturb.hpp"
#include "weiper/tensor.hpp"

namespace weiper {

// All scores in this toolkit are "ID-ness": higher means more in-distribution.

std::vector<double> softmax(std::span<const float> logits);

// Maximum softmax probability, in [1/C, 1].
double msp(std::span<const float> logits);

// Mean MSP over the r consecutive blocks of C perturbed logits.
double msp_w(std::span<const float> perturbed_logits, std::size_t repeats, std::size_t classes);

struct ReactThreshold {
  double clip = 0.0;
  double percentile = 90.0;
};

inline constexpr double kDefaultReactPercentile = 90.0;

// Nearest-rank percentile over all N*K pooled activations: the order
// statistic of (1-based) rank ceil(percentile/100 * M).
ReactThreshold fit_react_threshold(MatrixView train, double percentile = kDefaultReactPercentile);

std::vector<float> react_clip(std::span<const float> z, const ReactThreshold& thr);
Matrix react_clip(MatrixView batch, const ReactThreshold& thr);

// Batch scorers, one value per row.
std::vector<double> msp_scores(MatrixView batch, const WeightMatrix& w, const RunOptions& opts = {});
std::vector<double> msp_w_scores(MatrixView batch, const PerturbedWeights& pw,
                                 std::span<const float> bias, const RunOptions& opts = {});
// MSP_W over ReAct-clipped features.
std::vector<double> react_msp_w_scores(MatrixView batch, const PerturbedWeights& pw,
                                       std::span<const float> bias, const ReactThreshold& thr,
                                       const RunOptions& opts = {});

}  // namespace weiper

#endif  // WEIPER_SCORES_HPP_
