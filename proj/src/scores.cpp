#include "weiper/scores.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "weiper/error.hpp"

namespace weiper {

std::vector<double> softmax(std::span<const float> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(static_cast<double>(logits[i]) - top);
    sum += out[i];
  }
  for (auto& p : out) p /= sum;
  return out;
}

double msp(std::span<const float> logits) {
  if (logits.empty()) throw DataError("msp of an empty logit vector");
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (float l : logits) sum += std::exp(static_cast<double>(l) - top);
  return 1.0 / sum;
}

double msp_w(std::span<const float> perturbed_logits, std::size_t repeats, std::size_t classes) {
  if (repeats == 0 || classes == 0 || perturbed_logits.size() != repeats * classes) {
    throw DataError("perturbed logit vector has length " +
                    std::to_string(perturbed_logits.size()) + ", expected r*C = " +
                    std::to_string(repeats) + "*" + std::to_string(classes));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < repeats; ++i) {
    total += msp(perturbed_logits.subspan(i * classes, classes));
  }
  return total / static_cast<double>(repeats);
}

ReactThreshold fit_react_threshold(MatrixView train, double percentile) {
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw ConfigError("ReAct percentile must lie in (0, 100]");
  }
  if (train.data().empty()) throw DataError("cannot fit a ReAct threshold on empty data");
  std::vector<float> pool(train.data().begin(), train.data().end());
  const auto m = static_cast<double>(pool.size());
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * m));
  rank = std::clamp<std::size_t>(rank, 1, pool.size());
  std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(rank - 1), pool.end());
  return {static_cast<double>(pool[rank - 1]), percentile};
}

std::vector<float> react_clip(std::span<const float> z, const ReactThreshold& thr) {
  std::vector<float> out(z.begin(), z.end());
  for (auto& v : out) {
    if (static_cast<double>(v) > thr.clip) v = static_cast<float>(thr.clip);
  }
  return out;
}

Matrix react_clip(MatrixView batch, const ReactThreshold& thr) {
  auto clipped = react_clip(batch.data(), thr);
  return Matrix(batch.rows(), batch.cols(), std::move(clipped));
}

std::vector<double> msp_scores(MatrixView batch, const WeightMatrix& w, const RunOptions& opts) {
  const Matrix l = logits(batch, w, opts.threads);
  std::vector<double> out(batch.rows());
  parallel_for(out.size(), opts.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t n = begin; n < end; ++n) out[n] = msp(l.row(n));
  });
  return out;
}

std::vector<double> msp_w_scores(MatrixView batch, const PerturbedWeights& pw,
                                 std::span<const float> bias, const RunOptions& opts) {
  std::vector<double> out(batch.rows());
  for_each_projected_batch(batch, pw, bias, opts,
                           [&](std::size_t first, MatrixView, MatrixView projected) {
                             parallel_for(projected.rows(), opts.threads,
                                          [&](std::size_t begin, std::size_t end) {
                                            for (std::size_t n = begin; n < end; ++n) {
                                              out[first + n] = msp_w(projected.row(n), pw.repeats(),
                                                                     pw.n_classes());
                                            }
                                          });
                           });
  return out;
}

std::vector<double> react_msp_w_scores(MatrixView batch, const PerturbedWeights& pw,
                                       std::span<const float> bias, const ReactThreshold& thr,
                                       const RunOptions& opts) {
  const Matrix clipped = react_clip(batch, thr);
  return msp_w_scores(clipped.view(), pw, bias, opts);
}

}  // namespace weiper
