#ifndef WEIPER_PERTURB_HPP_
#define WEIPER_PERTURB_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include "weiper/parallel.hpp"
#include "weiper/tensor.hpp"

namespace weiper {

inline constexpr std::size_t kDefaultMemoryBudget = std::size_t{2} << 30;  // 2 GiB

struct PerturbationConfig {
  std::size_t repeats = 1;  // r
  double delta = 0.0;       // perturbation length relative to its weight row
  std::uint64_t seed = 0;
  // Cap on any materialized float buffer (perturbed weights or perturbed
  // logits). Larger workloads must stream via for_each_projected_batch.
  std::size_t memory_budget_bytes = kDefaultMemoryBudget;

  void validate() const;
};

// The (r*C) x K stack of perturbed class projections. Row (i, j) lives at
// index i*C + j (zero-based): r blocks, each ordered by class.
class PerturbedWeights {
 public:
  PerturbedWeights() = default;
  PerturbedWeights(std::size_t repeats, std::size_t classes, Matrix rows, std::uint64_t seed);

  std::size_t repeats() const { return repeats_; }
  std::size_t n_classes() const { return classes_; }
  std::size_t n_features() const { return rows_.cols(); }
  std::size_t n_rows() const { return rows_.rows(); }
  std::uint64_t seed() const { return seed_; }
  const Matrix& matrix() const { return rows_; }
  std::span<const float> row(std::size_t repeat, std::size_t cls) const {
    return rows_.row(repeat * classes_ + cls);
  }

  bool operator==(const PerturbedWeights&) const = default;

 private:
  std::size_t repeats_ = 0;
  std::size_t classes_ = 0;
  Matrix rows_;
  std::uint64_t seed_ = 0;
};

// w~_{i,j} = w_j + delta * ||w_j|| * eta_{i,j} / ||eta_{i,j}|| with an
// independent standard-normal eta per (i, j), keyed on (seed, i, j).
PerturbedWeights build_perturbed_weights(const WeightMatrix& w, const PerturbationConfig& cfg,
                                         std::size_t threads = 0);

// Dot product with a fixed summation order; every logit in the toolkit goes
// through here so that chunking never changes a result.
float dot(std::span<const float> a, std::span<const float> b);

// out[n, i*C + j] = w~_{i,j} . z_n + bias_j. `bias` may be empty. `out` must
// hold batch.rows() * pw.n_rows() floats.
void project_into(MatrixView batch, const PerturbedWeights& pw, std::span<const float> bias,
                  std::span<float> out, std::size_t threads = 0);

// Materializing variant, refused when the result exceeds `memory_budget_bytes`.
Matrix project(MatrixView batch, const PerturbedWeights& pw, std::span<const float> bias = {},
               std::size_t threads = 0,
               std::size_t memory_budget_bytes = kDefaultMemoryBudget);

// Unperturbed logits W z + b for every row of `batch`.
Matrix logits(MatrixView batch, const WeightMatrix& w, std::size_t threads = 0);

// Streams `samples` through the projection in batches of opts.batch_size and
// calls fn(first_row, batch_view, projected) in row order. `projected` is
// only valid during the call.
void for_each_projected_batch(
    MatrixView samples, const PerturbedWeights& pw, std::span<const float> bias,
    const RunOptions& opts,
    const std::function<void(std::size_t, MatrixView, MatrixView)>& fn);

}  // namespace weiper

#endif  // WEIPER_PERTURB_HPP_
