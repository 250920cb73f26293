#ifndef WEIPER_DENSITY_HPP_
#define WEIPER_DENSITY_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace weiper {

inline constexpr double kDefaultEpsilon = 0.01;

// Equal-width bins over [lo, hi]. Bin b covers [edge(b), edge(b+1)); the last
// bin is closed, and values outside the range clamp into the edge bins.
struct BinSpec {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t n_bins = 2;

  BinSpec() = default;
  BinSpec(double lo, double hi, std::size_t n_bins);

  double bin_length() const { return (hi - lo) / static_cast<double>(n_bins); }
  double edge(std::size_t b) const { return lo + static_cast<double>(b) * bin_length(); }
  std::size_t bin_of(double value) const;

  bool operator==(const BinSpec&) const = default;
};

// Range over the pooled training values; a constant pool widens to
// [v - 0.5, v + 0.5].
BinSpec fit_bin_spec(std::span<const float> train_values, std::size_t n_bins);
BinSpec fit_bin_spec(double min_value, double max_value, std::size_t n_bins);

struct Histogram {
  BinSpec bins;
  std::vector<double> probs;

  // probs[b] / bin_length
  double density(std::size_t b) const { return probs[b] / bins.bin_length(); }
};

// Adds per-bin counts of `values` into `counts` (size n_bins).
void accumulate_counts(std::span<const float> values, const BinSpec& bins,
                       std::span<std::uint32_t> counts);

Histogram histogram(std::span<const float> values, const BinSpec& bins);

// Moving average with a uniform kernel of `size` bins, window
// [b - floor((size-1)/2), b + ceil((size-1)/2)], zero padded at both ends.
void uniform_kernel_into(std::span<const double> probs, std::size_t size, std::span<double> out);

// Adds eps to every entry and rescales to sum one.
void epsilon_floor_into(std::span<double> probs, double eps);

// Uniform-kernel smoothing followed by the epsilon floor.
Histogram smooth(const Histogram& h, std::size_t kernel_size, double eps = kDefaultEpsilon);

struct MeanDensity {
  Histogram hist;
  std::size_t n_contributors = 0;
};

// Elementwise mean of unsmoothed histograms (fixed pairwise-tree order), then
// the epsilon floor. No kernel smoothing is applied to the mean.
MeanDensity mean_density(std::span<const Histogram> hists, double eps = kDefaultEpsilon);

// Mean density from summed integer counts of `n_contributors` histograms that
// each hold `per_sample_total` values.
MeanDensity mean_density_from_counts(const BinSpec& bins, std::span<const std::uint64_t> counts,
                                     std::size_t n_contributors, std::size_t per_sample_total,
                                     double eps = kDefaultEpsilon);

// KL(p||q) + KL(q||p), natural log. Both inputs must be strictly positive.
double sym_kl(std::span<const double> p, std::span<const double> q);
double sym_kl(const Histogram& p, const Histogram& q);

// Bin table as CSV with header `bin_lo,bin_hi,prob`.
std::string histogram_csv(const Histogram& h);

}  // namespace weiper

#endif  // WEIPER_DENSITY_HPP_
