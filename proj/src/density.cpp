#include "weiper/density.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "weiper/error.hpp"

namespace weiper {

BinSpec::BinSpec(double lo_, double hi_, std::size_t n_bins_) : lo(lo_), hi(hi_), n_bins(n_bins_) {
  if (n_bins < 2) throw ConfigError("n_bins must be >= 2, got " + std::to_string(n_bins));
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo)) {
    throw DataError("bin range requires finite hi > lo");
  }
}

std::size_t BinSpec::bin_of(double value) const {
  if (!(value >= edge(1))) return 0;  // also catches NaN
  if (value >= edge(n_bins - 1)) return n_bins - 1;
  auto b = static_cast<std::size_t>((value - lo) / bin_length());
  b = std::min(b, n_bins - 1);
  // The division may round across an edge; settle against the edges proper.
  while (b > 0 && value < edge(b)) --b;
  while (b + 1 < n_bins && value >= edge(b + 1)) ++b;
  return b;
}

BinSpec fit_bin_spec(double min_value, double max_value, std::size_t n_bins) {
  if (max_value == min_value) return BinSpec(min_value - 0.5, min_value + 0.5, n_bins);
  return BinSpec(min_value, max_value, n_bins);
}

BinSpec fit_bin_spec(std::span<const float> train_values, std::size_t n_bins) {
  if (train_values.empty()) throw DataError("cannot fit a bin range on no values");
  const auto [lo, hi] = std::minmax_element(train_values.begin(), train_values.end());
  return fit_bin_spec(*lo, *hi, n_bins);
}

void accumulate_counts(std::span<const float> values, const BinSpec& bins,
                       std::span<std::uint32_t> counts) {
  for (float v : values) ++counts[bins.bin_of(v)];
}

Histogram histogram(std::span<const float> values, const BinSpec& bins) {
  if (values.empty()) throw DataError("histogram of no values");
  std::vector<std::uint32_t> counts(bins.n_bins, 0);
  accumulate_counts(values, bins, counts);
  Histogram h{bins, std::vector<double>(bins.n_bins)};
  const auto total = static_cast<double>(values.size());
  for (std::size_t b = 0; b < bins.n_bins; ++b) h.probs[b] = counts[b] / total;
  return h;
}

void uniform_kernel_into(std::span<const double> probs, std::size_t size, std::span<double> out) {
  if (size < 1) throw ConfigError("kernel size must be >= 1");
  const auto n = static_cast<std::ptrdiff_t>(probs.size());
  const auto left = static_cast<std::ptrdiff_t>((size - 1) / 2);
  const auto right = static_cast<std::ptrdiff_t>(size - 1) - left;
  const double inv = 1.0 / static_cast<double>(size);
  for (std::ptrdiff_t b = 0; b < n; ++b) {
    const std::ptrdiff_t from = std::max<std::ptrdiff_t>(0, b - left);
    const std::ptrdiff_t to = std::min<std::ptrdiff_t>(n - 1, b + right);
    double sum = 0.0;
    for (std::ptrdiff_t k = from; k <= to; ++k) sum += probs[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(b)] = sum * inv;
  }
}

void epsilon_floor_into(std::span<double> probs, double eps) {
  if (!(eps > 0.0)) throw ConfigError("epsilon must be > 0");
  double total = 0.0;
  for (auto& p : probs) {
    p += eps;
    total += p;
  }
  for (auto& p : probs) p /= total;
}

Histogram smooth(const Histogram& h, std::size_t kernel_size, double eps) {
  Histogram out{h.bins, std::vector<double>(h.probs.size())};
  uniform_kernel_into(h.probs, kernel_size, out.probs);
  epsilon_floor_into(out.probs, eps);
  return out;
}

namespace {

// Sum over [begin, end) by recursive halving; the split points depend only on
// the range, never on scheduling.
void tree_sum(std::span<const Histogram> hists, std::size_t begin, std::size_t end,
              std::vector<double>& out) {
  if (end - begin == 1) {
    out = hists[begin].probs;
    return;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  std::vector<double> right;
  tree_sum(hists, begin, mid, out);
  tree_sum(hists, mid, end, right);
  for (std::size_t b = 0; b < out.size(); ++b) out[b] += right[b];
}

}  // namespace

MeanDensity mean_density(std::span<const Histogram> hists, double eps) {
  if (hists.empty()) throw DataError("mean density of no histograms");
  const BinSpec& bins = hists.front().bins;
  for (const auto& h : hists) {
    if (!(h.bins == bins) || h.probs.size() != bins.n_bins) {
      throw DataError("mean density over histograms with different bin specs");
    }
  }
  MeanDensity mean{{bins, {}}, hists.size()};
  tree_sum(hists, 0, hists.size(), mean.hist.probs);
  for (auto& p : mean.hist.probs) p /= static_cast<double>(hists.size());
  epsilon_floor_into(mean.hist.probs, eps);
  return mean;
}

MeanDensity mean_density_from_counts(const BinSpec& bins, std::span<const std::uint64_t> counts,
                                     std::size_t n_contributors, std::size_t per_sample_total,
                                     double eps) {
  if (n_contributors == 0 || per_sample_total == 0) throw DataError("mean density of no histograms");
  if (counts.size() != bins.n_bins) throw DataError("count vector does not match bin spec");
  MeanDensity mean{{bins, std::vector<double>(bins.n_bins)}, n_contributors};
  const double total = static_cast<double>(n_contributors) * static_cast<double>(per_sample_total);
  for (std::size_t b = 0; b < bins.n_bins; ++b) {
    mean.hist.probs[b] = static_cast<double>(counts[b]) / total;
  }
  epsilon_floor_into(mean.hist.probs, eps);
  return mean;
}

double sym_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DataError("sym_kl over histograms of different length");
  double total = 0.0;
  for (std::size_t b = 0; b < p.size(); ++b) {
    if (!(p[b] > 0.0) || !(q[b] > 0.0)) {
      throw DataError("sym_kl hit a zero-probability bin; apply the epsilon floor first");
    }
    const double log_ratio = std::log(p[b] / q[b]);
    total += (p[b] - q[b]) * log_ratio;
  }
  return total;
}

double sym_kl(const Histogram& p, const Histogram& q) {
  if (!(p.bins == q.bins)) throw DataError("sym_kl over histograms with different bin specs");
  return sym_kl(std::span<const double>(p.probs), std::span<const double>(q.probs));
}

std::string histogram_csv(const Histogram& h) {
  std::string out = "bin_lo,bin_hi,prob\n";
  char line[128];
  for (std::size_t b = 0; b < h.bins.n_bins; ++b) {
    const double hi = b + 1 == h.bins.n_bins ? h.bins.hi : h.bins.edge(b + 1);
    std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g\n", h.bins.edge(b), hi, h.probs[b]);
    out += line;
  }
  return out;
}

}  // namespace weiper
