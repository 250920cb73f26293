#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support/oracles.hpp"
#include "weiper/density.hpp"
#include "weiper/error.hpp"

using namespace weiper;

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

Histogram hist_of(std::vector<double> probs) {
  return Histogram{BinSpec(0.0, 1.0, probs.size()), std::move(probs)};
}

}  // namespace

TEST_CASE("bin spec fitting") {
  const std::vector<float> unit = {0.0f, 0.3f, 1.0f};
  const BinSpec a = fit_bin_spec(unit, 2);
  CHECK(a.lo == 0.0);
  CHECK(a.hi == 1.0);
  CHECK(a.bin_length() == 0.5);

  const std::vector<float> threes = {3, 3, 3};
  const BinSpec b = fit_bin_spec(threes, 10);
  CHECK(b.lo == 2.5);
  CHECK(b.hi == 3.5);

  CHECK(fit_bin_spec(-2.0, 6.0, 4).bin_length() == 2.0);
  CHECK_THROWS_AS(fit_bin_spec(unit, 1), ConfigError);
  CHECK_THROWS_AS(fit_bin_spec(std::span<const float>(), 4), DataError);
}

TEST_CASE("histogram hand cases") {
  const BinSpec bins(0.0, 1.0, 2);
  const std::vector<float> v = {0, 0.5f, 1, 1};
  CHECK(histogram(v, bins).probs == std::vector<double>{0.25, 0.75});

  const std::vector<float> high = {2};
  CHECK(histogram(high, bins).probs == std::vector<double>{0.0, 1.0});
  const std::vector<float> low = {-7};
  CHECK(histogram(low, bins).probs == std::vector<double>{1.0, 0.0});

  const std::vector<float> inside = {0.61f, 0.62f, 0.63f};
  const auto h = histogram(inside, BinSpec(0.0, 1.0, 5));
  CHECK(h.probs == std::vector<double>{0, 0, 0, 1, 0});
  CHECK(h.density(3) == doctest::Approx(5.0));
}

TEST_CASE("property: histogram equals the naive counting oracle") {
  oracle::Gen gen(31);
  for (int trial = 0; trial < 300; ++trial) {
    const double lo = gen.uniform(-10, 10);
    const BinSpec bins(lo, lo + gen.uniform(0.01, 20), gen.size(2, 200));
    std::vector<float> values(gen.size(1, 500));
    for (auto& v : values) {
      // Mix interior values, exact edges and out-of-range values.
      const int kind = static_cast<int>(gen.size(0, 9));
      if (kind == 0) {
        v = static_cast<float>(bins.edge(gen.size(0, bins.n_bins)));
      } else if (kind == 1) {
        v = static_cast<float>(bins.lo - gen.uniform(0, 5));
      } else if (kind == 2) {
        v = static_cast<float>(bins.hi + gen.uniform(0, 5));
      } else {
        v = static_cast<float>(gen.uniform(bins.lo, bins.hi));
      }
    }
    const auto want = oracle::histogram_counts(values, bins);
    std::vector<std::uint32_t> got(bins.n_bins, 0);
    accumulate_counts(values, bins, got);
    CHECK(got == want);
    CHECK(sum(histogram(values, bins).probs) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("smooth hand cases") {
  const auto a = smooth(hist_of({1, 0}), 1, 0.01);
  CHECK(a.probs[0] == doctest::Approx(1.01 / 1.02).epsilon(1e-12));
  CHECK(a.probs[1] == doctest::Approx(0.01 / 1.02).epsilon(1e-12));
  CHECK(a.probs[0] == doctest::Approx(0.99020).epsilon(1e-5));

  const std::vector<double> p = {0, 1, 0, 0};
  std::vector<double> out(4);
  uniform_kernel_into(p, 3, out);
  CHECK(out[0] == doctest::Approx(1.0 / 3));
  CHECK(out[1] == doctest::Approx(1.0 / 3));
  CHECK(out[2] == doctest::Approx(1.0 / 3));
  CHECK(out[3] == 0.0);

  // Even kernels take one more bin on the right.
  uniform_kernel_into(p, 2, out);
  CHECK(out == std::vector<double>{0.5, 0.5, 0.0, 0.0});

  const auto u = smooth(hist_of({0.25, 0.25, 0.25, 0.25}), 1, 0.01);
  for (double v : u.probs) CHECK(v == doctest::Approx(0.25));
  CHECK_THROWS_AS(smooth(hist_of({1, 0}), 0, 0.01), ConfigError);
  CHECK_THROWS_AS(smooth(hist_of({1, 0}), 1, 0.0), ConfigError);
}

TEST_CASE("property: smooth keeps mass and floors every bin") {
  oracle::Gen gen(32);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = gen.size(2, 150);
    std::vector<double> probs(n, 0.0);
    // Sparse histograms stress the floor.
    const std::size_t hits = gen.size(1, 4);
    for (std::size_t h = 0; h < hits; ++h) probs[gen.size(0, n - 1)] += 1.0 / static_cast<double>(hits);
    const double eps = gen.uniform(1e-4, 0.1);
    const auto s = smooth(hist_of(probs), gen.size(1, 60), eps);
    CHECK(std::abs(sum(s.probs) - 1.0) <= 1e-9);
    const double floor = eps / (1.0 + static_cast<double>(n) * eps);
    for (double v : s.probs) CHECK(v >= floor * (1 - 1e-12));
  }
}

TEST_CASE("mean density") {
  const auto single = mean_density(std::vector<Histogram>{hist_of({0.2, 0.8})}, 0.01);
  CHECK(single.hist.probs[0] == doctest::Approx(0.21 / 1.02));
  CHECK(single.n_contributors == 1);

  const auto two = mean_density(std::vector<Histogram>{hist_of({1, 0}), hist_of({0, 1})}, 0.01);
  CHECK(two.hist.probs == std::vector<double>{0.5, 0.5});

  const std::vector<Histogram> mixed = {hist_of({1, 0}), Histogram{BinSpec(0, 2, 2), {1, 0}}};
  CHECK_THROWS_AS(mean_density(mixed), DataError);
  CHECK_THROWS_AS(mean_density(std::vector<Histogram>{}), DataError);
}

TEST_CASE("property: count-based mean agrees with the histogram mean") {
  oracle::Gen gen(33);
  for (int trial = 0; trial < 50; ++trial) {
    const BinSpec bins(-1.0, 1.0, gen.size(2, 40));
    const std::size_t per = gen.size(1, 30), n = gen.size(1, 40);
    std::vector<Histogram> hists;
    std::vector<std::uint64_t> totals(bins.n_bins, 0);
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<float> v(per);
      for (auto& x : v) x = static_cast<float>(gen.uniform(-1.2, 1.2));
      hists.push_back(histogram(v, bins));
      std::vector<std::uint32_t> c(bins.n_bins, 0);
      accumulate_counts(v, bins, c);
      for (std::size_t b = 0; b < c.size(); ++b) totals[b] += c[b];
    }
    const auto a = mean_density(hists, 0.01);
    const auto b = mean_density_from_counts(bins, totals, n, per, 0.01);
    CHECK(std::abs(sum(a.hist.probs) - 1.0) <= 1e-9);
    for (std::size_t k = 0; k < bins.n_bins; ++k) CHECK(a.hist.probs[k] == doctest::Approx(b.hist.probs[k]).epsilon(1e-12));
  }
}

TEST_CASE("sym_kl hand cases") {
  const std::vector<double> p = {0.75, 0.25}, q = {0.25, 0.75};
  CHECK(std::abs(sym_kl(p, q) - std::log(3.0)) <= 1e-9);
  CHECK(sym_kl(p, p) == 0.0);
  const std::vector<double> zero = {1.0, 0.0};
  CHECK_THROWS_AS(sym_kl(zero, q), DataError);
  CHECK_THROWS_AS(sym_kl(hist_of({0.5, 0.5}), Histogram{BinSpec(0, 2, 2), {0.5, 0.5}}), DataError);
}

TEST_CASE("property: sym_kl is symmetric, nonnegative and equals the density form") {
  oracle::Gen gen(34);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = gen.size(2, 64);
    const auto p = gen.probs(n), q = gen.probs(n);
    const double d = sym_kl(p, q);
    CHECK(d >= 0.0);
    CHECK(d == doctest::Approx(sym_kl(q, p)).epsilon(1e-12));

    // The same divergence computed on densities probs / l_b with explicit bin widths.
    const double width = gen.uniform(0.01, 10.0);
    double directed = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const double dp = p[b] / width, dq = q[b] / width;
      directed += dp * std::log(dp / dq) * width + dq * std::log(dq / dp) * width;
    }
    CHECK(d == doctest::Approx(directed).epsilon(1e-10));
  }
}

TEST_CASE("histogram CSV dump") {
  const auto csv = histogram_csv(hist_of({0.25, 0.75}));
  CHECK(csv == "bin_lo,bin_hi,prob\n0,0.5,0.25\n0.5,1,0.75\n");
}
