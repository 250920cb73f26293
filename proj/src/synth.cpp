#include "weiper/synth.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "weiper/error.hpp"
#include "weiper/parallel.hpp"
#include "weiper/rng.hpp"

namespace weiper {

void SynthConfig::validate() const {
  if (features < 2) throw ConfigError("synth: K must be >= 2");
  if (classes < 2) throw ConfigError("synth: C must be >= 2");
  if (classes > features) {
    throw ConfigError("synth: cannot orthogonalize C=" + std::to_string(classes) +
                      " directions in K=" + std::to_string(features) + " dimensions");
  }
  if (n_per_class == 0 || n_ood == 0) throw ConfigError("synth: sample counts must be positive");
  if (!(class_sep > 0.0)) throw ConfigError("synth: class_sep must be > 0");
  if (!(cone_spread >= 0.0) || !(noise_sigma >= 0.0)) {
    throw ConfigError("synth: cone_spread and noise_sigma must be >= 0");
  }
  if (!(near_reach > 0.0) || !(far_reach > 0.0)) throw ConfigError("synth: reach must be > 0");
}

namespace {

enum SetId : std::uint64_t { kDirections, kTrain, kVal, kTest, kNear, kFar };

// Modified Gram-Schmidt on Gaussian draws.
std::vector<std::vector<double>> class_directions(const SynthConfig& cfg) {
  std::vector<std::vector<double>> dirs(cfg.classes, std::vector<double>(cfg.features));
  for (std::size_t j = 0; j < cfg.classes; ++j) {
    RandomStream stream(stream_key(cfg.seed, {kDirections, j}));
    auto& u = dirs[j];
    for (auto& v : u) v = stream.gaussian();
    for (std::size_t p = 0; p < j; ++p) {
      double proj = 0.0;
      for (std::size_t k = 0; k < cfg.features; ++k) proj += u[k] * dirs[p][k];
      for (std::size_t k = 0; k < cfg.features; ++k) u[k] -= proj * dirs[p][k];
    }
    double norm = 0.0;
    for (double v : u) norm += v * v;
    norm = std::sqrt(norm);
    for (auto& v : u) v /= norm;
  }
  return dirs;
}

FeatureMatrix id_samples(const SynthConfig& cfg, const std::vector<std::vector<double>>& dirs,
                         SetId set, std::size_t threads) {
  const std::size_t n = cfg.classes * cfg.n_per_class;
  Matrix m(n, cfg.features);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t row = begin; row < end; ++row) {
      const auto& u = dirs[row / cfg.n_per_class];
      RandomStream stream(stream_key(cfg.seed, {set, row}));
      auto out = m.row(row);
      for (std::size_t k = 0; k < cfg.features; ++k) {
        out[k] = static_cast<float>(cfg.class_sep * u[k] + cfg.noise_sigma * stream.gaussian());
      }
    }
  });
  return FeatureMatrix(std::move(m));
}

FeatureMatrix ood_samples(const SynthConfig& cfg, const std::vector<std::vector<double>>& dirs,
                          SetId set, double reach, std::size_t threads) {
  Matrix m(cfg.n_ood, cfg.features);
  parallel_for(cfg.n_ood, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> tangent(cfg.features);
    for (std::size_t row = begin; row < end; ++row) {
      RandomStream stream(stream_key(cfg.seed, {set, row}));
      const auto& u = dirs[stream.below(cfg.classes)];
      const double t = stream.uniform() * reach * cfg.class_sep;
      double along = 0.0;
      for (std::size_t k = 0; k < cfg.features; ++k) {
        tangent[k] = stream.gaussian();
        along += tangent[k] * u[k];
      }
      auto out = m.row(row);
      for (std::size_t k = 0; k < cfg.features; ++k) {
        const double g = tangent[k] - along * u[k];
        out[k] = static_cast<float>(t * (u[k] + cfg.cone_spread * g));
      }
    }
  });
  return FeatureMatrix(std::move(m));
}

}  // namespace

Benchmark generate(const SynthConfig& cfg, std::size_t threads) {
  cfg.validate();
  const auto dirs = class_directions(cfg);

  Matrix w(cfg.classes, cfg.features);
  for (std::size_t j = 0; j < cfg.classes; ++j) {
    for (std::size_t k = 0; k < cfg.features; ++k) w(j, k) = static_cast<float>(dirs[j][k]);
  }

  Benchmark bench;
  bench.head = WeightMatrix(std::move(w));
  bench.data.dataset = "synthetic";
  bench.data.id_train = id_samples(cfg, dirs, kTrain, threads);
  bench.data.id_val = id_samples(cfg, dirs, kVal, threads);
  bench.data.id_test = id_samples(cfg, dirs, kTest, threads);
  bench.data.ood_sets.push_back({"cone", true, ood_samples(cfg, dirs, kNear, cfg.near_reach, threads)});
  bench.data.ood_sets.push_back({"origin", false, ood_samples(cfg, dirs, kFar, cfg.far_reach, threads)});
  return bench;
}

}  // namespace weiper
