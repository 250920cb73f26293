#include "weiper/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "weiper/error.hpp"
#include "weiper/rng.hpp"

namespace weiper {

void PerturbationConfig::validate() const {
  if (repeats < 1) throw ConfigError("r must be >= 1");
  if (!std::isfinite(delta) || delta < 0.0) throw ConfigError("delta must be finite and >= 0");
}

PerturbedWeights::PerturbedWeights(std::size_t repeats, std::size_t classes, Matrix rows,
                                   std::uint64_t seed)
    : repeats_(repeats), classes_(classes), rows_(std::move(rows)), seed_(seed) {
  if (rows_.rows() != repeats_ * classes_) {
    throw DataError("perturbed weight matrix has " + std::to_string(rows_.rows()) +
                    " rows, expected r*C = " + std::to_string(repeats_ * classes_));
  }
}

PerturbedWeights build_perturbed_weights(const WeightMatrix& w, const PerturbationConfig& cfg,
                                         std::size_t threads) {
  cfg.validate();
  const std::size_t classes = w.n_classes();
  const std::size_t k = w.n_features();
  const std::size_t n_rows = cfg.repeats * classes;
  if (n_rows > cfg.memory_budget_bytes / sizeof(float) / k) {
    throw ConfigError("perturbed weights (r*C*K = " + std::to_string(n_rows) + "*" +
                      std::to_string(k) + " floats) exceed the memory budget; lower r or "
                      "raise the budget and stream projections in batches");
  }

  std::vector<double> row_norms(classes);
  for (std::size_t j = 0; j < classes; ++j) {
    double sq = 0.0;
    for (float v : w.row(j)) sq += static_cast<double>(v) * v;
    if (!(sq > 0.0)) throw DataError("weight row " + std::to_string(j) + " has zero norm");
    row_norms[j] = std::sqrt(sq);
  }

  Matrix rows(n_rows, k);
  parallel_for(n_rows, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> eta(k);
    for (std::size_t idx = begin; idx < end; ++idx) {
      const std::size_t i = idx / classes;
      const std::size_t j = idx % classes;
      RandomStream stream(stream_key(cfg.seed, {i, j}));
      double sq = 0.0;
      for (auto& e : eta) {
        e = stream.gaussian();
        sq += e * e;
      }
      const double scale = cfg.delta * row_norms[j] / std::sqrt(sq);
      const auto src = w.row(j);
      auto dst = rows.row(idx);
      for (std::size_t c = 0; c < k; ++c) {
        dst[c] = static_cast<float>(static_cast<double>(src[c]) + scale * eta[c]);
      }
    }
  });
  return PerturbedWeights(cfg.repeats, classes, std::move(rows), cfg.seed);
}

float dot(std::span<const float> a, std::span<const float> b) {
  constexpr std::size_t kLanes = 8;
  float acc[kLanes] = {};
  const std::size_t n = a.size();
  const std::size_t tail = n - n % kLanes;
  const float* pa = a.data();
  const float* pb = b.data();
  for (std::size_t i = 0; i < tail; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += pa[i + l] * pb[i + l];
  }
  for (std::size_t i = tail; i < n; ++i) acc[i - tail] += pa[i] * pb[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

namespace {

// Tiles samples x rows so that a weight row is reused from cache across a
// handful of samples. Each output is still one dot() call.
void project_rows(MatrixView batch, const Matrix& rows, std::span<const float> bias,
                  std::size_t classes, std::span<float> out, std::size_t begin,
                  std::size_t end) {
  constexpr std::size_t kSampleTile = 16;
  const std::size_t n_rows = rows.rows();
  for (std::size_t s0 = begin; s0 < end; s0 += kSampleTile) {
    const std::size_t s1 = std::min(end, s0 + kSampleTile);
    for (std::size_t r = 0; r < n_rows; ++r) {
      const auto wrow = rows.row(r);
      const float b = bias.empty() ? 0.0f : bias[r % classes];
      for (std::size_t s = s0; s < s1; ++s) {
        out[s * n_rows + r] = dot(wrow, batch.row(s)) + b;
      }
    }
  }
}

void check_dims(MatrixView batch, std::size_t k, std::span<const float> bias,
                std::size_t classes) {
  if (batch.cols() != k) {
    throw DataError("feature dimension mismatch: samples have K=" + std::to_string(batch.cols()) +
                    ", weights have K=" + std::to_string(k));
  }
  if (!bias.empty() && bias.size() != classes) {
    throw DataError("bias has " + std::to_string(bias.size()) + " entries for " +
                    std::to_string(classes) + " classes");
  }
}

}  // namespace

void project_into(MatrixView batch, const PerturbedWeights& pw, std::span<const float> bias,
                  std::span<float> out, std::size_t threads) {
  check_dims(batch, pw.n_features(), bias, pw.n_classes());
  if (out.size() != batch.rows() * pw.n_rows()) throw DataError("projection buffer size mismatch");
  parallel_for(batch.rows(), threads, [&](std::size_t begin, std::size_t end) {
    project_rows(batch, pw.matrix(), bias, pw.n_classes(), out, begin, end);
  });
}

Matrix project(MatrixView batch, const PerturbedWeights& pw, std::span<const float> bias,
               std::size_t threads, std::size_t memory_budget_bytes) {
  if (pw.n_rows() > 0 && batch.rows() > memory_budget_bytes / sizeof(float) / pw.n_rows()) {
    throw ConfigError("perturbed logits for " + std::to_string(batch.rows()) +
                      " samples exceed the memory budget; use batched projection");
  }
  Matrix out(batch.rows(), pw.n_rows());
  project_into(batch, pw, bias, out.data(), threads);
  return out;
}

Matrix logits(MatrixView batch, const WeightMatrix& w, std::size_t threads) {
  check_dims(batch, w.n_features(), w.bias(), w.n_classes());
  Matrix out(batch.rows(), w.n_classes());
  parallel_for(batch.rows(), threads, [&](std::size_t begin, std::size_t end) {
    project_rows(batch, w.matrix(), w.bias(), w.n_classes(), out.data(), begin, end);
  });
  return out;
}

void for_each_projected_batch(
    MatrixView samples, const PerturbedWeights& pw, std::span<const float> bias,
    const RunOptions& opts,
    const std::function<void(std::size_t, MatrixView, MatrixView)>& fn) {
  check_dims(samples, pw.n_features(), bias, pw.n_classes());
  const std::size_t batch_size = std::max<std::size_t>(1, opts.batch_size);
  std::vector<float> buffer;
  for (std::size_t first = 0; first < samples.rows(); first += batch_size) {
    const std::size_t last = std::min(samples.rows(), first + batch_size);
    const MatrixView batch = samples.slice_rows(first, last);
    buffer.resize(batch.rows() * pw.n_rows());
    project_into(batch, pw, bias, buffer, opts.threads);
    fn(first, batch, MatrixView(buffer, batch.rows(), pw.n_rows()));
  }
}

}  // namespace weiper
