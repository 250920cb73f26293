#include "weiper/weiper_kld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <string>

#include "json.hpp"
#include "weiper/error.hpp"
#include "weiper/scores.hpp"

namespace weiper {

namespace fs = std::filesystem;
using nlohmann::json;

void KldHyperparams::validate() const {
  if (repeats < 1) throw ConfigError("r must be >= 1");
  if (!std::isfinite(delta) || delta < 0.0) throw ConfigError("delta must be finite and >= 0");
  if (n_bins < 2) throw ConfigError("n_bins must be >= 2, got " + std::to_string(n_bins));
  if (!std::isfinite(lambda1) || lambda1 < 0.0) throw ConfigError("lambda1 must be >= 0");
  if (!std::isfinite(lambda2) || lambda2 < 0.0) throw ConfigError("lambda2 must be >= 0");
  if (s1 < 1 || s2 < 1) throw ConfigError("kernel sizes s1 and s2 must be >= 1");
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("eps must be > 0");
}

void ValueRange::include(std::span<const float> values) {
  for (float v : values) {
    if (empty) {
      lo = hi = v;
      empty = false;
    } else {
      lo = std::min<double>(lo, v);
      hi = std::max<double>(hi, v);
    }
  }
}

ValueRange perturbed_value_range(MatrixView samples, const PerturbedWeights& pw,
                                 std::span<const float> bias, const RunOptions& opts) {
  ValueRange range;
  for_each_projected_batch(samples, pw, bias, opts,
                           [&](std::size_t, MatrixView, MatrixView projected) {
                             range.include(projected.data());
                           });
  return range;
}

double fingerprint_kl(std::span<const double> probs, std::size_t kernel_size, double eps,
                      const MeanDensity& mean, std::span<double> scratch) {
  uniform_kernel_into(probs, kernel_size, scratch);
  epsilon_floor_into(scratch, eps);
  return sym_kl(std::span<const double>(scratch), std::span<const double>(mean.hist.probs));
}

namespace {

void check_k(MatrixView batch, std::size_t k) {
  if (batch.cols() != k) {
    throw DataError("feature dimension mismatch: samples have K=" + std::to_string(batch.cols()) +
                    ", model expects K=" + std::to_string(k));
  }
}

// Sums per-row histogram counts of `rows` into `total`. Integer addition makes
// the merge order irrelevant.
void add_row_counts(MatrixView rows, const BinSpec& bins, std::size_t threads,
                    std::vector<std::uint64_t>& total) {
  std::mutex merge;
  parallel_for(rows.rows(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<std::uint32_t> row_counts(bins.n_bins);
    std::vector<std::uint64_t> local(bins.n_bins, 0);
    for (std::size_t n = begin; n < end; ++n) {
      std::fill(row_counts.begin(), row_counts.end(), 0);
      accumulate_counts(rows.row(n), bins, row_counts);
      for (std::size_t b = 0; b < bins.n_bins; ++b) local[b] += row_counts[b];
    }
    std::lock_guard lock(merge);
    for (std::size_t b = 0; b < bins.n_bins; ++b) total[b] += local[b];
  });
}

}  // namespace

WeiPerKldModel fit(MatrixView train, const WeightMatrix& w, const KldHyperparams& hyper,
                   const RunOptions& opts) {
  hyper.validate();
  check_k(train, w.n_features());
  if (train.rows() == 0) throw DataError("empty training matrix");

  WeiPerKldModel model;
  model.hyper = hyper;
  model.head = w;
  model.perturbed_weights = build_perturbed_weights(w, hyper.perturbation(), opts.threads);
  const auto bias = w.bias();
  const PerturbedWeights& pw = model.perturbed_weights;

  model.pen_bins = fit_bin_spec(train.data(), hyper.n_bins);
  const ValueRange range = perturbed_value_range(train, pw, bias, opts);
  model.pert_bins = fit_bin_spec(range.lo, range.hi, hyper.n_bins);

  std::vector<std::uint64_t> pen_counts(hyper.n_bins, 0);
  add_row_counts(train, model.pen_bins, opts.threads, pen_counts);
  std::vector<std::uint64_t> pert_counts(hyper.n_bins, 0);
  for_each_projected_batch(train, pw, bias, opts,
                           [&](std::size_t, MatrixView, MatrixView projected) {
                             add_row_counts(projected, model.pert_bins, opts.threads, pert_counts);
                           });

  model.pen_mean = mean_density_from_counts(model.pen_bins, pen_counts, train.rows(),
                                            train.cols(), hyper.eps);
  model.pert_mean = mean_density_from_counts(model.pert_bins, pert_counts, train.rows(),
                                             pw.n_rows(), hyper.eps);
  return model;
}

std::vector<KldTerms> score_terms(const WeiPerKldModel& model, MatrixView batch,
                                  const RunOptions& opts) {
  check_k(batch, model.n_features());
  const PerturbedWeights& pw = model.perturbed_weights;
  const KldHyperparams& hp = model.hyper;
  std::vector<KldTerms> terms(batch.rows());
  for_each_projected_batch(
      batch, pw, model.head.bias(), opts,
      [&](std::size_t first, MatrixView samples, MatrixView projected) {
        parallel_for(samples.rows(), opts.threads, [&](std::size_t begin, std::size_t end) {
          std::vector<std::uint32_t> counts(hp.n_bins);
          std::vector<double> probs(hp.n_bins);
          std::vector<double> scratch(hp.n_bins);
          auto fingerprint = [&](std::span<const float> values, const BinSpec& bins,
                                 std::size_t kernel, const MeanDensity& mean) {
            std::fill(counts.begin(), counts.end(), 0);
            accumulate_counts(values, bins, counts);
            const auto total = static_cast<double>(values.size());
            for (std::size_t b = 0; b < hp.n_bins; ++b) probs[b] = counts[b] / total;
            return fingerprint_kl(probs, kernel, hp.eps, mean, scratch);
          };
          for (std::size_t n = begin; n < end; ++n) {
            KldTerms& t = terms[first + n];
            t.pen_kl = fingerprint(samples.row(n), model.pen_bins, hp.s1, model.pen_mean);
            t.pert_kl = fingerprint(projected.row(n), model.pert_bins, hp.s2, model.pert_mean);
            t.msp_w = msp_w(projected.row(n), pw.repeats(), pw.n_classes());
          }
        });
      });
  return terms;
}

std::vector<double> score(const WeiPerKldModel& model, MatrixView batch, const RunOptions& opts) {
  const auto terms = score_terms(model, batch, opts);
  std::vector<double> out(terms.size());
  for (std::size_t n = 0; n < terms.size(); ++n) {
    out[n] = combine_terms(terms[n], model.hyper.lambda1, model.hyper.lambda2);
  }
  return out;
}

// ---- persistence ---------------------------------------------------------------

namespace {

json bins_to_json(const BinSpec& b) { return {{"lo", b.lo}, {"hi", b.hi}, {"n_bins", b.n_bins}}; }

BinSpec bins_from_json(const json& j) {
  return BinSpec(j.at("lo").get<double>(), j.at("hi").get<double>(),
                 j.at("n_bins").get<std::size_t>());
}

json mean_to_json(const MeanDensity& m) {
  return {{"probs", m.hist.probs}, {"n_contributors", m.n_contributors}};
}

MeanDensity mean_from_json(const json& j, const BinSpec& bins) {
  MeanDensity m{{bins, j.at("probs").get<std::vector<double>>()},
                j.at("n_contributors").get<std::size_t>()};
  if (m.hist.probs.size() != bins.n_bins) throw DataError("mean histogram length mismatch");
  return m;
}

Matrix probs_row(const MeanDensity& m) {
  std::vector<float> v(m.hist.probs.begin(), m.hist.probs.end());
  const std::size_t n = v.size();
  return Matrix(1, n, std::move(v));
}

}  // namespace

void save_model(const fs::path& dir, const WeiPerKldModel& model) {
  fs::create_directories(dir);
  save_tensor(dir / "weights.wpft", model.head.view());
  const auto bias = model.head.bias();
  save_tensor(dir / "bias.wpft", MatrixView(bias, 1, bias.size()));
  save_tensor(dir / "perturbed_weights.wpft", model.perturbed_weights.matrix().view());
  save_tensor(dir / "pen_mean.wpft", probs_row(model.pen_mean).view());
  save_tensor(dir / "pert_mean.wpft", probs_row(model.pert_mean).view());

  const KldHyperparams& h = model.hyper;
  const json doc = {
      {"format_version", kModelFormatVersion},
      {"hyperparams", {{"r", h.repeats}, {"delta", h.delta}, {"n_bins", h.n_bins},
                       {"lambda1", h.lambda1}, {"lambda2", h.lambda2}, {"s1", h.s1},
                       {"s2", h.s2}, {"eps", h.eps}, {"seed", h.seed}}},
      {"n_classes", model.perturbed_weights.n_classes()},
      {"n_features", model.perturbed_weights.n_features()},
      {"seed", model.perturbed_weights.seed()},
      {"pen_bins", bins_to_json(model.pen_bins)},
      {"pert_bins", bins_to_json(model.pert_bins)},
      {"pen_mean", mean_to_json(model.pen_mean)},
      {"pert_mean", mean_to_json(model.pert_mean)},
  };
  std::ofstream out(dir / "model.json", std::ios::trunc);
  if (!out) throw DataError("cannot write " + (dir / "model.json").string());
  out << doc.dump(2) << "\n";
}

WeiPerKldModel load_model(const fs::path& dir) {
  const fs::path meta_path = dir / "model.json";
  std::ifstream in(meta_path);
  if (!in) throw DataError("model directory lacks model.json: " + dir.string());
  WeiPerKldModel model;
  try {
    const json doc = json::parse(in);
    if (doc.at("format_version").get<int>() != kModelFormatVersion) {
      throw DataError("unsupported model format version");
    }
    const json& hp = doc.at("hyperparams");
    KldHyperparams& h = model.hyper;
    h.repeats = hp.at("r").get<std::size_t>();
    h.delta = hp.at("delta").get<double>();
    h.n_bins = hp.at("n_bins").get<std::size_t>();
    h.lambda1 = hp.at("lambda1").get<double>();
    h.lambda2 = hp.at("lambda2").get<double>();
    h.s1 = hp.at("s1").get<std::size_t>();
    h.s2 = hp.at("s2").get<std::size_t>();
    h.eps = hp.at("eps").get<double>();
    h.seed = hp.at("seed").get<std::uint64_t>();
    h.validate();

    const Matrix bias = load_tensor(dir / "bias.wpft");
    model.head = WeightMatrix(load_tensor(dir / "weights.wpft"),
                              std::vector<float>(bias.data().begin(), bias.data().end()));
    model.perturbed_weights =
        PerturbedWeights(h.repeats, doc.at("n_classes").get<std::size_t>(),
                         load_tensor(dir / "perturbed_weights.wpft"),
                         doc.at("seed").get<std::uint64_t>());
    if (model.perturbed_weights.n_classes() != model.head.n_classes() ||
        model.perturbed_weights.n_features() != model.head.n_features()) {
      throw DataError("perturbed weights do not match the stored head");
    }
    model.pen_bins = bins_from_json(doc.at("pen_bins"));
    model.pert_bins = bins_from_json(doc.at("pert_bins"));
    model.pen_mean = mean_from_json(doc.at("pen_mean"), model.pen_bins);
    model.pert_mean = mean_from_json(doc.at("pert_mean"), model.pert_bins);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  return model;
}

}  // namespace weiper
