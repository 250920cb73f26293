#include "weiper/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "weiper/density.hpp"
#include "weiper/error.hpp"
#include "weiper/eval.hpp"
#include "weiper/scores.hpp"
#include "weiper/synth.hpp"
#include "weiper/tune.hpp"
#include "weiper/weiper_kld.hpp"

namespace weiper::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kSubcommands = {"synth", "fit", "score", "eval", "tune", "inspect"};

class Log {
 public:
  explicit Log(std::ostream& err) : err_(err) {
    const char* level = std::getenv("WEIPER_LOG_LEVEL");
    verbose_ = level != nullptr && (std::string(level) == "info" || std::string(level) == "debug");
  }
  void info(const std::string& msg) const {
    if (verbose_) err_ << "[weiper] " << msg << "\n";
  }

 private:
  std::ostream& err_;
  bool verbose_ = false;
};

// Options common to every subcommand.
struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  std::size_t batch_size = 1024;

  RunOptions run() const { return {threads, batch_size}; }
};

void add_common(CLI::App* app, Common& c, bool out_required) {
  app->add_option("--config", c.config, "JSON configuration file");
  auto* out = app->add_option("--out", c.out, "output path");
  if (out_required) out->required();
  app->add_option("--seed", c.seed, "override the configured seed");
  app->add_option("--threads", c.threads, "worker threads (default: WEIPER_THREADS or all cores)");
  app->add_option("--batch-size", c.batch_size, "samples per streamed batch")
      ->check(CLI::PositiveNumber);
}

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw DataError("config file not found: " + path);
  try {
    json doc = json::parse(in);
    if (!doc.is_object()) throw ConfigError(path + ": config must be a JSON object");
    return doc;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": malformed JSON: " + e.what());
  }
}

void reject_unknown_keys(const json& doc, const std::set<std::string>& known,
                         const std::string& what) {
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw ConfigError(what + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_key(const json& doc, const char* key, T& target) {
  if (!doc.contains(key)) return;
  try {
    target = doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

KldHyperparams parse_hyperparams(const json& doc) {
  reject_unknown_keys(doc, {"r", "delta", "n_bins", "lambda1", "lambda2", "s1", "s2", "eps", "seed"},
                      "hyperparameters");
  KldHyperparams h;
  // Negative integers must not wrap into huge sizes.
  for (const char* key : {"r", "n_bins", "s1", "s2"}) {
    if (doc.contains(key) && doc.at(key).is_number_integer() && doc.at(key).get<long long>() < 0) {
      throw ConfigError(std::string(key) + " must be nonnegative");
    }
  }
  read_key(doc, "r", h.repeats);
  read_key(doc, "delta", h.delta);
  read_key(doc, "n_bins", h.n_bins);
  read_key(doc, "lambda1", h.lambda1);
  read_key(doc, "lambda2", h.lambda2);
  read_key(doc, "s1", h.s1);
  read_key(doc, "s2", h.s2);
  read_key(doc, "eps", h.eps);
  read_key(doc, "seed", h.seed);
  return h;
}

json hyperparams_json(const KldHyperparams& h) {
  return {{"r", h.repeats}, {"delta", h.delta}, {"n_bins", h.n_bins}, {"lambda1", h.lambda1},
          {"lambda2", h.lambda2}, {"s1", h.s1}, {"s2", h.s2}, {"eps", h.eps}, {"seed", h.seed}};
}

SynthConfig parse_synth(const json& doc) {
  reject_unknown_keys(doc, {"K", "C", "n_per_class", "n_ood", "class_sep", "cone_spread",
                            "noise_sigma", "near_reach", "far_reach", "seed"},
                      "synth config");
  SynthConfig c;
  read_key(doc, "K", c.features);
  read_key(doc, "C", c.classes);
  read_key(doc, "n_per_class", c.n_per_class);
  read_key(doc, "n_ood", c.n_ood);
  read_key(doc, "class_sep", c.class_sep);
  read_key(doc, "cone_spread", c.cone_spread);
  read_key(doc, "noise_sigma", c.noise_sigma);
  read_key(doc, "near_reach", c.near_reach);
  read_key(doc, "far_reach", c.far_reach);
  read_key(doc, "seed", c.seed);
  return c;
}

SearchRanges parse_ranges(const json& doc) {
  reject_unknown_keys(doc, {"r", "delta", "n_bins", "lambda1", "lambda2", "s1", "s2", "eps", "seed",
                            "objective"},
                      "search ranges");
  SearchRanges r;
  read_key(doc, "r", r.repeats);
  read_key(doc, "delta", r.delta);
  read_key(doc, "n_bins", r.n_bins);
  read_key(doc, "lambda1", r.lambda1);
  read_key(doc, "lambda2", r.lambda2);
  read_key(doc, "s1", r.s1);
  read_key(doc, "s2", r.s2);
  read_key(doc, "eps", r.eps);
  read_key(doc, "seed", r.seed);
  std::string objective = "near";
  read_key(doc, "objective", objective);
  if (objective == "near") {
    r.objective = TuneObjective::kNearAuroc;
  } else if (objective == "all") {
    r.objective = TuneObjective::kAllAuroc;
  } else {
    throw ConfigError("objective must be \"near\" or \"all\"");
  }
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string scores_csv(std::span<const double> scores) {
  std::string out = "sample_index,score\n";
  char line[64];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.17g\n", i, scores[i]);
    out += line;
  }
  return out;
}

std::vector<double> read_scores_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("scores file not found: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("sample_index,score", 0) != 0) {
    throw DataError(path.string() + ": expected header 'sample_index,score'");
  }
  std::vector<double> scores;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError(path.string() + ": malformed row '" + line + "'");
    try {
      scores.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw DataError(path.string() + ": malformed score '" + line + "'");
    }
  }
  if (scores.empty()) throw DataError(path.string() + ": no scores");
  return scores;
}

// Scores `features` with the requested method.
struct Scorer {
  std::string method = "kld";
  double react_percentile = kDefaultReactPercentile;
  std::string react_train;

  std::vector<double> operator()(const WeiPerKldModel& model, MatrixView features,
                                 const RunOptions& run) const {
    if (features.cols() != model.n_features()) {
      throw DataError("feature dimension mismatch: features have K=" +
                      std::to_string(features.cols()) + " but the model has K=" +
                      std::to_string(model.n_features()));
    }
    if (method == "kld") return score(model, features, run);
    if (method == "msp") return msp_scores(features, model.head, run);
    if (method == "msp_w") {
      return msp_w_scores(features, model.perturbed_weights, model.head.bias(), run);
    }
    if (method == "react") {
      if (react_train.empty()) throw ConfigError("--method react needs --react-train <features>");
      const Matrix train = load_tensor(react_train);
      const ReactThreshold thr = fit_react_threshold(train.view(), react_percentile);
      return react_msp_w_scores(features, model.perturbed_weights, model.head.bias(), thr, run);
    }
    throw ConfigError("unknown scoring method '" + method + "' (kld, msp, msp_w, react)");
  }
};

void add_scorer_options(CLI::App* app, Scorer& s) {
  app->add_option("--method", s.method, "kld | msp | msp_w | react")
      ->check(CLI::IsMember({"kld", "msp", "msp_w", "react"}));
  app->add_option("--react-train", s.react_train, "training features for the ReAct clip value");
  app->add_option("--react-percentile", s.react_percentile, "ReAct clip percentile")
      ->check(CLI::Range(0.0, 100.0));
}

// ---- subcommands --------------------------------------------------------------

int run_synth(const Common& c, const Log& log) {
  SynthConfig cfg = parse_synth(read_config(c.config));
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  log.info("generating synthetic benchmark");
  save_benchmark(c.out, generate(cfg, c.threads));
  return kExitOk;
}

struct FitInputs {
  std::string bundle;
  std::string train;
  std::string weights;
  std::string bias;
};

int run_fit(const Common& c, const FitInputs& in, const Log& log) {
  KldHyperparams hyper = parse_hyperparams(read_config(c.config));
  if (c.seed) hyper.seed = *c.seed;
  hyper.validate();

  Matrix train;
  WeightMatrix head;
  if (!in.bundle.empty()) {
    Benchmark bench = load_benchmark(in.bundle);
    train = bench.data.id_train.matrix();
    head = std::move(bench.head);
  } else {
    if (in.train.empty() || in.weights.empty()) {
      throw ConfigError("fit needs --bundle <dir> or both --train and --weights");
    }
    train = FeatureMatrix(load_tensor(in.train)).matrix();
    std::vector<float> bias;
    if (!in.bias.empty()) {
      const Matrix b = load_tensor(in.bias);
      bias.assign(b.data().begin(), b.data().end());
    }
    head = WeightMatrix(load_tensor(in.weights), std::move(bias));
  }
  if (train.cols() != head.n_features()) {
    throw DataError("training features have K=" + std::to_string(train.cols()) +
                    " but weights have K=" + std::to_string(head.n_features()));
  }
  log.info("fitting on " + std::to_string(train.rows()) + " samples");
  save_model(c.out, fit(train.view(), head, hyper, c.run()));
  return kExitOk;
}

int run_score(const Common& c, const std::string& model_dir, const std::string& features,
              const Scorer& scorer) {
  const WeiPerKldModel model = load_model(model_dir);
  const FeatureMatrix batch(load_tensor(features));
  write_text(c.out, scores_csv(scorer(model, batch.view(), c.run())));
  return kExitOk;
}

struct EvalInputs {
  std::string model;
  std::string bundle;
  std::string id_scores;
  std::vector<std::string> ood;  // name:near|far:path
  double tpr = 0.95;
};

void write_report(const fs::path& out, const EvalReport& report) {
  write_text(out, report.to_csv());
  fs::path json_path = out;
  json_path.replace_extension(".json");
  write_text(json_path, report.to_json());
}

int run_eval(const Common& c, const EvalInputs& in, const Scorer& scorer, const Log& log) {
  std::vector<double> id_scores;
  std::vector<ScoredOodSet> sets;
  if (!in.model.empty() || !in.bundle.empty()) {
    if (in.model.empty() || in.bundle.empty()) {
      throw ConfigError("eval needs both --model and --bundle, or --id-scores with --ood");
    }
    const WeiPerKldModel model = load_model(in.model);
    const Benchmark bench = load_benchmark(in.bundle);
    log.info("scoring id_test");
    id_scores = scorer(model, bench.data.id_test.view(), c.run());
    for (const auto& set : bench.data.ood_sets) {
      log.info("scoring " + set.name);
      sets.push_back({set.name, set.near, scorer(model, set.features.view(), c.run())});
    }
  } else {
    if (in.id_scores.empty() || in.ood.empty()) {
      throw ConfigError("eval needs --model and --bundle, or --id-scores with at least one --ood");
    }
    id_scores = read_scores_csv(in.id_scores);
    for (const auto& spec : in.ood) {
      const auto first = spec.find(':');
      const auto second = first == std::string::npos ? first : spec.find(':', first + 1);
      if (second == std::string::npos) {
        throw ConfigError("--ood expects name:near|far:scores.csv, got '" + spec + "'");
      }
      const std::string tag = spec.substr(first + 1, second - first - 1);
      if (tag != "near" && tag != "far") throw ConfigError("--ood tag must be near or far");
      sets.push_back({spec.substr(0, first), tag == "near", read_scores_csv(spec.substr(second + 1))});
    }
  }
  write_report(c.out, evaluate(id_scores, sets, in.tpr));
  return kExitOk;
}

int run_tune(const Common& c, const std::string& bundle_dir, const std::string& val_dir,
             const Log& log) {
  SearchRanges ranges = parse_ranges(read_config(c.config));
  if (c.seed) ranges.seed = *c.seed;
  ranges.validate();
  const Benchmark bench = load_benchmark(bundle_dir);
  std::optional<Benchmark> val;
  if (!val_dir.empty()) val = load_benchmark(val_dir);
  const DatasetBundle& val_data = val ? val->data : bench.data;
  log.info("searching " + std::to_string(ranges.combinations()) + " configurations");
  const TuneResult result =
      grid_search(bench.data.id_train.view(), val_data, bench.head, ranges, c.run());
  const fs::path out = c.out;
  write_text(out / "leaderboard.csv", result.leaderboard_csv());
  const auto& best = result.leaderboard[result.best_index];
  json doc = hyperparams_json(result.best);
  json summary = {{"hyperparams", doc},
                  {"val_auroc", best.auroc},
                  {"val_fpr95", best.fpr95},
                  {"index", result.best_index},
                  {"evaluated", result.leaderboard.size()}};
  write_text(out / "best.json", summary.dump(2) + "\n");
  write_text(out / "best_hyperparams.json", doc.dump(2) + "\n");
  return kExitOk;
}

int run_inspect(const Common& c, const std::string& model_dir, const std::string& features,
                std::size_t sample) {
  const WeiPerKldModel model = load_model(model_dir);
  const fs::path out = c.out;
  write_text(out / "pen_mean.csv", histogram_csv(model.pen_mean.hist));
  write_text(out / "pert_mean.csv", histogram_csv(model.pert_mean.hist));
  if (!features.empty()) {
    const FeatureMatrix batch(load_tensor(features));
    if (batch.n_features() != model.n_features()) {
      throw DataError("features have K=" + std::to_string(batch.n_features()) +
                      " but the model has K=" + std::to_string(model.n_features()));
    }
    if (sample >= batch.n_samples()) {
      throw ConfigError("--sample " + std::to_string(sample) + " out of range (" +
                        std::to_string(batch.n_samples()) + " samples)");
    }
    const auto z = batch.sample(sample);
    const Matrix projected =
        project(MatrixView(z, 1, z.size()), model.perturbed_weights, model.head.bias(), 1);
    const auto& h = model.hyper;
    write_text(out / "sample_pen.csv", histogram_csv(smooth(histogram(z, model.pen_bins), h.s1, h.eps)));
    write_text(out / "sample_pert.csv",
               histogram_csv(smooth(histogram(projected.row(0), model.pert_bins), h.s2, h.eps)));
  }
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.size() < 2) {
    err << "usage: weiper <synth|fit|score|eval|tune|inspect> [options]; see --help\n";
    return kExitUsage;
  }
  const std::string& sub = args[1];
  if (sub.rfind("-", 0) != 0 &&
      std::find(kSubcommands.begin(), kSubcommands.end(), sub) == kSubcommands.end()) {
    err << "error: unknown subcommand '" << sub
        << "'; expected one of synth, fit, score, eval, tune, inspect\n";
    return kExitUsage;
  }

  CLI::App app{"Weight-perturbation OOD detection toolkit"};
  app.name("weiper");
  app.require_subcommand(1);

  Common common;
  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark bundle");
  add_common(synth, common, true);

  FitInputs fit_in;
  auto* fit_cmd = app.add_subcommand("fit", "fit a WeiPer+KLD model");
  add_common(fit_cmd, common, true);
  fit_cmd->add_option("--bundle", fit_in.bundle, "bundle directory (uses id_train + weights)");
  fit_cmd->add_option("--train", fit_in.train, "training features (WPFT)");
  fit_cmd->add_option("--weights", fit_in.weights, "classifier weights (WPFT)");
  fit_cmd->add_option("--bias", fit_in.bias, "classifier bias (WPFT, 1 x C)");

  std::string model_dir, features;
  Scorer scorer;
  auto* score_cmd = app.add_subcommand("score", "score features with a fitted model");
  add_common(score_cmd, common, true);
  score_cmd->add_option("--model", model_dir, "model directory")->required();
  score_cmd->add_option("--features", features, "features to score (WPFT)")->required();
  add_scorer_options(score_cmd, scorer);

  EvalInputs eval_in;
  auto* eval_cmd = app.add_subcommand("eval", "AUROC / FPR95 report");
  add_common(eval_cmd, common, true);
  eval_cmd->add_option("--model", eval_in.model, "model directory");
  eval_cmd->add_option("--bundle", eval_in.bundle, "bundle directory");
  eval_cmd->add_option("--id-scores", eval_in.id_scores, "ID scores CSV");
  eval_cmd->add_option("--ood", eval_in.ood, "name:near|far:scores.csv (repeatable)");
  eval_cmd->add_option("--tpr", eval_in.tpr, "TPR target for the FPR metric")
      ->check(CLI::Range(0.0, 1.0));
  add_scorer_options(eval_cmd, scorer);

  std::string bundle_dir, val_dir;
  auto* tune_cmd = app.add_subcommand("tune", "grid search over hyperparameter ranges");
  add_common(tune_cmd, common, true);
  tune_cmd->add_option("--bundle", bundle_dir, "bundle with id_train and weights")->required();
  tune_cmd->add_option("--val-bundle", val_dir, "validation bundle (default: --bundle)");

  std::size_t sample = 0;
  auto* inspect_cmd = app.add_subcommand("inspect", "dump model histograms as CSV");
  add_common(inspect_cmd, common, true);
  inspect_cmd->add_option("--model", model_dir, "model directory")->required();
  inspect_cmd->add_option("--features", features, "also dump one sample's smoothed histograms");
  inspect_cmd->add_option("--sample", sample, "row of --features to dump");

  std::vector<std::string> rest(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  const Log log(err);
  try {
    if (synth->parsed()) return run_synth(common, log);
    if (fit_cmd->parsed()) return run_fit(common, fit_in, log);
    if (score_cmd->parsed()) return run_score(common, model_dir, features, scorer);
    if (eval_cmd->parsed()) return run_eval(common, eval_in, scorer, log);
    if (tune_cmd->parsed()) return run_tune(common, bundle_dir, val_dir, log);
    if (inspect_cmd->parsed()) return run_inspect(common, model_dir, features, sample);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace weiper::cli
