// SPDX-License-Identifier: Apache-2.0
//
// bench: synthetic benchmark CLI for the gradient estimators.
//
//   bench run     --dist poisson:20 --estimator gengs --steps 2000 --out t.csv
//   bench compare --dist poisson:20 --estimators gengs,reinforce,exact
//
// Every flag can also live in a flat JSON config file (--config); flags
// given on the command line override file values.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gengs/bench.hpp"
#include "gengs/errors.hpp"

namespace {

struct Flags {
  std::string config_path;
  std::string estimator;
  std::string estimators;
  std::string dist;
  std::string optimizer;
  std::string out;
  int trunc = 0;
  int steps = 0;
  int replicates = 0;
  int k = 0;
  int measure_every = 0;
  int measure_r = 0;
  double tail_eps = 0.0;
  double tau0 = 0.0;
  double tau_min = 0.0;
  double tau_decay = 0.0;
  double lr = 0.0;
  double kl_weight = 0.0;
  std::uint64_t seed = 0;
  bool rf_baseline = false;
};

struct Options {
  CLI::Option* config = nullptr;
  CLI::Option* estimator = nullptr;
  CLI::Option* estimators = nullptr;
  CLI::Option* dist = nullptr;
  CLI::Option* optimizer = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* trunc = nullptr;
  CLI::Option* steps = nullptr;
  CLI::Option* replicates = nullptr;
  CLI::Option* k = nullptr;
  CLI::Option* measure_every = nullptr;
  CLI::Option* measure_r = nullptr;
  CLI::Option* tail_eps = nullptr;
  CLI::Option* tau0 = nullptr;
  CLI::Option* tau_min = nullptr;
  CLI::Option* tau_decay = nullptr;
  CLI::Option* lr = nullptr;
  CLI::Option* kl_weight = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* rf_baseline = nullptr;
};

Options add_common_options(CLI::App* cmd, Flags& f) {
  Options o;
  o.config = cmd->add_option("--config", f.config_path,
                             "flat JSON config file mirroring these flags");
  o.dist = cmd->add_option("--dist", f.dist,
                           "target distribution, family:params "
                           "(e.g. poisson:20, binomial:20,0.3)");
  o.trunc = cmd->add_option("--trunc", f.trunc, "truncation level n");
  o.tail_eps = cmd->add_option(
      "--tail-eps", f.tail_eps,
      "derive the truncation level from this tail mass bound");
  o.trunc->excludes(o.tail_eps);
  o.tau0 = cmd->add_option("--tau0", f.tau0, "initial temperature");
  o.tau_min = cmd->add_option("--tau-min", f.tau_min, "temperature floor");
  o.tau_decay =
      cmd->add_option("--tau-decay", f.tau_decay, "exponential decay rate");
  o.steps = cmd->add_option("--steps", f.steps, "optimization steps");
  o.lr = cmd->add_option("--lr", f.lr, "learning rate");
  o.seed = cmd->add_option("--seed", f.seed, "experiment seed");
  o.replicates =
      cmd->add_option("--replicates", f.replicates, "independent replicates");
  o.out = cmd->add_option("--out", f.out,
                          "trajectory CSV path (summary lands next to it)");
  o.k = cmd->add_option("--k", f.k, "number of fixed targets");
  o.optimizer = cmd->add_option("--optimizer", f.optimizer, "sgd or adam");
  o.kl_weight = cmd->add_option("--kl-weight", f.kl_weight,
                                "KL regularizer weight (implicit estimator)");
  o.measure_every = cmd->add_option("--measure-every", f.measure_every,
                                    "bias/variance measurement cadence");
  o.measure_r = cmd->add_option("--measure-r", f.measure_r,
                                "estimates per measurement");
  o.rf_baseline = cmd->add_flag("--rf-baseline", f.rf_baseline,
                                "running-mean baseline for reinforce");
  return o;
}

void load_config_file(const std::string& path, gengs::ExperimentConfig& cfg,
                      std::string* estimators) {
  std::ifstream in(path);
  if (!in) throw gengs::ConfigError("cannot open config file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw gengs::ConfigError("config file is not valid JSON: " +
                             std::string(e.what()));
  }
  if (!doc.is_object()) {
    throw gengs::ConfigError("config file must be a flat JSON object");
  }
  for (const auto& [key, value] : doc.items()) {
    if (value.is_object() || value.is_array()) {
      throw gengs::ConfigError("config key '" + key +
                               "' must be a flat scalar value");
    }
    try {
      if (key == "estimator") {
        cfg.estimator = gengs::parse_estimator(value.get<std::string>());
      } else if (key == "estimators") {
        *estimators = value.get<std::string>();
      } else if (key == "dist") {
        cfg.target_spec = gengs::parse_distribution(value.get<std::string>());
      } else if (key == "trunc") {
        cfg.trunc_n = value.get<int>();
      } else if (key == "tail-eps") {
        cfg.tail_eps = value.get<double>();
        if (!doc.contains("trunc")) cfg.trunc_n = 0;
      } else if (key == "tau0") {
        cfg.schedule.tau0 = value.get<double>();
      } else if (key == "tau-min") {
        cfg.schedule.tau_min = value.get<double>();
      } else if (key == "tau-decay") {
        cfg.schedule.decay_rate = value.get<double>();
      } else if (key == "steps") {
        cfg.steps = value.get<int>();
      } else if (key == "lr") {
        cfg.lr = value.get<double>();
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else if (key == "replicates") {
        cfg.replicates = value.get<int>();
      } else if (key == "out") {
        cfg.out = value.get<std::string>();
      } else if (key == "k") {
        cfg.k = value.get<int>();
      } else if (key == "optimizer") {
        cfg.optimizer = gengs::parse_optimizer(value.get<std::string>());
      } else if (key == "kl-weight") {
        cfg.kl_weight = value.get<double>();
      } else if (key == "measure-every") {
        cfg.measure_every = value.get<int>();
      } else if (key == "measure-r") {
        cfg.measure_r = value.get<int>();
      } else if (key == "rf-baseline") {
        cfg.rf_baseline = value.get<bool>();
      } else {
        throw gengs::ConfigError("unknown config key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw gengs::ConfigError("config key '" + key +
                               "' has the wrong type: " + e.what());
    }
  }
}

gengs::ExperimentConfig build_config(const Flags& f, const Options& o,
                                     std::string* estimators) {
  gengs::ExperimentConfig cfg;
  if (o.config->count() > 0) load_config_file(f.config_path, cfg, estimators);
  if (o.estimator->count() > 0) cfg.estimator = gengs::parse_estimator(f.estimator);
  if (o.estimators != nullptr && o.estimators->count() > 0) {
    *estimators = f.estimators;
  }
  if (o.dist->count() > 0) cfg.target_spec = gengs::parse_distribution(f.dist);
  if (o.trunc->count() > 0) cfg.trunc_n = f.trunc;
  if (o.tail_eps->count() > 0) {
    cfg.tail_eps = f.tail_eps;
    if (o.trunc->count() == 0) cfg.trunc_n = 0;
  }
  if (o.tau0->count() > 0) cfg.schedule.tau0 = f.tau0;
  if (o.tau_min->count() > 0) cfg.schedule.tau_min = f.tau_min;
  if (o.tau_decay->count() > 0) cfg.schedule.decay_rate = f.tau_decay;
  if (o.steps->count() > 0) cfg.steps = f.steps;
  if (o.lr->count() > 0) cfg.lr = f.lr;
  if (o.seed->count() > 0) cfg.seed = f.seed;
  if (o.replicates->count() > 0) cfg.replicates = f.replicates;
  if (o.out->count() > 0) cfg.out = f.out;
  if (o.k->count() > 0) cfg.k = f.k;
  if (o.optimizer->count() > 0) cfg.optimizer = gengs::parse_optimizer(f.optimizer);
  if (o.kl_weight->count() > 0) cfg.kl_weight = f.kl_weight;
  if (o.measure_every->count() > 0) cfg.measure_every = f.measure_every;
  if (o.measure_r->count() > 0) cfg.measure_r = f.measure_r;
  if (o.rf_baseline->count() > 0) cfg.rf_baseline = f.rf_baseline;
  return cfg;
}

std::vector<gengs::EstimatorKind> parse_estimator_list(
    const std::string& text) {
  std::vector<gengs::EstimatorKind> kinds;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string token = text.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (token.empty()) {
      throw gengs::ConfigError("empty entry in estimator list");
    }
    kinds.push_back(gengs::parse_estimator(token));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return kinds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic benchmark for discrete gradient estimators"};
  app.require_subcommand(1);

  Flags run_flags;
  Flags cmp_flags;
  CLI::App* run_cmd =
      app.add_subcommand("run", "optimize with one estimator");
  CLI::App* cmp_cmd =
      app.add_subcommand("compare", "run several estimators on shared targets");

  Options run_opts = add_common_options(run_cmd, run_flags);
  run_opts.estimator = run_cmd->add_option(
      "--estimator", run_flags.estimator,
      "exact | gengs | gengs-implicit | gengs-rb | st-gengs | reinforce");
  run_opts.estimators = nullptr;

  Options cmp_opts = add_common_options(cmp_cmd, cmp_flags);
  cmp_opts.estimator = cmp_cmd->add_option("--estimator", cmp_flags.estimator,
                                           "ignored by compare");
  cmp_opts.estimators = cmp_cmd->add_option(
      "--estimators", cmp_flags.estimators, "comma-separated estimator list");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      std::string unused;
      const gengs::ExperimentConfig cfg =
          build_config(run_flags, run_opts, &unused);
      const gengs::RunResult result = gengs::run_synthetic(cfg);
      std::fputs(gengs::summary_json(result).c_str(), stdout);
      return 0;
    }
    std::string estimators;
    const gengs::ExperimentConfig cfg =
        build_config(cmp_flags, cmp_opts, &estimators);
    if (estimators.empty()) {
      throw gengs::ConfigError(
          "compare needs --estimators (or 'estimators' in the config file)");
    }
    const gengs::CompareResult result =
        gengs::compare_estimators(cfg, parse_estimator_list(estimators));
    std::fputs(gengs::comparison_summary_json(result).c_str(), stdout);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
