// SPDX-License-Identifier: Apache-2.0
#include "gengs/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "gengs/divergence.hpp"
#include "gengs/errors.hpp"
#include "gengs/random.hpp"

namespace gengs {
namespace {

// Disjoint stream lanes hanging off the experiment seed. Measurement
// passes never touch the optimization stream, so the trajectory is
// invariant to the measurement cadence.
constexpr std::uint64_t kTargetLane = 1;
constexpr std::uint64_t kOptLane = 2;
constexpr std::uint64_t kMeasureLaneBase = 3;

constexpr int kMaxSuggestedTrunc = 100000;

bool is_simplex_family(Family family) {
  return family == Family::Categorical || family == Family::Multinomial;
}

int target_block_size(const DistributionSpec& spec) {
  return spec.family == Family::Multinomial
             ? static_cast<int>(spec.params.size()) - 1
             : 1;
}

// Fresh model of the target's family: rate-like params start at 1.0,
// probabilities at 0.5, simplex params uniform; structural counts copied.
DistributionSpec initial_model(const DistributionSpec& target) {
  switch (target.family) {
    case Family::Poisson:
      return DistributionSpec::poisson(1.0);
    case Family::Binomial:
      return DistributionSpec::binomial(
          static_cast<long>(target.params[0]), 0.5);
    case Family::Geometric:
      return DistributionSpec::geometric(0.5);
    case Family::NegativeBinomial:
      return DistributionSpec::negative_binomial(1.0, 0.5);
    case Family::Bernoulli:
      return DistributionSpec::bernoulli(0.5);
    case Family::Categorical: {
      const std::size_t d = target.params.size();
      return DistributionSpec::categorical(
          std::vector<double>(d, 1.0 / static_cast<double>(d)));
    }
    case Family::Multinomial: {
      const std::size_t d = target.params.size() - 1;
      return DistributionSpec::multinomial(
          static_cast<long>(target.params[0]),
          std::vector<double>(d, 1.0 / static_cast<double>(d)));
    }
  }
  throw ConfigError("initial_model: unknown family");
}

struct Optimizer {
  Optimizer(OptimizerKind kind, double lr, std::size_t dim)
      : kind_(kind), lr_(lr), m_(dim, 0.0), v_(dim, 0.0) {}

  void apply(std::vector<double>& x, std::span<const double> g) {
    if (x.size() != g.size() || x.size() != m_.size()) {
      throw std::invalid_argument("Optimizer::apply: dimension mismatch");
    }
    ++t_;
    if (kind_ == OptimizerKind::Sgd) {
      for (std::size_t j = 0; j < x.size(); ++j) x[j] -= lr_ * g[j];
      return;
    }
    const double b1 = 0.9;
    const double b2 = 0.999;
    const double b1t = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double b2t = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t j = 0; j < x.size(); ++j) {
      m_[j] = b1 * m_[j] + (1.0 - b1) * g[j];
      v_[j] = b2 * v_[j] + (1.0 - b2) * g[j] * g[j];
      x[j] -= lr_ * (m_[j] / b1t) / (std::sqrt(v_[j] / b2t) + 1e-8);
    }
  }

 private:
  OptimizerKind kind_;
  double lr_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

GradEstimate run_one(EstimatorKind kind, const Objective& objective,
                     const DistributionSpec& model, int n, double tau,
                     NoiseSource& source, RunningMeanBaseline* baseline) {
  switch (kind) {
    case EstimatorKind::Exact:
      return exact_gradient(objective, model, n);
    case EstimatorKind::GenGs:
      return gengs_explicit(objective, model, n, tau, source);
    case EstimatorKind::GenGsRb:
      return gengs_rb(objective, model, n, tau, source);
    case EstimatorKind::StGenGs:
      return st_gengs(objective, model, n, tau, source);
    case EstimatorKind::Reinforce:
      return reinforce(objective, model, source, baseline);
    case EstimatorKind::GenGsImplicit:
      break;  // separate state, handled by the caller
  }
  throw ConfigError("run_one: estimator not dispatchable here");
}

double total_variance(const MomentStats& stats) {
  double total = 0.0;
  for (double v : stats.variance) total += v;
  return total;
}

double bias_norm(const MomentStats& stats) {
  double total = 0.0;
  for (double b : stats.bias) total += b * b;
  return std::sqrt(total);
}

std::vector<double> softmax_plain(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  const double top = *std::max_element(out.begin(), out.end());
  double denom = 0.0;
  for (double& x : out) {
    x = std::exp(x - top);
    denom += x;
  }
  for (double& x : out) x /= denom;
  return out;
}

// Exact gradient of the implicit loss (enumerated objective expectation
// under softmax(logits) plus the weighted KL term), for bias measurement
// in the same logits space the estimator reports in.
std::vector<double> implicit_exact_grad(std::span<const double> logits,
                                        const TruncatedDistribution& prior,
                                        double kl_weight,
                                        std::span<const double> f_sum) {
  Tape tape;
  const Var l = tape.input(std::vector<double>(logits.begin(), logits.end()));
  const Var q = tape.softmax_with_temperature(l, 1.0);
  const Var expected =
      tape.dot(q, tape.constant(std::vector<double>(f_sum.begin(), f_sum.end())));
  const Var loss =
      tape.add(expected, kl_weight * kl_categorical_on_tape(q, prior.pi));
  tape.backward(loss);
  return l.adjoints();
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += ch;
    }
  }
  return out;
}

// Flat JSON object writer with insertion-ordered keys.
class FlatJson {
 public:
  void add_string(const std::string& key, const std::string& value) {
    add_raw(key, "\"" + json_escape(value) + "\"");
  }
  void add_number(const std::string& key, double value) {
    if (std::isfinite(value)) {
      add_raw(key, format_double(value));
    } else {
      add_string(key, format_double(value));
    }
  }
  void add_integer(const std::string& key, long long value) {
    add_raw(key, std::to_string(value));
  }
  void add_unsigned(const std::string& key, std::uint64_t value) {
    add_raw(key, std::to_string(value));
  }
  void add_bool(const std::string& key, bool value) {
    add_raw(key, value ? "true" : "false");
  }

  std::string str() const { return body_ + "\n}\n"; }

 private:
  void add_raw(const std::string& key, const std::string& raw) {
    body_ += first_ ? "{\n" : ",\n";
    body_ += "  \"" + json_escape(key) + "\": " + raw;
    first_ = false;
  }

  std::string body_;
  bool first_ = true;
};

void echo_config(FlatJson& json, const ExperimentConfig& config, int trunc_n) {
  json.add_string("dist", format_distribution(config.target_spec));
  json.add_integer("k", config.k);
  json.add_integer("trunc", trunc_n);
  json.add_number("tail_eps", config.tail_eps);
  json.add_number("tau0", config.schedule.tau0);
  json.add_number("tau_min", config.schedule.tau_min);
  json.add_number("tau_decay", config.schedule.decay_rate);
  json.add_string("optimizer", optimizer_name(config.optimizer));
  json.add_number("lr", config.lr);
  json.add_integer("steps", config.steps);
  json.add_integer("replicates", config.replicates);
  json.add_unsigned("seed", config.seed);
  json.add_number("kl_weight", config.kl_weight);
  json.add_bool("rf_baseline", config.rf_baseline);
  json.add_integer("measure_every", config.measure_every);
  json.add_integer("measure_r", config.measure_r);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file: " + path);
  out << content;
  if (!out) throw ConfigError("failed writing output file: " + path);
}

std::vector<double> split_doubles(const std::string& text, const char* what) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string token =
        text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    double value = 0.0;
    const auto* begin = token.data();
    const auto* end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || token.empty()) {
      throw ConfigError(std::string("cannot parse number in ") + what + ": '" +
                        token + "'");
    }
    out.push_back(value);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

long integral_or_throw(double x, const char* what) {
  const double rounded = std::nearbyint(x);
  if (std::abs(x - rounded) > 1e-9) {
    throw ConfigError(std::string(what) + " must be an integer");
  }
  return static_cast<long>(rounded);
}

}  // namespace

EstimatorKind parse_estimator(const std::string& name) {
  if (name == "exact") return EstimatorKind::Exact;
  if (name == "gengs") return EstimatorKind::GenGs;
  if (name == "gengs-implicit") return EstimatorKind::GenGsImplicit;
  if (name == "gengs-rb") return EstimatorKind::GenGsRb;
  if (name == "st-gengs") return EstimatorKind::StGenGs;
  if (name == "reinforce") return EstimatorKind::Reinforce;
  throw ConfigError(
      "unknown estimator '" + name +
      "' (expected exact, gengs, gengs-implicit, gengs-rb, st-gengs, "
      "reinforce)");
}

std::string estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Exact: return "exact";
    case EstimatorKind::GenGs: return "gengs";
    case EstimatorKind::GenGsImplicit: return "gengs-implicit";
    case EstimatorKind::GenGsRb: return "gengs-rb";
    case EstimatorKind::StGenGs: return "st-gengs";
    case EstimatorKind::Reinforce: return "reinforce";
  }
  throw ConfigError("estimator_name: unknown kind");
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::Sgd ? "sgd" : "adam";
}

DistributionSpec parse_distribution(const std::string& text) {
  const std::size_t colon = text.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= text.size()) {
    throw ConfigError("distribution must be family:params, e.g. poisson:20");
  }
  const std::string family = text.substr(0, colon);
  const std::vector<double> args =
      split_doubles(text.substr(colon + 1), "distribution parameters");

  auto arity = [&](std::size_t want) {
    if (args.size() != want) {
      throw ConfigError("family '" + family + "' takes " +
                        std::to_string(want) + " parameter(s)");
    }
  };

  if (family == "poisson") {
    arity(1);
    return DistributionSpec::poisson(args[0]);
  }
  if (family == "binomial") {
    arity(2);
    return DistributionSpec::binomial(integral_or_throw(args[0], "n_trials"),
                                      args[1]);
  }
  if (family == "geometric") {
    arity(1);
    return DistributionSpec::geometric(args[0]);
  }
  if (family == "negbin") {
    arity(2);
    return DistributionSpec::negative_binomial(args[0], args[1]);
  }
  if (family == "bernoulli") {
    arity(1);
    return DistributionSpec::bernoulli(args[0]);
  }
  if (family == "categorical") {
    if (args.size() < 2) {
      throw ConfigError("categorical takes at least 2 probabilities");
    }
    return DistributionSpec::categorical(args);
  }
  if (family == "multinomial") {
    if (args.size() < 3) {
      throw ConfigError("multinomial takes m_trials then >= 2 probabilities");
    }
    return DistributionSpec::multinomial(
        integral_or_throw(args[0], "m_trials"),
        std::vector<double>(args.begin() + 1, args.end()));
  }
  throw ConfigError("unknown family '" + family + "'");
}

std::string format_distribution(const DistributionSpec& spec) {
  std::string out = family_name(spec.family) + ":";
  for (std::size_t j = 0; j < spec.params.size(); ++j) {
    if (j > 0) out += ",";
    out += format_double(spec.params[j]);
  }
  return out;
}

void validate_config(const ExperimentConfig& config) {
  try {
    validate(config.target_spec);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid target distribution: ") + e.what());
  }
  if (config.k < 0) throw ConfigError("k must be >= 0");
  if (config.steps < 1) throw ConfigError("steps must be >= 1");
  if (config.replicates < 1) throw ConfigError("replicates must be >= 1");
  if (!(config.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (config.trunc_n != 0 && config.trunc_n < 2) {
    throw ConfigError("trunc must be 0 (auto) or >= 2");
  }
  if (!(config.tail_eps > 0.0 && config.tail_eps < 1.0)) {
    throw ConfigError("tail-eps must lie in (0, 1)");
  }
  if (!(config.schedule.tau0 > 0.0) || !(config.schedule.tau_min > 0.0) ||
      config.schedule.decay_rate < 0.0) {
    throw ConfigError("temperature schedule needs tau0 > 0, tau-min > 0, "
                      "tau-decay >= 0");
  }
  if (config.kl_weight < 0.0) throw ConfigError("kl-weight must be >= 0");
  if (config.measure_every < 1) throw ConfigError("measure-every must be >= 1");
  if (config.measure_r < 2) throw ConfigError("measure-r must be >= 2");

  const bool multinomial = config.target_spec.family == Family::Multinomial;
  if (multinomial && (config.estimator == EstimatorKind::GenGsRb ||
                      config.estimator == EstimatorKind::GenGsImplicit)) {
    throw ConfigError("estimator '" + estimator_name(config.estimator) +
                      "' does not support the multinomial family");
  }
}

int resolve_truncation(const ExperimentConfig& config) {
  const DistributionSpec& spec = config.target_spec;
  if (spec.family == Family::Multinomial) return 0;
  const long bound = support_upper_bound(spec);
  if (config.trunc_n > 0) {
    long n = config.trunc_n;
    if (bound >= 0) n = std::min(n, bound + 1);
    return static_cast<int>(std::max(n, 2L));
  }
  if (bound >= 0) return static_cast<int>(std::max(bound + 1, 2L));
  return suggest_truncation(spec, config.tail_eps, kMaxSuggestedTrunc);
}

std::vector<double> draw_targets(const ExperimentConfig& config) {
  NoiseSource source(derive_seed(config.seed, kTargetLane));
  std::vector<double> targets;
  targets.reserve(static_cast<std::size_t>(config.k) *
                  static_cast<std::size_t>(target_block_size(config.target_spec)));
  for (int i = 0; i < config.k; ++i) {
    if (config.target_spec.family == Family::Multinomial) {
      for (long x : sample_counts(config.target_spec, source)) {
        targets.push_back(static_cast<double>(x));
      }
    } else {
      targets.push_back(
          static_cast<double>(sample_scalar(config.target_spec, source)));
    }
  }
  return targets;
}

GridOptimum grid_search_optimum(const Objective& objective,
                                const DistributionSpec& spec, int n,
                                double resolution) {
  validate(spec);
  if (!(resolution > 0.0)) {
    throw std::invalid_argument("grid resolution must be > 0");
  }
  if (is_simplex_family(spec.family)) {
    throw ConfigError(
        "grid search supports one- and two-parameter families only");
  }
  const ParamSpace ps(spec);
  const int dims = ps.count();

  struct Range {
    double lo, hi;
  };
  const auto bounds = [&](int j) -> Range {
    const bool rate_like =
        spec.family == Family::Poisson ||
        (spec.family == Family::NegativeBinomial && j == 0);
    if (rate_like) return {1e-3, std::max(static_cast<double>(n), 2.0)};
    return {1e-3, 1.0 - 1e-3};
  };
  const auto eval = [&](std::span<const double> params) {
    return enumerated_objective(objective, ps.with_natural(spec, params), n);
  };

  if (dims == 1) {
    Range full = bounds(0);
    Range window = full;
    const int points = 201;
    GridOptimum best{{full.lo}, std::numeric_limits<double>::infinity()};
    while (true) {
      const double step = (window.hi - window.lo) / (points - 1);
      best.loss = std::numeric_limits<double>::infinity();
      for (int i = 0; i < points; ++i) {
        const double x = window.lo + i * step;
        const double f = eval({&x, 1});
        if (f < best.loss) {
          best.loss = f;
          best.params = {x};
        }
      }
      if (step <= resolution) return best;
      window.lo = std::max(full.lo, best.params[0] - 2.0 * step);
      window.hi = std::min(full.hi, best.params[0] + 2.0 * step);
    }
  }

  // Two parameters: alternating zoom on a 41x41 grid.
  Range full_a = bounds(0);
  Range full_b = bounds(1);
  Range win_a = full_a;
  Range win_b = full_b;
  const int points = 41;
  GridOptimum best{{full_a.lo, full_b.lo},
                   std::numeric_limits<double>::infinity()};
  while (true) {
    const double step_a = (win_a.hi - win_a.lo) / (points - 1);
    const double step_b = (win_b.hi - win_b.lo) / (points - 1);
    best.loss = std::numeric_limits<double>::infinity();
    for (int i = 0; i < points; ++i) {
      for (int j = 0; j < points; ++j) {
        const double xy[2] = {win_a.lo + i * step_a, win_b.lo + j * step_b};
        const double f = eval(xy);
        if (f < best.loss) {
          best.loss = f;
          best.params = {xy[0], xy[1]};
        }
      }
    }
    if (std::max(step_a, step_b) <= resolution) return best;
    win_a.lo = std::max(full_a.lo, best.params[0] - 2.0 * step_a);
    win_a.hi = std::min(full_a.hi, best.params[0] + 2.0 * step_a);
    win_b.lo = std::max(full_b.lo, best.params[1] - 2.0 * step_b);
    win_b.hi = std::min(full_b.hi, best.params[1] + 2.0 * step_b);
  }
}

RunResult run_synthetic(const ExperimentConfig& config) {
  validate_config(config);
  const auto t0 = std::chrono::steady_clock::now();

  RunResult result;
  result.config = config;
  result.trunc_n = resolve_truncation(config);
  result.targets = draw_targets(config);

  const int n = result.trunc_n;
  const SquaredErrorObjective objective(result.targets,
                                        target_block_size(config.target_spec));

  if (config.estimator == EstimatorKind::GenGsImplicit) {
    // Uniform prior over the truncated support; logits are the learnable
    // state and the reported parameter is the implied mean.
    TruncatedDistribution prior;
    prior.pi.assign(static_cast<std::size_t>(n),
                    1.0 / static_cast<double>(n));
    prior.c.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) prior.c[static_cast<std::size_t>(k)] = k;
    prior.trunc_lo = 0;
    prior.trunc_hi = n - 1;
    prior.source = DistributionSpec::categorical(prior.pi);

    std::vector<double> f_sum(static_cast<std::size_t>(n), 0.0);
    for (int k = 0; k < n; ++k) {
      const double c_k = prior.c[static_cast<std::size_t>(k)];
      for (int i = 0; i < objective.latent_count(); ++i) {
        f_sum[static_cast<std::size_t>(k)] +=
            objective.block_value(i, {&c_k, 1});
      }
    }

    for (int rep = 0; rep < config.replicates; ++rep) {
      const std::uint64_t rep_seed = config.seed + static_cast<std::uint64_t>(rep);
      NoiseSource opt_source(derive_seed(rep_seed, kOptLane));
      std::vector<double> logits(static_cast<std::size_t>(n), 0.0);
      Optimizer opt(config.optimizer, config.lr, logits.size());

      for (int step = 1; step <= config.steps; ++step) {
        const double tau = temperature(config.schedule, step - 1);
        const GradEstimate g = gengs_implicit(objective, logits, prior, tau,
                                              config.kl_weight, opt_source);
        opt.apply(logits, g.grad);

        const auto q = softmax_plain(logits);
        TrajectoryRecord rec;
        rec.step = step;
        rec.replicate = rep;
        rec.tau = tau;
        double loss = 0.0;
        double mean_value = 0.0;
        for (int k = 0; k < n; ++k) {
          loss += q[static_cast<std::size_t>(k)] *
                  f_sum[static_cast<std::size_t>(k)];
          mean_value += q[static_cast<std::size_t>(k)] *
                        prior.c[static_cast<std::size_t>(k)];
        }
        rec.loss = loss;
        rec.params = {mean_value};

        if (step % config.measure_every == 0) {
          rec.measured = true;
          GradEstimate exact;
          exact.grad =
              implicit_exact_grad(logits, prior, config.kl_weight, f_sum);
          const MomentStats stats = estimate_moments(
              [&](int r) {
                NoiseSource source(derive_seed(
                    rep_seed, kMeasureLaneBase + static_cast<std::uint64_t>(step),
                    static_cast<std::uint64_t>(r)));
                return gengs_implicit(objective, logits, prior, tau,
                                      config.kl_weight, source);
              },
              config.measure_r, &exact);
          rec.grad_var = total_variance(stats);
          rec.grad_bias_norm = bias_norm(stats);
        }
        result.records.push_back(std::move(rec));
      }
    }
  } else {
    const DistributionSpec model0 = initial_model(config.target_spec);
    const ParamSpace ps(model0);

    for (int rep = 0; rep < config.replicates; ++rep) {
      const std::uint64_t rep_seed = config.seed + static_cast<std::uint64_t>(rep);
      NoiseSource opt_source(derive_seed(rep_seed, kOptLane));
      RunningMeanBaseline baseline;
      RunningMeanBaseline* baseline_ptr =
          (config.estimator == EstimatorKind::Reinforce && config.rf_baseline)
              ? &baseline
              : nullptr;
      std::vector<double> pre = ps.to_preimage(ps.natural(model0));
      Optimizer opt(config.optimizer, config.lr, pre.size());

      for (int step = 1; step <= config.steps; ++step) {
        const double tau = temperature(config.schedule, step - 1);
        DistributionSpec model = ps.with_natural(model0, ps.from_preimage(pre));
        const GradEstimate g = run_one(config.estimator, objective, model, n,
                                       tau, opt_source, baseline_ptr);
        const auto g_pre = ps.preimage_grad(pre, g.grad);
        opt.apply(pre, g_pre);
        model = ps.with_natural(model0, ps.from_preimage(pre));

        TrajectoryRecord rec;
        rec.step = step;
        rec.replicate = rep;
        rec.tau = tau;
        rec.params = ps.natural(model);
        rec.loss = enumerated_objective(objective, model, n);

        if (step % config.measure_every == 0) {
          rec.measured = true;
          const GradEstimate exact = exact_gradient(objective, model, n);
          const MomentStats stats = estimate_moments(
              [&](int r) {
                NoiseSource source(derive_seed(
                    rep_seed, kMeasureLaneBase + static_cast<std::uint64_t>(step),
                    static_cast<std::uint64_t>(r)));
                RunningMeanBaseline frozen = baseline;
                return run_one(config.estimator, objective, model, n, tau,
                               source,
                               baseline_ptr != nullptr ? &frozen : nullptr);
              },
              config.measure_r, &exact);
          rec.grad_var = total_variance(stats);
          rec.grad_bias_norm = bias_norm(stats);
        }
        result.records.push_back(std::move(rec));
      }
    }
  }

  // Headline estimate: terminal parameters averaged across replicates
  // (identical to replicate 0 when replicates is 1), with the mean of the
  // terminal enumerated losses alongside.
  const std::size_t steps = static_cast<std::size_t>(config.steps);
  for (int rep = 0; rep < config.replicates; ++rep) {
    const TrajectoryRecord& last =
        result.records[static_cast<std::size_t>(rep + 1) * steps - 1];
    if (rep == 0) result.final_params.assign(last.params.size(), 0.0);
    for (std::size_t j = 0; j < last.params.size(); ++j) {
      result.final_params[j] += last.params[j] / config.replicates;
    }
    result.final_loss += last.loss / config.replicates;
  }

  if (!is_simplex_family(config.target_spec.family) &&
      config.estimator != EstimatorKind::GenGsImplicit) {
    result.grid = grid_search_optimum(objective, initial_model(config.target_spec), n);
    double gap = 0.0;
    for (std::size_t j = 0; j < result.final_params.size(); ++j) {
      const double d = result.final_params[j] - result.grid->params[j];
      gap += d * d;
    }
    result.grid_gap_param = std::sqrt(gap);
    result.grid_gap_loss = result.final_loss - result.grid->loss;
  }

  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  if (!config.out.empty()) {
    write_text_file(config.out, trajectory_csv(result));
    write_text_file(summary_path_for(config.out), summary_json(result));
  }
  return result;
}

CompareResult compare_estimators(
    const ExperimentConfig& base, const std::vector<EstimatorKind>& estimators) {
  if (estimators.size() < 2) {
    throw ConfigError("compare needs at least two estimators");
  }
  // Fail on any incompatible combination before running the first one.
  for (EstimatorKind kind : estimators) {
    ExperimentConfig cfg = base;
    cfg.estimator = kind;
    validate_config(cfg);
  }

  CompareResult result;
  result.estimators = estimators;
  for (EstimatorKind kind : estimators) {
    ExperimentConfig cfg = base;
    cfg.estimator = kind;
    cfg.out.clear();
    result.runs.push_back(run_synthetic(cfg));
  }

  if (!base.out.empty()) {
    write_text_file(base.out, comparison_csv(result));
    write_text_file(summary_path_for(base.out),
                    comparison_summary_json(result));
  }
  return result;
}

std::vector<double> cumulative_average(std::span<const double> xs) {
  std::vector<double> out(xs.size());
  double total = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    total += xs[t];
    out[t] = total / static_cast<double>(t + 1);
  }
  return out;
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

std::string trajectory_csv(const RunResult& result) {
  const std::size_t param_count =
      result.records.empty() ? 0 : result.records.front().params.size();
  std::string csv = "step,replicate,loss,grad_var,grad_bias_norm";
  for (std::size_t j = 0; j < param_count; ++j) {
    csv += ",param_" + std::to_string(j);
  }
  csv += ",tau\n";
  for (const TrajectoryRecord& rec : result.records) {
    csv += std::to_string(rec.step);
    csv += ",";
    csv += std::to_string(rec.replicate);
    csv += ",";
    csv += format_double(rec.loss);
    csv += ",";
    if (rec.measured) csv += format_double(rec.grad_var);
    csv += ",";
    if (rec.measured) csv += format_double(rec.grad_bias_norm);
    for (double p : rec.params) {
      csv += ",";
      csv += format_double(p);
    }
    csv += ",";
    csv += format_double(rec.tau);
    csv += "\n";
  }
  return csv;
}

std::string summary_json(const RunResult& result) {
  FlatJson json;
  json.add_string("command", "run");
  json.add_string("estimator", estimator_name(result.config.estimator));
  echo_config(json, result.config, result.trunc_n);
  std::string targets;
  for (std::size_t i = 0; i < result.targets.size(); ++i) {
    if (i > 0) targets += ",";
    targets += format_double(result.targets[i]);
  }
  json.add_string("targets", targets);
  json.add_number("final_loss", result.final_loss);
  for (std::size_t j = 0; j < result.final_params.size(); ++j) {
    json.add_number("final_param_" + std::to_string(j),
                    result.final_params[j]);
  }
  if (result.grid.has_value()) {
    json.add_number("grid_loss", result.grid->loss);
    for (std::size_t j = 0; j < result.grid->params.size(); ++j) {
      json.add_number("grid_param_" + std::to_string(j),
                      result.grid->params[j]);
    }
    json.add_number("grid_gap_param", result.grid_gap_param);
    json.add_number("grid_gap_loss", result.grid_gap_loss);
  }
  json.add_number("wall_seconds", result.wall_seconds);
  return json.str();
}

std::string comparison_csv(const CompareResult& result) {
  if (result.runs.empty()) throw ConfigError("comparison has no runs");
  const int steps = result.runs.front().config.steps;
  const int reps = result.runs.front().config.replicates;

  std::string csv = "step";
  for (EstimatorKind kind : result.estimators) {
    const std::string name = estimator_name(kind);
    csv += "," + name + "_loss," + name + "_grad_var," + name +
           "_grad_bias_norm";
  }
  csv += "\n";

  struct Columns {
    std::vector<double> loss;                // smoothed, per step
    std::vector<int> measured_index;         // step index -> slot or -1
    std::vector<double> var, bias;           // smoothed, per measured slot
  };
  std::vector<Columns> columns;
  for (const RunResult& run : result.runs) {
    Columns col;
    std::vector<double> raw_loss(static_cast<std::size_t>(steps), 0.0);
    col.measured_index.assign(static_cast<std::size_t>(steps), -1);
    std::vector<double> raw_var, raw_bias;
    for (int s = 0; s < steps; ++s) {
      double loss = 0.0;
      double var = 0.0;
      double bias = 0.0;
      bool measured = true;
      for (int r = 0; r < reps; ++r) {
        const TrajectoryRecord& rec =
            run.records[static_cast<std::size_t>(r) *
                            static_cast<std::size_t>(steps) +
                        static_cast<std::size_t>(s)];
        loss += rec.loss;
        measured = measured && rec.measured;
        var += rec.grad_var;
        bias += rec.grad_bias_norm;
      }
      raw_loss[static_cast<std::size_t>(s)] = loss / reps;
      if (measured) {
        col.measured_index[static_cast<std::size_t>(s)] =
            static_cast<int>(raw_var.size());
        raw_var.push_back(var / reps);
        raw_bias.push_back(bias / reps);
      }
    }
    col.loss = cumulative_average(raw_loss);
    col.var = cumulative_average(raw_var);
    col.bias = cumulative_average(raw_bias);
    columns.push_back(std::move(col));
  }

  for (int s = 0; s < steps; ++s) {
    csv += std::to_string(s + 1);
    for (const Columns& col : columns) {
      csv += ",";
      csv += format_double(col.loss[static_cast<std::size_t>(s)]);
      const int slot = col.measured_index[static_cast<std::size_t>(s)];
      csv += ",";
      if (slot >= 0) csv += format_double(col.var[static_cast<std::size_t>(slot)]);
      csv += ",";
      if (slot >= 0) csv += format_double(col.bias[static_cast<std::size_t>(slot)]);
    }
    csv += "\n";
  }
  return csv;
}

std::string comparison_summary_json(const CompareResult& result) {
  if (result.runs.empty()) throw ConfigError("comparison has no runs");
  FlatJson json;
  json.add_string("command", "compare");
  std::string names;
  for (std::size_t i = 0; i < result.estimators.size(); ++i) {
    if (i > 0) names += ",";
    names += estimator_name(result.estimators[i]);
  }
  json.add_string("estimators", names);
  echo_config(json, result.runs.front().config, result.runs.front().trunc_n);
  double wall = 0.0;
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const RunResult& run = result.runs[i];
    const std::string prefix = estimator_name(result.estimators[i]);
    json.add_number(prefix + "_final_loss", run.final_loss);
    for (std::size_t j = 0; j < run.final_params.size(); ++j) {
      json.add_number(prefix + "_final_param_" + std::to_string(j),
                      run.final_params[j]);
    }
    if (run.grid.has_value()) {
      json.add_number(prefix + "_grid_gap_param", run.grid_gap_param);
      json.add_number(prefix + "_grid_gap_loss", run.grid_gap_loss);
    }
    wall += run.wall_seconds;
  }
  json.add_number("wall_seconds", wall);
  return json.str();
}

std::string summary_path_for(const std::string& csv_path) {
  const std::string suffix = ".csv";
  if (csv_path.size() > suffix.size() &&
      csv_path.compare(csv_path.size() - suffix.size(), suffix.size(),
                       suffix) == 0) {
    return csv_path.substr(0, csv_path.size() - suffix.size()) +
           ".summary.json";
  }
  return csv_path + ".summary.json";
}

}  // namespace gengs
