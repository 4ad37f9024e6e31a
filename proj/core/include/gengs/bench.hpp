// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gengs/distributions.hpp"
#include "gengs/estimators.hpp"
#include "gengs/relaxation.hpp"

namespace gengs {

enum class EstimatorKind {
  Exact,
  GenGs,
  GenGsImplicit,
  GenGsRb,
  StGenGs,
  Reinforce,
};

enum class OptimizerKind { Sgd, Adam };

EstimatorKind parse_estimator(const std::string& name);
std::string estimator_name(EstimatorKind kind);
OptimizerKind parse_optimizer(const std::string& name);
std::string optimizer_name(OptimizerKind kind);

// "family:params" text form, e.g. "poisson:20", "binomial:20,0.3",
// "multinomial:3,0.7,0.2,0.1". Structural counts come first, matching
// DistributionSpec parameter order.
DistributionSpec parse_distribution(const std::string& text);
std::string format_distribution(const DistributionSpec& spec);

// One synthetic experiment: draw K fixed targets from target_spec, then fit
// a fresh model of the same family by stochastic gradient steps.
struct ExperimentConfig {
  DistributionSpec target_spec = DistributionSpec::poisson(20.0);
  EstimatorKind estimator = EstimatorKind::GenGs;
  int k = 1;
  int trunc_n = 0;       // 0 derives a level from tail_eps
  double tail_eps = 1e-4;
  TemperatureSchedule schedule;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double lr = 0.01;
  int steps = 2000;
  int replicates = 1;
  std::uint64_t seed = 42;
  double kl_weight = 0.1;
  bool rf_baseline = false;
  int measure_every = 50;
  int measure_r = 256;
  std::string out;       // trajectory CSV path; empty writes nothing
};

// Throws ConfigError on invalid ranges or an estimator/family combination
// that could not run (checked before any compute).
void validate_config(const ExperimentConfig& config);

// Truncation level actually used: the explicit level clamped into the
// family's support, or a tail_eps-derived suggestion. Multinomial needs no
// scalar truncation and resolves to 0.
int resolve_truncation(const ExperimentConfig& config);

// K fixed targets drawn from target_spec on a seed-derived stream, flattened
// to doubles (count vectors contribute block-size entries each).
std::vector<double> draw_targets(const ExperimentConfig& config);

struct TrajectoryRecord {
  int step = 0;       // 1-based
  int replicate = 0;
  double loss = 0.0;  // enumerated expectation at the recorded params
  bool measured = false;
  double grad_var = 0.0;        // total variance across components
  double grad_bias_norm = 0.0;  // L2 norm of mean minus exact
  std::vector<double> params;
  double tau = 0.0;
};

struct GridOptimum {
  std::vector<double> params;
  double loss = 0.0;
};

// Brute-force minimizer of the enumerated objective over the natural
// parameters: coarse scan, then repeated zooming until the grid step is at
// most `resolution`. Supports the one- and two-parameter families; simplex
// families are rejected.
GridOptimum grid_search_optimum(const Objective& objective,
                                const DistributionSpec& spec, int n,
                                double resolution = 1e-3);

struct RunResult {
  ExperimentConfig config;
  int trunc_n = 0;
  std::vector<double> targets;
  std::vector<TrajectoryRecord> records;  // replicate-major, step order
  std::vector<double> final_params;  // terminal params, replicate mean
  double final_loss = 0.0;           // terminal enumerated loss, replicate mean
  std::optional<GridOptimum> grid;        // absent for simplex / implicit
  double grid_gap_param = 0.0;
  double grid_gap_loss = 0.0;
  double wall_seconds = 0.0;
};

// Runs the experiment; writes the trajectory CSV and a flat JSON summary
// next to it when config.out is set.
RunResult run_synthetic(const ExperimentConfig& config);

struct CompareResult {
  std::vector<EstimatorKind> estimators;
  std::vector<RunResult> runs;
};

// Runs each estimator with identical seeds and targets. Writes a single
// comparison CSV of cumulative-average-smoothed columns plus a summary when
// base.out is set; the per-run outputs are suppressed.
CompareResult compare_estimators(const ExperimentConfig& base,
                                 const std::vector<EstimatorKind>& estimators);

// Running mean prefix: out[t] = mean(xs[0..t]).
std::vector<double> cumulative_average(std::span<const double> xs);

// Shortest decimal text that round-trips the double; the only float format
// used in CSV and summary output, so identical runs serialize identically.
std::string format_double(double x);

std::string trajectory_csv(const RunResult& result);
std::string summary_json(const RunResult& result);
std::string comparison_csv(const CompareResult& result);
std::string comparison_summary_json(const CompareResult& result);

// "runs/x.csv" -> "runs/x.summary.json"; a missing .csv suffix appends.
std::string summary_path_for(const std::string& csv_path);

}  // namespace gengs
