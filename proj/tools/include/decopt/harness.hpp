#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "decopt/consensus.hpp"
#include "decopt/error.hpp"
#include "decopt/fit.hpp"
#include "decopt/graphs.hpp"
#include "decopt/mixing.hpp"
#include "decopt/objectives.hpp"
#include "decopt/optimize.hpp"

namespace decopt::harness {

/// Raised for invalid configurations. The message starts with the JSON path
/// of the offending field, e.g. "graph.n: must be >= 1".
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct GraphConfig {
  FamilySpec family;
  SequenceMode sequence = SequenceMode::kStatic;
  std::size_t block_length = 1;
  bool directed = true;  // token-ring only
  std::uint64_t seed = 0;

  bool operator==(const GraphConfig&) const = default;
};

struct OptimizeConfig {
  Algorithm algorithm = Algorithm::kDecentralized;
  ObjectiveKind objective = ObjectiveKind::kAbsolute;
  double huber_delta = 1.0;
  ScheduleKind schedule = ScheduleKind::kOneOverSqrtT;
  double step = 0.0;              // constant alpha or diminishing c; 0 = algorithm default
  std::size_t horizon = 1000;
  std::optional<double> beta;     // accelerated subgradient
  std::optional<std::size_t> upper_bound;  // accelerated subgradient U, default n
  std::optional<double> box_lo;   // projected: shared box constraint
  std::optional<double> box_hi;
  bool post_mix_gradient = false;  // projected
  bool check_bounds = true;

  bool operator==(const OptimizeConfig&) const = default;
};

struct ScalingConfig {
  std::vector<std::size_t> n_values{16, 32, 64, 128, 256};
  std::size_t repetitions = 5;
  bool accelerated = false;

  bool operator==(const ScalingConfig&) const = default;
};

/// Everything that determines a run. Serializes to and parses from JSON.
struct ExperimentConfig {
  std::string command = "consensus";  // consensus | pushsum | optimize | scaling
  GraphConfig graph;
  WeightKind weights = WeightKind::kLazyMetropolis;
  std::optional<double> weight_epsilon;
  double eps = 1e-6;
  std::optional<std::size_t> cap;
  std::string init = "random";  // random | spike | linear | zero
  std::size_t dim = 1;
  std::size_t trace_stride = 1;
  std::string out_dir;          // empty: no files written
  OptimizeConfig optimize;
  ScalingConfig scaling;

  bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing fields keep their defaults; unknown fields are rejected.
ExperimentConfig parse_config(const nlohmann::json& j);

nlohmann::json to_json(const FamilySpec& spec);
FamilySpec parse_family_spec(const nlohmann::json& j, const std::string& path = "graph");

GraphSequence make_sequence(const GraphConfig& cfg);
/// Initial state for n nodes: "random" is uniform on [0,1] from the seed,
/// "spike" is e_0, "linear" is i/(n-1), "zero" is all zeros.
Eigen::MatrixXd make_initial_state(const std::string& kind, std::size_t n, std::size_t d,
                                   std::uint64_t seed);
/// Seeded per-node objectives of the requested kind (d = dim).
ObjectiveSet make_objective_set(const OptimizeConfig& cfg, std::size_t n, std::size_t dim,
                                std::uint64_t seed);

void write_consensus_csv(std::ostream& out, const RunTrace& trace);
void write_optimize_csv(std::ostream& out, const OptTrace& trace);

struct CommandResult {
  nlohmann::json summary;
  std::string csv;  // the trace as written to trace.csv
  int exit_code = 0;
};

CommandResult cmd_consensus(const ExperimentConfig& cfg);
CommandResult cmd_pushsum(const ExperimentConfig& cfg);
CommandResult cmd_optimize(const ExperimentConfig& cfg);

struct ScalingReport {
  std::string family;
  bool accelerated = false;
  double eps = 0.0;
  std::vector<std::size_t> n_values;
  std::vector<double> median_t;
  LinearFit fit;
  double reference_exponent = 0.0;
  double slope_lo = 0.0;
  double slope_hi = 0.0;
  /// max/min of the medians; families with a flat reference are judged on it.
  double t_ratio = 0.0;
  bool flat_reference = false;
  bool pass = false;
  std::string error;  // set when some n failed to converge
};

/// Exponent of n in the consensus time of the family under lazy Metropolis
/// weights, and the accepted slope interval.
struct ReferenceSlope {
  double exponent;
  double lo;
  double hi;
  bool flat;
};
ReferenceSlope reference_slope(Family f, std::size_t grid_dim, bool accelerated);

/// Workers from DECOPT_WORKERS (default 1).
std::size_t worker_count();

ScalingReport cmd_scaling(const ExperimentConfig& cfg);
nlohmann::json to_json(const ScalingReport& r);
void write_scaling_table(std::ostream& out, const std::vector<ScalingReport>& reports);

struct SelftestCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SelftestOptions {
  /// Replaces the Metropolis rule in the stochasticity check (negative controls).
  std::optional<WeightRule> metropolis_override;
};

std::vector<SelftestCheck> cmd_selftest(const SelftestOptions& options = {});
void write_selftest_table(std::ostream& out, const std::vector<SelftestCheck>& checks);

/// Runs a command and writes trace.csv / summary.json into cfg.out_dir.
int run_and_write(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace decopt::harness
