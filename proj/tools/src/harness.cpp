#include "decopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace decopt::harness {

using nlohmann::json;

namespace {

// Reads fields from a JSON object, remembering which keys were consumed so
// that unknown keys can be reported with their path.
class FieldReader {
 public:
  FieldReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("", "must be an object");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void number(const char* key, double& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) fail(key, "must be a number");
    out = v.get<double>();
  }

  void number(const char* key, std::optional<double>& out) {
    if (!has(key)) {
      if (j_.contains(key)) out.reset();
      return;
    }
    double v = 0.0;
    number(key, v);
    out = v;
  }

  template <typename Int>
  void integer(const char* key, Int& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      fail(key, "must be a nonnegative integer");
    }
    out = static_cast<Int>(v.get<std::uint64_t>());
  }

  template <typename Int>
  void integer(const char* key, std::optional<Int>& out) {
    if (!has(key)) {
      if (j_.contains(key)) out.reset();
      return;
    }
    Int v{};
    integer(key, v);
    out = v;
  }

  void boolean(const char* key, bool& out) {
    if (!has(key)) return;
    if (!j_.at(key).is_boolean()) fail(key, "must be true or false");
    out = j_.at(key).get<bool>();
  }

  void string(const char* key, std::string& out) {
    if (!has(key)) return;
    if (!j_.at(key).is_string()) fail(key, "must be a string");
    out = j_.at(key).get<std::string>();
  }

  template <typename Enum, typename Parse>
  void choice(const char* key, Enum& out, Parse parse) {
    std::string name;
    if (!has(key)) return;
    string(key, name);
    auto v = parse(name);
    if (!v) fail(key, "unknown value \"" + name + "\"");
    out = *v;
  }

  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const std::string where = key.empty() ? path_ : child(key.c_str());
    throw ConfigError((where.empty() ? std::string("config") : where) + ": " + what);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) fail(key, "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

void append_double(std::string& buf, double v) {
  char tmp[64];
  auto res = std::to_chars(tmp, tmp + sizeof(tmp), v);
  buf.append(tmp, res.ptr);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

json lambda_json(const GraphSequence& seq, const WeightRule& rule) {
  if (seq.mode() != SequenceMode::kStatic && seq.mode() != SequenceMode::kPeriodic) return nullptr;
  std::vector<MixingMatrix> matrices;
  for (const auto& g : seq.graphs()) {
    matrices.push_back(rule(g));
    if (matrices.back().klass() != Stochasticity::kDoubly) return nullptr;
  }
  const SpectralReport r = spectral(matrices);
  return json{{"lambda", r.lambda}, {"gap_inverse", r.gap_infinite ? json(nullptr) : json(r.gap_inverse)}};
}

StepSchedule make_schedule(const OptimizeConfig& cfg) {
  switch (cfg.schedule) {
    case ScheduleKind::kConstant:
      if (!(cfg.step > 0.0)) throw ConfigError("optimize.step: constant schedule needs step > 0");
      return StepSchedule::constant(cfg.step);
    case ScheduleKind::kOneOverSqrtT: return StepSchedule::one_over_sqrt_T(std::max<std::size_t>(1, cfg.horizon));
    case ScheduleKind::kOneOverSqrtK: return StepSchedule::one_over_sqrt_k();
    case ScheduleKind::kDiminishing: return StepSchedule::diminishing(cfg.step > 0.0 ? cfg.step : 1.0);
  }
  throw ConfigError("optimize.schedule: unknown schedule");
}

void validate(const ExperimentConfig& cfg) {
  static const std::set<std::string> commands{"consensus", "pushsum", "optimize", "scaling"};
  static const std::set<std::string> inits{"random", "spike", "linear", "zero"};
  if (!commands.contains(cfg.command)) throw ConfigError("command: unknown command \"" + cfg.command + "\"");
  if (!inits.contains(cfg.init)) throw ConfigError("init: unknown initial state \"" + cfg.init + "\"");
  if (cfg.graph.family.n == 0) throw ConfigError("graph.n: must be >= 1");
  if (cfg.graph.block_length == 0) throw ConfigError("graph.block_length: must be >= 1");
  if (!(cfg.eps > 0.0 && cfg.eps < 1.0)) throw ConfigError("eps: must lie in (0, 1)");
  if (cfg.dim == 0) throw ConfigError("dim: must be >= 1");
  if (cfg.command == "scaling") {
    const auto& ns = cfg.scaling.n_values;
    if (ns.size() < 4) throw ConfigError("scaling.n_values: need at least 4 sizes");
    if (!std::is_sorted(ns.begin(), ns.end()) || std::adjacent_find(ns.begin(), ns.end()) != ns.end()) {
      throw ConfigError("scaling.n_values: must be strictly ascending");
    }
    if (cfg.scaling.repetitions == 0) throw ConfigError("scaling.repetitions: must be >= 1");
  }
  if (cfg.optimize.box_lo.has_value() != cfg.optimize.box_hi.has_value()) {
    throw ConfigError("optimize.box_hi: box_lo and box_hi must be given together");
  }
  if (cfg.optimize.box_lo && *cfg.optimize.box_lo > *cfg.optimize.box_hi) {
    throw ConfigError("optimize.box_lo: must not exceed box_hi");
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string bounds_warning(const BoundCheck& b) {
  return b.name + " bound not checked: " + b.note;
}

}  // namespace

json to_json(const FamilySpec& spec) {
  return json{{"family", std::string(family_name(spec.family))},
              {"n", spec.n},
              {"grid_dim", spec.grid_dim},
              {"eps", spec.eps},
              {"expander_degree", spec.expander_degree}};
}

FamilySpec parse_family_spec(const json& j, const std::string& path) {
  FieldReader r(j, path);
  FamilySpec spec;
  r.choice("family", spec.family, parse_family);
  r.integer("n", spec.n);
  r.integer("grid_dim", spec.grid_dim);
  r.number("eps", spec.eps);
  r.integer("expander_degree", spec.expander_degree);
  return spec;
}

json to_json(const ExperimentConfig& cfg) {
  json graph = to_json(cfg.graph.family);
  graph["sequence"] = std::string(sequence_mode_name(cfg.graph.sequence));
  graph["block_length"] = cfg.graph.block_length;
  graph["directed"] = cfg.graph.directed;
  graph["seed"] = cfg.graph.seed;

  const auto& o = cfg.optimize;
  json optimize{{"algorithm", std::string(algorithm_name(o.algorithm))},
                {"objective", std::string(objective_kind_name(o.objective))},
                {"huber_delta", o.huber_delta},
                {"schedule", std::string(schedule_kind_name(o.schedule))},
                {"step", o.step},
                {"horizon", o.horizon},
                {"beta", optional_json(o.beta)},
                {"upper_bound", optional_json(o.upper_bound)},
                {"box_lo", optional_json(o.box_lo)},
                {"box_hi", optional_json(o.box_hi)},
                {"post_mix_gradient", o.post_mix_gradient},
                {"check_bounds", o.check_bounds}};
  json scaling{{"n_values", cfg.scaling.n_values},
               {"repetitions", cfg.scaling.repetitions},
               {"accelerated", cfg.scaling.accelerated}};
  return json{{"command", cfg.command},
              {"graph", graph},
              {"weights", std::string(weight_kind_name(cfg.weights))},
              {"weight_epsilon", optional_json(cfg.weight_epsilon)},
              {"eps", cfg.eps},
              {"cap", optional_json(cfg.cap)},
              {"init", cfg.init},
              {"dim", cfg.dim},
              {"trace_stride", cfg.trace_stride},
              {"out_dir", cfg.out_dir},
              {"optimize", optimize},
              {"scaling", scaling}};
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg;
  FieldReader r(j, "");
  r.string("command", cfg.command);
  if (r.has("graph")) {
    FieldReader g(r.raw("graph"), "graph");
    g.choice("family", cfg.graph.family.family, parse_family);
    g.integer("n", cfg.graph.family.n);
    g.integer("grid_dim", cfg.graph.family.grid_dim);
    g.number("eps", cfg.graph.family.eps);
    g.integer("expander_degree", cfg.graph.family.expander_degree);
    g.choice("sequence", cfg.graph.sequence, parse_sequence_mode);
    g.integer("block_length", cfg.graph.block_length);
    g.boolean("directed", cfg.graph.directed);
    g.integer("seed", cfg.graph.seed);
    g.finish();
  }
  r.choice("weights", cfg.weights, parse_weight_kind);
  r.number("weight_epsilon", cfg.weight_epsilon);
  r.number("eps", cfg.eps);
  r.integer("cap", cfg.cap);
  r.string("init", cfg.init);
  r.integer("dim", cfg.dim);
  r.integer("trace_stride", cfg.trace_stride);
  r.string("out_dir", cfg.out_dir);
  if (r.has("optimize")) {
    auto& o = cfg.optimize;
    FieldReader p(r.raw("optimize"), "optimize");
    p.choice("algorithm", o.algorithm, parse_algorithm);
    p.choice("objective", o.objective, [](std::string_view s) -> std::optional<ObjectiveKind> {
      for (ObjectiveKind k : {ObjectiveKind::kQuadratic, ObjectiveKind::kAbsolute,
                              ObjectiveKind::kHuber, ObjectiveKind::kLogistic}) {
        if (objective_kind_name(k) == s) return k;
      }
      return std::nullopt;
    });
    p.number("huber_delta", o.huber_delta);
    p.choice("schedule", o.schedule, parse_schedule_kind);
    p.number("step", o.step);
    p.integer("horizon", o.horizon);
    p.number("beta", o.beta);
    p.integer("upper_bound", o.upper_bound);
    p.number("box_lo", o.box_lo);
    p.number("box_hi", o.box_hi);
    p.boolean("post_mix_gradient", o.post_mix_gradient);
    p.boolean("check_bounds", o.check_bounds);
    p.finish();
  }
  if (r.has("scaling")) {
    FieldReader s(r.raw("scaling"), "scaling");
    if (s.has("n_values")) {
      const json& ns = s.raw("n_values");
      if (!ns.is_array()) s.fail("n_values", "must be an array of sizes");
      cfg.scaling.n_values.clear();
      for (const auto& v : ns) {
        if (!v.is_number_unsigned()) s.fail("n_values", "must contain nonnegative integers");
        cfg.scaling.n_values.push_back(v.get<std::size_t>());
      }
    }
    s.integer("repetitions", cfg.scaling.repetitions);
    s.boolean("accelerated", cfg.scaling.accelerated);
    s.finish();
  }
  r.finish();
  validate(cfg);
  return cfg;
}

GraphSequence make_sequence(const GraphConfig& cfg) {
  const std::size_t n = cfg.family.n;
  switch (cfg.sequence) {
    case SequenceMode::kStatic: return GraphSequence::fixed(build_graph(cfg.family, cfg.seed));
    case SequenceMode::kPeriodic: {
      std::vector<GraphSnapshot> graphs;
      for (std::size_t i = 0; i < cfg.block_length; ++i) {
        graphs.push_back(build_graph(cfg.family, derive_seed(cfg.seed, i)));
      }
      return GraphSequence::periodic(std::move(graphs), cfg.block_length);
    }
    case SequenceMode::kRegenerate: return GraphSequence::regenerate(cfg.family, cfg.seed);
    case SequenceMode::kTokenRing: return GraphSequence::token_ring(n, cfg.block_length, cfg.directed);
    case SequenceMode::kRandomBlocks: return GraphSequence::random_blocks(n, cfg.block_length, cfg.seed);
  }
  throw ConfigError("graph.sequence: unknown sequence mode");
}

Eigen::MatrixXd make_initial_state(const std::string& kind, std::size_t n, std::size_t d,
                                   std::uint64_t seed) {
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(rows, cols);
  if (kind == "random") {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index c = 0; c < cols; ++c) x(i, c) = unit(rng);
    }
  } else if (kind == "spike") {
    x.row(0).setOnes();
  } else if (kind == "linear") {
    for (Eigen::Index i = 0; i < rows; ++i) {
      x.row(i).setConstant(n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0);
    }
  } else if (kind != "zero") {
    throw ConfigError("init: unknown initial state \"" + kind + "\"");
  }
  return x;
}

ObjectiveSet make_objective_set(const OptimizeConfig& cfg, std::size_t n, std::size_t dim,
                                std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0x0b1ec7));
  std::uniform_real_distribution<double> center(-5.0, 5.0);
  std::uniform_real_distribution<double> curvature(0.5, 2.0);
  const auto d = static_cast<Eigen::Index>(dim);
  std::vector<LocalObjective> locals;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd b(d);
    for (auto& v : b) v = center(rng);
    switch (cfg.objective) {
      case ObjectiveKind::kQuadratic: locals.push_back(LocalObjective::quadratic(curvature(rng), b)); break;
      case ObjectiveKind::kAbsolute: locals.push_back(LocalObjective::absolute(b)); break;
      case ObjectiveKind::kHuber: locals.push_back(LocalObjective::huber(b, cfg.huber_delta)); break;
      case ObjectiveKind::kLogistic:
        locals.push_back(LocalObjective::logistic(make_logistic_data(8, dim, derive_seed(seed, i))));
        break;
    }
  }
  std::vector<Constraint> constraints;
  if (cfg.box_lo) {
    for (std::size_t i = 0; i < n; ++i) {
      constraints.push_back(Constraint::box(Eigen::VectorXd::Constant(d, *cfg.box_lo),
                                            Eigen::VectorXd::Constant(d, *cfg.box_hi)));
    }
  }
  try {
    return ObjectiveSet(std::move(locals), std::move(constraints));
  } catch (const Error& e) {
    throw ConfigError(std::string("optimize.objective: ") + e.what());
  }
}

void write_consensus_csv(std::ostream& out, const RunTrace& trace) {
  std::string buf = "k,consensus_error,spread,min_y\n";
  for (const auto& row : trace.rows) {
    buf += std::to_string(row.k);
    buf += ',';
    append_double(buf, row.consensus_error);
    buf += ',';
    append_double(buf, row.spread);
    buf += ',';
    if (row.min_y) append_double(buf, *row.min_y);
    buf += '\n';
  }
  out << buf;
}

void write_optimize_csv(std::ostream& out, const OptTrace& trace) {
  std::string buf = "k,objective_gap,running_avg_gap,consensus_error\n";
  for (const auto& row : trace.rows) {
    buf += std::to_string(row.k);
    buf += ',';
    append_double(buf, row.objective_gap);
    buf += ',';
    append_double(buf, row.running_avg_gap);
    buf += ',';
    append_double(buf, row.consensus_error);
    buf += '\n';
  }
  out << buf;
}

CommandResult cmd_consensus(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  const GraphSequence seq = make_sequence(cfg.graph);
  const WeightRule rule = make_weight_rule(cfg.weights, cfg.weight_epsilon);
  const Eigen::MatrixXd x0 =
      make_initial_state(cfg.init, seq.size(), cfg.dim, derive_seed(cfg.graph.seed, 1));
  const RunTrace trace = run_consensus(seq, rule, x0, cfg.eps, cfg.cap, cfg.trace_stride);

  CommandResult result;
  std::ostringstream csv;
  write_consensus_csv(csv, trace);
  result.csv = csv.str();
  json spectral_info = lambda_json(seq, rule);
  std::string note = trace.note;
  if (note.empty() && rule(seq.at(0)).klass() != Stochasticity::kDoubly) {
    note = "weights are only row-stochastic: the limit is a consensus value but not necessarily the "
           "initial average";
  }
  result.summary = json{{"command", "consensus"},
                        {"T_eps", trace.t_eps ? json(*trace.t_eps) : json(nullptr)},
                        {"iterations", trace.iterations},
                        {"stop_reason", std::string(stop_reason_name(trace.stop_reason))},
                        {"lambda", spectral_info.is_null() ? json(nullptr) : spectral_info["lambda"]},
                        {"gap_inverse", spectral_info.is_null() ? json(nullptr) : spectral_info["gap_inverse"]},
                        {"max_mean_drift", trace.max_mean_drift},
                        {"final_spread", state_spread(trace.final_state)},
                        {"final_mean_offset", (trace.final_state.colwise().mean() - x0.colwise().mean()).cwiseAbs().maxCoeff()},
                        {"note", note},
                        {"wall_time", seconds_since(start)}};
  if (trace.stop_reason == StopReason::kCapReached) result.exit_code = 3;
  return result;
}

CommandResult cmd_pushsum(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  const GraphSequence seq = make_sequence(cfg.graph);
  const Eigen::MatrixXd x0 =
      make_initial_state(cfg.init, seq.size(), cfg.dim, derive_seed(cfg.graph.seed, 1));
  const RunTrace trace = run_push_sum(seq, x0, cfg.eps, cfg.cap, cfg.trace_stride);

  CommandResult result;
  std::ostringstream csv;
  write_consensus_csv(csv, trace);
  result.csv = csv.str();
  result.summary = json{{"command", "pushsum"},
                        {"T_eps", trace.t_eps ? json(*trace.t_eps) : json(nullptr)},
                        {"iterations", trace.iterations},
                        {"stop_reason", std::string(stop_reason_name(trace.stop_reason))},
                        {"min_y", trace.min_y ? json(*trace.min_y) : json(nullptr)},
                        {"max_mass_drift_x", trace.max_mean_drift},
                        {"max_mass_drift_y", trace.max_mass_drift_y},
                        {"lambda", nullptr},
                        {"note", trace.note},
                        {"wall_time", seconds_since(start)}};
  if (trace.stop_reason == StopReason::kCapReached) result.exit_code = 3;
  return result;
}

CommandResult cmd_optimize(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  const auto& o = cfg.optimize;
  const GraphSequence seq = make_sequence(cfg.graph);
  const std::size_t n = seq.size();
  const ObjectiveSet set = make_objective_set(o, n, cfg.dim, cfg.graph.seed);
  Eigen::MatrixXd x0 = make_initial_state(cfg.init, n, cfg.dim, derive_seed(cfg.graph.seed, 1));
  if (set.constrained()) {
    for (Eigen::Index i = 0; i < x0.rows(); ++i) {
      x0.row(i) = set.constraint(static_cast<std::size_t>(i)).project(x0.row(i).transpose()).transpose();
    }
  }
  OptOptions options;
  options.trace_stride = cfg.trace_stride;
  const std::optional<double> step = o.step > 0.0 ? std::optional<double>(o.step) : std::nullopt;

  auto static_graph = [&]() -> GraphSnapshot {
    if (!seq.is_static()) {
      throw ConfigError("graph.sequence: " + std::string(algorithm_name(o.algorithm)) +
                        " runs on a static graph");
    }
    return seq.at(0);
  };

  OptTrace trace;
  switch (o.algorithm) {
    case Algorithm::kCentralized:
      trace = centralized_subgradient(set, x0.colwise().mean().transpose(), make_schedule(o), o.horizon, options);
      break;
    case Algorithm::kDecentralized:
      trace = decentralized_subgradient(seq, make_weight_rule(cfg.weights, cfg.weight_epsilon), set, x0,
                                        make_schedule(o), o.horizon, options);
      break;
    case Algorithm::kProjected:
      if (!set.constrained()) throw ConfigError("optimize.box_lo: projected runs need a box constraint");
      trace = projected_decentralized_subgradient(
          seq, make_weight_rule(cfg.weights, cfg.weight_epsilon), set, x0, make_schedule(o), o.horizon,
          o.post_mix_gradient ? GradientPoint::kPostMix : GradientPoint::kPastIterate, options);
      break;
    case Algorithm::kAcceleratedSubgradient:
      trace = accelerated_distributed_subgradient(
          static_graph(), o.upper_bound.value_or(n), set, x0,
          o.beta.value_or(1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, o.horizon)))),
          o.horizon, options);
      break;
    case Algorithm::kExtra: {
      const WeightKind w = cfg.weights == WeightKind::kMetropolis ? WeightKind::kMetropolis
                                                                  : WeightKind::kLazyMetropolis;
      trace = extra(static_graph(), set, x0, step, o.horizon, options, w);
      break;
    }
    case Algorithm::kDiging:
      trace = diging(seq, make_weight_rule(cfg.weights, cfg.weight_epsilon), set, x0, step, o.horizon,
                     options);
      break;
    case Algorithm::kSubgradientPush:
      trace = subgradient_push(seq, set, x0, make_schedule(o), o.horizon, options);
      break;
  }

  CommandResult result;
  std::ostringstream csv;
  write_optimize_csv(csv, trace);
  result.csv = csv.str();

  json bounds = json::array();
  json warnings = json::array();
  if (o.check_bounds) {
    for (const auto& b : trace.bounds) {
      bounds.push_back(json{{"name", b.name},
                            {"applicable", b.applicable},
                            {"measured", b.measured},
                            {"theoretical_rhs", std::isfinite(b.rhs) ? json(b.rhs) : json("inf")},
                            {"satisfied", b.satisfied},
                            {"note", b.note}});
      if (!b.applicable) warnings.push_back(bounds_warning(b));
    }
  }

  json verdicts = json::object();
  if ((o.algorithm == Algorithm::kExtra || o.algorithm == Algorithm::kDiging) && trace.rows.size() >= 3) {
    try {
      const LinearFit fit = fit_log_error(trace);
      verdicts["geometric_rate"] = json{{"slope", fit.slope},
                                        {"r2", fit.r2},
                                        {"pass", fit.slope < 0.0 && fit.r2 >= 0.99}};
    } catch (const std::invalid_argument&) {
      verdicts["geometric_rate"] = json{{"pass", false}, {"note", "too few samples above the round-off floor"}};
    }
  }
  const Eigen::MatrixXd& estimate =
      o.algorithm == Algorithm::kSubgradientPush ? trace.z_tilde : trace.final_state;
  double distance = 0.0;
  for (Eigen::Index i = 0; i < estimate.rows(); ++i) {
    distance = std::max(distance, (estimate.row(i).transpose() - set.x_star()).norm());
  }
  verdicts["optimum_convergence"] = json{{"max_distance", distance}, {"tolerance", 1e-2},
                                         {"pass", distance <= 1e-2}};

  const OptRow& last = trace.rows.back();
  result.summary = json{{"command", "optimize"},
                        {"algorithm", std::string(algorithm_name(trace.algorithm))},
                        {"iterations", trace.iterations},
                        {"stop_reason", std::string(stop_reason_name(trace.stop_reason))},
                        {"f_star", set.f_star()},
                        {"x_star", std::vector<double>(set.x_star().begin(), set.x_star().end())},
                        {"objective_gap", last.objective_gap},
                        {"running_avg_gap", last.running_avg_gap},
                        {"consensus_error", last.consensus_error},
                        {"bounds", bounds},
                        {"verdicts", verdicts},
                        {"warnings", warnings},
                        {"monitors", json{{"max_average_dynamics_error", trace.max_average_dynamics_error},
                                          {"max_tracking_error", trace.max_tracking_error},
                                          {"max_recursion_residual", trace.max_recursion_residual},
                                          {"max_mass_drift_w", trace.max_mass_drift_w},
                                          {"max_mass_drift_y", trace.max_mass_drift_y},
                                          {"min_y", trace.min_y},
                                          {"feasible", trace.feasible}}},
                        {"diagnostic", trace.diagnostic},
                        {"wall_time", seconds_since(start)}};
  if (trace.stop_reason == StopReason::kDiverged) result.exit_code = 2;
  return result;
}

ReferenceSlope reference_slope(Family f, std::size_t grid_dim, bool accelerated) {
  double exponent = 0.0;
  switch (f) {
    case Family::kPath:
    case Family::kStar:
    case Family::kTwoStar:
    case Family::kDirectedCycle: exponent = 2.0; break;
    case Family::kGrid2d: exponent = 1.0; break;
    case Family::kGridK: exponent = 2.0 / static_cast<double>(std::max<std::size_t>(1, grid_dim)); break;
    case Family::kGeometric: exponent = 1.0; break;
    case Family::kComplete:
    case Family::kExpander:
    case Family::kErdosRenyi: exponent = 0.0; break;
  }
  if (accelerated) {
    if (exponent == 0.0) return {0.0, -0.4, 0.4, true};
    exponent = std::min(1.0, exponent);
    if (exponent == 1.0) return {1.0, 0.7, 1.4, false};
    return {exponent, exponent - 0.4, exponent + 0.4, false};
  }
  if (exponent == 0.0) return {0.0, -0.4, 0.4, true};
  if (f == Family::kGrid2d || (f == Family::kGridK && grid_dim == 2) || f == Family::kGeometric) {
    // A log factor rides on top of the power of n.
    return {exponent, 0.8 * exponent, 1.4 * exponent, false};
  }
  return {exponent, exponent - 0.4, exponent + 0.4, false};
}

std::size_t worker_count() {
  const char* env = std::getenv("DECOPT_WORKERS");
  if (env == nullptr) return 1;
  std::size_t v = 0;
  const std::string_view s(env);
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || v == 0) return 1;
  return v;
}

ScalingReport cmd_scaling(const ExperimentConfig& cfg) {
  validate(cfg);
  const Family family = cfg.graph.family.family;
  const std::size_t reps = is_random_family(family) ? std::max<std::size_t>(5, cfg.scaling.repetitions) : 1;
  const auto& ns = cfg.scaling.n_values;
  const ReferenceSlope ref =
      reference_slope(family, static_cast<std::size_t>(cfg.graph.family.grid_dim), cfg.scaling.accelerated);

  ScalingReport report;
  report.family = std::string(family_name(family));
  report.accelerated = cfg.scaling.accelerated;
  report.eps = cfg.eps;
  report.n_values = ns;
  report.reference_exponent = ref.exponent;
  report.slope_lo = ref.lo;
  report.slope_hi = ref.hi;
  report.flat_reference = ref.flat;

  // One cell per (n, repetition); results land in their own slot so the
  // aggregate does not depend on scheduling.
  const std::size_t cells = ns.size() * reps;
  std::vector<std::optional<double>> times(cells);
  std::vector<std::string> errors(cells);
  const WeightRule rule = make_weight_rule(cfg.weights, cfg.weight_epsilon);
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t c = next++; c < cells; c = next++) {
      const std::size_t n = ns[c / reps];
      const std::size_t rep = c % reps;
      try {
        FamilySpec spec = cfg.graph.family;
        spec.n = n;
        const std::uint64_t cell_seed = derive_seed(cfg.graph.seed, n * 1000003ULL + rep);
        const GraphSnapshot g = build_graph(spec, cell_seed);
        const Eigen::MatrixXd x0 = make_initial_state(cfg.init, n, cfg.dim, derive_seed(cell_seed, 1));
        const RunTrace trace =
            cfg.scaling.accelerated
                ? run_accelerated(g, n, x0, cfg.eps, cfg.cap, std::numeric_limits<std::size_t>::max())
                : run_consensus(GraphSequence::fixed(g), rule, x0, cfg.eps, cfg.cap,
                                std::numeric_limits<std::size_t>::max());
        if (trace.t_eps) {
          times[c] = static_cast<double>(*trace.t_eps);
        } else {
          errors[c] = "n=" + std::to_string(n) + " rep=" + std::to_string(rep) + ": " +
                      std::string(stop_reason_name(trace.stop_reason)) + " after " +
                      std::to_string(trace.iterations) + " steps";
        }
      } catch (const std::exception& e) {
        errors[c] = "n=" + std::to_string(n) + " rep=" + std::to_string(rep) + ": " + e.what();
      }
    }
  };
  const std::size_t workers = std::min(worker_count(), cells);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < ns.size(); ++i) {
    std::vector<double> ts;
    for (std::size_t r = 0; r < reps; ++r) {
      const std::size_t c = i * reps + r;
      if (!errors[c].empty()) {
        report.error = errors[c];
        break;
      }
      ts.push_back(*times[c]);
    }
    if (!report.error.empty()) break;
    report.median_t.push_back(median(ts));
  }
  if (!report.error.empty()) return report;  // partial report

  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    lx.push_back(std::log(static_cast<double>(ns[i])));
    ly.push_back(std::log(std::max(1.0, report.median_t[i])));
  }
  report.fit = fit_line(lx, ly);
  const auto [lo_it, hi_it] = std::minmax_element(report.median_t.begin(), report.median_t.end());
  report.t_ratio = std::max(1.0, *hi_it) / std::max(1.0, *lo_it);
  report.pass = ref.flat ? report.t_ratio <= 3.0
                         : report.fit.slope >= ref.lo && report.fit.slope <= ref.hi;
  return report;
}

json to_json(const ScalingReport& r) {
  return json{{"family", r.family},
              {"accelerated", r.accelerated},
              {"eps", r.eps},
              {"n_values", r.n_values},
              {"median_T", r.median_t},
              {"slope", r.fit.slope},
              {"intercept", r.fit.intercept},
              {"r2", r.fit.r2},
              {"reference_exponent", r.reference_exponent},
              {"slope_interval", {r.slope_lo, r.slope_hi}},
              {"T_ratio", r.t_ratio},
              {"flat_reference", r.flat_reference},
              {"pass", r.pass},
              {"error", r.error}};
}

void write_scaling_table(std::ostream& out, const std::vector<ScalingReport>& reports) {
  std::vector<std::string> medians;
  std::size_t width = std::string_view("median T by n").size();
  for (const auto& r : reports) {
    std::ostringstream ts;
    for (std::size_t i = 0; i < r.median_t.size(); ++i) {
      if (i > 0) ts << ' ';
      ts << r.n_values[i] << ':' << r.median_t[i];
    }
    medians.push_back(ts.str());
    width = std::max(width, medians.back().size());
  }
  const int col = static_cast<int>(width + 2);
  out << std::left << std::setw(16) << "family" << std::setw(6) << "acc" << std::setw(col) << "median T by n"
      << std::setw(9) << "slope" << std::setw(8) << "R^2" << std::setw(16) << "expected" << "verdict\n";
  for (std::size_t row = 0; row < reports.size(); ++row) {
    const ScalingReport& r = reports[row];
    std::ostringstream expected;
    expected << std::setprecision(2);
    if (r.flat_reference) {
      expected << "ratio<=3";
    } else {
      expected << '[' << r.slope_lo << ',' << r.slope_hi << ']';
    }
    out << std::left << std::setw(16) << r.family << std::setw(6) << (r.accelerated ? "yes" : "no")
        << std::setw(col) << medians[row] << std::setw(9) << std::fixed << std::setprecision(3) << r.fit.slope
        << std::setw(8) << r.fit.r2 << std::defaultfloat << std::setw(16) << expected.str()
        << (r.error.empty() ? (r.pass ? "pass" : "FAIL") : "ERROR: " + r.error) << '\n';
  }
}

std::vector<SelftestCheck> cmd_selftest(const SelftestOptions& options) {
  std::vector<SelftestCheck> checks;
  auto run = [&](std::string name, auto&& body) {
    SelftestCheck c;
    c.name = std::move(name);
    try {
      c.detail = body();
      c.pass = c.detail.empty();
      if (c.pass) c.detail = "ok";
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail = e.what();
    }
    checks.push_back(std::move(c));
  };

  run("doubly stochastic weights", [&]() -> std::string {
    const WeightRule rule = options.metropolis_override.value_or(
        WeightRule([](const GraphSnapshot& g) { return metropolis(g); }));
    const Family families[] = {Family::kPath, Family::kStar, Family::kGrid2d, Family::kErdosRenyi,
                               Family::kGeometric, Family::kExpander};
    for (std::uint64_t s = 0; s < 60; ++s) {
      FamilySpec spec;
      spec.family = families[s % 6];
      spec.n = spec.family == Family::kGrid2d ? 16 : 10 + s % 20;
      if (spec.family == Family::kExpander && spec.n % 2 == 1) ++spec.n;
      const GraphSnapshot g = build_graph(spec, s);
      for (const MixingMatrix& m : {rule(g), lazy_metropolis(g)}) {
        const double asym = (m.entries() - m.entries().transpose()).cwiseAbs().maxCoeff();
        if (m.max_row_sum_error() > 1e-12 || m.max_column_sum_error() > 1e-12 || asym > 1e-12) {
          return "graph " + std::string(family_name(spec.family)) + " seed " + std::to_string(s) +
                 ": row error " + std::to_string(m.max_row_sum_error()) + ", column error " +
                 std::to_string(m.max_column_sum_error());
        }
      }
    }
    return {};
  });

  run("column stochastic push-sum weights", []() -> std::string {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const GraphSequence seq = GraphSequence::random_blocks(5 + s, 1 + s % 4, s);
      for (std::size_t k = 0; k < 8; ++k) {
        const MixingMatrix m = push_sum_matrix(seq.at(k));
        if (m.max_column_sum_error() > 1e-12) return "seed " + std::to_string(s) + " step " + std::to_string(k);
      }
    }
    return {};
  });

  run("spread contraction", []() -> std::string {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
      const Eigen::Index n = 2 + trial % 7;
      Eigen::MatrixXd w(n, n);
      for (auto& v : w.reshaped()) v = 0.05 + unit(rng);
      w = w.array().colwise() / w.rowwise().sum().array();
      const double beta = w.minCoeff();
      Eigen::VectorXd u(n);
      for (auto& v : u) v = unit(rng);
      if (spread(w * u) > (1.0 - 2.0 * beta) * spread(u) + 1e-12) return "trial " + std::to_string(trial);
    }
    return {};
  });

  run("average preserved", []() -> std::string {
    FamilySpec spec{Family::kErdosRenyi, 30};
    const GraphSequence seq = GraphSequence::regenerate(spec, 3);
    const Eigen::MatrixXd x0 = make_initial_state("random", 30, 2, 5);
    const RunTrace t = run_consensus(seq, make_weight_rule(WeightKind::kMetropolis), x0, 1e-8);
    if (t.max_mean_drift > 1e-12) return "mean drift " + std::to_string(t.max_mean_drift);
    if (!t.t_eps) return "did not converge";
    return {};
  });

  run("push-sum mass conservation", []() -> std::string {
    const GraphSequence seq = GraphSequence::random_blocks(12, 3, 8);
    const Eigen::MatrixXd x0 = make_initial_state("random", 12, 1, 9);
    const RunTrace t = run_push_sum(seq, x0, 1e-9);
    if (t.max_mean_drift > 1e-12 || t.max_mass_drift_y > 1e-12) return "mass drift";
    if (!t.t_eps) return "did not converge";
    return {};
  });

  run("gradient tracking", []() -> std::string {
    std::vector<LocalObjective> locals;
    for (int i = 0; i < 8; ++i) locals.push_back(LocalObjective::quadratic(1.0 + 0.1 * i, static_cast<double>(i)));
    const ObjectiveSet set(std::move(locals));
    const GraphSequence seq = GraphSequence::fixed(build_graph({Family::kPath, 8}, 0));
    const OptTrace t = diging(seq, make_weight_rule(WeightKind::kLazyMetropolis), set,
                              Eigen::MatrixXd::Zero(8, 1), std::nullopt, 2000);
    if (t.max_tracking_error > 1e-10) return "tracking error " + std::to_string(t.max_tracking_error);
    if (t.max_recursion_residual > 1e-10) return "recursion residual " + std::to_string(t.max_recursion_residual);
    return {};
  });

  run("product positivity", []() -> std::string {
    for (std::size_t n = 2; n <= 4; ++n) {
      for (std::size_t b = 1; b <= 3; ++b) {
        const GraphSequence seq = GraphSequence::token_ring(n, b, true);
        const WeightRule rule = make_weight_rule(WeightKind::kPushSum);
        const Eigen::MatrixXd p = transition_product(seq, rule, 0, n * b);
        const double floor = std::pow(1.0 / static_cast<double>(n), static_cast<double>(n * b));
        if (p.minCoeff() < floor) return "n=" + std::to_string(n) + " B=" + std::to_string(b);
      }
    }
    return {};
  });

  run("reproducible traces", []() -> std::string {
    ExperimentConfig cfg;
    cfg.graph.family = {Family::kErdosRenyi, 24};
    cfg.graph.seed = 42;
    cfg.eps = 1e-6;
    const std::string a = cmd_consensus(cfg).csv;
    const std::string b = cmd_consensus(cfg).csv;
    if (a != b) return "consensus CSV differs between identical runs";
    return {};
  });

  return checks;
}

void write_selftest_table(std::ostream& out, const std::vector<SelftestCheck>& checks) {
  std::size_t width = 5;
  for (const auto& c : checks) width = std::max(width, c.name.size());
  out << std::left << std::setw(static_cast<int>(width + 2)) << "check" << "result  detail\n";
  for (const auto& c : checks) {
    out << std::left << std::setw(static_cast<int>(width + 2)) << c.name << (c.pass ? "pass    " : "FAIL    ")
        << c.detail << '\n';
  }
}

int run_and_write(const ExperimentConfig& cfg, std::ostream& log) {
  namespace fs = std::filesystem;
  auto write_file = [&](const std::string& name, const std::string& contents) {
    if (cfg.out_dir.empty()) return;
    fs::create_directories(cfg.out_dir);
    std::ofstream f(fs::path(cfg.out_dir) / name, std::ios::binary);
    f << contents;
    if (!f) throw Error("could not write " + (fs::path(cfg.out_dir) / name).string());
  };

  if (cfg.command == "scaling") {
    const ScalingReport r = cmd_scaling(cfg);
    std::ostringstream table;
    write_scaling_table(table, {r});
    log << table.str();
    write_file("report.txt", table.str());
    write_file("summary.json", to_json(r).dump(2) + "\n");
    if (!r.error.empty()) return 3;
    return r.pass ? 0 : 1;
  }

  CommandResult result;
  if (cfg.command == "consensus") {
    result = cmd_consensus(cfg);
  } else if (cfg.command == "pushsum") {
    result = cmd_pushsum(cfg);
  } else {
    result = cmd_optimize(cfg);
  }
  write_file("trace.csv", result.csv);
  write_file("summary.json", result.summary.dump(2) + "\n");
  json brief = result.summary;
  log << brief.dump(2) << '\n';
  return result.exit_code;
}

}  // namespace decopt::harness
