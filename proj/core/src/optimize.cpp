#include "decopt/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include "decopt/error.hpp"

namespace decopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kDivergenceWindow = 100;

Eigen::VectorXd column_mean(const Eigen::MatrixXd& x) { return x.colwise().mean().transpose(); }

Eigen::MatrixXd stacked_subgradient(const ObjectiveSet& set, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    g.row(i) = set.local(static_cast<std::size_t>(i)).subgradient(x.row(i).transpose()).transpose();
  }
  return g;
}

void require_state(const ObjectiveSet& set, std::size_t n, const Eigen::MatrixXd& x0,
                   const char* who) {
  if (set.size() != n) {
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(set.size()) +
                                " objectives for " + std::to_string(n) + " nodes");
  }
  if (static_cast<std::size_t>(x0.rows()) != n ||
      static_cast<std::size_t>(x0.cols()) != set.dim()) {
    throw std::invalid_argument(std::string(who) + ": initial state must be " + std::to_string(n) +
                                " x " + std::to_string(set.dim()));
  }
  if (!x0.allFinite()) throw std::invalid_argument(std::string(who) + ": non-finite initial state");
}

void require_doubly(const MixingMatrix& m, const char* who) {
  if (m.klass() != Stochasticity::kDoubly) {
    throw std::invalid_argument(std::string(who) + ": weights must be doubly stochastic, got " +
                                std::string(stochasticity_name(m.klass())));
  }
}

void require_smooth(const ObjectiveSet& set, const char* who) {
  if (!set.smooth()) {
    throw std::invalid_argument(std::string(who) +
                                ": needs differentiable objectives (quadratic, huber, logistic)");
  }
}

// Step-weighted average maintained incrementally.
class RunningAverage {
 public:
  void add(const Eigen::VectorXd& v, double weight) {
    if (weight <= 0.0) return;
    if (total_ == 0.0) {
      avg_ = v;
      total_ = weight;
      return;
    }
    total_ += weight;
    avg_ += (weight / total_) * (v - avg_);
  }
  bool empty() const { return total_ == 0.0; }
  const Eigen::VectorXd& value() const { return avg_; }

 private:
  Eigen::VectorXd avg_;
  double total_ = 0.0;
};

// Computes the per-step metrics, decides when to stop and keeps the rows.
class Recorder {
 public:
  Recorder(const ObjectiveSet& set, const OptOptions& options, OptTrace& trace,
           bool watch_divergence)
      : set_(set), options_(options), trace_(trace), watch_divergence_(watch_divergence) {}

  double gap(const Eigen::VectorXd& x) const { return set_.value(x) - set_.f_star(); }

  // Returns true when the run should stop after step k.
  bool observe(std::size_t k, const Eigen::MatrixXd& x, std::optional<double> running_gap) {
    OptRow row;
    row.k = k;
    const Eigen::VectorXd mean = column_mean(x);
    row.objective_gap = gap(mean);
    row.running_avg_gap = running_gap.value_or(row.objective_gap);
    row.consensus_error = deviation_from(x, mean.transpose());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      worst = std::max(worst, (x.row(i).transpose() - set_.x_star()).norm());
    }
    row.optimality_error = std::isfinite(worst) ? worst : kInf;
    if (options_.record_node_gaps) {
      for (Eigen::Index i = 0; i < x.rows(); ++i) row.node_gaps.push_back(gap(x.row(i).transpose()));
    }

    bool stop = false;
    if (!x.allFinite()) {
      trace_.stop_reason = StopReason::kDiverged;
      trace_.diagnostic = "iterates became non-finite at k=" + std::to_string(k);
      stop = true;
    } else if (watch_divergence_ && k > 0) {
      rising_ = row.optimality_error > last_error_ ? rising_ + 1 : 0;
      if (rising_ >= kDivergenceWindow && row.optimality_error > initial_error_) {
        trace_.stop_reason = StopReason::kDiverged;
        trace_.diagnostic = "error grew for " + std::to_string(kDivergenceWindow) +
                            " consecutive steps; the step size is likely too large";
        stop = true;
      }
    }
    if (k == 0) initial_error_ = row.optimality_error;
    last_error_ = row.optimality_error;

    if (!stop) {
      const bool hit_error = options_.target_error && row.optimality_error <= *options_.target_error;
      const bool hit_gap = options_.target_gap && row.running_avg_gap <= *options_.target_gap;
      if (hit_error || hit_gap) {
        trace_.hit = k;
        trace_.stop_reason = StopReason::kConverged;
        stop = true;
      }
    }

    const std::size_t stride = std::max<std::size_t>(1, options_.trace_stride);
    if (k % stride == 0 || stop) {
      trace_.rows.push_back(std::move(row));
    } else {
      pending_ = std::move(row);
    }
    return stop;
  }

  // Makes sure the last observed step is in the trace.
  void finish() {
    if (pending_ && (trace_.rows.empty() || trace_.rows.back().k < pending_->k)) {
      trace_.rows.push_back(std::move(*pending_));
    }
    pending_.reset();
  }

 private:
  const ObjectiveSet& set_;
  const OptOptions& options_;
  OptTrace& trace_;
  bool watch_divergence_;
  std::optional<OptRow> pending_;
  std::size_t rising_ = 0;
  double last_error_ = 0.0;
  double initial_error_ = 0.0;
};

bool rows_identical(const Eigen::MatrixXd& x) {
  for (Eigen::Index i = 1; i < x.rows(); ++i) {
    if (x.row(i) != x.row(0)) return false;
  }
  return true;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

std::string_view schedule_kind_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kOneOverSqrtT: return "one_over_sqrt_T";
    case ScheduleKind::kOneOverSqrtK: return "one_over_sqrt_k";
    case ScheduleKind::kDiminishing: return "diminishing";
  }
  return "unknown";
}

std::optional<ScheduleKind> parse_schedule_kind(std::string_view name) {
  for (ScheduleKind k : {ScheduleKind::kConstant, ScheduleKind::kOneOverSqrtT,
                         ScheduleKind::kOneOverSqrtK, ScheduleKind::kDiminishing}) {
    if (schedule_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

StepSchedule StepSchedule::constant(double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("constant step size must be finite and >= 0");
  }
  return {ScheduleKind::kConstant, alpha};
}

StepSchedule StepSchedule::one_over_sqrt_T(std::size_t horizon) {
  if (horizon == 0) throw std::invalid_argument("one_over_sqrt_T needs T >= 1");
  return {ScheduleKind::kOneOverSqrtT, static_cast<double>(horizon)};
}

StepSchedule StepSchedule::one_over_sqrt_k() { return {ScheduleKind::kOneOverSqrtK, 0.0}; }

StepSchedule StepSchedule::diminishing(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("diminishing step needs c > 0");
  return {ScheduleKind::kDiminishing, c};
}

double StepSchedule::step(std::size_t k) const {
  const double kk = static_cast<double>(k) + 1.0;
  switch (kind_) {
    case ScheduleKind::kConstant: return parameter_;
    case ScheduleKind::kOneOverSqrtT: return 1.0 / std::sqrt(parameter_);
    case ScheduleKind::kOneOverSqrtK: return 1.0 / std::sqrt(kk);
    case ScheduleKind::kDiminishing: return parameter_ / kk;
  }
  return 0.0;
}

std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kCentralized: return "centralized";
    case Algorithm::kDecentralized: return "decentralized";
    case Algorithm::kProjected: return "projected";
    case Algorithm::kAcceleratedSubgradient: return "accelerated";
    case Algorithm::kExtra: return "extra";
    case Algorithm::kDiging: return "diging";
    case Algorithm::kSubgradientPush: return "subgradient-push";
  }
  return "unknown";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) {
  for (Algorithm a : {Algorithm::kCentralized, Algorithm::kDecentralized, Algorithm::kProjected,
                      Algorithm::kAcceleratedSubgradient, Algorithm::kExtra, Algorithm::kDiging,
                      Algorithm::kSubgradientPush}) {
    if (algorithm_name(a) == name) return a;
  }
  return std::nullopt;
}

OptTrace centralized_subgradient(const ObjectiveSet& set, const Eigen::VectorXd& u0,
                                 const StepSchedule& schedule, std::size_t horizon,
                                 const OptOptions& options) {
  if (static_cast<std::size_t>(u0.size()) != set.dim()) {
    throw std::invalid_argument("centralized_subgradient: u0 has the wrong dimension");
  }
  OptTrace trace;
  trace.algorithm = Algorithm::kCentralized;
  Recorder rec(set, options, trace, false);
  RunningAverage avg;
  double sum_a = 0.0;
  double sum_a2 = 0.0;

  Eigen::VectorXd u = u0;
  bool stop = rec.observe(0, u.transpose(), std::nullopt);
  for (std::size_t k = 0; k < horizon && !stop; ++k) {
    const double a = schedule.step(k);
    avg.add(u, a);
    sum_a += a;
    sum_a2 += a * a;
    u = u - a * set.subgradient(u);
    trace.iterations = k + 1;
    stop = rec.observe(k + 1, u.transpose(), rec.gap(avg.value()));
  }
  rec.finish();
  trace.final_state = u.transpose();
  trace.running_average = avg.empty() ? u0 : avg.value();

  BoundCheck b;
  b.name = "centralized-subgradient";
  if (!set.lipschitz()) {
    b.note = "subgradients are not uniformly bounded for this objective set";
  } else if (sum_a <= 0.0) {
    b.note = "no steps taken";
  } else {
    const double l = *set.lipschitz();
    b.applicable = true;
    b.measured = rec.gap(trace.running_average);
    b.rhs = ((u0 - set.x_star()).squaredNorm() + l * l * sum_a2) / (2.0 * sum_a);
    b.satisfied = b.measured <= b.rhs;
  }
  trace.bounds.push_back(std::move(b));
  return trace;
}

OptTrace decentralized_subgradient(const GraphSequence& seq, const WeightRule& weights,
                                   const ObjectiveSet& set, const Eigen::MatrixXd& x0,
                                   const StepSchedule& schedule, std::size_t horizon,
                                   const OptOptions& options) {
  require_state(set, seq.size(), x0, "decentralized_subgradient");
  OptTrace trace;
  trace.algorithm = Algorithm::kDecentralized;
  Recorder rec(set, options, trace, false);
  MatrixStream stream(seq, weights);
  RunningAverage avg;

  Eigen::MatrixXd x = x0;
  bool stop = rec.observe(0, x, std::nullopt);
  for (std::size_t k = 0; k < horizon && !stop; ++k) {
    const MixingMatrix& a = stream.at(k);
    require_doubly(a, "decentralized_subgradient");
    const double step = schedule.step(k);
    const Eigen::MatrixXd g = stacked_subgradient(set, x);
    const Eigen::VectorXd ybar = column_mean(x);
    avg.add(ybar, step);
    x = a.apply(x) - step * g;
    const Eigen::VectorXd expected = ybar - step * column_mean(g);
    trace.max_average_dynamics_error =
        std::max(trace.max_average_dynamics_error, (column_mean(x) - expected).cwiseAbs().maxCoeff());
    trace.iterations = k + 1;
    stop = rec.observe(k + 1, x, rec.gap(avg.value()));
  }
  rec.finish();
  trace.final_state = x;
  trace.running_average = avg.empty() ? column_mean(x0) : avg.value();

  BoundCheck b;
  b.name = "decentralized-subgradient";
  const bool sqrt_t = schedule.kind() == ScheduleKind::kOneOverSqrtT &&
                      schedule.parameter() == static_cast<double>(trace.iterations);
  if (!rows_identical(x0)) {
    b.note = "initial values differ across nodes; the bound needs identical x0, check skipped";
  } else if (set.dim() != 1) {
    b.note = "bound is stated for scalar decision variables";
  } else if (!set.lipschitz()) {
    b.note = "subgradients are not uniformly bounded for this objective set";
  } else if (!sqrt_t) {
    b.note = "bound needs alpha = 1/sqrt(T) over a completed run of T steps";
  } else if (seq.mode() != SequenceMode::kStatic && seq.mode() != SequenceMode::kPeriodic) {
    b.note = "lambda is only computed for static and periodic sequences";
  } else {
    std::vector<MixingMatrix> matrices;
    for (const auto& g : seq.graphs()) matrices.push_back(weights(g));
    const SpectralReport spec = spectral(matrices);
    if (spec.gap_infinite) {
      b.note = "lambda = 1; the bound is vacuous";
    } else {
      const double l = *set.lipschitz();
      const double t = static_cast<double>(trace.iterations);
      const double r = column_mean(x0)(0) - set.x_star()(0);
      b.applicable = true;
      b.measured = rec.gap(trace.running_average);
      b.rhs = (r * r + l * l) / (2.0 * std::sqrt(t)) + l * l / (std::sqrt(t) * (1.0 - spec.lambda));
      b.satisfied = b.measured <= b.rhs;
      b.note = "lambda=" + format_double(spec.lambda);
    }
  }
  trace.bounds.push_back(std::move(b));
  return trace;
}

OptTrace projected_decentralized_subgradient(const GraphSequence& seq, const WeightRule& weights,
                                             const ObjectiveSet& set, const Eigen::MatrixXd& x0,
                                             const StepSchedule& schedule, std::size_t horizon,
                                             GradientPoint order, const OptOptions& options) {
  require_state(set, seq.size(), x0, "projected_decentralized_subgradient");
  if (!set.constrained()) {
    throw std::invalid_argument("projected_decentralized_subgradient: objective set has no constraints");
  }
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (!set.constraint(i).contains(x0.row(static_cast<Eigen::Index>(i)).transpose(), 1e-9)) {
      throw std::invalid_argument("projected_decentralized_subgradient: x0 of node " +
                                  std::to_string(i) + " lies outside its constraint set");
    }
  }
  OptTrace trace;
  trace.algorithm = Algorithm::kProjected;
  Recorder rec(set, options, trace, false);
  MatrixStream stream(seq, weights);
  RunningAverage avg;

  Eigen::MatrixXd x = x0;
  bool stop = rec.observe(0, x, std::nullopt);
  for (std::size_t k = 0; k < horizon && !stop; ++k) {
    const MixingMatrix& a = stream.at(k);
    require_doubly(a, "projected_decentralized_subgradient");
    const double step = schedule.step(k);
    avg.add(column_mean(x), step);
    const Eigen::MatrixXd mixed = a.apply(x);
    const Eigen::MatrixXd g =
        stacked_subgradient(set, order == GradientPoint::kPastIterate ? x : mixed);
    const Eigen::MatrixXd v = mixed - step * g;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Constraint& c = set.constraint(static_cast<std::size_t>(i));
      x.row(i) = c.project(v.row(i).transpose()).transpose();
      const Eigen::VectorXd xi = x.row(i).transpose();
      trace.max_infeasibility = std::max(trace.max_infeasibility, (xi - c.project(xi)).norm());
      if (!c.contains(xi)) trace.feasible = false;
    }
    trace.iterations = k + 1;
    stop = rec.observe(k + 1, x, rec.gap(avg.value()));
  }
  rec.finish();
  trace.final_state = x;
  trace.running_average = avg.empty() ? column_mean(x0) : avg.value();
  return trace;
}

OptTrace accelerated_distributed_subgradient(const GraphSnapshot& g, std::size_t upper_bound,
                                             const ObjectiveSet& set, const Eigen::MatrixXd& x0,
                                             double beta, std::size_t horizon,
                                             const OptOptions& options) {
  require_state(set, g.size(), x0, "accelerated_distributed_subgradient");
  if (upper_bound < g.size()) {
    throw std::invalid_argument("accelerated_distributed_subgradient: U must be >= n");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("accelerated_distributed_subgradient: beta must be >= 0");
  }
  const MixingMatrix w = lazy_metropolis(g);
  const double momentum = accelerated_momentum(upper_bound);
  OptTrace trace;
  trace.algorithm = Algorithm::kAcceleratedSubgradient;
  Recorder rec(set, options, trace, false);
  RunningAverage avg;

  Eigen::MatrixXd x = x0;
  Eigen::MatrixXd y = x0;
  bool stop = rec.observe(0, y, std::nullopt);
  for (std::size_t k = 0; k < horizon && !stop; ++k) {
    const Eigen::MatrixXd grad = stacked_subgradient(set, y);
    avg.add(column_mean(y), 1.0);
    const Eigen::MatrixXd y_next = w.apply(x) - beta * grad;
    const Eigen::MatrixXd z_next = y - beta * grad;
    x = y_next + momentum * (y_next - z_next);
    y = y_next;
    trace.iterations = k + 1;
    stop = rec.observe(k + 1, y, rec.gap(avg.value()));
  }
  rec.finish();
  trace.final_state = y;
  trace.running_average = avg.empty() ? column_mean(x0) : avg.value();
  return trace;
}

OptTrace extra(const GraphSnapshot& g, const ObjectiveSet& set, const Eigen::MatrixXd& x0,
               std::optional<double> alpha, std::size_t horizon, const OptOptions& options,
               WeightKind weights) {
  require_state(set, g.size(), x0, "extra");
  require_smooth(set, "extra");
  if (weights != WeightKind::kMetropolis && weights != WeightKind::kLazyMetropolis) {
    throw std::invalid_argument("extra: W must be metropolis or lazy-metropolis");
  }
  const MixingMatrix w = weights == WeightKind::kMetropolis ? metropolis(g) : lazy_metropolis(g);
  const double step = alpha.value_or(1.0 / (2.0 * set.max_gradient_lipschitz()));
  if (!(step > 0.0)) throw std::invalid_argument("extra: step size must be > 0");

  OptTrace trace;
  trace.algorithm = Algorithm::kExtra;
  Recorder rec(set, options, trace, true);
  RunningAverage avg;

  Eigen::MatrixXd x_prev = x0;
  Eigen::MatrixXd g_prev = stacked_subgradient(set, x0);
  Eigen::MatrixXd wx_prev = w.apply(x0);
  Eigen::MatrixXd x = x0;
  bool stop = rec.observe(0, x0, std::nullopt);
  if (horizon > 0 && !stop) {
    avg.add(column_mean(x0), 1.0);
    x = wx_prev - step * g_prev;
    trace.iterations = 1;
    stop = rec.observe(1, x, rec.gap(avg.value()));
  }
  for (std::size_t k = 1; k < horizon && !stop; ++k) {
    avg.add(column_mean(x), 1.0);
    const Eigen::MatrixXd grad = stacked_subgradient(set, x);
    const Eigen::MatrixXd wx = w.apply(x);
    Eigen::MatrixXd next = x + wx - 0.5 * (x_prev + wx_prev) - step * (grad - g_prev);
    x_prev = std::move(x);
    wx_prev = wx;
    g_prev = grad;
    x = std::move(next);
    trace.iterations = k + 1;
    stop = rec.observe(k + 1, x, rec.gap(avg.value()));
  }
  rec.finish();
  if (trace.stop_reason == StopReason::kDiverged) {
    trace.diagnostic += "; alpha=" + format_double(step) + ", try alpha <= " +
                        format_double(1.0 / (2.0 * set.max_gradient_lipschitz()));
  }
  trace.final_state = x;
  trace.running_average = avg.empty() ? column_mean(x0) : avg.value();
  return trace;
}

OptTrace diging(const GraphSequence& seq, const WeightRule& weights, const ObjectiveSet& set,
                const Eigen::MatrixXd& x0, std::optional<double> alpha, std::size_t horizon,
                const OptOptions& options) {
  require_state(set, seq.size(), x0, "diging");
  require_smooth(set, "diging");
  const double step = alpha.value_or(1.0 / (10.0 * set.max_gradient_lipschitz()));
  if (!(step > 0.0)) throw std::invalid_argument("diging: step size must be > 0");

  OptTrace trace;
  trace.algorithm = Algorithm::kDiging;
  Recorder rec(set, options, trace, true);
  MatrixStream stream(seq, weights);
  RunningAverage avg;

  Eigen::MatrixXd x = x0;
  Eigen::MatrixXd grad = stacked_subgradient(set, x0);
  Eigen::MatrixXd y = grad;
  // For the eliminated two-step recursion on static graphs.
  std::optional<Eigen::MatrixXd> x_prev;
  Eigen::MatrixXd g_prev;

  bool stop = rec.observe(0, x, std::nullopt);
  for (std::size_t k = 0; k < horizon && !stop; ++k) {
    const MixingMatrix& w = stream.at(k);
    require_doubly(w, "diging");
    avg.add(column_mean(x), 1.0);
    const Eigen::MatrixXd wx = w.apply(x);
    Eigen::MatrixXd x_next = wx - step * y;
    Eigen::MatrixXd g_next = stacked_subgradient(set, x_next);
    y = w.apply(y) + g_next - grad;
    trace.max_tracking_error = std::max(
        trace.max_tracking_error, (column_mean(y) - column_mean(g_next)).cwiseAbs().maxCoeff());
    if (seq.is_static() && x_prev) {
      const Eigen::MatrixXd predicted =
          2.0 * wx - w.apply(w.apply(*x_prev)) - step * (grad - g_prev);
      trace.max_recursion_residual =
          std::max(trace.max_recursion_residual, (x_next - predicted).cwiseAbs().maxCoeff());
    }
    x_prev = std::move(x);
    g_prev = std::move(grad);
    x = std::move(x_next);
    grad = std::move(g_next);
    trace.iterations = k + 1;
    stop = rec.observe(k + 1, x, rec.gap(avg.value()));
  }
  rec.finish();
  if (trace.stop_reason == StopReason::kDiverged) {
    trace.diagnostic += "; alpha=" + format_double(step) + ", try a smaller step size";
  }
  trace.final_state = x;
  trace.running_average = avg.empty() ? column_mean(x0) : avg.value();
  return trace;
}

double subgradient_push_bound(std::size_t n, std::size_t block_length, double lipschitz,
                              double mean_x0_minus_opt, double sum_abs_x0, std::size_t t) {
  if (t == 0) throw std::invalid_argument("subgradient_push_bound: t must be >= 1");
  const double nn = static_cast<double>(n);
  const double nb = nn * static_cast<double>(block_length);
  const double delta = std::exp(-nb * std::log(nn));
  // 1 - (1 - delta)^{1/(nB)} without cancellation.
  const double one_minus_lambda = -std::expm1(std::log1p(-delta) / nb);
  const double denom = delta * one_minus_lambda;
  const double c = denom > 0.0 ? 24.0 / denom : kInf;
  const double tt = static_cast<double>(t);
  const double root = std::sqrt(tt);
  const double l = lipschitz;
  // The last term carries ln k with k = t - 1; ln 0 is replaced by ln 1.
  const double log_k = std::log(std::max(1.0, tt - 1.0));
  return 0.5 * nn * std::abs(mean_x0_minus_opt) / root +
         l * l * (1.0 + std::log(tt)) / (2.0 * nn * root) + c * l * sum_abs_x0 / root +
         c * l * l * (1.0 + log_k) / root;
}

OptTrace subgradient_push(const GraphSequence& seq, const ObjectiveSet& set,
                          const Eigen::MatrixXd& x0, const StepSchedule& schedule,
                          std::size_t horizon, const OptOptions& options) {
  require_state(set, seq.size(), x0, "subgradient_push");
  const std::size_t n = seq.size();
  OptTrace trace;
  trace.algorithm = Algorithm::kSubgradientPush;
  Recorder rec(set, options, trace, false);
  MatrixStream stream(seq, [](const GraphSnapshot& g) { return push_sum_matrix(g); });

  const bool bound_applicable = set.dim() == 1 && set.lipschitz().has_value();
  const double mean_offset = bound_applicable ? column_mean(x0)(0) - set.x_star()(0) : 0.0;
  const double sum_abs = x0.cwiseAbs().sum();
  BoundCheck bound;
  bound.name = "subgradient-push";
  bound.satisfied = true;

  Eigen::MatrixXd x = x0;
  Eigen::MatrixXd z = x0;
  Eigen::VectorXd y = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  Eigen::MatrixXd z_tilde = Eigen::MatrixXd::Zero(x0.rows(), x0.cols());
  double s = 0.0;
  double worst_margin = -kInf;

  bool stop = rec.observe(0, z, std::nullopt);
  for (std::size_t k = 0; k < horizon && !stop; ++k) {
    const MixingMatrix& a = stream.at(k);
    const double step = schedule.step(k);
    const Eigen::MatrixXd w = a.apply(x);
    const Eigen::VectorXd y_next = a.apply(y);

    const double x_scale = x.cwiseAbs().sum();
    if (x_scale > 0.0) {
      trace.max_mass_drift_w = std::max(trace.max_mass_drift_w, std::abs(w.sum() - x.sum()) / x_scale);
    }
    trace.max_mass_drift_y =
        std::max(trace.max_mass_drift_y, std::abs(y_next.sum() - y.sum()) / static_cast<double>(n));
    const double y_min = y_next.minCoeff();
    if (y_min < 1e-300) {
      throw NumericalError("subgradient_push: mass variable underflow at k=" + std::to_string(k + 1));
    }
    trace.min_y = std::min(trace.min_y, y_min);
    y = y_next;

    z = w.array().colwise() / y.array();
    x = w - step * stacked_subgradient(set, z);
    const double s_next = s + step;
    // Same arithmetic as RunningAverage, so n = 1 matches the centralized run.
    if (s == 0.0 && step > 0.0) {
      z_tilde = z;
    } else if (step > 0.0) {
      z_tilde += (step / s_next) * (z - z_tilde);
    }
    s = s_next;

    double running = -kInf;
    for (Eigen::Index i = 0; i < z_tilde.rows(); ++i) {
      running = std::max(running, rec.gap(z_tilde.row(i).transpose()));
    }
    if (bound_applicable && s > 0.0) {
      const double rhs = subgradient_push_bound(n, seq.block_length(), *set.lipschitz(),
                                                mean_offset, sum_abs, k + 1);
      const double margin = running - rhs;
      if (margin > worst_margin) {
        worst_margin = margin;
        bound.measured = running;
        bound.rhs = rhs;
      }
      if (!(running <= rhs)) bound.satisfied = false;
    }
    trace.iterations = k + 1;
    stop = rec.observe(k + 1, z, s > 0.0 ? std::optional<double>(running) : std::nullopt);
  }
  rec.finish();
  trace.final_state = z;
  trace.z_tilde = s > 0.0 ? z_tilde : x0;
  trace.running_average = column_mean(trace.z_tilde);

  if (!bound_applicable) {
    bound.satisfied = false;
    bound.note = set.dim() != 1 ? "bound is stated for scalar decision variables"
                                : "subgradients are not uniformly bounded for this objective set";
  } else if (trace.iterations == 0) {
    bound.satisfied = false;
    bound.note = "no steps taken";
  } else {
    bound.applicable = true;
    bound.note = "checked at every step with delta = n^-nB, lambda = (1 - n^-nB)^(1/nB); "
                 "values shown at the tightest step";
  }
  trace.bounds.push_back(std::move(bound));
  return trace;
}

LinearFit fit_log_error(const OptTrace& trace, double skip_fraction) {
  if (trace.rows.empty()) throw std::invalid_argument("fit_log_error: empty trace");
  // Round-off plateau: once the error is this small the samples carry no rate.
  const double floor = 1e-11 * std::max(1.0, trace.rows.front().optimality_error);
  std::size_t end = 0;
  while (end < trace.rows.size() && trace.rows[end].optimality_error > floor) ++end;
  if (end == 0) throw std::invalid_argument("fit_log_error: no samples above the round-off floor");
  const double cutoff = skip_fraction * static_cast<double>(trace.rows[end - 1].k);
  std::vector<double> ks;
  std::vector<double> logs;
  for (std::size_t r = 0; r < end; ++r) {
    const auto& row = trace.rows[r];
    if (static_cast<double>(row.k) < cutoff) continue;
    ks.push_back(static_cast<double>(row.k));
    logs.push_back(std::log(row.optimality_error));
  }
  return fit_line(ks, logs);
}

}  // namespace decopt
