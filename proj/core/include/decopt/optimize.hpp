#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "decopt/consensus.hpp"
#include "decopt/fit.hpp"
#include "decopt/graphs.hpp"
#include "decopt/mixing.hpp"
#include "decopt/objectives.hpp"

namespace decopt {

enum class ScheduleKind { kConstant, kOneOverSqrtT, kOneOverSqrtK, kDiminishing };

std::string_view schedule_kind_name(ScheduleKind k);
std::optional<ScheduleKind> parse_schedule_kind(std::string_view name);

/// Step sizes alpha^k, k = 0, 1, 2, ...
///   constant(a):         a
///   one_over_sqrt_T(T):  1/sqrt(T)
///   one_over_sqrt_k():   1/sqrt(k+1)
///   diminishing(c):      c/(k+1)
class StepSchedule {
 public:
  static StepSchedule constant(double alpha);
  static StepSchedule one_over_sqrt_T(std::size_t horizon);
  static StepSchedule one_over_sqrt_k();
  static StepSchedule diminishing(double c);

  ScheduleKind kind() const noexcept { return kind_; }
  /// alpha for constant, c for diminishing, T for one_over_sqrt_T.
  double parameter() const noexcept { return parameter_; }
  double step(std::size_t k) const;

  bool operator==(const StepSchedule&) const = default;

 private:
  StepSchedule(ScheduleKind kind, double parameter) : kind_(kind), parameter_(parameter) {}

  ScheduleKind kind_;
  double parameter_;
};

enum class Algorithm {
  kCentralized,
  kDecentralized,
  kProjected,
  kAcceleratedSubgradient,
  kExtra,
  kDiging,
  kSubgradientPush,
};

std::string_view algorithm_name(Algorithm a);
std::optional<Algorithm> parse_algorithm(std::string_view name);

/// Where the projected method evaluates g_i^k.
enum class GradientPoint { kPastIterate, kPostMix };

struct OptRow {
  std::size_t k = 0;
  /// f(mean_i x_i^k) - f*; push-sum uses the ratios z_i^k.
  double objective_gap = 0.0;
  /// f at the step-weighted running average of the network means - f*.
  /// Push-sum: max_i f(ztilde_i^k) - f*.
  double running_avg_gap = 0.0;
  /// ||x^k - 1 mean(x^k)^T||_F.
  double consensus_error = 0.0;
  /// max_i ||x_i^k - x*||.
  double optimality_error = 0.0;
  std::vector<double> node_gaps;  // f(x_i^k) - f*, when requested
};

/// One theoretical inequality evaluated on a finished run.
struct BoundCheck {
  std::string name;
  double measured = 0.0;
  double rhs = 0.0;
  bool applicable = false;
  bool satisfied = false;
  std::string note;
};

struct OptOptions {
  std::size_t trace_stride = 1;
  bool record_node_gaps = false;
  /// Stop once optimality_error drops to this level.
  std::optional<double> target_error;
  /// Stop once running_avg_gap drops to this level.
  std::optional<double> target_gap;
};

struct OptTrace {
  Algorithm algorithm = Algorithm::kCentralized;
  std::vector<OptRow> rows;
  StopReason stop_reason = StopReason::kHorizonReached;
  std::size_t iterations = 0;
  /// First k at which the requested target was reached.
  std::optional<std::size_t> hit;
  std::string diagnostic;

  Eigen::MatrixXd final_state;          // x^K (n x d); push-sum: z^K
  Eigen::VectorXd running_average;      // weighted average of the network means
  Eigen::MatrixXd z_tilde;              // push-sum running averages (n x d)
  std::vector<BoundCheck> bounds;

  /// Invariant monitors; each is the worst value seen over the run.
  double max_average_dynamics_error = 0.0;  // decentralized: ybar update vs exact
  double max_tracking_error = 0.0;          // DIGing: |mean y - mean grad f|
  double max_recursion_residual = 0.0;      // DIGing static: EXTRA-form residual
  double max_mass_drift_w = 0.0;            // push: sum w^{k+1} vs sum x^k, relative
  double max_mass_drift_y = 0.0;            // push: sum y, relative
  double min_y = 1.0;                       // push
  double max_infeasibility = 0.0;           // projected: distance outside X_i
  bool feasible = true;
};

/// u^{k+1} = u^k - alpha^k g(u^k) on f = (1/n) sum f_i. Bound check
/// (bounded-L sets): f(ubar) - f* <= (||u0 - u*||^2 + L^2 sum alpha^2) / (2 sum alpha)
/// with ubar the step-weighted average of u^0..u^{T-1}; for alpha = 1/sqrt(T)
/// the right side is (||u0 - u*||^2 + L^2) / (2 sqrt(T)).
OptTrace centralized_subgradient(const ObjectiveSet& set, const Eigen::VectorXd& u0,
                                 const StepSchedule& schedule, std::size_t horizon,
                                 const OptOptions& options = {});

/// x_i^{k+1} = sum_j a_ij^k x_j^k - alpha^k g_i(x_i^k). With identical x0,
/// d = 1, bounded L and alpha = 1/sqrt(T) also checks
///   f(avg of ybar^0..ybar^{T-1}) - f* <= ((ybar^0 - x*)^2 + L^2)/(2 sqrt T)
///                                       + L^2 / (sqrt(T) (1 - lambda)).
OptTrace decentralized_subgradient(const GraphSequence& seq, const WeightRule& weights,
                                   const ObjectiveSet& set, const Eigen::MatrixXd& x0,
                                   const StepSchedule& schedule, std::size_t horizon,
                                   const OptOptions& options = {});

/// x_i^{k+1} = P_{X_i}[ sum_j a_ij^k x_j^k - alpha^k g_i ].
OptTrace projected_decentralized_subgradient(const GraphSequence& seq, const WeightRule& weights,
                                             const ObjectiveSet& set, const Eigen::MatrixXd& x0,
                                             const StepSchedule& schedule, std::size_t horizon,
                                             GradientPoint order = GradientPoint::kPastIterate,
                                             const OptOptions& options = {});

/// y^{k+1} = x^k + (1/2) sum_j (x_j^k - x_i^k)/max(d_i, d_j) - beta g(y^k)
/// z^{k+1} = y^k - beta g(y^k)
/// x^{k+1} = y^{k+1} + (1 - 2/(9U+1)) (y^{k+1} - z^{k+1}),   y^0 = x^0.
/// Gaps are measured on the y iterates.
OptTrace accelerated_distributed_subgradient(const GraphSnapshot& g, std::size_t upper_bound,
                                             const ObjectiveSet& set, const Eigen::MatrixXd& x0,
                                             double beta, std::size_t horizon,
                                             const OptOptions& options = {});

/// x^1 = W x^0 - alpha grad(x^0)
/// x^{k+2} = (I + W) x^{k+1} - Wt x^k - alpha (grad(x^{k+1}) - grad(x^k)),
/// Wt = (I + W)/2. Default alpha = 1/(2 max_i L_i).
OptTrace extra(const GraphSnapshot& g, const ObjectiveSet& set, const Eigen::MatrixXd& x0,
               std::optional<double> alpha, std::size_t horizon, const OptOptions& options = {},
               WeightKind weights = WeightKind::kLazyMetropolis);

/// x^{k+1} = W^k x^k - alpha y^k
/// y^{k+1} = W^k y^k + grad(x^{k+1}) - grad(x^k),   y^0 = grad(x^0).
/// Default alpha = 1/(10 max_i L_i).
OptTrace diging(const GraphSequence& seq, const WeightRule& weights, const ObjectiveSet& set,
                const Eigen::MatrixXd& x0, std::optional<double> alpha, std::size_t horizon,
                const OptOptions& options = {});

/// w^{k+1} = A^k x^k,  y^{k+1} = A^k y^k,  z^{k+1} = w^{k+1} ./ y^{k+1},
/// x^{k+1} = w^{k+1} - alpha^{k+1} g(z^{k+1}),
/// ztilde^{k+1} = (alpha^{k+1} z^{k+1} + S^k ztilde^k) / S^{k+1},
/// S^{k+1} = S^k + alpha^{k+1}, with A^k = push_sum_matrix(G^k), y^0 = 1 and
/// alpha^{k+1} = schedule.step(k).
OptTrace subgradient_push(const GraphSequence& seq, const ObjectiveSet& set,
                          const Eigen::MatrixXd& x0, const StepSchedule& schedule,
                          std::size_t horizon, const OptOptions& options = {});

/// Right side of the subgradient-push bound after t >= 1 steps, with the
/// worst-case substitutions delta = n^{-nB} and lambda = (1 - n^{-nB})^{1/(nB)}.
/// May be +inf when these constants underflow.
double subgradient_push_bound(std::size_t n, std::size_t block_length, double lipschitz,
                              double mean_x0_minus_opt, double sum_abs_x0, std::size_t t);

/// Fit of log(optimality_error) against k over the rows after the first
/// skip_fraction of the run, stopping where the error reaches the round-off
/// floor (1e-11 relative to the initial error).
LinearFit fit_log_error(const OptTrace& trace, double skip_fraction = 0.1);

}  // namespace decopt
