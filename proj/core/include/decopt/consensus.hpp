#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "decopt/graphs.hpp"
#include "decopt/mixing.hpp"

namespace decopt {

enum class StopReason {
  kConverged,            // deviation from the initial mean reached eps
  kConsensusNotAverage,  // states agree (spread reached eps) but not on the initial mean
  kCapReached,
  kHorizonReached,       // fixed-length runs that completed all steps
  kDiverged,
};

std::string_view stop_reason_name(StopReason r);

struct TraceRow {
  std::size_t k = 0;
  double consensus_error = 0.0;
  double spread = 0.0;
  std::optional<double> min_y;  // push-sum only
};

/// Per-iteration record of an averaging run.
struct RunTrace {
  std::vector<TraceRow> rows;
  StopReason stop_reason = StopReason::kCapReached;
  std::optional<std::size_t> t_eps;
  std::size_t iterations = 0;
  Eigen::MatrixXd final_state;  // x^K, or z^K for push-sum
  double initial_error = 0.0;

  /// Largest |mean(x^k) - mean(x^0)| seen (relative to max(1, |mean(x^0)|)).
  /// For push-sum: relative drift of sum(x) between consecutive steps.
  double max_mean_drift = 0.0;
  /// Push-sum: relative drift of sum(y) between consecutive steps.
  double max_mass_drift_y = 0.0;
  /// Push-sum: min over all k, i of y_i^k.
  std::optional<double> min_y;

  /// Accelerated runs: every step satisfied the squared-error envelope.
  bool envelope_ok = true;
  /// Accelerated runs: max over k of error^2 / envelope^2.
  double max_envelope_ratio = 0.0;

  std::string note;
};

/// 10 n^2 ln(1/eps), at least 1.
std::size_t default_consensus_cap(std::size_t n, double eps);
/// 100 U ln(1/eps), at least 1.
std::size_t default_accelerated_cap(std::size_t upper_bound, double eps);

/// ||x - 1 c^T||_F for a row vector c (the per-coordinate center).
double deviation_from(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& center);
/// Largest per-coordinate spread of an n x d state.
double state_spread(const Eigen::MatrixXd& x);

/// x^{k+1} = A^k x^k with A^k = rule(G^k). T_eps is the first k with
/// ||x^k - mean(x^0) 1|| <= eps ||x^0 - mean(x^0) 1|| (T_eps = 0 if the initial
/// deviation is zero). Runs that never reach this but whose spread shrinks
/// by eps (row-stochastic limits) stop with kConsensusNotAverage.
RunTrace run_consensus(const GraphSequence& seq, const WeightRule& rule, const Eigen::MatrixXd& x0,
                       double eps, std::optional<std::size_t> cap = std::nullopt,
                       std::size_t trace_stride = 1);

/// x^{k+1} = A^k x^k + Delta^k for k < perturbations.size(). The trace's
/// consensus_error is ||x^k - mean(x^k) 1||, the deviation from the current
/// mean. Weights must be doubly stochastic.
RunTrace run_perturbed_consensus(const GraphSequence& seq, const WeightRule& rule,
                                 const Eigen::MatrixXd& x0,
                                 std::span<const Eigen::MatrixXd> perturbations);

/// Momentum-accelerated lazy-Metropolis averaging on a fixed undirected graph:
///   w^{k+1} = lazy_metropolis(g) u^k
///   u^{k+1} = w^{k+1} + (1 - 2/(9U+1)) (w^{k+1} - w^k),  u^0 = w^0.
/// Each step is checked against
///   ||w^k - wbar 1||^2 <= 2 (1 - 1/(9U))^k ||w^0 - wbar 1||^2.
RunTrace run_accelerated(const GraphSnapshot& g, std::size_t upper_bound,
                         const Eigen::MatrixXd& w0, double eps,
                         std::optional<std::size_t> cap = std::nullopt,
                         std::size_t trace_stride = 1);

/// Sequence overload; anything but a static sequence is rejected.
RunTrace run_accelerated(const GraphSequence& seq, std::size_t upper_bound,
                         const Eigen::MatrixXd& w0, double eps,
                         std::optional<std::size_t> cap = std::nullopt,
                         std::size_t trace_stride = 1);

/// Momentum coefficient 1 - 2/(9U+1).
double accelerated_momentum(std::size_t upper_bound);

/// Push-sum ratio consensus: x^{k+1} = A^k x^k, y^{k+1} = A^k y^k with
/// column-stochastic A^k = push_sum_matrix(G^k), y^0 = 1, z = x ./ y.
/// Stops once max_i |z_i - mean(x^0)| <= eps * spread(x^0). Throws
/// NumericalError if some y_i drops below 1e-300.
RunTrace run_push_sum(const GraphSequence& seq, const Eigen::MatrixXd& x0, double eps,
                      std::optional<std::size_t> cap = std::nullopt,
                      std::size_t trace_stride = 1);

/// A^{k_end-1} ... A^{k_start} with A^k = rule(G^k); identity when k_end <= k_start.
Eigen::MatrixXd transition_product(const GraphSequence& seq, const WeightRule& rule,
                                   std::size_t k_start, std::size_t k_end);

/// Caches weight matrices for static and periodic sequences; builds them on
/// demand otherwise.
class MatrixStream {
 public:
  MatrixStream(const GraphSequence& seq, WeightRule rule);
  const MixingMatrix& at(std::size_t k);

 private:
  const GraphSequence& seq_;
  WeightRule rule_;
  std::vector<MixingMatrix> cache_;
  std::optional<MixingMatrix> scratch_;
};

}  // namespace decopt
