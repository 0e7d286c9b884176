#include "decopt/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "decopt/error.hpp"

namespace decopt {

namespace {

void require_state(const Eigen::MatrixXd& x, std::size_t n, const char* who) {
  if (static_cast<std::size_t>(x.rows()) != n || x.cols() < 1) {
    throw std::invalid_argument(std::string(who) + ": initial state must be " + std::to_string(n) +
                                " x d with d >= 1");
  }
  if (!x.allFinite()) throw std::invalid_argument(std::string(who) + ": non-finite initial state");
}

double log_inverse(double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
  return std::max(1.0, std::log(1.0 / eps));
}

bool should_record(std::size_t k, std::size_t stride) { return stride <= 1 || k % stride == 0; }

}  // namespace

std::string_view stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::kConverged: return "converged";
    case StopReason::kConsensusNotAverage: return "consensus-not-average";
    case StopReason::kCapReached: return "cap-reached";
    case StopReason::kHorizonReached: return "horizon-reached";
    case StopReason::kDiverged: return "diverged";
  }
  return "unknown";
}

std::size_t default_consensus_cap(std::size_t n, double eps) {
  const double nn = static_cast<double>(n);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(10.0 * nn * nn * log_inverse(eps))));
}

std::size_t default_accelerated_cap(std::size_t upper_bound, double eps) {
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(100.0 * static_cast<double>(upper_bound) * log_inverse(eps))));
}

double deviation_from(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& center) {
  return (x.rowwise() - center).norm();
}

double state_spread(const Eigen::MatrixXd& x) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) s = std::max(s, spread(x.col(c)));
  return s;
}

MatrixStream::MatrixStream(const GraphSequence& seq, WeightRule rule)
    : seq_(seq), rule_(std::move(rule)) {
  if (seq.mode() == SequenceMode::kStatic) {
    cache_.push_back(rule_(seq.at(0)));
  } else if (seq.mode() == SequenceMode::kPeriodic) {
    for (const auto& g : seq.graphs()) cache_.push_back(rule_(g));
  }
}

const MixingMatrix& MatrixStream::at(std::size_t k) {
  if (!cache_.empty()) return cache_[k % cache_.size()];
  scratch_.emplace(rule_(seq_.at(k)));
  return *scratch_;
}

RunTrace run_consensus(const GraphSequence& seq, const WeightRule& rule, const Eigen::MatrixXd& x0,
                       double eps, std::optional<std::size_t> cap, std::size_t trace_stride) {
  const std::size_t n = seq.size();
  require_state(x0, n, "run_consensus");
  const std::size_t limit = cap.value_or(default_consensus_cap(n, eps));
  if (limit < 1) throw std::invalid_argument("run_consensus: cap must be >= 1");

  RunTrace trace;
  const Eigen::RowVectorXd mean0 = x0.colwise().mean();
  const double err0 = deviation_from(x0, mean0);
  const double spread0 = state_spread(x0);
  const double mean_scale = std::max(1.0, mean0.cwiseAbs().maxCoeff());
  trace.initial_error = err0;
  trace.rows.push_back({0, err0, spread0, std::nullopt});
  trace.final_state = x0;
  if (err0 == 0.0) {
    trace.t_eps = 0;
    trace.stop_reason = StopReason::kConverged;
    return trace;
  }

  MatrixStream stream(seq, rule);
  Eigen::MatrixXd x = x0;
  bool all_doubly = true;
  trace.stop_reason = StopReason::kCapReached;
  std::size_t k = 0;
  while (k < limit) {
    const MixingMatrix& a = stream.at(k);
    if (a.size() != n) throw std::invalid_argument("run_consensus: weight rule changed dimension");
    all_doubly = all_doubly && a.klass() == Stochasticity::kDoubly;
    x = a.apply(x);
    ++k;
    const double err = deviation_from(x, mean0);
    const double sp = state_spread(x);
    if (all_doubly) {
      const double drift = (x.colwise().mean() - mean0).cwiseAbs().maxCoeff() / mean_scale;
      trace.max_mean_drift = std::max(trace.max_mean_drift, drift);
    }
    const bool converged = err <= eps * err0;
    const bool agreed = !all_doubly && sp <= eps * spread0;
    if (should_record(k, trace_stride) || converged || agreed || k == limit) {
      trace.rows.push_back({k, err, sp, std::nullopt});
    }
    if (converged) {
      trace.t_eps = k;
      trace.stop_reason = StopReason::kConverged;
      break;
    }
    if (agreed) {
      trace.stop_reason = StopReason::kConsensusNotAverage;
      trace.note = "limit is a consensus value but not necessarily the initial average";
      break;
    }
  }
  trace.iterations = k;
  trace.final_state = std::move(x);
  return trace;
}

RunTrace run_perturbed_consensus(const GraphSequence& seq, const WeightRule& rule,
                                 const Eigen::MatrixXd& x0,
                                 std::span<const Eigen::MatrixXd> perturbations) {
  const std::size_t n = seq.size();
  require_state(x0, n, "run_perturbed_consensus");
  RunTrace trace;
  auto current_error = [](const Eigen::MatrixXd& x) {
    return deviation_from(x, x.colwise().mean());
  };
  trace.initial_error = current_error(x0);
  trace.rows.push_back({0, trace.initial_error, state_spread(x0), std::nullopt});

  MatrixStream stream(seq, rule);
  Eigen::MatrixXd x = x0;
  for (std::size_t k = 0; k < perturbations.size(); ++k) {
    const auto& delta = perturbations[k];
    if (delta.rows() != x.rows() || delta.cols() != x.cols()) {
      throw std::invalid_argument("run_perturbed_consensus: perturbation " + std::to_string(k) +
                                  " has the wrong dimension");
    }
    const MixingMatrix& a = stream.at(k);
    if (a.klass() != Stochasticity::kDoubly) {
      throw std::invalid_argument("run_perturbed_consensus: weights must be doubly stochastic");
    }
    x = a.apply(x) + delta;
    trace.rows.push_back({k + 1, current_error(x), state_spread(x), std::nullopt});
  }
  trace.iterations = perturbations.size();
  trace.stop_reason = StopReason::kHorizonReached;
  trace.final_state = std::move(x);
  return trace;
}

double accelerated_momentum(std::size_t upper_bound) {
  return 1.0 - 2.0 / (9.0 * static_cast<double>(upper_bound) + 1.0);
}

RunTrace run_accelerated(const GraphSnapshot& g, std::size_t upper_bound,
                         const Eigen::MatrixXd& w0, double eps, std::optional<std::size_t> cap,
                         std::size_t trace_stride) {
  const std::size_t n = g.size();
  if (g.directed()) throw std::invalid_argument("run_accelerated: graph must be undirected");
  if (!g.strongly_connected()) throw std::invalid_argument("run_accelerated: graph must be connected");
  if (upper_bound < n) {
    throw std::invalid_argument("run_accelerated: U=" + std::to_string(upper_bound) +
                                " is below n=" + std::to_string(n));
  }
  require_state(w0, n, "run_accelerated");
  const std::size_t limit = cap.value_or(default_accelerated_cap(upper_bound, eps));

  const MixingMatrix w_mix = lazy_metropolis(g);
  const double momentum = accelerated_momentum(upper_bound);
  const double decay = 1.0 - 1.0 / (9.0 * static_cast<double>(upper_bound));

  RunTrace trace;
  const Eigen::RowVectorXd mean0 = w0.colwise().mean();
  const double err0 = deviation_from(w0, mean0);
  const double err0_sq = err0 * err0;
  // Round-off allowance once the error reaches machine precision.
  const double floor = 8.0 * static_cast<double>(n) * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, w0.cwiseAbs().maxCoeff());
  const double slack = floor * floor;
  trace.initial_error = err0;
  trace.rows.push_back({0, err0, state_spread(w0), std::nullopt});
  trace.final_state = w0;
  if (err0 == 0.0) {
    trace.t_eps = 0;
    trace.stop_reason = StopReason::kConverged;
    return trace;
  }

  Eigen::MatrixXd w = w0;
  Eigen::MatrixXd u = w0;
  double envelope = 2.0 * err0_sq;
  trace.stop_reason = StopReason::kCapReached;
  std::size_t k = 0;
  while (k < limit) {
    Eigen::MatrixXd w_next = w_mix.apply(u);
    u = w_next + momentum * (w_next - w);
    w = std::move(w_next);
    ++k;
    envelope *= decay;
    const double err = deviation_from(w, mean0);
    const double err_sq = err * err;
    trace.max_envelope_ratio = std::max(trace.max_envelope_ratio, err_sq / envelope);
    if (err_sq > envelope + slack) trace.envelope_ok = false;
    const bool converged = err <= eps * err0;
    if (should_record(k, trace_stride) || converged || k == limit) {
      trace.rows.push_back({k, err, state_spread(w), std::nullopt});
    }
    if (converged) {
      trace.t_eps = k;
      trace.stop_reason = StopReason::kConverged;
      break;
    }
  }
  trace.iterations = k;
  trace.final_state = std::move(w);
  return trace;
}

RunTrace run_accelerated(const GraphSequence& seq, std::size_t upper_bound,
                         const Eigen::MatrixXd& w0, double eps, std::optional<std::size_t> cap,
                         std::size_t trace_stride) {
  if (!seq.is_static()) {
    throw std::invalid_argument("run_accelerated: only fixed graphs are supported, got " +
                                std::string(sequence_mode_name(seq.mode())));
  }
  return run_accelerated(seq.at(0), upper_bound, w0, eps, cap, trace_stride);
}

RunTrace run_push_sum(const GraphSequence& seq, const Eigen::MatrixXd& x0, double eps,
                      std::optional<std::size_t> cap, std::size_t trace_stride) {
  const std::size_t n = seq.size();
  require_state(x0, n, "run_push_sum");
  const double nn = static_cast<double>(n);
  const std::size_t limit = cap.value_or(std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(10.0 * nn * nn * static_cast<double>(seq.block_length()) *
                                            log_inverse(eps)))));

  RunTrace trace;
  const Eigen::RowVectorXd mean0 = x0.colwise().mean();
  const double spread0 = state_spread(x0);
  const double mass_scale = std::max(x0.cwiseAbs().sum(), std::numeric_limits<double>::min());
  auto ratio_error = [&](const Eigen::MatrixXd& z) {
    return (z.rowwise() - mean0).cwiseAbs().maxCoeff();
  };

  trace.initial_error = deviation_from(x0, mean0);
  trace.rows.push_back({0, trace.initial_error, spread0, 1.0});
  trace.min_y = 1.0;
  trace.final_state = x0;
  if (spread0 == 0.0) {
    trace.t_eps = 0;
    trace.stop_reason = StopReason::kConverged;
    return trace;
  }

  MatrixStream stream(seq, [](const GraphSnapshot& g) { return push_sum_matrix(g); });
  Eigen::MatrixXd x = x0;
  Eigen::VectorXd y = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  Eigen::MatrixXd z = x0;
  trace.stop_reason = StopReason::kCapReached;
  std::size_t k = 0;
  while (k < limit) {
    const MixingMatrix& a = stream.at(k);
    Eigen::MatrixXd x_next = a.apply(x);
    Eigen::VectorXd y_next = a.sparse() * y;
    const double drift_x =
        (x_next.colwise().sum() - x.colwise().sum()).cwiseAbs().maxCoeff() / mass_scale;
    const double drift_y = std::abs(y_next.sum() - y.sum()) / nn;
    trace.max_mean_drift = std::max(trace.max_mean_drift, drift_x);
    trace.max_mass_drift_y = std::max(trace.max_mass_drift_y, drift_y);
    const double min_y = y_next.minCoeff();
    if (!(min_y >= 1e-300)) {
      throw NumericalError("run_push_sum: y underflow (min y = " + std::to_string(min_y) +
                           ") at step " + std::to_string(k + 1));
    }
    trace.min_y = std::min(*trace.min_y, min_y);
    x = std::move(x_next);
    y = std::move(y_next);
    z = x.array().colwise() / y.array();
    ++k;
    const bool converged = ratio_error(z) <= eps * spread0;
    if (should_record(k, trace_stride) || converged || k == limit) {
      trace.rows.push_back({k, deviation_from(z, mean0), state_spread(z), min_y});
    }
    if (converged) {
      trace.t_eps = k;
      trace.stop_reason = StopReason::kConverged;
      break;
    }
  }
  trace.iterations = k;
  trace.final_state = std::move(z);
  return trace;
}

Eigen::MatrixXd transition_product(const GraphSequence& seq, const WeightRule& rule,
                                   std::size_t k_start, std::size_t k_end) {
  const auto n = static_cast<Eigen::Index>(seq.size());
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(n, n);
  for (std::size_t k = k_start; k < k_end; ++k) p = rule(seq.at(k)).entries() * p;
  return p;
}

}  // namespace decopt
