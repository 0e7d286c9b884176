#include "decopt/mixing.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace decopt {

namespace {

void require_undirected(const GraphSnapshot& g, const char* who) {
  if (g.directed()) throw std::invalid_argument(std::string(who) + " requires an undirected graph");
}

Eigen::SparseMatrix<double, Eigen::RowMajor> to_sparse(const Eigen::MatrixXd& m) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) != 0.0) triplets.emplace_back(i, j, m(i, j));
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> s(m.rows(), m.cols());
  s.setFromTriplets(triplets.begin(), triplets.end());
  return s;
}

void append_double(std::string& buf, double v) {
  char tmp[64];
  auto res = std::to_chars(tmp, tmp + sizeof(tmp), v);
  buf.append(tmp, res.ptr);
}

}  // namespace

std::string_view stochasticity_name(Stochasticity s) {
  switch (s) {
    case Stochasticity::kRow: return "row-stochastic";
    case Stochasticity::kDoubly: return "doubly-stochastic";
    case Stochasticity::kColumn: return "column-stochastic";
  }
  return "unknown";
}

MixingMatrix::MixingMatrix(Eigen::MatrixXd entries, Stochasticity klass)
    : entries_(std::move(entries)), klass_(klass) {
  if (entries_.rows() != entries_.cols() || entries_.rows() == 0) {
    throw std::invalid_argument("mixing matrix must be square and non-empty");
  }
  if (!entries_.allFinite() || (entries_.array() < 0.0).any()) {
    throw std::invalid_argument("mixing matrix entries must be finite and nonnegative");
  }
  if (row_stochastic() && max_row_sum_error() > kStochasticTolerance) {
    throw std::invalid_argument("mixing matrix declared " + std::string(stochasticity_name(klass)) +
                                " but a row sum deviates from 1 by " +
                                std::to_string(max_row_sum_error()));
  }
  if (column_stochastic() && max_column_sum_error() > kStochasticTolerance) {
    throw std::invalid_argument("mixing matrix declared " + std::string(stochasticity_name(klass)) +
                                " but a column sum deviates from 1 by " +
                                std::to_string(max_column_sum_error()));
  }
  sparse_ = to_sparse(entries_);
}

double MixingMatrix::max_row_sum_error() const {
  return (entries_.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

double MixingMatrix::max_column_sum_error() const {
  return (entries_.colwise().sum().array() - 1.0).abs().maxCoeff();
}

GraphSnapshot MixingMatrix::support_graph() const {
  GraphSnapshot g(size(), true);
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = 0; j < size(); ++j) {
      if (entries_(i, j) > 0.0) g.add_edge(j, i);
    }
  }
  return g;
}

MixingMatrix metropolis(const GraphSnapshot& g) {
  require_undirected(g, "metropolis");
  const std::size_t n = g.size();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (NodeId i = 0; i < n; ++i) {
    const double di = static_cast<double>(g.degree_without_self(i));
    double off = 0.0;
    for (NodeId j : g.out_neighbors(i)) {
      if (j == i) continue;
      const double w = 1.0 / std::max(di, static_cast<double>(g.degree_without_self(j)));
      a(i, j) = w;
      off += w;
    }
    a(i, i) = std::max(0.0, 1.0 - off);  // rounding can push an empty diagonal below zero
  }
  return MixingMatrix(std::move(a), Stochasticity::kDoubly);
}

MixingMatrix lazy_metropolis(const GraphSnapshot& g) {
  Eigen::MatrixXd a = metropolis(g).entries();
  a *= 0.5;
  a.diagonal().array() += 0.5;
  return MixingMatrix(std::move(a), Stochasticity::kDoubly);
}

MixingMatrix equal_neighbor(const GraphSnapshot& g) {
  const std::size_t n = g.size();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (NodeId i = 0; i < n; ++i) {
    const std::size_t d = g.in_degree(i);
    if (d == 0) {
      throw std::invalid_argument("equal_neighbor: node " + std::to_string(i) +
                                  " has no in-neighbors (missing self-loop?)");
    }
    for (NodeId j : g.in_neighbors(i)) a(i, j) = 1.0 / static_cast<double>(d);
  }
  // A regular enough pattern can make the result doubly stochastic, but the
  // rule only promises rows.
  return MixingMatrix(std::move(a), Stochasticity::kRow);
}

MixingMatrix epsilon_weights(const GraphSnapshot& g, double eps) {
  require_undirected(g, "epsilon_weights");
  const double max_deg = static_cast<double>(g.max_degree_without_self());
  if (!(eps > 0.0) || !(eps * max_deg < 1.0)) {
    throw std::invalid_argument("epsilon_weights: need 0 < eps < 1/max_degree; got eps=" +
                                std::to_string(eps) + " with max_degree=" +
                                std::to_string(g.max_degree_without_self()));
  }
  const std::size_t n = g.size();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j : g.out_neighbors(i)) {
      if (j != i) a(i, j) = eps;
    }
    a(i, i) = std::max(0.0, 1.0 - eps * static_cast<double>(g.degree_without_self(i)));
  }
  return MixingMatrix(std::move(a), Stochasticity::kDoubly);
}

MixingMatrix push_sum_matrix(const GraphSnapshot& g) {
  const std::size_t n = g.size();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (NodeId j = 0; j < n; ++j) {
    const std::size_t d = g.out_degree(j);
    if (d == 0) {
      throw std::invalid_argument("push_sum_matrix: node " + std::to_string(j) +
                                  " has zero out-degree");
    }
    for (NodeId i : g.out_neighbors(j)) a(i, j) = 1.0 / static_cast<double>(d);
  }
  return MixingMatrix(std::move(a), Stochasticity::kColumn);
}

GraphSnapshot ThresholdPattern::graph() const {
  const auto n = static_cast<std::size_t>(values.rows());
  GraphSnapshot g(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (values(i, j) > 0.0) g.add_edge(j, i);
    }
  }
  return g;
}

ThresholdPattern threshold(const MixingMatrix& m, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("threshold: alpha must be > 0");
  Eigen::MatrixXd v = (m.entries().array() < alpha).select(0.0, m.entries());
  return {std::move(v)};
}

std::string_view weight_kind_name(WeightKind w) {
  switch (w) {
    case WeightKind::kMetropolis: return "metropolis";
    case WeightKind::kLazyMetropolis: return "lazy-metropolis";
    case WeightKind::kEqualNeighbor: return "equal-neighbor";
    case WeightKind::kEpsilon: return "epsilon";
    case WeightKind::kPushSum: return "push-sum";
  }
  return "unknown";
}

std::optional<WeightKind> parse_weight_kind(std::string_view name) {
  for (WeightKind w : {WeightKind::kMetropolis, WeightKind::kLazyMetropolis,
                       WeightKind::kEqualNeighbor, WeightKind::kEpsilon, WeightKind::kPushSum}) {
    if (weight_kind_name(w) == name) return w;
  }
  return std::nullopt;
}

WeightRule make_weight_rule(WeightKind kind, std::optional<double> epsilon) {
  switch (kind) {
    case WeightKind::kMetropolis: return [](const GraphSnapshot& g) { return metropolis(g); };
    case WeightKind::kLazyMetropolis:
      return [](const GraphSnapshot& g) { return lazy_metropolis(g); };
    case WeightKind::kEqualNeighbor:
      return [](const GraphSnapshot& g) { return equal_neighbor(g); };
    case WeightKind::kEpsilon:
      return [epsilon](const GraphSnapshot& g) {
        const double eps =
            epsilon.value_or(1.0 / static_cast<double>(g.max_degree_without_self() + 1));
        return epsilon_weights(g, eps);
      };
    case WeightKind::kPushSum:
      return [](const GraphSnapshot& g) { return push_sum_matrix(g); };
  }
  throw std::invalid_argument("unknown weight kind");
}

double sigma2_svd(const Eigen::MatrixXd& a) {
  if (a.rows() < 2) return 0.0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues()(1);
}

double sigma2_power(const MixingMatrix& a, double tol, int max_iterations) {
  const auto n = static_cast<Eigen::Index>(a.size());
  if (n < 2) return 0.0;
  const auto& s = a.sparse();
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = gauss(rng);
  v.array() -= v.mean();
  v.normalize();
  double estimate = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::VectorXd av = s * v;
    const double next = av.norm();
    Eigen::VectorXd w = s.transpose() * av;
    w.array() -= w.mean();
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (std::abs(next - estimate) <= tol * std::max(1.0, next)) return next;
    estimate = next;
  }
  return estimate;
}

SpectralReport spectral(std::span<const MixingMatrix> matrices) {
  SpectralReport report;
  for (const auto& m : matrices) {
    if (m.klass() != Stochasticity::kDoubly) {
      throw std::invalid_argument("spectral: input must be doubly stochastic");
    }
    const double s =
        m.size() <= kDenseSvdLimit ? sigma2_svd(m.entries()) : sigma2_power(m);
    report.sigma2.push_back(s);
    report.lambda = std::max(report.lambda, s);
  }
  if (report.lambda >= 1.0 - 1e-14) {
    report.gap_infinite = true;
    report.gap_inverse = std::numeric_limits<double>::infinity();
  } else {
    report.gap_inverse = 1.0 / (1.0 - report.lambda);
  }
  return report;
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  std::string line;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) line.push_back(',');
      append_double(line, m(i, j));
    }
    line.push_back('\n');
    out << line;
  }
}

double spread(const Eigen::VectorXd& v) {
  if (v.size() == 0) return 0.0;
  return v.maxCoeff() - v.minCoeff();
}

}  // namespace decopt
