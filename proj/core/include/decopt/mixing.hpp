#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "decopt/graphs.hpp"

namespace decopt {

enum class Stochasticity { kRow, kDoubly, kColumn };

std::string_view stochasticity_name(Stochasticity s);

/// Tolerance on row/column sums used when validating a MixingMatrix.
inline constexpr double kStochasticTolerance = 1e-12;

/// Dense nonnegative weight matrix A^k with a declared stochasticity class.
///
/// Construction validates the class (throws std::invalid_argument). A sparse
/// copy is kept alongside the dense entries so that iterations cost O(arcs).
class MixingMatrix {
 public:
  MixingMatrix(Eigen::MatrixXd entries, Stochasticity klass);

  std::size_t size() const noexcept { return static_cast<std::size_t>(entries_.rows()); }
  Stochasticity klass() const noexcept { return klass_; }
  const Eigen::MatrixXd& entries() const noexcept { return entries_; }
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& sparse() const noexcept { return sparse_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }

  bool row_stochastic() const { return klass_ != Stochasticity::kColumn; }
  bool column_stochastic() const { return klass_ != Stochasticity::kRow; }

  /// Maximum deviation of any row sum / column sum from one.
  double max_row_sum_error() const;
  double max_column_sum_error() const;

  /// Directed graph G_A with arc (j, i) whenever a_ij > 0.
  GraphSnapshot support_graph() const;

  /// Applies the matrix to every column of `x` (an n x d state).
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const { return sparse_ * x; }

 private:
  Eigen::MatrixXd entries_;
  Stochasticity klass_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> sparse_;
};

/// Metropolis weights on an undirected graph: a_ij = 1/max(d_i, d_j) for
/// neighbors, where degrees exclude self-loops, and the diagonal takes the
/// remainder. Symmetric and doubly stochastic.
MixingMatrix metropolis(const GraphSnapshot& g);

/// (I + metropolis(g)) / 2.
MixingMatrix lazy_metropolis(const GraphSnapshot& g);

/// Row-stochastic a_ij = 1/d_i^in for j in N_i^in (self-loop included).
MixingMatrix equal_neighbor(const GraphSnapshot& g);

/// a_ij = eps for neighbors, a_ii = 1 - eps * d_i; requires
/// 0 < eps < 1/max_degree.
MixingMatrix epsilon_weights(const GraphSnapshot& g, double eps);

/// Column-stochastic push-sum weights a_ij = 1/d_j^out for j in N_i^in.
MixingMatrix push_sum_matrix(const GraphSnapshot& g);

/// Entries below alpha zeroed, no renormalization. Only meant for
/// connectivity checks of [A]_alpha.
struct ThresholdPattern {
  Eigen::MatrixXd values;
  GraphSnapshot graph() const;
};

ThresholdPattern threshold(const MixingMatrix& m, double alpha);

enum class WeightKind {
  kMetropolis,
  kLazyMetropolis,
  kEqualNeighbor,
  kEpsilon,
  kPushSum,
};

std::string_view weight_kind_name(WeightKind w);
std::optional<WeightKind> parse_weight_kind(std::string_view name);

/// Maps a snapshot to its weight matrix.
using WeightRule = std::function<MixingMatrix(const GraphSnapshot&)>;

/// Rule for a named weight kind. kEpsilon uses eps = 1/(max_degree + 1) per
/// snapshot unless `epsilon` is given.
WeightRule make_weight_rule(WeightKind kind, std::optional<double> epsilon = std::nullopt);

struct SpectralReport {
  std::vector<double> sigma2;  // one per input matrix
  double lambda = 0.0;         // max of sigma2
  double gap_inverse = 0.0;    // 1 / (1 - lambda); +inf when flagged
  bool gap_infinite = false;
};

/// Matrices larger than this use deflated power iteration instead of a full SVD.
inline constexpr std::size_t kDenseSvdLimit = 512;

/// Second-largest singular value via a full dense SVD.
double sigma2_svd(const Eigen::MatrixXd& a);

/// Largest singular value of a doubly stochastic matrix restricted to the
/// complement of the all-ones direction, by power iteration on A^T A.
double sigma2_power(const MixingMatrix& a, double tol = 1e-12, int max_iterations = 200000);

/// sigma2 per matrix, lambda = max, gap_inverse = 1/(1 - lambda) (flagged
/// infinite once lambda >= 1 - 1e-14). Every input must be doubly stochastic.
SpectralReport spectral(std::span<const MixingMatrix> matrices);

/// Row-major CSV with shortest round-trip decimal formatting.
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);

/// max v - min v.
double spread(const Eigen::VectorXd& v);

}  // namespace decopt
