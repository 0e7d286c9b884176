#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace decopt {

enum class ObjectiveKind { kQuadratic, kAbsolute, kHuber, kLogistic };

std::string_view objective_kind_name(ObjectiveKind k);

/// Tiny labelled dataset for the logistic kind. Labels are +1 / -1.
struct LogisticData {
  Eigen::MatrixXd features;  // m x d
  Eigen::VectorXd labels;    // m
  double ridge = 1e-3;
};

/// Seeded synthetic dataset with m points in d dimensions.
LogisticData make_logistic_data(std::size_t m, std::size_t d, std::uint64_t seed);

/// One node's convex objective f_i.
///
///   quadratic(a, b):  (a/2) ||x - b||^2, a > 0
///   absolute(b):      ||x - b||_2
///   huber(b, delta):  ||x - b||^2 / (2 delta) inside the delta-ball,
///                     ||x - b|| - delta/2 outside
///   logistic(data):   mean log(1 + exp(-y a^T x)) + (ridge/2) ||x||^2
class LocalObjective {
 public:
  static LocalObjective quadratic(double a, Eigen::VectorXd b);
  static LocalObjective quadratic(double a, double b);
  static LocalObjective absolute(Eigen::VectorXd b);
  static LocalObjective absolute(double b);
  static LocalObjective huber(Eigen::VectorXd b, double delta);
  static LocalObjective huber(double b, double delta);
  static LocalObjective logistic(LogisticData data);

  ObjectiveKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(center_.size()); }
  double curvature() const noexcept { return a_; }
  double delta() const noexcept { return delta_; }
  const Eigen::VectorXd& center() const noexcept { return center_; }
  const LogisticData& data() const noexcept { return data_; }

  double value(const Eigen::VectorXd& x) const;
  /// Gradient where differentiable. At the kink of kAbsolute (x == b) the
  /// subdifferential is the unit ball and 0 is returned.
  Eigen::VectorXd subgradient(const Eigen::VectorXd& x) const;

  bool smooth() const noexcept { return kind_ != ObjectiveKind::kAbsolute; }
  /// Uniform bound on subgradient norms (absolute and huber only).
  std::optional<double> subgradient_bound() const;
  /// Lipschitz constant of the gradient (smooth kinds only).
  std::optional<double> gradient_lipschitz() const;

  /// One-sided derivatives for d = 1.
  double right_derivative(double x) const;
  double left_derivative(double x) const;

 private:
  LocalObjective() = default;

  ObjectiveKind kind_ = ObjectiveKind::kQuadratic;
  double a_ = 1.0;
  double delta_ = 1.0;
  Eigen::VectorXd center_;  // b; zero vector of the right size for logistic
  LogisticData data_;
};

/// Free-function form of LocalObjective::subgradient.
Eigen::VectorXd subgradient(const LocalObjective& obj, const Eigen::VectorXd& x);

enum class ConstraintKind { kNone, kBox, kBall, kHalfspace };

std::string_view constraint_kind_name(ConstraintKind k);

/// Closed convex set X_i with a Euclidean projection.
class Constraint {
 public:
  Constraint() = default;
  static Constraint none();
  static Constraint box(Eigen::VectorXd lo, Eigen::VectorXd hi);
  static Constraint box(double lo, double hi);
  static Constraint ball(Eigen::VectorXd center, double radius);
  static Constraint halfspace(Eigen::VectorXd normal, double offset);  // a^T x <= b

  ConstraintKind kind() const noexcept { return kind_; }
  const Eigen::VectorXd& lower() const noexcept { return lo_; }
  const Eigen::VectorXd& upper() const noexcept { return hi_; }
  const Eigen::VectorXd& center() const noexcept { return lo_; }
  double radius() const noexcept { return scalar_; }
  const Eigen::VectorXd& normal() const noexcept { return lo_; }
  double offset() const noexcept { return scalar_; }

  Eigen::VectorXd project(const Eigen::VectorXd& x) const;
  bool contains(const Eigen::VectorXd& x, double tol = 1e-12) const;
  /// The set as a closed interval, for d = 1 (bounds may be infinite;
  /// lo > hi means empty).
  std::pair<double, double> interval() const;

 private:
  ConstraintKind kind_ = ConstraintKind::kNone;
  Eigen::VectorXd lo_;  // box lower / ball center / halfspace normal
  Eigen::VectorXd hi_;  // box upper
  double scalar_ = 0.0; // ball radius / halfspace offset
};

Eigen::VectorXd project(const Constraint& set, const Eigen::VectorXd& x);

struct Optimum {
  double f_star = 0.0;
  Eigen::VectorXd x_star;
};

/// Ground-truth minimizer of f = (1/n) sum f_i over the intersection of the
/// constraint sets (empty list: unconstrained).
///
/// Quadratics without constraints use the weighted mean. Other scalar
/// problems use bisection on the one-sided derivatives of f over the
/// intersection interval. Unconstrained smooth problems with d > 1 use
/// gradient descent to ||grad f|| <= 1e-12. Throws decopt::Error when f is
/// unbounded below on X, when X is empty, or for unsupported combinations.
Optimum aggregate_optimum(const std::vector<LocalObjective>& locals,
                          const std::vector<Constraint>& constraints = {});

/// The per-node objectives, optional per-node constraint sets and the
/// aggregate ground truth, computed once at construction.
class ObjectiveSet {
 public:
  explicit ObjectiveSet(std::vector<LocalObjective> locals,
                        std::vector<Constraint> constraints = {});

  std::size_t size() const noexcept { return locals_.size(); }
  std::size_t dim() const noexcept { return locals_.front().dim(); }
  const std::vector<LocalObjective>& locals() const noexcept { return locals_; }
  const LocalObjective& local(std::size_t i) const { return locals_.at(i); }
  bool constrained() const noexcept { return !constraints_.empty(); }
  const std::vector<Constraint>& constraints() const noexcept { return constraints_; }
  const Constraint& constraint(std::size_t i) const { return constraints_.at(i); }

  /// Global subgradient bound; absent unless every local is absolute/huber.
  std::optional<double> lipschitz() const noexcept { return lipschitz_; }
  bool smooth() const;
  /// Largest gradient Lipschitz constant among the locals (smooth sets only).
  double max_gradient_lipschitz() const;

  double f_star() const noexcept { return optimum_.f_star; }
  const Eigen::VectorXd& x_star() const noexcept { return optimum_.x_star; }

  /// f(x) = (1/n) sum_i f_i(x).
  double value(const Eigen::VectorXd& x) const;
  /// (1/n) sum_i g_i(x).
  Eigen::VectorXd subgradient(const Eigen::VectorXd& x) const;

 private:
  std::vector<LocalObjective> locals_;
  std::vector<Constraint> constraints_;
  std::optional<double> lipschitz_;
  Optimum optimum_;
};

}  // namespace decopt
