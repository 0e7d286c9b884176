#include "decopt/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "decopt/error.hpp"

namespace decopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kOptimalityTolerance = 1e-10;

// log(1 + exp(t)) without overflow.
double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

// 1 / (1 + exp(-t)).
double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void require_dim(const LocalObjective& f, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != f.dim()) {
    throw std::invalid_argument("objective of dimension " + std::to_string(f.dim()) +
                                " evaluated at a point of dimension " + std::to_string(x.size()));
  }
}

double sum_right(const std::vector<LocalObjective>& locals, double x) {
  double s = 0.0;
  for (const auto& f : locals) s += f.right_derivative(x);
  return s / static_cast<double>(locals.size());
}

double sum_left(const std::vector<LocalObjective>& locals, double x) {
  double s = 0.0;
  for (const auto& f : locals) s += f.left_derivative(x);
  return s / static_cast<double>(locals.size());
}

double aggregate_value(const std::vector<LocalObjective>& locals, const Eigen::VectorXd& x) {
  double s = 0.0;
  for (const auto& f : locals) s += f.value(x);
  return s / static_cast<double>(locals.size());
}

Eigen::VectorXd aggregate_gradient(const std::vector<LocalObjective>& locals,
                                   const Eigen::VectorXd& x) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  for (const auto& f : locals) g += f.subgradient(x);
  return g / static_cast<double>(locals.size());
}

std::pair<double, double> intersect_intervals(const std::vector<Constraint>& constraints) {
  double lo = -kInf;
  double hi = kInf;
  for (const auto& c : constraints) {
    auto [l, h] = c.interval();
    lo = std::max(lo, l);
    hi = std::min(hi, h);
  }
  return {lo, hi};
}

// First-order optimality on [lo, hi]: no descent direction that stays inside.
bool first_order_optimal(const std::vector<LocalObjective>& locals, double x, double lo, double hi) {
  const bool left_ok = !(x > lo) || sum_left(locals, x) <= kOptimalityTolerance;
  const bool right_ok = !(x < hi) || sum_right(locals, x) >= -kOptimalityTolerance;
  return left_ok && right_ok;
}

Optimum scalar_optimum(const std::vector<LocalObjective>& locals,
                       const std::vector<Constraint>& constraints) {
  auto [lo, hi] = intersect_intervals(constraints);
  if (lo > hi) throw Error("aggregate_optimum: constraint sets have empty intersection");

  auto descending = [&](double x) { return sum_right(locals, x) < 0.0; };
  auto finish = [&](double x) {
    Eigen::VectorXd v(1);
    v(0) = x;
    if (!first_order_optimal(locals, x, lo, hi)) {
      throw Error("aggregate_optimum: bisection result fails first-order optimality at x=" +
                  std::to_string(x));
    }
    return Optimum{aggregate_value(locals, v), v};
  };

  constexpr double kBracketLimit = 1e15;
  double left;
  if (std::isfinite(lo)) {
    if (!descending(lo)) return finish(lo);
    left = lo;
  } else {
    left = -1.0;
    while (!descending(left)) {
      left *= 2.0;
      if (left < -kBracketLimit) throw Error("aggregate_optimum: f is unbounded below on X");
    }
  }
  double right;
  if (std::isfinite(hi)) {
    if (descending(hi)) return finish(hi);
    right = hi;
  } else {
    right = std::max(1.0, 2.0 * std::abs(left));
    while (descending(right)) {
      right *= 2.0;
      if (right > kBracketLimit) throw Error("aggregate_optimum: f is unbounded below on X");
    }
  }
  // Invariant: f'(left+) < 0 <= f'(right+).
  for (int it = 0; it < 4000; ++it) {
    const double mid = left + 0.5 * (right - left);
    if (mid <= left || mid >= right) break;
    if (descending(mid)) {
      left = mid;
    } else {
      right = mid;
    }
  }
  // Snap to an exact kink of the absolute-value terms when one is bracketed.
  for (const auto& f : locals) {
    if (f.kind() != ObjectiveKind::kAbsolute) continue;
    const double p = f.center()(0);
    if (p >= left && p <= right && p >= lo && p <= hi && first_order_optimal(locals, p, lo, hi)) {
      return finish(p);
    }
  }
  return finish(right);
}

Optimum smooth_unconstrained_optimum(const std::vector<LocalObjective>& locals) {
  double lip = 0.0;
  for (const auto& f : locals) lip = std::max(lip, *f.gradient_lipschitz());
  const double step = 1.0 / lip;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(locals.front().dim()));
  constexpr int kMaxIterations = 5'000'000;
  for (int it = 0; it < kMaxIterations; ++it) {
    Eigen::VectorXd g = aggregate_gradient(locals, x);
    if (g.norm() <= 1e-12) return {aggregate_value(locals, x), x};
    x -= step * g;
  }
  throw Error("aggregate_optimum: gradient descent oracle did not reach tolerance");
}

}  // namespace

std::string_view objective_kind_name(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::kQuadratic: return "quadratic";
    case ObjectiveKind::kAbsolute: return "absolute";
    case ObjectiveKind::kHuber: return "huber";
    case ObjectiveKind::kLogistic: return "logistic";
  }
  return "unknown";
}

LogisticData make_logistic_data(std::size_t m, std::size_t d, std::uint64_t seed) {
  if (m == 0 || m > 32 || d == 0 || d > 4) {
    throw std::invalid_argument("logistic datasets are limited to 1..32 points in 1..4 dims");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd truth(static_cast<Eigen::Index>(d));
  for (auto& t : truth) t = gauss(rng);
  LogisticData data;
  data.features.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  data.labels.resize(static_cast<Eigen::Index>(m));
  for (Eigen::Index j = 0; j < data.features.rows(); ++j) {
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) data.features(j, c) = gauss(rng);
    const double p = sigmoid(data.features.row(j).dot(truth));
    data.labels(j) = unit(rng) < p ? 1.0 : -1.0;
  }
  return data;
}

LocalObjective LocalObjective::quadratic(double a, Eigen::VectorXd b) {
  if (!(a > 0.0)) throw std::invalid_argument("quadratic objective needs a > 0");
  LocalObjective f;
  f.kind_ = ObjectiveKind::kQuadratic;
  f.a_ = a;
  f.center_ = std::move(b);
  return f;
}

LocalObjective LocalObjective::quadratic(double a, double b) {
  return quadratic(a, Eigen::VectorXd::Constant(1, b));
}

LocalObjective LocalObjective::absolute(Eigen::VectorXd b) {
  LocalObjective f;
  f.kind_ = ObjectiveKind::kAbsolute;
  f.center_ = std::move(b);
  return f;
}

LocalObjective LocalObjective::absolute(double b) { return absolute(Eigen::VectorXd::Constant(1, b)); }

LocalObjective LocalObjective::huber(Eigen::VectorXd b, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("huber objective needs delta > 0");
  LocalObjective f;
  f.kind_ = ObjectiveKind::kHuber;
  f.delta_ = delta;
  f.center_ = std::move(b);
  return f;
}

LocalObjective LocalObjective::huber(double b, double delta) {
  return huber(Eigen::VectorXd::Constant(1, b), delta);
}

LocalObjective LocalObjective::logistic(LogisticData data) {
  if (data.features.rows() == 0 || data.features.rows() != data.labels.size()) {
    throw std::invalid_argument("logistic objective needs matching non-empty features and labels");
  }
  if (!(data.ridge > 0.0)) throw std::invalid_argument("logistic objective needs ridge > 0");
  LocalObjective f;
  f.kind_ = ObjectiveKind::kLogistic;
  f.center_ = Eigen::VectorXd::Zero(data.features.cols());
  f.data_ = std::move(data);
  return f;
}

double LocalObjective::value(const Eigen::VectorXd& x) const {
  require_dim(*this, x);
  switch (kind_) {
    case ObjectiveKind::kQuadratic: return 0.5 * a_ * (x - center_).squaredNorm();
    case ObjectiveKind::kAbsolute: return (x - center_).norm();
    case ObjectiveKind::kHuber: {
      const double r = (x - center_).norm();
      return r <= delta_ ? r * r / (2.0 * delta_) : r - 0.5 * delta_;
    }
    case ObjectiveKind::kLogistic: {
      double s = 0.0;
      for (Eigen::Index j = 0; j < data_.features.rows(); ++j) {
        s += softplus(-data_.labels(j) * data_.features.row(j).dot(x));
      }
      return s / static_cast<double>(data_.features.rows()) + 0.5 * data_.ridge * x.squaredNorm();
    }
  }
  return 0.0;
}

Eigen::VectorXd LocalObjective::subgradient(const Eigen::VectorXd& x) const {
  require_dim(*this, x);
  switch (kind_) {
    case ObjectiveKind::kQuadratic: return a_ * (x - center_);
    case ObjectiveKind::kAbsolute: {
      Eigen::VectorXd r = x - center_;
      const double norm = r.norm();
      if (norm == 0.0) return Eigen::VectorXd::Zero(x.size());
      return r / norm;
    }
    case ObjectiveKind::kHuber: {
      Eigen::VectorXd r = x - center_;
      const double norm = r.norm();
      return norm <= delta_ ? Eigen::VectorXd(r / delta_) : Eigen::VectorXd(r / norm);
    }
    case ObjectiveKind::kLogistic: {
      Eigen::VectorXd g = data_.ridge * x;
      const double m = static_cast<double>(data_.features.rows());
      for (Eigen::Index j = 0; j < data_.features.rows(); ++j) {
        const double y = data_.labels(j);
        const double t = y * data_.features.row(j).dot(x);
        g -= (y * sigmoid(-t) / m) * data_.features.row(j).transpose();
      }
      return g;
    }
  }
  return Eigen::VectorXd::Zero(x.size());
}

std::optional<double> LocalObjective::subgradient_bound() const {
  if (kind_ == ObjectiveKind::kAbsolute || kind_ == ObjectiveKind::kHuber) return 1.0;
  return std::nullopt;
}

std::optional<double> LocalObjective::gradient_lipschitz() const {
  switch (kind_) {
    case ObjectiveKind::kQuadratic: return a_;
    case ObjectiveKind::kHuber: return 1.0 / delta_;
    case ObjectiveKind::kLogistic:
      return data_.features.rowwise().squaredNorm().sum() /
                 (4.0 * static_cast<double>(data_.features.rows())) +
             data_.ridge;
    case ObjectiveKind::kAbsolute: return std::nullopt;
  }
  return std::nullopt;
}

double LocalObjective::right_derivative(double x) const {
  if (dim() != 1) throw std::invalid_argument("one-sided derivatives need d = 1");
  if (kind_ == ObjectiveKind::kAbsolute) return x >= center_(0) ? 1.0 : -1.0;
  return subgradient(Eigen::VectorXd::Constant(1, x))(0);
}

double LocalObjective::left_derivative(double x) const {
  if (dim() != 1) throw std::invalid_argument("one-sided derivatives need d = 1");
  if (kind_ == ObjectiveKind::kAbsolute) return x > center_(0) ? 1.0 : -1.0;
  return subgradient(Eigen::VectorXd::Constant(1, x))(0);
}

Eigen::VectorXd subgradient(const LocalObjective& obj, const Eigen::VectorXd& x) {
  return obj.subgradient(x);
}

std::string_view constraint_kind_name(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::kNone: return "none";
    case ConstraintKind::kBox: return "box";
    case ConstraintKind::kBall: return "ball";
    case ConstraintKind::kHalfspace: return "halfspace";
  }
  return "unknown";
}

Constraint Constraint::none() { return {}; }

Constraint Constraint::box(Eigen::VectorXd lo, Eigen::VectorXd hi) {
  if (lo.size() != hi.size() || (lo.array() > hi.array()).any()) {
    throw std::invalid_argument("box constraint needs lo <= hi of equal dimension");
  }
  Constraint c;
  c.kind_ = ConstraintKind::kBox;
  c.lo_ = std::move(lo);
  c.hi_ = std::move(hi);
  return c;
}

Constraint Constraint::box(double lo, double hi) {
  return box(Eigen::VectorXd::Constant(1, lo), Eigen::VectorXd::Constant(1, hi));
}

Constraint Constraint::ball(Eigen::VectorXd center, double radius) {
  if (!(radius >= 0.0)) throw std::invalid_argument("ball constraint needs radius >= 0");
  Constraint c;
  c.kind_ = ConstraintKind::kBall;
  c.lo_ = std::move(center);
  c.scalar_ = radius;
  return c;
}

Constraint Constraint::halfspace(Eigen::VectorXd normal, double offset) {
  if (normal.norm() == 0.0) throw std::invalid_argument("halfspace constraint needs a nonzero normal");
  Constraint c;
  c.kind_ = ConstraintKind::kHalfspace;
  c.lo_ = std::move(normal);
  c.scalar_ = offset;
  return c;
}

Eigen::VectorXd Constraint::project(const Eigen::VectorXd& x) const {
  switch (kind_) {
    case ConstraintKind::kNone: return x;
    case ConstraintKind::kBox: return x.cwiseMax(lo_).cwiseMin(hi_);
    case ConstraintKind::kBall: {
      Eigen::VectorXd r = x - lo_;
      const double norm = r.norm();
      if (norm <= scalar_) return x;
      return lo_ + (scalar_ / norm) * r;
    }
    case ConstraintKind::kHalfspace: {
      const double violation = lo_.dot(x) - scalar_;
      if (violation <= 0.0) return x;
      return x - (violation / lo_.squaredNorm()) * lo_;
    }
  }
  return x;
}

bool Constraint::contains(const Eigen::VectorXd& x, double tol) const {
  switch (kind_) {
    case ConstraintKind::kNone: return true;
    case ConstraintKind::kBox:
      return ((x - lo_).array() >= -tol).all() && ((hi_ - x).array() >= -tol).all();
    case ConstraintKind::kBall: return (x - lo_).norm() <= scalar_ + tol;
    case ConstraintKind::kHalfspace: return lo_.dot(x) <= scalar_ + tol;
  }
  return true;
}

std::pair<double, double> Constraint::interval() const {
  switch (kind_) {
    case ConstraintKind::kNone: return {-kInf, kInf};
    case ConstraintKind::kBox: return {lo_(0), hi_(0)};
    case ConstraintKind::kBall: return {lo_(0) - scalar_, lo_(0) + scalar_};
    case ConstraintKind::kHalfspace: {
      const double a = lo_(0);
      if (a > 0.0) return {-kInf, scalar_ / a};
      return {scalar_ / a, kInf};
    }
  }
  return {-kInf, kInf};
}

Eigen::VectorXd project(const Constraint& set, const Eigen::VectorXd& x) { return set.project(x); }

Optimum aggregate_optimum(const std::vector<LocalObjective>& locals,
                          const std::vector<Constraint>& constraints) {
  if (locals.empty()) throw std::invalid_argument("aggregate_optimum: no objectives");
  const std::size_t d = locals.front().dim();
  for (const auto& f : locals) {
    if (f.dim() != d) throw std::invalid_argument("aggregate_optimum: objectives differ in dimension");
  }
  const bool unconstrained =
      std::all_of(constraints.begin(), constraints.end(),
                  [](const Constraint& c) { return c.kind() == ConstraintKind::kNone; });
  const bool all_quadratic = std::all_of(locals.begin(), locals.end(), [](const LocalObjective& f) {
    return f.kind() == ObjectiveKind::kQuadratic;
  });

  if (all_quadratic && unconstrained) {
    Eigen::VectorXd weighted = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    double total = 0.0;
    for (const auto& f : locals) {
      weighted += f.curvature() * f.center();
      total += f.curvature();
    }
    Eigen::VectorXd x = weighted / total;
    return {aggregate_value(locals, x), x};
  }
  if (d == 1) return scalar_optimum(locals, unconstrained ? std::vector<Constraint>{} : constraints);
  const bool all_smooth = std::all_of(locals.begin(), locals.end(),
                                      [](const LocalObjective& f) { return f.smooth(); });
  if (unconstrained && all_smooth) return smooth_unconstrained_optimum(locals);
  throw Error("aggregate_optimum: only d = 1 supports nonsmooth or constrained problems");
}

ObjectiveSet::ObjectiveSet(std::vector<LocalObjective> locals, std::vector<Constraint> constraints)
    : locals_(std::move(locals)), constraints_(std::move(constraints)) {
  if (locals_.empty()) throw std::invalid_argument("ObjectiveSet needs at least one objective");
  if (!constraints_.empty() && constraints_.size() != locals_.size()) {
    throw std::invalid_argument("ObjectiveSet: need one constraint per node (or none)");
  }
  const bool bounded = std::all_of(locals_.begin(), locals_.end(), [](const LocalObjective& f) {
    return f.subgradient_bound().has_value();
  });
  if (bounded) {
    double l = 0.0;
    for (const auto& f : locals_) l = std::max(l, *f.subgradient_bound());
    lipschitz_ = l;
  }
  optimum_ = aggregate_optimum(locals_, constraints_);
}

bool ObjectiveSet::smooth() const {
  return std::all_of(locals_.begin(), locals_.end(), [](const LocalObjective& f) { return f.smooth(); });
}

double ObjectiveSet::max_gradient_lipschitz() const {
  double l = 0.0;
  for (const auto& f : locals_) {
    auto g = f.gradient_lipschitz();
    if (!g) throw std::invalid_argument("max_gradient_lipschitz: set contains nonsmooth objectives");
    l = std::max(l, *g);
  }
  return l;
}

double ObjectiveSet::value(const Eigen::VectorXd& x) const { return aggregate_value(locals_, x); }

Eigen::VectorXd ObjectiveSet::subgradient(const Eigen::VectorXd& x) const {
  return aggregate_gradient(locals_, x);
}

}  // namespace decopt
