#include <doctest.h>

#include <cmath>
#include <random>

#include "decopt/error.hpp"
#include "decopt/objectives.hpp"

using namespace decopt;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x(i++) = d;
  return x;
}

Eigen::VectorXd scalar(double x) { return Eigen::VectorXd::Constant(1, x); }

// Central difference of f at x along each coordinate.
Eigen::VectorXd numeric_gradient(const LocalObjective& f, const Eigen::VectorXd& x) {
  const double h = 1e-6;
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd up = x;
    Eigen::VectorXd down = x;
    up(i) += h;
    down(i) -= h;
    g(i) = (f.value(up) - f.value(down)) / (2.0 * h);
  }
  return g;
}

// Minimizer of a convex scalar function on [lo, hi] by golden-section search.
double golden_min(const auto& f, double lo, double hi) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 300; ++it) {
    const double a = hi - r * (hi - lo);
    const double b = lo + r * (hi - lo);
    if (f(a) <= f(b)) {
      hi = b;
    } else {
      lo = a;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("quadratic objective") {
  const LocalObjective f = LocalObjective::quadratic(2.0, 1.0);
  CHECK(f.subgradient(scalar(3.0))(0) == doctest::Approx(4.0));
  CHECK(f.value(scalar(3.0)) == doctest::Approx(4.0));  // (a/2)(x - b)^2
  CHECK(f.gradient_lipschitz() == 2.0);
  CHECK_FALSE(f.subgradient_bound().has_value());
  CHECK(f.smooth());
  CHECK_THROWS_AS(LocalObjective::quadratic(0.0, 1.0), std::invalid_argument);
}

TEST_CASE("absolute objective") {
  CHECK(LocalObjective::absolute(0.0).subgradient(scalar(0.0))(0) == 0.0);
  CHECK(LocalObjective::absolute(2.0).subgradient(scalar(5.0))(0) == 1.0);
  CHECK(LocalObjective::absolute(2.0).subgradient(scalar(-5.0))(0) == -1.0);
  CHECK(LocalObjective::absolute(2.0).value(scalar(-1.0)) == 3.0);
  const LocalObjective f = LocalObjective::absolute(vec({1.0, -1.0}));
  CHECK(f.value(vec({2.0, 2.0})) == doctest::Approx(std::sqrt(10.0)));
  CHECK(f.subgradient(vec({4.0, 3.0})).norm() == doctest::Approx(1.0));
  CHECK(f.subgradient_bound() == 1.0);
  CHECK_FALSE(f.smooth());

  const LocalObjective g = LocalObjective::absolute(2.0);
  CHECK(g.right_derivative(2.0) == 1.0);
  CHECK(g.left_derivative(2.0) == -1.0);
  CHECK(g.right_derivative(1.0) == -1.0);
}

TEST_CASE("huber objective") {
  const LocalObjective f = LocalObjective::huber(1.0, 0.5);
  CHECK(f.value(scalar(1.25)) == doctest::Approx(0.25 * 0.25 / (2.0 * 0.5)));
  CHECK(f.value(scalar(3.0)) == doctest::Approx(2.0 - 0.25));
  CHECK(f.subgradient(scalar(3.0))(0) == doctest::Approx(1.0));
  CHECK(f.subgradient(scalar(1.25))(0) == doctest::Approx(0.5));
  CHECK(f.subgradient_bound() == 1.0);
  CHECK(f.gradient_lipschitz() == doctest::Approx(2.0));
}

TEST_CASE("smooth gradients match finite differences") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> gauss;
  for (int t = 0; t < 200; ++t) {
    const std::size_t d = 1 + static_cast<std::size_t>(t % 3);
    Eigen::VectorXd b(d), x(d);
    for (auto& v : b) v = gauss(rng);
    for (auto& v : x) v = 2.0 * gauss(rng);
    const LocalObjective f = t % 3 == 0   ? LocalObjective::quadratic(0.5 + t % 4, b)
                             : t % 3 == 1 ? LocalObjective::huber(b, 0.7)
                                          : LocalObjective::logistic(make_logistic_data(10, d, rng()));
    CHECK((f.subgradient(x) - numeric_gradient(f, x)).norm() <= 1e-6 * (1.0 + f.subgradient(x).norm()));
  }
}

TEST_CASE("logistic data") {
  const LogisticData a = make_logistic_data(8, 2, 5);
  const LogisticData b = make_logistic_data(8, 2, 5);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  for (Eigen::Index i = 0; i < a.labels.size(); ++i) CHECK(std::abs(a.labels(i)) == 1.0);
  CHECK_THROWS_AS(make_logistic_data(33, 2, 0), std::invalid_argument);
  const LocalObjective f = LocalObjective::logistic(a);
  CHECK(f.kind() == ObjectiveKind::kLogistic);
  CHECK(f.gradient_lipschitz().has_value());
  // Value stays finite for huge arguments.
  CHECK(std::isfinite(f.value(vec({1e6, -1e6}))));
}

TEST_CASE("projections") {
  const Constraint box = Constraint::box(-1.0, 1.0);
  CHECK(box.project(scalar(3.0))(0) == 1.0);
  CHECK(box.project(scalar(-3.0))(0) == -1.0);
  CHECK(box.project(scalar(0.2))(0) == 0.2);
  CHECK(box.contains(scalar(1.0)));
  CHECK_FALSE(box.contains(scalar(1.1)));

  const Constraint ball = Constraint::ball(vec({0.0, 0.0}), 2.0);
  CHECK(ball.project(vec({1.0, 1.0})) == vec({1.0, 1.0}));
  CHECK((ball.project(vec({3.0, 4.0})) - vec({1.2, 1.6})).norm() <= 1e-15);

  const Eigen::VectorXd a = vec({1.0, 2.0});
  const Constraint half = Constraint::halfspace(a, 1.0);
  const Eigen::VectorXd x = vec({3.0, 1.0});
  const Eigen::VectorXd want = x - ((a.dot(x) - 1.0) / a.squaredNorm()) * a;
  CHECK((half.project(x) - want).norm() <= 1e-15);
  CHECK(half.contains(half.project(x)));
  CHECK(half.project(vec({-3.0, 0.0})) == vec({-3.0, 0.0}));

  // The projection minimizes distance along the boundary line.
  const Eigen::VectorXd dir = vec({2.0, -1.0});
  const Eigen::VectorXd base = vec({1.0, 0.0});
  const double s = golden_min([&](double t) { return (base + t * dir - x).squaredNorm(); }, -10.0, 10.0);
  CHECK((base + s * dir - half.project(x)).norm() <= 1e-7);

  CHECK_THROWS_AS(Constraint::box(2.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(Constraint::halfspace(vec({0.0}), 1.0), std::invalid_argument);
}

TEST_CASE("scalar intervals of constraints") {
  CHECK(Constraint::box(-1.0, 2.0).interval() == std::pair<double, double>{-1.0, 2.0});
  CHECK(Constraint::halfspace(scalar(2.0), 4.0).interval().second == doctest::Approx(2.0));
  CHECK(Constraint::halfspace(scalar(-1.0), 3.0).interval().first == doctest::Approx(-3.0));
  CHECK(Constraint::ball(scalar(1.0), 0.5).interval() == std::pair<double, double>{0.5, 1.5});
}

TEST_CASE("aggregate optimum") {
  SUBCASE("two quadratics") {
    const Optimum o = aggregate_optimum({LocalObjective::quadratic(1.0, -1.0), LocalObjective::quadratic(1.0, 1.0)});
    CHECK(o.x_star(0) == doctest::Approx(0.0));
    // f = (1/n) sum (a/2)(x - b)^2 = 1/2 at x = 0.
    CHECK(o.f_star == doctest::Approx(0.5));
  }
  SUBCASE("absolutes give the median") {
    const Optimum o = aggregate_optimum(
        {LocalObjective::absolute(1.0), LocalObjective::absolute(2.0), LocalObjective::absolute(5.0)});
    CHECK(o.x_star(0) == doctest::Approx(2.0));
    CHECK(o.f_star == doctest::Approx(4.0 / 3.0));
  }
  SUBCASE("single objective") {
    CHECK(aggregate_optimum({LocalObjective::huber(3.5, 1.0)}).x_star(0) == doctest::Approx(3.5));
    CHECK(aggregate_optimum({LocalObjective::quadratic(2.0, vec({1.0, -2.0}))}).x_star.isApprox(vec({1.0, -2.0})));
  }
  SUBCASE("constraints") {
    const std::vector<LocalObjective> q{LocalObjective::quadratic(1.0, 2.0), LocalObjective::quadratic(1.0, 2.0)};
    const Optimum clipped = aggregate_optimum(q, {Constraint::box(-1.0, 1.0), Constraint::box(-1.0, 1.0)});
    CHECK(clipped.x_star(0) == doctest::Approx(1.0));
    const std::vector<LocalObjective> z{LocalObjective::quadratic(1.0, 0.0), LocalObjective::quadratic(2.0, 0.0)};
    const Optimum inter = aggregate_optimum(z, {Constraint::box(0.0, 2.0), Constraint::box(1.0, 3.0)});
    CHECK(inter.x_star(0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(aggregate_optimum(z, {Constraint::box(0.0, 1.0), Constraint::box(2.0, 3.0)}), Error);
  }
  SUBCASE("smooth problems in several dimensions") {
    std::vector<LocalObjective> locals;
    for (std::uint64_t s = 0; s < 3; ++s) locals.push_back(LocalObjective::logistic(make_logistic_data(8, 2, s)));
    const ObjectiveSet set(locals);
    CHECK(set.subgradient(set.x_star()).norm() <= 1e-10);
  }
  SUBCASE("matches a golden-section oracle on random scalar problems") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> center(-4.0, 4.0);
    for (int t = 0; t < 100; ++t) {
      std::vector<LocalObjective> locals;
      for (int i = 0; i < 5; ++i) {
        const double b = center(rng);
        switch ((t + i) % 3) {
          case 0: locals.push_back(LocalObjective::quadratic(1.0 + i, b)); break;
          case 1: locals.push_back(LocalObjective::absolute(b)); break;
          default: locals.push_back(LocalObjective::huber(b, 0.3)); break;
        }
      }
      const ObjectiveSet set(locals);
      const double x = golden_min([&](double v) { return set.value(scalar(v)); }, -10.0, 10.0);
      CHECK(set.value(set.x_star()) <= set.value(scalar(x)) + 1e-10);
      CHECK(set.f_star() == doctest::Approx(set.value(set.x_star())));
    }
  }
}

TEST_CASE("objective sets") {
  const ObjectiveSet abs({LocalObjective::absolute(1.0), LocalObjective::huber(2.0, 1.0)});
  CHECK(abs.lipschitz() == 1.0);
  const ObjectiveSet quad({LocalObjective::quadratic(1.0, 1.0), LocalObjective::quadratic(3.0, 2.0)});
  CHECK_FALSE(quad.lipschitz().has_value());
  CHECK(quad.max_gradient_lipschitz() == 3.0);
  CHECK(quad.smooth());
  CHECK(quad.x_star()(0) == doctest::Approx((1.0 + 6.0) / 4.0));
  CHECK(quad.value(scalar(0.0)) == doctest::Approx(0.5 * (0.5 + 6.0)));
  CHECK_THROWS_AS(ObjectiveSet({}), std::invalid_argument);
  CHECK_THROWS_AS(ObjectiveSet({LocalObjective::absolute(1.0), LocalObjective::absolute(vec({1.0, 2.0}))}),
                  std::invalid_argument);
  CHECK_THROWS_AS(abs.max_gradient_lipschitz(), std::invalid_argument);
}
