#include <doctest.h>

#include <Eigen/SVD>

#include <cmath>
#include <random>

#include "decopt/consensus.hpp"
#include "decopt/error.hpp"
#include "decopt/graphs.hpp"
#include "decopt/mixing.hpp"

using namespace decopt;

namespace {

Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double d : v) x(i++, 0) = d;
  return x;
}

Eigen::MatrixXd uniform_state(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d = 1) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd x(n, d);
  for (auto& v : x.reshaped()) v = unit(rng);
  return x;
}

double sigma2(const Eigen::MatrixXd& a) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()(1);
}

// First k with ||A^k x0 - mean|| <= eps ||x0 - mean||, by repeated dense products.
std::size_t dense_t_eps(const Eigen::MatrixXd& a, const Eigen::VectorXd& x0, double eps) {
  const double mean = x0.mean();
  const double e0 = (x0.array() - mean).matrix().norm();
  Eigen::VectorXd x = x0;
  for (std::size_t k = 1;; ++k) {
    x = a * x;
    if ((x.array() - mean).matrix().norm() <= eps * e0) return k;
  }
}

}  // namespace

TEST_CASE("complete graph with equal-neighbor weights averages in one step") {
  const GraphSequence seq = GraphSequence::fixed(build_graph({Family::kComplete, 3}, 0));
  const RunTrace t = run_consensus(seq, make_weight_rule(WeightKind::kEqualNeighbor), column({0, 3, 6}), 1e-9);
  CHECK(t.t_eps == 1u);
  CHECK(t.stop_reason == StopReason::kConverged);
  for (int i = 0; i < 3; ++i) CHECK(t.final_state(i, 0) == doctest::Approx(3.0));
}

TEST_CASE("constant initial state needs no steps") {
  const GraphSequence seq = GraphSequence::fixed(build_graph({Family::kPath, 5}, 0));
  const RunTrace t = run_consensus(seq, make_weight_rule(WeightKind::kLazyMetropolis),
                                   Eigen::MatrixXd::Constant(5, 2, 1.5), 1e-6);
  CHECK(t.t_eps == 0u);
  CHECK(t.iterations == 0u);
}

TEST_CASE("T_eps on a path matches dense matrix powers") {
  const GraphSnapshot g = build_graph({Family::kPath, 8}, 0);
  const Eigen::MatrixXd a = lazy_metropolis(g).entries();
  for (int spike = 0; spike < 8; ++spike) {
    Eigen::MatrixXd x0 = Eigen::MatrixXd::Zero(8, 1);
    x0(spike, 0) = 1.0;
    const RunTrace t = run_consensus(GraphSequence::fixed(g), make_weight_rule(WeightKind::kLazyMetropolis), x0, 1e-6);
    REQUIRE(t.t_eps.has_value());
    CHECK(*t.t_eps == dense_t_eps(a, x0.col(0), 1e-6));
    // Cross-check against the spectral envelope.
    const double lambda = sigma2(a);
    CHECK(static_cast<double>(*t.t_eps) <= std::ceil(std::log(1e-6) / std::log(lambda)));
  }
}

TEST_CASE("average is conserved and spread never grows") {
  std::mt19937_64 rng(1);
  for (Family f : {Family::kPath, Family::kStar, Family::kErdosRenyi}) {
    const GraphSnapshot g = build_graph({f, 20}, 4);
    for (WeightKind w : {WeightKind::kMetropolis, WeightKind::kLazyMetropolis}) {
      const Eigen::MatrixXd x0 = uniform_state(rng, 20, 2);
      const MixingMatrix a = make_weight_rule(w)(g);
      Eigen::MatrixXd x = x0;
      for (int k = 0; k < 200; ++k) {
        const Eigen::MatrixXd next = a.apply(x);
        CHECK((next.colwise().mean() - x0.colwise().mean()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(state_spread(next) <= state_spread(x) + 1e-15);
        x = next;
      }
    }
  }
}

TEST_CASE("run traces honour the stride and record the final step") {
  const GraphSequence seq = GraphSequence::fixed(build_graph({Family::kPath, 10}, 0));
  std::mt19937_64 rng(2);
  const RunTrace t = run_consensus(seq, make_weight_rule(WeightKind::kLazyMetropolis), uniform_state(rng, 10), 1e-4,
                                   std::nullopt, 25);
  REQUIRE(t.t_eps.has_value());
  CHECK(t.rows.front().k == 0u);
  CHECK(t.rows.back().k == *t.t_eps);
  for (std::size_t i = 1; i + 1 < t.rows.size(); ++i) CHECK(t.rows[i].k % 25 == 0);
}

TEST_CASE("cap reached is reported") {
  const GraphSequence seq = GraphSequence::fixed(build_graph({Family::kPath, 30}, 0));
  std::mt19937_64 rng(3);
  const RunTrace t = run_consensus(seq, make_weight_rule(WeightKind::kLazyMetropolis), uniform_state(rng, 30), 1e-9, 10);
  CHECK(t.stop_reason == StopReason::kCapReached);
  CHECK(t.iterations == 10u);
  CHECK_FALSE(t.t_eps.has_value());
}

TEST_CASE("row-stochastic weights reach consensus but not the average") {
  const GraphSequence seq = GraphSequence::fixed(build_graph({Family::kStar, 6}, 0));
  Eigen::MatrixXd x0 = Eigen::MatrixXd::Zero(6, 1);
  x0(0, 0) = 6.0;  // the hub
  const RunTrace t = run_consensus(seq, make_weight_rule(WeightKind::kEqualNeighbor), x0, 1e-8);
  CHECK(t.stop_reason == StopReason::kConsensusNotAverage);
  CHECK(state_spread(t.final_state) <= 1e-6);
  CHECK(std::abs(t.final_state(0, 0) - 1.0) > 0.1);
}

TEST_CASE("consensus over a time-varying sequence") {
  const GraphSequence seq = GraphSequence::token_ring(6, 3, false);
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd x0 = uniform_state(rng, 6);
  // Plain Metropolis swaps the two ends of an isolated edge, so it never mixes here.
  const RunTrace swap = run_consensus(seq, make_weight_rule(WeightKind::kMetropolis), x0, 1e-8, 300);
  CHECK(swap.stop_reason == StopReason::kCapReached);
  const RunTrace t = run_consensus(seq, make_weight_rule(WeightKind::kLazyMetropolis), x0, 1e-8);
  CHECK(t.stop_reason == StopReason::kConverged);
  CHECK((t.final_state.array() - x0.mean()).abs().maxCoeff() <= 1e-7);
}

TEST_CASE("perturbed consensus") {
  const GraphSequence seq = GraphSequence::fixed(build_graph({Family::kPath, 4}, 0));
  const WeightRule rule = make_weight_rule(WeightKind::kLazyMetropolis);
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd x0 = uniform_state(rng, 4);

  SUBCASE("zero perturbations reproduce the plain run") {
    const std::vector<Eigen::MatrixXd> zeros(30, Eigen::MatrixXd::Zero(4, 1));
    const RunTrace p = run_perturbed_consensus(seq, rule, x0, zeros);
    const RunTrace plain = run_consensus(seq, rule, x0, 1e-300, 30);
    REQUIRE(p.rows.size() == 31);
    for (std::size_t k = 0; k <= 30; ++k) {
      CHECK(p.rows[k].consensus_error == doctest::Approx(plain.rows[k].consensus_error).epsilon(1e-12));
    }
  }

  SUBCASE("pushes along the ones vector do not change the error") {
    std::vector<Eigen::MatrixXd> ones;
    for (int k = 0; k < 30; ++k) ones.push_back(Eigen::MatrixXd::Constant(4, 1, 0.3 * k));
    const std::vector<Eigen::MatrixXd> zeros(30, Eigen::MatrixXd::Zero(4, 1));
    const RunTrace a = run_perturbed_consensus(seq, rule, x0, ones);
    const RunTrace b = run_perturbed_consensus(seq, rule, x0, zeros);
    for (std::size_t k = 0; k <= 30; ++k) {
      CHECK(a.rows[k].consensus_error == doctest::Approx(b.rows[k].consensus_error).epsilon(1e-9));
    }
  }

  SUBCASE("bounded perturbations stay under the recursive bound") {
    const double lambda = sigma2(rule(seq.at(0)).entries());
    std::normal_distribution<double> gauss;
    std::vector<Eigen::MatrixXd> deltas;
    for (int k = 0; k < 200; ++k) {
      Eigen::MatrixXd d(4, 1);
      for (auto& v : d.reshaped()) v = gauss(rng);
      deltas.push_back(d * (0.1 / d.norm()));
    }
    const RunTrace t = run_perturbed_consensus(seq, rule, x0, deltas);
    const double e0 = t.rows.front().consensus_error;
    for (std::size_t k = 1; k < t.rows.size(); ++k) {
      const double bound = std::pow(lambda, static_cast<double>(k)) * e0 + 0.1 / (1.0 - lambda);
      CHECK(t.rows[k].consensus_error <= bound + 1e-12);
    }
  }

  SUBCASE("row-stochastic weights are rejected") {
    const std::vector<Eigen::MatrixXd> zeros(3, Eigen::MatrixXd::Zero(4, 1));
    CHECK_THROWS_AS(run_perturbed_consensus(seq, make_weight_rule(WeightKind::kEqualNeighbor), x0, zeros),
                    std::invalid_argument);
  }
}

TEST_CASE("accelerated consensus") {
  SUBCASE("two nodes average in one step") {
    const GraphSnapshot g = build_graph({Family::kComplete, 2}, 0);
    const RunTrace t = run_accelerated(g, 2, column({0, 2}), 1e-9);
    CHECK(t.t_eps == 1u);
    CHECK(t.final_state(0, 0) == doctest::Approx(1.0));
    CHECK(t.final_state(1, 0) == doctest::Approx(1.0));
    CHECK(accelerated_momentum(2) == doctest::Approx(17.0 / 19.0));
    CHECK(t.envelope_ok);
  }

  SUBCASE("constant state is a fixed point") {
    const GraphSnapshot g = build_graph({Family::kPath, 6}, 0);
    const RunTrace t = run_accelerated(g, 6, Eigen::MatrixXd::Constant(6, 1, 2.0), 1e-6);
    CHECK(t.t_eps == 0u);
  }

  SUBCASE("path n=64 is much faster than plain lazy averaging") {
    const GraphSnapshot g = build_graph({Family::kPath, 64}, 0);
    Eigen::MatrixXd x0(64, 1);
    for (int i = 0; i < 64; ++i) x0(i, 0) = i / 63.0;
    const RunTrace fast = run_accelerated(g, 64, x0, 1e-6);
    const RunTrace slow = run_consensus(GraphSequence::fixed(g), make_weight_rule(WeightKind::kLazyMetropolis), x0, 1e-6);
    REQUIRE(fast.t_eps.has_value());
    REQUIRE(slow.t_eps.has_value());
    CHECK(fast.envelope_ok);
    CHECK(static_cast<double>(*fast.t_eps) <= 9.0 * 64.0 * std::log(2.0e6));
    CHECK(*fast.t_eps * 5 < *slow.t_eps);
  }

  SUBCASE("preconditions") {
    CHECK_THROWS_AS(run_accelerated(build_graph({Family::kPath, 6}, 0), 5, Eigen::MatrixXd::Zero(6, 1), 1e-3),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_accelerated(build_graph({Family::kDirectedCycle, 4}, 0), 4, Eigen::MatrixXd::Zero(4, 1), 1e-3),
                    std::invalid_argument);
  }
}

TEST_CASE("push-sum") {
  SUBCASE("bidirectional pair by hand") {
    GraphSnapshot g(2, true);
    g.add_edge(0, 1);
    g.add_edge(1, 0);
    g.add_self_loops();
    const RunTrace t = run_push_sum(GraphSequence::fixed(g), column({1, 3}), 1e-12);
    CHECK(t.t_eps == 1u);
    CHECK(t.final_state(0, 0) == 2.0);
    CHECK(t.final_state(1, 0) == 2.0);
    CHECK(t.min_y == 1.0);
  }

  SUBCASE("single node") {
    GraphSnapshot g(1, true);
    g.add_self_loops();
    const RunTrace t = run_push_sum(GraphSequence::fixed(g), column({4.5}), 1e-6);
    CHECK(t.t_eps == 0u);
    CHECK(t.final_state(0, 0) == 4.5);
  }

  SUBCASE("directed cycle of five converges to the mean") {
    std::mt19937_64 rng(6);
    const Eigen::MatrixXd x0 = uniform_state(rng, 5);
    const RunTrace t = run_push_sum(GraphSequence::fixed(build_graph({Family::kDirectedCycle, 5}, 0)), x0, 1e-10);
    CHECK(t.stop_reason == StopReason::kConverged);
    CHECK((t.final_state.array() - x0.mean()).abs().maxCoeff() <= 1e-10);
    REQUIRE(t.min_y.has_value());
    CHECK(*t.min_y > 0.0);
    CHECK(*t.min_y >= std::pow(5.0, -50.0));
    CHECK(t.max_mean_drift <= 1e-12);
    CHECK(t.max_mass_drift_y <= 1e-12);
  }

  SUBCASE("time-varying directed sequences") {
    std::mt19937_64 rng(7);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const GraphSequence seq = GraphSequence::random_blocks(12, 3, seed);
      const Eigen::MatrixXd x0 = uniform_state(rng, 12, 2);
      const RunTrace t = run_push_sum(seq, x0, 1e-9);
      CHECK(t.stop_reason == StopReason::kConverged);
      const Eigen::RowVectorXd mean = x0.colwise().mean();
      CHECK((t.final_state.rowwise() - mean).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("transition products") {
  const GraphSequence ring = GraphSequence::token_ring(4, 4);
  const WeightRule rule = make_weight_rule(WeightKind::kPushSum);
  const Eigen::MatrixXd p = transition_product(ring, rule, 0, 16);
  Eigen::MatrixXd oracle = Eigen::MatrixXd::Identity(4, 4);
  for (std::size_t k = 0; k < 16; ++k) oracle = push_sum_matrix(ring.at(k)).entries() * oracle;
  CHECK((p - oracle).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(p.minCoeff() >= std::pow(0.25, 16.0));
  CHECK((transition_product(ring, rule, 3, 3) - Eigen::MatrixXd::Identity(4, 4)).norm() == 0.0);
}

TEST_CASE("stop reason names") {
  CHECK(stop_reason_name(StopReason::kConverged) == "converged");
  CHECK(stop_reason_name(StopReason::kCapReached) != stop_reason_name(StopReason::kDiverged));
}
