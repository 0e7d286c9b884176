// decopt command-line front end.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>

#include "decopt/harness.hpp"

namespace {

using decopt::harness::ExperimentConfig;

struct Flags {
  std::string family = "path";
  std::size_t n = 16;
  int grid_dim = 2;
  double family_eps = 1.0;
  int expander_degree = 6;
  std::string sequence = "static";
  std::size_t block_length = 1;
  bool undirected = false;
  std::uint64_t seed = 0;
  std::string weights = "lazy-metropolis";
  std::optional<double> weight_epsilon;
  double eps = 1e-6;
  std::optional<std::size_t> cap;
  std::string init = "random";
  std::size_t dim = 1;
  std::size_t stride = 1;
  std::string out;
  std::string config;

  std::string algorithm = "decentralized";
  std::string objective = "absolute";
  double huber_delta = 1.0;
  std::string schedule = "one_over_sqrt_T";
  double step = 0.0;
  std::size_t horizon = 1000;
  std::optional<double> beta;
  std::optional<std::size_t> upper_bound;
  std::optional<double> box_lo;
  std::optional<double> box_hi;
  bool post_mix = false;
  bool no_bounds = false;

  std::vector<std::size_t> n_values{16, 32, 64, 128, 256};
  std::size_t reps = 5;
  bool accelerated = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--family", f.family, "Graph family");
  app->add_option("--n", f.n, "Number of nodes");
  app->add_option("--grid-dim", f.grid_dim, "Dimension of gridk graphs");
  app->add_option("--family-eps", f.family_eps, "Density slack of random families");
  app->add_option("--expander-degree", f.expander_degree, "Degree of expander graphs");
  app->add_option("--sequence", f.sequence, "static|periodic|regenerate|token-ring|random-blocks");
  app->add_option("--block-length", f.block_length, "Connectivity block length B");
  app->add_flag("--undirected", f.undirected, "Undirected token ring");
  app->add_option("--seed", f.seed, "Random seed");
  app->add_option("--weights", f.weights, "metropolis|lazy-metropolis|equal-neighbor|epsilon|push-sum");
  app->add_option("--weight-epsilon", f.weight_epsilon, "Constant for epsilon weights");
  app->add_option("--eps", f.eps, "Target accuracy");
  app->add_option("--cap", f.cap, "Iteration cap");
  app->add_option("--init", f.init, "random|spike|linear|zero");
  app->add_option("--dim", f.dim, "State dimension");
  app->add_option("--stride", f.stride, "Trace row stride");
  app->add_option("--out", f.out, "Output directory for trace.csv and summary.json");
  app->add_option("--config", f.config, "JSON config; its fields override flags");
}

nlohmann::json flags_to_json(const std::string& command, const Flags& f) {
  ExperimentConfig cfg;
  cfg.command = command;
  nlohmann::json j = decopt::harness::to_json(cfg);
  j["graph"] = {{"family", f.family},       {"n", f.n},
                {"grid_dim", f.grid_dim},   {"eps", f.family_eps},
                {"expander_degree", f.expander_degree}, {"sequence", f.sequence},
                {"block_length", f.block_length},       {"directed", !f.undirected},
                {"seed", f.seed}};
  j["weights"] = f.weights;
  j["weight_epsilon"] = f.weight_epsilon ? nlohmann::json(*f.weight_epsilon) : nlohmann::json(nullptr);
  j["eps"] = f.eps;
  j["cap"] = f.cap ? nlohmann::json(*f.cap) : nlohmann::json(nullptr);
  j["init"] = f.init;
  j["dim"] = f.dim;
  j["trace_stride"] = f.stride;
  j["out_dir"] = f.out;
  auto& o = j["optimize"];
  o["algorithm"] = f.algorithm;
  o["objective"] = f.objective;
  o["huber_delta"] = f.huber_delta;
  o["schedule"] = f.schedule;
  o["step"] = f.step;
  o["horizon"] = f.horizon;
  o["beta"] = f.beta ? nlohmann::json(*f.beta) : nlohmann::json(nullptr);
  o["upper_bound"] = f.upper_bound ? nlohmann::json(*f.upper_bound) : nlohmann::json(nullptr);
  o["box_lo"] = f.box_lo ? nlohmann::json(*f.box_lo) : nlohmann::json(nullptr);
  o["box_hi"] = f.box_hi ? nlohmann::json(*f.box_hi) : nlohmann::json(nullptr);
  o["post_mix_gradient"] = f.post_mix;
  o["check_bounds"] = !f.no_bounds;
  j["scaling"] = {{"n_values", f.n_values}, {"repetitions", f.reps}, {"accelerated", f.accelerated}};
  return j;
}

ExperimentConfig resolve(const std::string& command, const Flags& f) {
  nlohmann::json j = flags_to_json(command, f);
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw decopt::harness::ConfigError("config: cannot open " + f.config);
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw decopt::harness::ConfigError(std::string("config: ") + e.what());
    }
    j.merge_patch(file);
    j["command"] = command;
  }
  return decopt::harness::parse_config(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized averaging and optimization experiments"};
  app.require_subcommand(1);

  Flags consensus_flags;
  auto* consensus = app.add_subcommand("consensus", "Average consensus run");
  add_common(consensus, consensus_flags);

  Flags push_flags;
  push_flags.family = "directed-cycle";
  push_flags.weights = "push-sum";
  auto* pushsum = app.add_subcommand("pushsum", "Push-sum ratio consensus on directed graphs");
  add_common(pushsum, push_flags);

  Flags opt_flags;
  opt_flags.init = "zero";
  auto* optimize = app.add_subcommand("optimize", "Distributed optimization run");
  add_common(optimize, opt_flags);
  optimize->add_option("--algorithm", opt_flags.algorithm,
                       "centralized|decentralized|projected|accelerated|extra|diging|subgradient-push");
  optimize->add_option("--objective", opt_flags.objective, "quadratic|absolute|huber|logistic");
  optimize->add_option("--huber-delta", opt_flags.huber_delta, "Huber threshold");
  optimize->add_option("--schedule", opt_flags.schedule,
                       "constant|one_over_sqrt_T|one_over_sqrt_k|diminishing");
  optimize->add_option("--step", opt_flags.step, "Step size (constant) or c (diminishing)");
  optimize->add_option("--horizon,-T", opt_flags.horizon, "Number of iterations");
  optimize->add_option("--beta", opt_flags.beta, "Step of the accelerated method");
  optimize->add_option("--U", opt_flags.upper_bound, "Upper bound on the number of nodes");
  optimize->add_option("--box-lo", opt_flags.box_lo, "Shared box constraint, lower end");
  optimize->add_option("--box-hi", opt_flags.box_hi, "Shared box constraint, upper end");
  optimize->add_flag("--post-mix", opt_flags.post_mix, "Projected method: subgradient after mixing");
  optimize->add_flag("--no-bounds", opt_flags.no_bounds, "Skip theoretical bound checks");

  Flags scaling_flags;
  scaling_flags.eps = 1e-3;
  scaling_flags.init = "linear";
  auto* scaling = app.add_subcommand("scaling", "Consensus time versus n, with a log-log fit");
  add_common(scaling, scaling_flags);
  scaling->add_option("--n-list", scaling_flags.n_values, "Ascending network sizes")->delimiter(',');
  scaling->add_option("--reps", scaling_flags.reps, "Repetitions for random families");
  scaling->add_flag("--accelerated", scaling_flags.accelerated, "Use momentum-accelerated averaging");

  app.add_subcommand("selftest", "Invariant checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("selftest")) {
      const auto checks = decopt::harness::cmd_selftest();
      decopt::harness::write_selftest_table(std::cout, checks);
      for (const auto& c : checks) {
        if (!c.pass) return 1;
      }
      return 0;
    }
    const CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    const Flags& f = name == "consensus" ? consensus_flags
                     : name == "pushsum" ? push_flags
                     : name == "optimize" ? opt_flags
                                          : scaling_flags;
    return decopt::harness::run_and_write(resolve(name, f), std::cout);
  } catch (const decopt::harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 64;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
