#include "decopt/graphs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "decopt/error.hpp"

namespace decopt {

namespace {

void insert_sorted(std::vector<NodeId>& v, NodeId x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end() || *it != x) v.insert(it, x);
}

void require_node(const GraphSnapshot& g, NodeId i) {
  if (i >= g.size()) {
    throw std::invalid_argument("node id " + std::to_string(i) + " out of range for n=" +
                                std::to_string(g.size()));
  }
}

// Breadth-first search over out-arcs (forward) or in-arcs (backward).
std::vector<bool> bfs(const GraphSnapshot& g, NodeId start, bool forward) {
  std::vector<bool> seen(g.size(), false);
  std::vector<NodeId> stack{start};
  seen[start] = true;
  while (!stack.empty()) {
    NodeId u = stack.back();
    stack.pop_back();
    auto next = forward ? g.out_neighbors(u) : g.in_neighbors(u);
    for (NodeId v : next) {
      if (!seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

std::size_t integer_root(std::size_t n, int k) {
  auto r = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(n), 1.0 / k)));
  for (std::size_t c = (r > 0 ? r - 1 : 0); c <= r + 1; ++c) {
    std::size_t p = 1;
    for (int i = 0; i < k; ++i) p *= c;
    if (p == n) return c;
  }
  return 0;
}

GraphSnapshot build_path(std::size_t n) {
  GraphSnapshot g(n, false);
  for (NodeId i = 0; i + 1 < n; ++i) g.add_edge(i, i + 1);
  return g;
}

GraphSnapshot build_grid(std::size_t n, int dim) {
  if (dim < 1) throw std::invalid_argument("grid dimension must be >= 1");
  std::size_t side = integer_root(n, dim);
  if (side == 0) {
    throw std::invalid_argument("grid with dimension " + std::to_string(dim) +
                                " requires n to be a perfect power; got n=" + std::to_string(n));
  }
  GraphSnapshot g(n, false);
  // Node id = sum_c coord_c * side^c.
  std::size_t stride = 1;
  for (int c = 0; c < dim; ++c) {
    for (NodeId i = 0; i < n; ++i) {
      if ((i / stride) % side + 1 < side) g.add_edge(i, i + stride);
    }
    stride *= side;
  }
  return g;
}

GraphSnapshot build_star(std::size_t n) {
  GraphSnapshot g(n, false);
  for (NodeId i = 1; i < n; ++i) g.add_edge(0, i);
  return g;
}

GraphSnapshot build_two_star(std::size_t n) {
  if (n % 2 != 0) {
    throw std::invalid_argument("two-star requires even n; got n=" + std::to_string(n));
  }
  const std::size_t half = n / 2;
  GraphSnapshot g(n, false);
  for (NodeId i = 1; i < half; ++i) g.add_edge(0, i);
  for (NodeId i = half + 1; i < n; ++i) g.add_edge(half, i);
  g.add_edge(0, half);
  return g;
}

GraphSnapshot build_complete(std::size_t n) {
  GraphSnapshot g(n, false);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) g.add_edge(i, j);
  }
  return g;
}

GraphSnapshot build_directed_cycle(std::size_t n) {
  GraphSnapshot g(n, true);
  if (n > 1) {
    for (NodeId i = 0; i < n; ++i) g.add_edge(i, (i + 1) % n);
  }
  return g;
}

double log_threshold(std::size_t n, double eps) {
  return (1.0 + eps) * std::log(static_cast<double>(n)) / static_cast<double>(n);
}

GraphSnapshot sample_erdos_renyi(std::size_t n, double eps, std::mt19937_64& rng) {
  const double p = std::min(1.0, log_threshold(n, eps));
  std::bernoulli_distribution coin(p);
  GraphSnapshot g(n, false);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) {
      if (coin(rng)) g.add_edge(i, j);
    }
  }
  return g;
}

GraphSnapshot sample_geometric(std::size_t n, double eps, std::mt19937_64& rng) {
  const double r2 = log_threshold(n, eps);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<double, double>> pts(n);
  for (auto& p : pts) {
    p.first = unit(rng);
    p.second = unit(rng);
  }
  GraphSnapshot g(n, false);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) {
      double dx = pts[i].first - pts[j].first;
      double dy = pts[i].second - pts[j].second;
      if (dx * dx + dy * dy <= r2) g.add_edge(i, j);
    }
  }
  return g;
}

// Configuration-model pairing with rejection of self-pairs and repeated
// pairs. Returns nullopt when the pairing gets stuck.
std::optional<GraphSnapshot> sample_regular(std::size_t n, int d, std::mt19937_64& rng) {
  std::vector<NodeId> stubs;
  stubs.reserve(n * static_cast<std::size_t>(d));
  for (NodeId i = 0; i < n; ++i) stubs.insert(stubs.end(), static_cast<std::size_t>(d), i);
  GraphSnapshot g(n, false);
  constexpr int kPickRetries = 200;
  while (!stubs.empty()) {
    std::shuffle(stubs.begin(), stubs.end(), rng);
    NodeId u = stubs.back();
    stubs.pop_back();
    std::uniform_int_distribution<std::size_t> pick(0, stubs.size() - 1);
    bool paired = false;
    for (int t = 0; t < kPickRetries && !paired; ++t) {
      std::size_t idx = pick(rng);
      NodeId v = stubs[idx];
      if (v == u || g.has_edge(u, v)) continue;
      g.add_edge(u, v);
      stubs[idx] = stubs.back();
      stubs.pop_back();
      paired = true;
    }
    if (!paired) return std::nullopt;
  }
  return g;
}

void require_n(const FamilySpec& spec, std::size_t min_n) {
  if (spec.n < min_n) {
    throw std::invalid_argument(std::string(family_name(spec.family)) + " requires n >= " +
                                std::to_string(min_n) + "; got n=" + std::to_string(spec.n));
  }
}

}  // namespace

GraphSnapshot::GraphSnapshot(std::size_t n, bool directed)
    : directed_(directed), out_(n), in_(n) {}

void GraphSnapshot::add_edge(NodeId from, NodeId to) {
  require_node(*this, from);
  require_node(*this, to);
  insert_sorted(out_[from], to);
  insert_sorted(in_[to], from);
  if (!directed_) {
    insert_sorted(out_[to], from);
    insert_sorted(in_[from], to);
  }
}

void GraphSnapshot::add_self_loops() {
  for (NodeId i = 0; i < size(); ++i) add_edge(i, i);
}

bool GraphSnapshot::has_self_loops() const {
  for (NodeId i = 0; i < size(); ++i) {
    if (!has_edge(i, i)) return false;
  }
  return true;
}

bool GraphSnapshot::has_edge(NodeId from, NodeId to) const {
  const auto& v = out_.at(from);
  return std::binary_search(v.begin(), v.end(), to);
}

std::size_t GraphSnapshot::degree_without_self(NodeId i) const {
  return out_degree(i) - (has_edge(i, i) ? 1 : 0);
}

std::size_t GraphSnapshot::max_degree_without_self() const {
  std::size_t d = 0;
  for (NodeId i = 0; i < size(); ++i) d = std::max(d, degree_without_self(i));
  return d;
}

std::size_t GraphSnapshot::arc_count() const {
  std::size_t m = 0;
  for (const auto& v : out_) m += v.size();
  return m;
}

std::vector<std::pair<NodeId, NodeId>> GraphSnapshot::arcs() const {
  std::vector<std::pair<NodeId, NodeId>> result;
  result.reserve(arc_count());
  for (NodeId i = 0; i < size(); ++i) {
    for (NodeId j : out_[i]) result.emplace_back(i, j);
  }
  return result;
}

bool GraphSnapshot::strongly_connected() const {
  if (size() <= 1) return true;
  auto fwd = bfs(*this, 0, true);
  if (std::find(fwd.begin(), fwd.end(), false) != fwd.end()) return false;
  if (!directed_) return true;
  auto bwd = bfs(*this, 0, false);
  return std::find(bwd.begin(), bwd.end(), false) == bwd.end();
}

GraphSnapshot graph_union(std::span<const GraphSnapshot> graphs) {
  if (graphs.empty()) return {};
  const std::size_t n = graphs.front().size();
  bool directed = false;
  for (const auto& g : graphs) {
    if (g.size() != n) throw std::invalid_argument("graph_union: node counts differ");
    directed = directed || g.directed();
  }
  GraphSnapshot u(n, directed);
  for (const auto& g : graphs) {
    for (auto [i, j] : g.arcs()) u.add_edge(i, j);
  }
  return u;
}

void write_edge_list(std::ostream& out, const GraphSnapshot& g) {
  out << g.size() << ' ' << (g.directed() ? 1 : 0) << '\n';
  for (auto [i, j] : g.arcs()) {
    if (!g.directed() && j < i) continue;
    out << i << ' ' << j << '\n';
  }
}

GraphSnapshot read_edge_list(std::istream& in) {
  std::size_t n = 0;
  int directed = 0;
  if (!(in >> n >> directed) || (directed != 0 && directed != 1)) {
    throw std::invalid_argument("edge list: malformed header, expected `n directed`");
  }
  GraphSnapshot g(n, directed == 1);
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t line = 1;
  while (in >> i) {
    ++line;
    if (!(in >> j)) {
      throw std::invalid_argument("edge list: dangling node id on line " + std::to_string(line));
    }
    if (i >= n || j >= n) {
      throw std::invalid_argument("edge list: node id out of range on line " +
                                  std::to_string(line));
    }
    g.add_edge(i, j);
  }
  return g;
}

std::string_view family_name(Family f) {
  switch (f) {
    case Family::kPath: return "path";
    case Family::kGrid2d: return "grid2d";
    case Family::kGridK: return "gridk";
    case Family::kStar: return "star";
    case Family::kTwoStar: return "twostar";
    case Family::kComplete: return "complete";
    case Family::kExpander: return "expander";
    case Family::kErdosRenyi: return "erdos-renyi";
    case Family::kGeometric: return "geometric";
    case Family::kDirectedCycle: return "directed-cycle";
  }
  return "unknown";
}

std::optional<Family> parse_family(std::string_view name) {
  for (Family f : {Family::kPath, Family::kGrid2d, Family::kGridK, Family::kStar,
                   Family::kTwoStar, Family::kComplete, Family::kExpander, Family::kErdosRenyi,
                   Family::kGeometric, Family::kDirectedCycle}) {
    if (family_name(f) == name) return f;
  }
  if (name == "two-star") return Family::kTwoStar;
  if (name == "er") return Family::kErdosRenyi;
  return std::nullopt;
}

bool is_random_family(Family f) {
  return f == Family::kExpander || f == Family::kErdosRenyi || f == Family::kGeometric;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

GraphSnapshot build_graph(const FamilySpec& spec, std::uint64_t seed) {
  const std::size_t n = spec.n;
  if (n == 0) throw std::invalid_argument("graph requires n >= 1");

  if (!is_random_family(spec.family)) {
    GraphSnapshot g;
    switch (spec.family) {
      case Family::kPath: g = build_path(n); break;
      case Family::kGrid2d: g = build_grid(n, 2); break;
      case Family::kGridK: g = build_grid(n, spec.grid_dim); break;
      case Family::kStar: g = build_star(n); break;
      case Family::kTwoStar:
        require_n(spec, 2);
        g = build_two_star(n);
        break;
      case Family::kComplete: g = build_complete(n); break;
      case Family::kDirectedCycle: g = build_directed_cycle(n); break;
      default: break;
    }
    g.add_self_loops();
    return g;
  }

  require_n(spec, 2);
  if (spec.family == Family::kExpander) {
    const int d = spec.expander_degree;
    if (d < 1 || n <= static_cast<std::size_t>(d) || (n * static_cast<std::size_t>(d)) % 2 != 0) {
      throw std::invalid_argument("expander requires n > d and n*d even; got n=" +
                                  std::to_string(n) + ", d=" + std::to_string(d));
    }
  }
  if (spec.eps <= 0.0 && spec.family != Family::kExpander) {
    throw std::invalid_argument("random family requires eps > 0");
  }

  for (int attempt = 0; attempt < kMaxConnectivityAttempts; ++attempt) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    std::optional<GraphSnapshot> g;
    switch (spec.family) {
      case Family::kErdosRenyi: g = sample_erdos_renyi(n, spec.eps, rng); break;
      case Family::kGeometric: g = sample_geometric(n, spec.eps, rng); break;
      case Family::kExpander: g = sample_regular(n, spec.expander_degree, rng); break;
      default: break;
    }
    if (g && g->strongly_connected()) {
      g->add_self_loops();
      return *g;
    }
  }
  throw GenerationError(std::string(family_name(spec.family)) + " n=" + std::to_string(n) +
                            ": no connected instance after " +
                            std::to_string(kMaxConnectivityAttempts) + " attempts",
                        kMaxConnectivityAttempts);
}

std::string_view sequence_mode_name(SequenceMode m) {
  switch (m) {
    case SequenceMode::kStatic: return "static";
    case SequenceMode::kPeriodic: return "periodic";
    case SequenceMode::kRegenerate: return "regenerate";
    case SequenceMode::kTokenRing: return "token-ring";
    case SequenceMode::kRandomBlocks: return "random-blocks";
  }
  return "unknown";
}

std::optional<SequenceMode> parse_sequence_mode(std::string_view name) {
  for (SequenceMode m : {SequenceMode::kStatic, SequenceMode::kPeriodic, SequenceMode::kRegenerate,
                         SequenceMode::kTokenRing, SequenceMode::kRandomBlocks}) {
    if (sequence_mode_name(m) == name) return m;
  }
  return std::nullopt;
}

GraphSequence GraphSequence::fixed(GraphSnapshot g) {
  g.add_self_loops();
  GraphSequence s;
  s.mode_ = SequenceMode::kStatic;
  s.n_ = g.size();
  s.directed_ = g.directed();
  s.graphs_.push_back(std::move(g));
  return s;
}

GraphSequence GraphSequence::periodic(std::vector<GraphSnapshot> graphs, std::size_t block_length) {
  if (graphs.empty()) throw std::invalid_argument("periodic sequence needs at least one graph");
  if (block_length == 0) throw std::invalid_argument("block length must be >= 1");
  GraphSequence s;
  s.mode_ = SequenceMode::kPeriodic;
  s.n_ = graphs.front().size();
  s.block_length_ = block_length;
  for (auto& g : graphs) {
    if (g.size() != s.n_) throw std::invalid_argument("periodic sequence: node counts differ");
    g.add_self_loops();
    s.directed_ = s.directed_ || g.directed();
  }
  s.graphs_ = std::move(graphs);
  return s;
}

GraphSequence GraphSequence::regenerate(FamilySpec spec, std::uint64_t seed) {
  GraphSequence s;
  s.mode_ = SequenceMode::kRegenerate;
  s.n_ = spec.n;
  s.seed_ = seed;
  s.directed_ = spec.family == Family::kDirectedCycle;
  s.family_ = spec;
  // Fail early on invalid parameters.
  (void)build_graph(spec, derive_seed(seed, 0));
  return s;
}

GraphSequence GraphSequence::token_ring(std::size_t n, std::size_t block_length, bool directed) {
  if (n == 0) throw std::invalid_argument("token ring requires n >= 1");
  if (block_length == 0) throw std::invalid_argument("block length must be >= 1");
  GraphSequence s;
  s.mode_ = SequenceMode::kTokenRing;
  s.n_ = n;
  s.block_length_ = block_length;
  s.directed_ = directed;
  return s;
}

GraphSequence GraphSequence::random_blocks(std::size_t n, std::size_t block_length,
                                           std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("random blocks require n >= 1");
  if (block_length == 0) throw std::invalid_argument("block length must be >= 1");
  GraphSequence s;
  s.mode_ = SequenceMode::kRandomBlocks;
  s.n_ = n;
  s.block_length_ = block_length;
  s.seed_ = seed;
  s.directed_ = true;
  return s;
}

GraphSnapshot GraphSequence::at(std::size_t k) const {
  switch (mode_) {
    case SequenceMode::kStatic:
      return graphs_.front();
    case SequenceMode::kPeriodic:
      return graphs_[k % graphs_.size()];
    case SequenceMode::kRegenerate:
      return build_graph(*family_, derive_seed(seed_, k));
    case SequenceMode::kTokenRing: {
      GraphSnapshot g(n_, directed_);
      if (n_ > 1) {
        for (NodeId e = k % block_length_; e < n_; e += block_length_) g.add_edge(e, (e + 1) % n_);
      }
      g.add_self_loops();
      return g;
    }
    case SequenceMode::kRandomBlocks: {
      const std::size_t block = k / block_length_;
      const std::size_t step = k % block_length_;
      std::mt19937_64 rng(derive_seed(seed_, block));
      std::vector<NodeId> order(n_);
      std::iota(order.begin(), order.end(), NodeId{0});
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<std::pair<NodeId, NodeId>> block_arcs;
      if (n_ > 1) {
        for (std::size_t i = 0; i < n_; ++i) block_arcs.emplace_back(order[i], order[(i + 1) % n_]);
        std::uniform_int_distribution<NodeId> node(0, n_ - 1);
        for (std::size_t extra = 0; extra < n_ / 2; ++extra) {
          NodeId a = node(rng);
          NodeId b = node(rng);
          if (a != b) block_arcs.emplace_back(a, b);
        }
      }
      std::uniform_int_distribution<std::size_t> slot(0, block_length_ - 1);
      GraphSnapshot g(n_, true);
      for (auto [a, b] : block_arcs) {
        if (slot(rng) == step) g.add_edge(a, b);
      }
      g.add_self_loops();
      return g;
    }
  }
  throw std::logic_error("unreachable sequence mode");
}

ConnectivityCertificate certify_B_connectivity(const GraphSequence& seq, std::size_t block_length,
                                               std::size_t horizon) {
  if (block_length == 0) throw std::invalid_argument("block length must be >= 1");
  if (horizon % block_length != 0) {
    throw std::invalid_argument("horizon must be a multiple of the block length");
  }
  for (std::size_t l = 0; l * block_length < horizon; ++l) {
    std::vector<GraphSnapshot> block;
    block.reserve(block_length);
    for (std::size_t k = l * block_length; k < (l + 1) * block_length; ++k) {
      block.push_back(seq.at(k));
    }
    // Strong connectivity of the union is a directed notion even when the
    // snapshots are undirected; graph_union keeps undirected arcs symmetric.
    if (!graph_union(block).strongly_connected()) return {false, l};
  }
  return {true, std::nullopt};
}

std::vector<NodeId> reachable_set(const GraphSequence& seq, NodeId from, std::size_t k_start,
                                  std::size_t k_finish) {
  if (k_start > k_finish) throw std::invalid_argument("reachable_set: k_start > k_finish");
  if (from >= seq.size()) throw std::invalid_argument("reachable_set: node out of range");
  std::vector<bool> current(seq.size(), false);
  current[from] = true;
  for (std::size_t k = k_start; k <= k_finish; ++k) {
    const GraphSnapshot g = seq.at(k);
    std::vector<bool> next(seq.size(), false);
    for (NodeId u = 0; u < seq.size(); ++u) {
      if (!current[u]) continue;
      for (NodeId v : g.out_neighbors(u)) next[v] = true;
    }
    current = std::move(next);
  }
  std::vector<NodeId> result;
  for (NodeId u = 0; u < seq.size(); ++u) {
    if (current[u]) result.push_back(u);
  }
  return result;
}

}  // namespace decopt
