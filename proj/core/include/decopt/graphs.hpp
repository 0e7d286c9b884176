#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace decopt {

using NodeId = std::size_t;

/// One communication graph G^k on nodes 0..n-1.
///
/// An arc (i, j) means node i can send to node j, i.e. j is an out-neighbor of
/// i and i an in-neighbor of j. Undirected graphs store every edge in both
/// directions, so out(i) == in(i). Neighbor lists are kept sorted and free of
/// duplicates; degrees are always derived from them.
class GraphSnapshot {
 public:
  GraphSnapshot() = default;
  GraphSnapshot(std::size_t n, bool directed);

  /// Adds arc from -> to (and to -> from when undirected). Idempotent.
  void add_edge(NodeId from, NodeId to);
  void add_self_loops();

  std::size_t size() const noexcept { return out_.size(); }
  bool directed() const noexcept { return directed_; }
  /// True when every node carries a self-loop.
  bool has_self_loops() const;
  bool has_edge(NodeId from, NodeId to) const;

  std::span<const NodeId> out_neighbors(NodeId i) const { return out_.at(i); }
  std::span<const NodeId> in_neighbors(NodeId i) const { return in_.at(i); }
  std::size_t out_degree(NodeId i) const { return out_.at(i).size(); }
  std::size_t in_degree(NodeId i) const { return in_.at(i).size(); }
  /// Number of neighbors other than i itself (undirected degree d_i without
  /// the self-loop).
  std::size_t degree_without_self(NodeId i) const;
  std::size_t max_degree_without_self() const;

  /// Number of arcs, self-loops included; an undirected edge counts twice.
  std::size_t arc_count() const;
  /// All arcs (i, j), sorted lexicographically.
  std::vector<std::pair<NodeId, NodeId>> arcs() const;

  /// Strong connectivity (plain connectivity for undirected graphs).
  bool strongly_connected() const;

  friend bool operator==(const GraphSnapshot&, const GraphSnapshot&) = default;

 private:
  bool directed_ = false;
  std::vector<std::vector<NodeId>> out_;
  std::vector<std::vector<NodeId>> in_;
};

/// Union of the arc sets of several snapshots on the same node set.
GraphSnapshot graph_union(std::span<const GraphSnapshot> graphs);

/// Edge-list text format: a header line `n directed` (directed is 0 or 1)
/// followed by one `i j` line per arc. Undirected graphs list each edge once
/// with i <= j. Self-loops appear as `i i`.
void write_edge_list(std::ostream& out, const GraphSnapshot& g);
GraphSnapshot read_edge_list(std::istream& in);

enum class Family {
  kPath,
  kGrid2d,
  kGridK,
  kStar,
  kTwoStar,
  kComplete,
  kExpander,
  kErdosRenyi,
  kGeometric,
  kDirectedCycle,
};

std::string_view family_name(Family f);
std::optional<Family> parse_family(std::string_view name);
bool is_random_family(Family f);

struct FamilySpec {
  Family family = Family::kPath;
  std::size_t n = 2;
  /// Dimension for kGridK (kGrid2d forces 2).
  int grid_dim = 2;
  /// Erdos-Renyi / geometric connectivity margin: p = (1+eps) log(n) / n and
  /// r^2 = (1+eps) log(n) / n respectively.
  double eps = 1.0;
  /// Degree of the random regular graph used for kExpander.
  int expander_degree = 6;

  friend bool operator==(const FamilySpec&, const FamilySpec&) = default;
};

inline constexpr int kMaxConnectivityAttempts = 100;

/// Builds the named graph with a self-loop on every node. Random families are
/// resampled with fresh sub-seeds until connected, up to
/// kMaxConnectivityAttempts (GenerationError otherwise). Invalid sizes throw
/// std::invalid_argument.
GraphSnapshot build_graph(const FamilySpec& spec, std::uint64_t seed);

/// Deterministic sub-seed derivation (std::seed_seq over the pair).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

enum class SequenceMode {
  kStatic,
  kPeriodic,
  kRegenerate,
  kTokenRing,
  kRandomBlocks,
};

std::string_view sequence_mode_name(SequenceMode m);
std::optional<SequenceMode> parse_sequence_mode(std::string_view name);

/// The time-varying sequence G^0, G^1, ... together with its claimed
/// block length B. Immutable once built; snapshots are produced on demand and
/// depend only on (mode, parameters, seed).
class GraphSequence {
 public:
  /// G^k = g for every k; B = 1.
  static GraphSequence fixed(GraphSnapshot g);
  /// G^k = graphs[k mod size]; self-loops are added to every graph.
  static GraphSequence periodic(std::vector<GraphSnapshot> graphs, std::size_t block_length);
  /// G^k = build_graph(spec, derive_seed(seed, k)); B = 1.
  static GraphSequence regenerate(FamilySpec spec, std::uint64_t seed);
  /// Ring 0 -> 1 -> ... -> n-1 -> 0 revealed over B steps: arc e -> e+1 is
  /// present at step k iff e mod B == k mod B. With B == n exactly one ring
  /// arc appears per step. Undirected variant reveals the same edges both ways.
  static GraphSequence token_ring(std::size_t n, std::size_t block_length, bool directed = true);
  /// Each block of B steps receives a fresh random strongly connected digraph
  /// (random Hamiltonian cycle plus about n/2 random extra arcs) whose arcs are
  /// scattered over the B steps of the block.
  static GraphSequence random_blocks(std::size_t n, std::size_t block_length, std::uint64_t seed);

  GraphSnapshot at(std::size_t k) const;

  std::size_t size() const noexcept { return n_; }
  SequenceMode mode() const noexcept { return mode_; }
  std::size_t block_length() const noexcept { return block_length_; }
  std::uint64_t seed() const noexcept { return seed_; }
  bool is_static() const noexcept { return mode_ == SequenceMode::kStatic; }
  bool directed() const noexcept { return directed_; }
  const std::optional<FamilySpec>& family() const noexcept { return family_; }
  const std::vector<GraphSnapshot>& graphs() const noexcept { return graphs_; }

 private:
  GraphSequence() = default;

  SequenceMode mode_ = SequenceMode::kStatic;
  std::size_t n_ = 0;
  std::size_t block_length_ = 1;
  std::uint64_t seed_ = 0;
  bool directed_ = false;
  std::optional<FamilySpec> family_;
  std::vector<GraphSnapshot> graphs_;  // static: 1 entry; periodic: the cycle
};

struct ConnectivityCertificate {
  bool ok = true;
  std::optional<std::size_t> first_failing_block;
};

/// Checks that the union of G^{lB}, ..., G^{(l+1)B-1} is strongly connected for
/// every block l with (l+1)B <= horizon. horizon must be a multiple of B.
ConnectivityCertificate certify_B_connectivity(const GraphSequence& seq, std::size_t block_length,
                                               std::size_t horizon);

/// Nodes reachable from `from` along a chain of arcs e^{k_start}, ...,
/// e^{k_finish} with e^k taken from G^k (one arc per step). Sorted.
std::vector<NodeId> reachable_set(const GraphSequence& seq, NodeId from, std::size_t k_start,
                                  std::size_t k_finish);

}  // namespace decopt
