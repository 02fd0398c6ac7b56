#pragma once

// Signatures, block-tree topologies, the forward configuration DP and the
// end-to-end block-policy search.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stochprobe/block.hpp"

namespace stochprobe {

// Integer grid units of x: floor(x / grid), except that values within 1e-9
// of a lattice point snap to it.
std::int64_t grid_units(double x, double grid);

struct Signature {
  int level = 0;
  double grid = 0.0;         // probability unit
  double profit_grid = 0.0;  // grid * max_ref
  std::vector<std::int64_t> units;  // K probability entries, then the profit entry

  double entry(int j) const;
  bool operator==(const Signature& o) const { return level == o.level && units == o.units; }
};

Signature action_signature(const Instance& instance, int action, int level, double grid,
                           double max_ref);
// Entrywise sum of the member signatures.
Signature block_signature(const Instance& instance, const BlockNode& block, double grid,
                          double max_ref);

// An action is useful at a level when it can raise the level or pays profit.
bool useful_at(const ActionSpec& action, int level);

struct TopologyNode {
  int level = 0;
  int parent = -1;
  int key = -1;  // level key under the parent
  int depth = 1;
  std::vector<std::pair<int, int>> children;  // key-sorted
};

struct Topology {
  std::vector<TopologyNode> nodes;       // pre-order; nodes[0] is the root
  std::vector<std::vector<int>> paths;  // node lists from the root to each topology leaf

  int size() const { return static_cast<int>(nodes.size()); }
  bool is_ancestor(int a, int b) const;  // a strictly above b
};

inline constexpr std::size_t kDefaultTopologyCap = 1'000'000;

// Level-labeled rooted trees with at most `block_budget` nodes and depth at
// most `depth_limit`. Levels with allowed[level] == 0 are never used; an
// empty mask allows all. Smaller trees come first.
std::vector<Topology> enumerate_topologies(int levels, int block_budget, int depth_limit,
                                           int start_level,
                                           std::size_t count_cap = kDefaultTopologyCap,
                                           const std::vector<char>& allowed = {});

inline constexpr std::size_t kDefaultStateCap = 5'000'000;

// kDefaultStateCap unless STOCHPROBE_STATE_CAP is set.
std::size_t default_state_cap();

// Reachable configurations of one topology. Configuration c is the integer
// slice [c * width, (c + 1) * width) of `configs`: for every topology node,
// its signature units from its own level up, then the profit units.
struct DpResult {
  int levels = 0;
  double grid = 0.0;
  double profit_grid = 0.0;
  int width = 0;
  std::vector<int> offset;  // per topology node
  std::vector<std::int32_t> configs;
  std::vector<std::uint32_t> config_state;  // state holding each configuration's traceback
  std::size_t states = 0;

  // Traceback arena: parent state and the (node, action) placements made on
  // the transition into each state.
  std::vector<std::int32_t> parent;
  std::vector<std::uint32_t> place_begin;
  std::vector<std::pair<int, int>> place;

  std::size_t size() const { return config_state.size(); }
  std::vector<Signature> signatures(const Topology& topology, std::size_t c) const;
  // Per topology node, the placed actions in group order.
  std::vector<std::vector<int>> items(const Topology& topology, std::size_t c) const;
};

// Forward reachability over action groups. Each group is skipped or placed
// on an antichain of topology nodes with one member action per chosen node;
// caps[j] bounds the items on topology path j.
DpResult config_dp(const Instance& instance, const Topology& topology, double grid,
                   const std::vector<int>& caps, double max_ref,
                   std::size_t state_cap = default_state_cap());

// Rounded-signature estimate of the block-tree value of a configuration.
double surrogate_value(const Instance& instance, const Topology& topology,
                       const std::vector<Signature>& signatures);

// Concrete block tree for a traceback; empty blocks collapse into their flat
// child and uncovered positive-probability keys become leaves.
BlockTree materialize(const Instance& instance, const Topology& topology,
                      const std::vector<std::vector<int>>& items);

struct Scored {
  BlockTree tree;
  double value = 0.0;
  double surrogate = 0.0;
  int rescored = 0;
};

// Ranks by surrogate (stable), rescores the best top_k exactly (0 means all)
// and returns the exact winner. With skip_empty, candidates that leave a
// topology node empty are passed over without using a top_k slot.
Scored reconstruct_and_score(const Instance& instance, const Topology& topology,
                             const DpResult& candidates, int top_k,
                             bool skip_empty = false);

enum class MaxHint { kExact, kGreedyProbemax, kTerminalBound };

MaxHint parse_max_hint(const std::string& name);
const char* to_string(MaxHint hint);

// exact: max_over_starts; greedy_probemax: greedy expected maximum over the
// level-0 rows (a lower bound on OPT); terminal_bound: max h + T * max G.
double estimate_max(const Instance& instance, MaxHint hint);

struct PtasKnobs {
  double eps = 0.3;
  double grid = 0.05;
  int block_budget = 4;
  int depth_limit = 3;
  std::optional<int> caps;  // uniform per-path cap; defaults to T
  int top_k = 32;           // 0 rescores every candidate
  MaxHint max_hint = MaxHint::kExact;
  std::optional<double> max_ref;  // overrides the hint
  std::size_t state_cap = default_state_cap();
  std::size_t topology_cap = kDefaultTopologyCap;
};

// The eps-coupled preset: grid eps^4/n, depth and caps ceil(eps^-3) and a
// block budget of K^depth, clipped to int range.
PtasKnobs faithful_knobs(const Instance& instance, double eps);

struct PtasDiagnostics {
  int topologies_enumerated = 0;
  int topologies_tried = 0;
  int topologies_failed = 0;
  std::size_t states_explored = 0;
  std::size_t candidates = 0;
  int rescored = 0;
  bool partial = false;
  double max_ref = 0.0;
  double best_surrogate = 0.0;
  double rounding_bound = 0.0;  // B * (1 + 3K) * grid * max_ref
  std::vector<std::string> messages;
};

struct PtasResult {
  BlockTree tree;
  double value = 0.0;
  PtasDiagnostics diagnostics;
};

// Requires a compliant instance (ParameterError otherwise). Capacity errors
// inside one topology are recorded and the search continues.
PtasResult solve_ptas(const Instance& instance, const PtasKnobs& knobs);

}  // namespace stochprobe
