#pragma once

// Kernel instances of finite-horizon stochastic dynamic programs, adaptive
// policy trees over them, and exact policy evaluation.
//
// A kernel has ordered value levels 0..K-1. Each action a carries a
// row-stochastic transition matrix Phi_a (row I is the distribution of the
// next level when a is taken at level I) and an expected-profit vector G_a.
// Rows only put mass on levels J >= I when the instance is compliant.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stochprobe/error.hpp"

namespace stochprobe {

inline constexpr double kTolerance = 1e-9;

using Transition = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct ValueSpace {
  int levels = 1;
  // Optional level -> payoff map; empty when the kernel is abstract.
  std::vector<double> rep;
};

// Finite discrete distribution over real outcomes.
struct Pmf {
  std::vector<std::pair<double, double>> entries;  // (outcome, probability)

  double mass() const;
  double mean() const;
  // Pr[X >= x] and E[X * 1{X >= x}].
  double tail(double x) const;
  double tail_mean(double x) const;
};

// Throws ParameterError on negative probabilities, duplicated outcomes or a
// total mass further than 1e-9 from one.
void validate_pmf(const Pmf& pmf, const std::string& what);

// Sorted by outcome with duplicates merged.
Pmf canonical(Pmf pmf);

// E[max(floor, X_1, ..., X_n)] for independent X_i, via the product of CDFs.
double expected_max(std::span<const Pmf> pmfs, double floor = 0.0);

struct ActionMeta {
  int item = -1;
  double threshold = 0.0;
  double cost = 0.0;
  double reward = 0.0;  // per-item profit in knapsack kernels
};

struct ActionSpec {
  std::string id;
  std::string group;  // mutual-exclusion token; equals id when unconstrained
  Transition transition;
  Eigen::VectorXd profit;
  std::optional<ActionMeta> meta;

  double phi(int from, int to) const { return transition.coeff(from, to); }
  // mu = Pr[level strictly increases] when taken at `level`.
  double mu(int level) const { return 1.0 - phi(level, level); }
};

struct Instance {
  ValueSpace values;
  int horizon = 1;
  std::vector<ActionSpec> actions;
  Eigen::VectorXd terminal;
  int start_level = 0;
  bool compliant = true;
  std::string kind = "kernel";

  int levels() const { return values.levels; }
  int action_index(const std::string& id) const;  // throws ReferenceError
};

// Builds an action from sparse rows: rows[I] lists (J, probability).
ActionSpec make_action(std::string id, std::string group, int levels,
                       const std::vector<std::vector<std::pair<int, double>>>& rows,
                       Eigen::VectorXd profit);

// The no-op action used to pad short horizons: Phi(I,I)=1, G=0.
ActionSpec noop_action(std::string id, int levels);

struct GroupIndex {
  std::vector<int> of_action;
  std::vector<std::string> names;
  int count() const { return static_cast<int>(names.size()); }
};

GroupIndex index_groups(const Instance& instance);

// ---------------------------------------------------------------------------
// Policy trees

inline constexpr int kLeaf = -1;

struct PolicyNode {
  int action = kLeaf;  // kLeaf marks a dummy leaf (or STOP) paid h(level)
  int level = 0;
  int time = 1;
  std::vector<std::pair<int, int>> children;  // (level key, node index), key-sorted

  bool is_leaf() const { return action == kLeaf; }
  int child(int key) const;  // node index or -1
};

// Arena-backed tree; nodes[0] is the root.
struct PolicyTree {
  std::vector<PolicyNode> nodes;

  const PolicyNode& root() const { return nodes.front(); }
  int size() const { return static_cast<int>(nodes.size()); }
};

PolicyTree leaf_policy(int level, int time = 1);

// Copies the subtree rooted at `node` into a fresh tree.
PolicyTree subtree(const PolicyTree& tree, int node);

// Applies `actions` in order whatever the realizations; a non-adaptive policy.
PolicyTree sequence_policy(const Instance& instance, std::span<const int> actions);

// Throws StructuralError / ReferenceError when the tree does not fit the
// instance: child keys must be exactly the support of the node's row, child
// levels equal their keys, no group repeats along a path, depth within T.
void validate_policy(const Instance& instance, const PolicyTree& tree);

// P(v) for every node by the leaf recursion P(v) = G_v + sum pi_e P(u).
std::vector<double> subtree_values(const Instance& instance, const PolicyTree& tree);

// Reach probability Phi(v) and prefix risk mass mu(R(v)) (sum over strict
// ancestors) for every node.
std::vector<double> reach_probabilities(const Instance& instance, const PolicyTree& tree);
std::vector<double> prefix_mu(const Instance& instance, const PolicyTree& tree);

double evaluate_policy(const Instance& instance, const PolicyTree& tree);

// Node-sum form: sum over nodes of Phi(v) * G_v, leaves contributing h.
double evaluate_policy_node_sum(const Instance& instance, const PolicyTree& tree);

struct PathStats {
  double reach_probability = 1.0;
  double mu = 0.0;
  double accumulated_expected_profit = 0.0;
  int node = 0;
};

// `keys` lists the child keys followed from the root.
PathStats path_stats(const Instance& instance, const PolicyTree& tree,
                     std::span<const int> keys);

// Sum over leaves of Phi(leaf) * mu(path to leaf). Bounded by K-1 on
// compliant instances.
double expected_path_mu(const Instance& instance, const PolicyTree& tree);

struct Truncation {
  PolicyTree tree;
  std::vector<int> cut;  // indices (in the input tree) of nodes replaced by leaves
};

// Replaces, at the first action node v on each path with mu(R(v)) >= 1/eps,
// the subtree by a dummy leaf paying h(I_v).
Truncation truncate_with_cut(const Instance& instance, const PolicyTree& tree, double eps);
PolicyTree truncate_policy(const Instance& instance, const PolicyTree& tree, double eps);

// Generic first-crossing cut: stops at the first node whose accumulated
// weight reaches `threshold`. Weights are per node in the input tree.
Truncation truncate_on_weight(const PolicyTree& tree, std::span<const double> weight,
                              double threshold);

enum class ViolationKind {
  kValueDecreases,
  kRowNotNormalized,
  kNegativeProfit,
  kNegativeTerminal,
  kNegativeProbability,
  kShape,
};

struct Violation {
  ViolationKind kind;
  int action = -1;  // -1 for instance-level issues
  int from = -1;
  int to = -1;
  std::string message;
};

struct ComplianceReport {
  std::vector<Violation> violations;
  bool compliant = true;
};

ComplianceReport validate_instance(const Instance& instance);

// Runs validate_instance and stores its verdict in instance.compliant.
ComplianceReport mark_compliance(Instance& instance);

const char* to_string(ViolationKind kind);

}  // namespace stochprobe
