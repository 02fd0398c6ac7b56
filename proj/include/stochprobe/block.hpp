#pragma once

// Block-adaptive policies. A block is an ordered batch of actions taken at a
// common entry level; the policy moves to a child block on the first level
// increase, or to the flat child once every item realized flat.

#include <vector>

#include "stochprobe/model.hpp"

namespace stochprobe {

struct BlockNode {
  std::vector<int> items;  // action indices in the order they are taken
  int level = 0;
  std::vector<std::pair<int, int>> children;  // (level key, node index), key-sorted

  bool is_leaf() const { return items.empty(); }
  int child(int key) const;
};

struct BlockTree {
  std::vector<BlockNode> nodes;  // nodes[0] is the root

  const BlockNode& root() const { return nodes.front(); }
  int size() const { return static_cast<int>(nodes.size()); }
};

// Every positive-probability key needs a child, keys lie in [level, K), a
// path holds at most T items and never repeats a group.
void validate_block_tree(const Instance& instance, const BlockTree& tree);

// Order-dependent edge masses and profit of one block.
struct BlockMasses {
  Eigen::VectorXd pi;  // indexed by level
  double profit = 0.0;
};
BlockMasses exact_masses(const Instance& instance, const BlockNode& block);
BlockMasses approx_masses(const Instance& instance, const BlockNode& block);

double block_profit_exact(const Instance& instance, const BlockTree& tree);
double block_profit_approx(const Instance& instance, const BlockTree& tree);

// Per-node values of both recursions.
std::vector<double> block_values_exact(const Instance& instance, const BlockTree& tree);
std::vector<double> block_values_approx(const Instance& instance, const BlockTree& tree);

struct BlockReport {
  std::vector<double> block_mu;  // per node; 0 for leaves
  int max_path_blocks = 0;
  bool p1_ok = true;
  bool p2_ok = true;
};

BlockReport check_block_properties(const Instance& instance, const BlockTree& tree, double eps,
                                   int block_budget);

// The policy tree that executes the block tree item by item, starting at time 1.
PolicyTree to_policy(const Instance& instance, const BlockTree& tree);

// Singleton blocks mirroring a policy tree node for node.
BlockTree singleton_blocks(const Instance& instance, const PolicyTree& tree);

// Segments the flat paths of `tree` into blocks. Segments close when the
// per-level spread of child values would exceed eps^2 * max_ref, when the
// segment mass would exceed eps^2, or when the new node lacks an up-key the
// segment already has.
BlockTree blockify(const Instance& instance, const PolicyTree& tree, double eps,
                   double max_ref);

}  // namespace stochprobe
