#include "stochprobe/block.hpp"

#include <algorithm>
#include <limits>
#include <map>

namespace stochprobe {

int BlockNode::child(int key) const {
  for (const auto& [k, idx] : children)
    if (k == key) return idx;
  return -1;
}

namespace {

void check_items(const Instance& inst, const BlockNode& b, int node) {
  for (int a : b.items)
    if (a < 0 || a >= static_cast<int>(inst.actions.size()))
      throw ReferenceError("block " + std::to_string(node) + ": unknown action index " +
                           std::to_string(a));
}

void validate_block(const Instance& inst, const GroupIndex& groups, const BlockTree& tree,
                    int node, int used_items, std::vector<char>& used, int depth) {
  if (depth > tree.size()) throw StructuralError("block tree contains a cycle");
  const BlockNode& b = tree.nodes[node];
  const int K = inst.levels();
  if (b.level < 0 || b.level >= K)
    throw StructuralError("block " + std::to_string(node) + ": level out of range");
  if (b.is_leaf()) {
    if (!b.children.empty())
      throw StructuralError("block " + std::to_string(node) + ": leaf with children");
    return;
  }
  check_items(inst, b, node);
  const int items = used_items + static_cast<int>(b.items.size());
  if (items > inst.horizon)
    throw StructuralError("block " + std::to_string(node) + ": path exceeds horizon T=" +
                          std::to_string(inst.horizon));
  std::vector<int> added;
  for (int a : b.items) {
    const int g = groups.of_action[a];
    if (used[g])
      throw StructuralError("block " + std::to_string(node) + ": group '" + groups.names[g] +
                            "' repeats on a path");
    used[g] = 1;
    added.push_back(g);
  }
  const BlockMasses m = exact_masses(inst, b);
  int prev = -1;
  for (const auto& [key, c] : b.children) {
    if (key < b.level || key >= K || key <= prev)
      throw StructuralError("block " + std::to_string(node) + ": invalid child key " +
                            std::to_string(key));
    prev = key;
    if (c <= 0 || c >= tree.size())
      throw StructuralError("block " + std::to_string(node) + ": dangling child index");
    if (tree.nodes[c].level != key)
      throw StructuralError("block " + std::to_string(c) + ": level differs from its key");
  }
  for (int j = b.level; j < K; ++j)
    if (m.pi[j] > 0.0 && b.child(j) < 0)
      throw StructuralError("block " + std::to_string(node) + ": missing child for level " +
                            std::to_string(j));
  for (const auto& [key, c] : b.children)
    validate_block(inst, groups, tree, c, items, used, depth + 1);
  for (int g : added) used[g] = 0;
}

double node_value(const Instance& inst, const BlockTree& tree, int node, bool exact,
                  std::vector<double>& out) {
  const BlockNode& b = tree.nodes[node];
  double v;
  if (b.is_leaf()) {
    v = inst.terminal[b.level];
  } else {
    const BlockMasses m = exact ? exact_masses(inst, b) : approx_masses(inst, b);
    v = m.profit;
    for (const auto& [key, c] : b.children) {
      const double cv = node_value(inst, tree, c, exact, out);
      v += m.pi[key] * cv;
    }
  }
  out[node] = v;
  return v;
}

void count_paths(const BlockTree& tree, int node, int depth, int& best) {
  const BlockNode& b = tree.nodes[node];
  if (b.is_leaf()) {
    best = std::max(best, depth);
    return;
  }
  if (b.children.empty()) best = std::max(best, depth + 1);
  for (const auto& [key, c] : b.children) count_paths(tree, c, depth + 1, best);
}

// Emits the items of block `node` from position `pos`, then continues into
// child blocks.
int emit_block(const Instance& inst, const BlockTree& tree, int node, std::size_t pos, int time,
               PolicyTree& out);

int emit_child(const Instance& inst, const BlockTree& tree, int node, int key, int time,
               PolicyTree& out) {
  const int c = tree.nodes[node].child(key);
  if (c < 0) throw StructuralError("block " + std::to_string(node) + ": missing child");
  return emit_block(inst, tree, c, 0, time, out);
}

int emit_block(const Instance& inst, const BlockTree& tree, int node, std::size_t pos, int time,
               PolicyTree& out) {
  const BlockNode& b = tree.nodes[node];
  if (pos == b.items.size()) {
    if (b.is_leaf() || b.child(b.level) < 0) {
      const int idx = out.size();
      PolicyNode leaf;
      leaf.level = b.level;
      leaf.time = time;
      out.nodes.push_back(leaf);
      return idx;
    }
    return emit_child(inst, tree, node, b.level, time, out);
  }
  const int idx = out.size();
  PolicyNode n;
  n.action = b.items[pos];
  n.level = b.level;
  n.time = time;
  out.nodes.push_back(n);
  std::vector<std::pair<int, int>> kids;
  const Transition& row = inst.actions[n.action].transition;
  for (Transition::InnerIterator it(row, b.level); it; ++it) {
    const int key = static_cast<int>(it.col());
    const int c = key == b.level ? emit_block(inst, tree, node, pos + 1, time + 1, out)
                                 : emit_child(inst, tree, node, key, time + 1, out);
    kids.emplace_back(key, c);
  }
  out.nodes[idx].children = std::move(kids);
  return idx;
}

int mirror(const PolicyTree& src, int node, BlockTree& out) {
  const PolicyNode& n = src.nodes[node];
  const int idx = out.size();
  BlockNode b;
  b.level = n.level;
  if (!n.is_leaf()) b.items = {n.action};
  out.nodes.push_back(b);
  std::vector<std::pair<int, int>> kids;
  for (const auto& [key, c] : n.children) kids.emplace_back(key, mirror(src, c, out));
  out.nodes[idx].children = std::move(kids);
  return idx;
}

class Blockifier {
 public:
  Blockifier(const Instance& inst, const PolicyTree& tree, double eps, double max_ref)
      : inst_(inst), tree_(tree), values_(subtree_values(inst, tree)),
        spread_(eps * eps * max_ref), mu_cap_(eps * eps) {}

  BlockTree run() {
    build(0);
    return std::move(out_);
  }

 private:
  // Builds the blocks for the flat path starting at policy node v.
  int build(int v) {
    const PolicyNode& start = tree_.nodes[v];
    const int level = start.level;
    if (start.is_leaf()) return push_leaf(level);

    // Flat path w_0, w_1, ... of action nodes.
    std::vector<int> path;
    int end_leaf = -1;
    for (int w = v;;) {
      const PolicyNode& n = tree_.nodes[w];
      if (n.is_leaf()) {
        end_leaf = w;
        break;
      }
      path.push_back(w);
      const int f = n.child(level);
      if (f < 0) break;
      w = f;
    }

    // Greedy segmentation.
    std::vector<std::pair<std::size_t, std::size_t>> segments;
    std::size_t seg_begin = 0;
    std::map<int, std::pair<double, double>> env;
    double seg_mu = 0.0;
    for (std::size_t i = 0; i < path.size(); ++i) {
      const PolicyNode& n = tree_.nodes[path[i]];
      const double node_mu = inst_.actions[n.action].mu(level);
      bool fits = i > seg_begin && seg_mu + node_mu <= mu_cap_ + 1e-12;
      if (fits) {
        for (const auto& [key, lo_hi] : env)
          if (n.child(key) < 0) fits = false;
        for (const auto& [key, c] : n.children) {
          if (key == level || !fits) continue;
          auto it = env.find(key);
          if (it == env.end()) continue;
          const double lo = std::min(it->second.first, values_[c]);
          const double hi = std::max(it->second.second, values_[c]);
          if (hi - lo > spread_ + 1e-12) fits = false;
        }
      }
      if (i > seg_begin && !fits) {
        segments.emplace_back(seg_begin, i);
        seg_begin = i;
        env.clear();
        seg_mu = 0.0;
      }
      seg_mu += node_mu;
      for (const auto& [key, c] : n.children) {
        if (key == level) continue;
        auto [it, fresh] = env.emplace(key, std::make_pair(values_[c], values_[c]));
        if (!fresh) {
          it->second.first = std::min(it->second.first, values_[c]);
          it->second.second = std::max(it->second.second, values_[c]);
        }
      }
    }
    segments.emplace_back(seg_begin, path.size());

    // Emit blocks front to back; each flat child is the next segment.
    int first = -1, prev = -1;
    for (const auto& [b, e] : segments) {
      const int idx = out_.size();
      BlockNode block;
      block.level = level;
      for (std::size_t i = b; i < e; ++i) block.items.push_back(tree_.nodes[path[i]].action);
      out_.nodes.push_back(block);
      if (prev >= 0) out_.nodes[prev].children.emplace_back(level, idx);
      if (first < 0) first = idx;
      // Up-routes go to the children of the segment's last node.
      const PolicyNode& last = tree_.nodes[path[e - 1]];
      std::vector<std::pair<int, int>> ups;
      for (const auto& [key, c] : last.children)
        if (key != level) ups.emplace_back(key, build(c));
      for (const auto& kc : ups) out_.nodes[idx].children.push_back(kc);
      prev = idx;
    }
    if (end_leaf >= 0) {
      const int leaf = push_leaf(level);
      out_.nodes[prev].children.emplace_back(level, leaf);
    }
    for (int idx = first; idx < out_.size(); ++idx) sort_children(idx);
    return first;
  }

  void sort_children(int idx) {
    auto& kids = out_.nodes[idx].children;
    std::sort(kids.begin(), kids.end());
  }

  int push_leaf(int level) {
    BlockNode leaf;
    leaf.level = level;
    out_.nodes.push_back(leaf);
    return out_.size() - 1;
  }

  const Instance& inst_;
  const PolicyTree& tree_;
  std::vector<double> values_;
  double spread_;
  double mu_cap_;
  BlockTree out_;
};

}  // namespace

void validate_block_tree(const Instance& instance, const BlockTree& tree) {
  if (tree.nodes.empty()) throw StructuralError("empty block tree");
  if (instance.terminal.size() != instance.levels())
    throw StructuralError("terminal vector length differs from level count");
  const GroupIndex groups = index_groups(instance);
  std::vector<char> used(groups.count(), 0);
  validate_block(instance, groups, tree, 0, 0, used, 0);
}

BlockMasses exact_masses(const Instance& instance, const BlockNode& block) {
  const int K = instance.levels();
  const int I = block.level;
  BlockMasses m;
  m.pi = Eigen::VectorXd::Zero(K);
  double flat = 1.0;
  for (int a : block.items) {
    const ActionSpec& act = instance.actions[a];
    m.profit += flat * act.profit[I];
    for (Transition::InnerIterator it(act.transition, I); it; ++it)
      if (it.col() != I) m.pi[it.col()] += flat * it.value();
    flat *= act.phi(I, I);
  }
  m.pi[I] = block.items.empty() ? 1.0 : flat;
  return m;
}

BlockMasses approx_masses(const Instance& instance, const BlockNode& block) {
  const int K = instance.levels();
  const int I = block.level;
  BlockMasses m;
  m.pi = Eigen::VectorXd::Zero(K);
  const std::size_t n = block.items.size();
  std::vector<double> stay(n);
  for (std::size_t i = 0; i < n; ++i) stay[i] = instance.actions[block.items[i]].phi(I, I);
  double flat = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const ActionSpec& act = instance.actions[block.items[i]];
    m.profit += act.profit[I];
    flat *= stay[i];
    double others = 1.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) others *= stay[j];
    for (Transition::InnerIterator it(act.transition, I); it; ++it)
      if (it.col() != I) m.pi[it.col()] += others * it.value();
  }
  m.pi[I] = flat;
  return m;
}

std::vector<double> block_values_exact(const Instance& instance, const BlockTree& tree) {
  validate_block_tree(instance, tree);
  std::vector<double> out(tree.nodes.size(), 0.0);
  node_value(instance, tree, 0, true, out);
  return out;
}

std::vector<double> block_values_approx(const Instance& instance, const BlockTree& tree) {
  validate_block_tree(instance, tree);
  std::vector<double> out(tree.nodes.size(), 0.0);
  node_value(instance, tree, 0, false, out);
  return out;
}

double block_profit_exact(const Instance& instance, const BlockTree& tree) {
  return block_values_exact(instance, tree).front();
}

double block_profit_approx(const Instance& instance, const BlockTree& tree) {
  return block_values_approx(instance, tree).front();
}

BlockReport check_block_properties(const Instance& instance, const BlockTree& tree, double eps,
                                   int block_budget) {
  BlockReport r;
  r.block_mu.assign(tree.nodes.size(), 0.0);
  const double cap = eps * eps;
  for (int v = 0; v < tree.size(); ++v) {
    const BlockNode& b = tree.nodes[v];
    for (int a : b.items) r.block_mu[v] += instance.actions.at(a).mu(b.level);
    if (b.items.size() > 1 && r.block_mu[v] > cap + 1e-12) r.p1_ok = false;
  }
  count_paths(tree, 0, 0, r.max_path_blocks);
  r.p2_ok = r.max_path_blocks <= block_budget;
  return r;
}

PolicyTree to_policy(const Instance& instance, const BlockTree& tree) {
  validate_block_tree(instance, tree);
  PolicyTree out;
  emit_block(instance, tree, 0, 0, 1, out);
  return out;
}

BlockTree singleton_blocks(const Instance& instance, const PolicyTree& tree) {
  validate_policy(instance, tree);
  BlockTree out;
  mirror(tree, 0, out);
  return out;
}

BlockTree blockify(const Instance& instance, const PolicyTree& tree, double eps,
                   double max_ref) {
  if (!(eps > 0.0 && eps <= 1.0)) throw ParameterError("eps must lie in (0, 1]");
  if (!(max_ref > 0.0)) throw ParameterError("max_ref must be positive");
  validate_policy(instance, tree);
  return Blockifier(instance, tree, eps, max_ref).run();
}

}  // namespace stochprobe
