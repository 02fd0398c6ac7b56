#include "stochprobe/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace stochprobe {

// ---------------------------------------------------------------------------
// Pmf

double Pmf::mass() const {
  double s = 0.0;
  for (const auto& [x, p] : entries) s += p;
  return s;
}

double Pmf::mean() const {
  double s = 0.0;
  for (const auto& [x, p] : entries) s += x * p;
  return s;
}

double Pmf::tail(double x0) const {
  double s = 0.0;
  for (const auto& [x, p] : entries)
    if (x >= x0) s += p;
  return s;
}

double Pmf::tail_mean(double x0) const {
  double s = 0.0;
  for (const auto& [x, p] : entries)
    if (x >= x0) s += x * p;
  return s;
}

void validate_pmf(const Pmf& pmf, const std::string& what) {
  std::set<double> seen;
  for (std::size_t i = 0; i < pmf.entries.size(); ++i) {
    const auto& [x, p] = pmf.entries[i];
    if (!std::isfinite(x) || !std::isfinite(p))
      throw ParameterError(what + ": non-finite entry at index " + std::to_string(i));
    if (p < 0.0)
      throw ParameterError(what + ": negative probability at index " + std::to_string(i));
    if (!seen.insert(x).second)
      throw ParameterError(what + ": duplicated outcome at index " + std::to_string(i));
  }
  const double m = pmf.mass();
  if (std::abs(m - 1.0) > kTolerance) {
    std::ostringstream os;
    os << what << ": probabilities sum to " << m;
    throw ParameterError(os.str());
  }
}

Pmf canonical(Pmf pmf) {
  std::map<double, double> merged;
  for (const auto& [x, p] : pmf.entries) merged[x] += p;
  pmf.entries.assign(merged.begin(), merged.end());
  return pmf;
}

double expected_max(std::span<const Pmf> pmfs, double floor) {
  std::set<double> support{floor};
  for (const Pmf& p : pmfs)
    for (const auto& [x, q] : p.entries)
      if (x > floor) support.insert(x);
  double total = 0.0, prev_cdf = 0.0;
  for (double x : support) {
    double cdf = 1.0;
    for (const Pmf& p : pmfs) {
      double c = 0.0;
      for (const auto& [y, q] : p.entries)
        if (y <= x) c += q;
      cdf *= c;
    }
    total += x * (cdf - prev_cdf);
    prev_cdf = cdf;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Instances

int Instance::action_index(const std::string& id) const {
  for (std::size_t i = 0; i < actions.size(); ++i)
    if (actions[i].id == id) return static_cast<int>(i);
  throw ReferenceError("unknown action id '" + id + "'");
}

ActionSpec make_action(std::string id, std::string group, int levels,
                       const std::vector<std::vector<std::pair<int, double>>>& rows,
                       Eigen::VectorXd profit) {
  if (static_cast<int>(rows.size()) != levels)
    throw ParameterError("action '" + id + "': expected one row per level");
  if (profit.size() != levels)
    throw ParameterError("action '" + id + "': profit vector has wrong length");
  std::vector<Eigen::Triplet<double>> triplets;
  for (int from = 0; from < levels; ++from)
    for (const auto& [to, p] : rows[from]) {
      if (to < 0 || to >= levels)
        throw ParameterError("action '" + id + "': target level out of range");
      triplets.emplace_back(from, to, p);
    }
  ActionSpec a;
  a.id = std::move(id);
  a.group = group.empty() ? a.id : std::move(group);
  a.transition.resize(levels, levels);
  a.transition.setFromTriplets(triplets.begin(), triplets.end());
  a.transition.prune(0.0);
  a.transition.makeCompressed();
  a.profit = std::move(profit);
  return a;
}

ActionSpec noop_action(std::string id, int levels) {
  std::vector<std::vector<std::pair<int, double>>> rows(levels);
  for (int i = 0; i < levels; ++i) rows[i] = {{i, 1.0}};
  return make_action(std::move(id), "", levels, rows, Eigen::VectorXd::Zero(levels));
}

GroupIndex index_groups(const Instance& instance) {
  GroupIndex g;
  std::map<std::string, int> lookup;
  g.of_action.reserve(instance.actions.size());
  for (const auto& a : instance.actions) {
    auto [it, fresh] = lookup.emplace(a.group, g.count());
    if (fresh) g.names.push_back(a.group);
    g.of_action.push_back(it->second);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Policy trees

int PolicyNode::child(int key) const {
  for (const auto& [k, idx] : children)
    if (k == key) return idx;
  return -1;
}

PolicyTree leaf_policy(int level, int time) {
  PolicyTree t;
  PolicyNode n;
  n.level = level;
  n.time = time;
  t.nodes.push_back(n);
  return t;
}

namespace {

int copy_subtree(const PolicyTree& src, int node, PolicyTree& dst) {
  const int idx = dst.size();
  dst.nodes.push_back(src.nodes[node]);
  dst.nodes[idx].children.clear();
  for (const auto& [key, child] : src.nodes[node].children) {
    const int c = copy_subtree(src, child, dst);
    dst.nodes[idx].children.emplace_back(key, c);
  }
  return idx;
}

int build_sequence(const Instance& inst, std::span<const int> actions, std::size_t pos,
                   int level, int time, PolicyTree& out) {
  const int idx = out.size();
  PolicyNode n;
  n.level = level;
  n.time = time;
  if (pos == actions.size()) {
    out.nodes.push_back(n);
    return idx;
  }
  n.action = actions[pos];
  out.nodes.push_back(n);
  const Transition& row = inst.actions[n.action].transition;
  std::vector<std::pair<int, int>> kids;
  for (Transition::InnerIterator it(row, level); it; ++it) {
    const int c = build_sequence(inst, actions, pos + 1, static_cast<int>(it.col()),
                                 time + 1, out);
    kids.emplace_back(static_cast<int>(it.col()), c);
  }
  out.nodes[idx].children = std::move(kids);
  return idx;
}

void validate_node(const Instance& inst, const GroupIndex& groups, const PolicyTree& tree,
                   int node, std::vector<char>& used, int depth) {
  if (depth > tree.size())
    throw StructuralError("policy tree contains a cycle");
  const PolicyNode& n = tree.nodes[node];
  if (n.level < 0 || n.level >= inst.levels())
    throw StructuralError("node " + std::to_string(node) + ": level out of range");
  if (n.is_leaf()) {
    if (!n.children.empty())
      throw StructuralError("node " + std::to_string(node) + ": leaf with children");
    if (n.time > inst.horizon + 1)
      throw StructuralError("node " + std::to_string(node) + ": leaf beyond horizon");
    return;
  }
  if (n.action < 0 || n.action >= static_cast<int>(inst.actions.size()))
    throw ReferenceError("node " + std::to_string(node) + ": unknown action index " +
                         std::to_string(n.action));
  if (n.time > inst.horizon)
    throw StructuralError("node " + std::to_string(node) + ": action beyond horizon T=" +
                          std::to_string(inst.horizon));
  const int g = groups.of_action[n.action];
  if (used[g])
    throw StructuralError("node " + std::to_string(node) + ": group '" + groups.names[g] +
                          "' repeats on a realization path");
  const Transition& row = inst.actions[n.action].transition;
  std::vector<int> support;
  for (Transition::InnerIterator it(row, n.level); it; ++it)
    if (it.value() > 0.0) support.push_back(static_cast<int>(it.col()));
  if (support.size() != n.children.size())
    throw StructuralError("node " + std::to_string(node) +
                          ": child keys do not match the action's support");
  used[g] = 1;
  for (std::size_t i = 0; i < support.size(); ++i) {
    const auto& [key, c] = n.children[i];
    if (key != support[i])
      throw StructuralError("node " + std::to_string(node) +
                            ": child keys do not match the action's support");
    if (c <= 0 || c >= tree.size())
      throw StructuralError("node " + std::to_string(node) + ": dangling child index");
    const PolicyNode& cn = tree.nodes[c];
    if (cn.level != key)
      throw StructuralError("node " + std::to_string(c) + ": level differs from its key");
    if (cn.time != n.time + 1)
      throw StructuralError("node " + std::to_string(c) + ": time index not parent + 1");
    validate_node(inst, groups, tree, c, used, depth + 1);
  }
  used[g] = 0;
}

double node_profit(const Instance& inst, const PolicyNode& n) {
  return n.is_leaf() ? inst.terminal[n.level] : inst.actions[n.action].profit[n.level];
}

double recurse_value(const Instance& inst, const PolicyTree& tree, int node,
                     std::vector<double>& out) {
  const PolicyNode& n = tree.nodes[node];
  double v = node_profit(inst, n);
  if (!n.is_leaf()) {
    const ActionSpec& a = inst.actions[n.action];
    for (const auto& [key, c] : n.children)
      v += a.phi(n.level, key) * recurse_value(inst, tree, c, out);
  }
  out[node] = v;
  return v;
}

void forward_pass(const Instance& inst, const PolicyTree& tree, int node, double reach,
                  double mu, std::vector<double>& reach_out, std::vector<double>& mu_out) {
  reach_out[node] = reach;
  mu_out[node] = mu;
  const PolicyNode& n = tree.nodes[node];
  if (n.is_leaf()) return;
  const ActionSpec& a = inst.actions[n.action];
  const double node_mu = a.mu(n.level);
  for (const auto& [key, c] : n.children)
    forward_pass(inst, tree, c, reach * a.phi(n.level, key), mu + node_mu, reach_out, mu_out);
}

int copy_with_cut(const PolicyTree& src, int node, std::span<const double> accumulated,
                  double threshold, PolicyTree& dst, std::vector<int>& cut) {
  const PolicyNode& n = src.nodes[node];
  const int idx = dst.size();
  if (!n.is_leaf() && accumulated[node] >= threshold - 1e-12) {
    PolicyNode leaf;
    leaf.level = n.level;
    leaf.time = n.time;
    dst.nodes.push_back(leaf);
    cut.push_back(node);
    return idx;
  }
  dst.nodes.push_back(n);
  dst.nodes[idx].children.clear();
  for (const auto& [key, c] : n.children) {
    const int ci = copy_with_cut(src, c, accumulated, threshold, dst, cut);
    dst.nodes[idx].children.emplace_back(key, ci);
  }
  return idx;
}

}  // namespace

PolicyTree subtree(const PolicyTree& tree, int node) {
  PolicyTree out;
  copy_subtree(tree, node, out);
  return out;
}

PolicyTree sequence_policy(const Instance& instance, std::span<const int> actions) {
  if (static_cast<int>(actions.size()) > instance.horizon)
    throw ParameterError("sequence longer than the horizon");
  for (int a : actions)
    if (a < 0 || a >= static_cast<int>(instance.actions.size()))
      throw ReferenceError("sequence references unknown action index " + std::to_string(a));
  PolicyTree out;
  build_sequence(instance, actions, 0, instance.start_level, 1, out);
  validate_policy(instance, out);
  return out;
}

void validate_policy(const Instance& instance, const PolicyTree& tree) {
  if (tree.nodes.empty()) throw StructuralError("empty policy tree");
  if (instance.terminal.size() != instance.levels())
    throw StructuralError("terminal vector length differs from level count");
  const GroupIndex groups = index_groups(instance);
  std::vector<char> used(groups.count(), 0);
  if (tree.root().time < 1) throw StructuralError("root time index must be >= 1");
  validate_node(instance, groups, tree, 0, used, 0);
}

std::vector<double> subtree_values(const Instance& instance, const PolicyTree& tree) {
  validate_policy(instance, tree);
  std::vector<double> out(tree.nodes.size(), 0.0);
  recurse_value(instance, tree, 0, out);
  return out;
}

std::vector<double> reach_probabilities(const Instance& instance, const PolicyTree& tree) {
  validate_policy(instance, tree);
  std::vector<double> reach(tree.nodes.size()), mu(tree.nodes.size());
  forward_pass(instance, tree, 0, 1.0, 0.0, reach, mu);
  return reach;
}

std::vector<double> prefix_mu(const Instance& instance, const PolicyTree& tree) {
  validate_policy(instance, tree);
  std::vector<double> reach(tree.nodes.size()), mu(tree.nodes.size());
  forward_pass(instance, tree, 0, 1.0, 0.0, reach, mu);
  return mu;
}

double evaluate_policy(const Instance& instance, const PolicyTree& tree) {
  return subtree_values(instance, tree).front();
}

double evaluate_policy_node_sum(const Instance& instance, const PolicyTree& tree) {
  const std::vector<double> reach = reach_probabilities(instance, tree);
  double total = 0.0;
  for (int v = 0; v < tree.size(); ++v) total += reach[v] * node_profit(instance, tree.nodes[v]);
  return total;
}

PathStats path_stats(const Instance& instance, const PolicyTree& tree,
                     std::span<const int> keys) {
  validate_policy(instance, tree);
  PathStats s;
  int node = 0;
  for (int key : keys) {
    const PolicyNode& n = tree.nodes[node];
    const int c = n.child(key);
    if (n.is_leaf() || c < 0)
      throw StructuralError("path leaves the tree at key " + std::to_string(key));
    const ActionSpec& a = instance.actions[n.action];
    s.reach_probability *= a.phi(n.level, key);
    s.mu += a.mu(n.level);
    s.accumulated_expected_profit += a.profit[n.level];
    node = c;
  }
  s.node = node;
  return s;
}

double expected_path_mu(const Instance& instance, const PolicyTree& tree) {
  validate_policy(instance, tree);
  std::vector<double> reach(tree.nodes.size()), mu(tree.nodes.size());
  forward_pass(instance, tree, 0, 1.0, 0.0, reach, mu);
  double s = 0.0;
  for (int v = 0; v < tree.size(); ++v)
    if (tree.nodes[v].is_leaf()) s += reach[v] * mu[v];
  return s;
}

Truncation truncate_on_weight(const PolicyTree& tree, std::span<const double> accumulated,
                              double threshold) {
  if (accumulated.size() != tree.nodes.size())
    throw StructuralError("weight annotation length differs from node count");
  Truncation out;
  copy_with_cut(tree, 0, accumulated, threshold, out.tree, out.cut);
  return out;
}

Truncation truncate_with_cut(const Instance& instance, const PolicyTree& tree, double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw ParameterError("eps must lie in (0, 1]");
  const std::vector<double> mu = prefix_mu(instance, tree);
  return truncate_on_weight(tree, mu, 1.0 / eps);
}

PolicyTree truncate_policy(const Instance& instance, const PolicyTree& tree, double eps) {
  return truncate_with_cut(instance, tree, eps).tree;
}

// ---------------------------------------------------------------------------
// Compliance

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kValueDecreases: return "value decreases";
    case ViolationKind::kRowNotNormalized: return "row not normalized";
    case ViolationKind::kNegativeProfit: return "negative expected profit";
    case ViolationKind::kNegativeTerminal: return "negative terminal payoff";
    case ViolationKind::kNegativeProbability: return "negative probability";
    case ViolationKind::kShape: return "shape mismatch";
  }
  return "unknown";
}

ComplianceReport validate_instance(const Instance& instance) {
  ComplianceReport r;
  const int K = instance.levels();
  auto add = [&](ViolationKind k, int a, int from, int to, std::string msg) {
    r.violations.push_back({k, a, from, to, std::move(msg)});
  };
  if (K < 1) add(ViolationKind::kShape, -1, -1, -1, "level count must be positive");
  if (instance.horizon < 1) add(ViolationKind::kShape, -1, -1, -1, "horizon must be >= 1");
  if (instance.start_level < 0 || instance.start_level >= K)
    add(ViolationKind::kShape, -1, -1, -1, "start level out of range");
  if (instance.terminal.size() != K) {
    add(ViolationKind::kShape, -1, -1, -1, "terminal vector length differs from level count");
  } else {
    for (int i = 0; i < K; ++i)
      if (instance.terminal[i] < 0.0)
        add(ViolationKind::kNegativeTerminal, -1, i, -1, "h(" + std::to_string(i) + ") < 0");
  }
  if (!instance.values.rep.empty()) {
    if (static_cast<int>(instance.values.rep.size()) != K)
      add(ViolationKind::kShape, -1, -1, -1, "level representatives have wrong length");
    else
      for (int i = 1; i < K; ++i)
        if (instance.values.rep[i] < instance.values.rep[i - 1])
          add(ViolationKind::kShape, -1, i, -1, "level representatives decrease");
  }
  for (std::size_t ai = 0; ai < instance.actions.size(); ++ai) {
    const ActionSpec& a = instance.actions[ai];
    const int idx = static_cast<int>(ai);
    if (a.transition.rows() != K || a.transition.cols() != K || a.profit.size() != K) {
      add(ViolationKind::kShape, idx, -1, -1, "action '" + a.id + "' has wrong dimensions");
      continue;
    }
    for (int from = 0; from < K; ++from) {
      double sum = 0.0;
      for (Transition::InnerIterator it(a.transition, from); it; ++it) {
        const int to = static_cast<int>(it.col());
        if (it.value() < 0.0)
          add(ViolationKind::kNegativeProbability, idx, from, to,
              "action '" + a.id + "' has a negative probability");
        if (to < from && it.value() != 0.0)
          add(ViolationKind::kValueDecreases, idx, from, to,
              "action '" + a.id + "': value decreases from " + std::to_string(from) + " to " +
                  std::to_string(to));
        sum += it.value();
      }
      if (std::abs(sum - 1.0) > kTolerance)
        add(ViolationKind::kRowNotNormalized, idx, from, -1,
            "action '" + a.id + "': row " + std::to_string(from) + " sums to " +
                std::to_string(sum));
      if (a.profit[from] < 0.0)
        add(ViolationKind::kNegativeProfit, idx, from, -1,
            "action '" + a.id + "': G(" + std::to_string(from) + ") < 0");
    }
  }
  r.compliant = r.violations.empty();
  return r;
}

ComplianceReport mark_compliance(Instance& instance) {
  ComplianceReport r = validate_instance(instance);
  instance.compliant = r.compliant;
  return r;
}

}  // namespace stochprobe
