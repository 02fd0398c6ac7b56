#pragma once

// Shared fixtures and brute-force oracles for the unit tests.

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "stochprobe/exact.hpp"
#include "stochprobe/problems.hpp"
#include "stochprobe/random.hpp"

namespace testing {

using namespace stochprobe;

using Rows = std::vector<std::vector<std::pair<int, double>>>;

inline Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  int i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

inline Instance kernel(int levels, int horizon, std::initializer_list<double> terminal) {
  Instance inst;
  inst.values.levels = levels;
  inst.horizon = horizon;
  inst.terminal = vec(terminal);
  return inst;
}

// K = 2, one action that moves up with probability 1/2, h = [0, 10].
inline Instance coin_flip() {
  Instance inst = kernel(2, 1, {0.0, 10.0});
  inst.actions.push_back(
      make_action("a", "a", 2, Rows{{{0, 0.5}, {1, 0.5}}, {{1, 1.0}}}, vec({0.0, 0.0})));
  return inst;
}

inline ProblemSpec adaptivity_spec() {
  ProblemSpec spec;
  spec.kind = ProblemKind::kProbemax;
  spec.m = 2;
  spec.items = {Item{Pmf{{{0, 0.5}, {4, 0.5}}}}, Item{Pmf{{{3, 1.0}}}},
                Item{Pmf{{{0, 0.9}, {10, 0.1}}}}};
  spec.step = 1.0;
  spec.theta = 11.0;
  return spec;
}

inline ProblemSpec probemax(std::vector<Pmf> pmfs, int m) {
  ProblemSpec spec;
  spec.kind = ProblemKind::kProbemax;
  spec.m = m;
  for (Pmf& p : pmfs) spec.items.push_back(Item{std::move(p)});
  return spec;
}

// Plain Bellman recursion over explicit group sets, no memo.
inline double naive_value(const Instance& inst, int time, int level, std::set<std::string> used) {
  double best = inst.terminal[level];
  if (time > inst.horizon) return best;
  for (const ActionSpec& a : inst.actions) {
    if (used.count(a.group)) continue;
    std::set<std::string> next = used;
    next.insert(a.group);
    double v = a.profit[level];
    for (int J = 0; J < inst.levels(); ++J) {
      const double p = a.phi(level, J);
      if (p > 0.0) v += p * naive_value(inst, time + 1, J, next);
    }
    best = std::max(best, v);
  }
  return best;
}

inline double naive_value(const Instance& inst) {
  return naive_value(inst, 1, inst.start_level, {});
}

// E[max of the probed values] for the best adaptive Probemax policy,
// computed on the raw distributions.
inline double probemax_oracle(const std::vector<Pmf>& items, int m) {
  std::function<double(std::vector<char>&, double, int)> go = [&](std::vector<char>& used,
                                                                  double best, int left) {
    double out = best;
    if (left == 0) return out;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (used[i]) continue;
      used[i] = 1;
      double v = 0.0;
      for (const auto& [x, p] : items[i].entries) v += p * go(used, std::max(best, x), left - 1);
      used[i] = 0;
      out = std::max(out, v);
    }
    return out;
  };
  std::vector<char> used(items.size(), 0);
  return go(used, 0.0, m);
}

// Tree walk summing leaf reach times terminal plus node reach times profit.
inline double walk_value(const Instance& inst, const PolicyTree& tree, int node = 0,
                         double reach = 1.0) {
  const PolicyNode& v = tree.nodes[node];
  if (v.is_leaf()) return reach * inst.terminal[v.level];
  const ActionSpec& a = inst.actions[v.action];
  double total = reach * a.profit[v.level];
  for (const auto& [key, child] : v.children)
    total += walk_value(inst, tree, child, reach * a.phi(v.level, key));
  return total;
}

inline KernelParams small_kernel(SplitMix64& rng, int max_actions, int max_levels,
                                 int max_horizon) {
  KernelParams p;
  p.actions = rng.between(1, max_actions);
  p.levels = rng.between(1, max_levels);
  p.horizon = rng.between(1, max_horizon);
  p.groups = rng.chance(0.3) ? rng.between(1, p.actions) : 0;
  p.max_mu = rng.chance(0.5) ? 0.3 : 1.0;
  return p;
}

}  // namespace testing
