#include "stochprobe/ptas.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <unordered_set>

#include "stochprobe/exact.hpp"

namespace stochprobe {

// ---------------------------------------------------------------------------
// Signatures

std::int64_t grid_units(double x, double grid) {
  if (!(grid > 0.0)) throw ParameterError("grid must be positive");
  const double q = x / grid;
  const double r = std::round(q);
  if (std::abs(q - r) <= 1e-9) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::floor(q));
}

double Signature::entry(int j) const {
  const int K = static_cast<int>(units.size()) - 1;
  return static_cast<double>(units.at(j)) * (j < K ? grid : profit_grid);
}

Signature action_signature(const Instance& instance, int action, int level, double grid,
                           double max_ref) {
  if (!(grid > 0.0)) throw ParameterError("grid must be positive");
  if (!(max_ref > 0.0)) throw ParameterError("max_ref must be positive");
  const int K = instance.levels();
  if (level < 0 || level >= K) throw ParameterError("level out of range");
  const ActionSpec& a = instance.actions.at(action);
  Signature s;
  s.level = level;
  s.grid = grid;
  s.profit_grid = grid * max_ref;
  s.units.assign(K + 1, 0);
  for (Transition::InnerIterator it(a.transition, level); it; ++it)
    s.units[it.col()] = grid_units(it.value(), grid);
  s.units[K] = grid_units(a.profit[level], s.profit_grid);
  return s;
}

Signature block_signature(const Instance& instance, const BlockNode& block, double grid,
                          double max_ref) {
  Signature s;
  s.level = block.level;
  s.grid = grid;
  s.profit_grid = grid * max_ref;
  s.units.assign(instance.levels() + 1, 0);
  for (int a : block.items) {
    const Signature one = action_signature(instance, a, block.level, grid, max_ref);
    for (std::size_t j = 0; j < s.units.size(); ++j) s.units[j] += one.units[j];
  }
  return s;
}

bool useful_at(const ActionSpec& action, int level) {
  return action.phi(level, level) < 1.0 || action.profit[level] > 0.0;
}

// ---------------------------------------------------------------------------
// Topologies

bool Topology::is_ancestor(int a, int b) const {
  for (int p = nodes[b].parent; p >= 0; p = nodes[p].parent)
    if (p == a) return true;
  return false;
}

namespace {

// Pre-order node list; child indices are relative to the shape's first node.
using Shape = std::vector<TopologyNode>;

class TopologyGenerator {
 public:
  TopologyGenerator(int levels, int depth_limit, std::size_t cap, std::vector<char> allowed)
      : levels_(levels), depth_limit_(depth_limit), cap_(cap), allowed_(std::move(allowed)) {}

  const std::vector<Shape>& shapes(int level, int depth, int budget) {
    const auto key = std::make_tuple(level, depth, budget);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    std::vector<Shape> out;
    std::vector<std::pair<int, const Shape*>> chosen;
    std::vector<int> keys;
    if (depth < depth_limit_)
      for (int j = level; j < levels_; ++j)
        if (ok(j)) keys.push_back(j);
    combine(level, depth, keys, 0, budget - 1, chosen, out);
    return memo_.emplace(key, std::move(out)).first->second;
  }

 private:
  bool ok(int level) const { return allowed_.empty() || allowed_[level]; }

  void combine(int level, int depth, const std::vector<int>& keys, std::size_t k, int remaining,
               std::vector<std::pair<int, const Shape*>>& chosen, std::vector<Shape>& out) {
    if (k == keys.size()) {
      Shape s(1);
      s[0].level = level;
      for (const auto& [key, sub] : chosen) {
        const int base = static_cast<int>(s.size());
        s[0].children.emplace_back(key, base);
        for (TopologyNode n : *sub) {
          for (auto& kc : n.children) kc.second += base;
          s.push_back(std::move(n));
        }
      }
      out.push_back(std::move(s));
      if (++produced_ > cap_)
        throw CapacityError("topology enumeration exceeded the cap", produced_);
      return;
    }
    combine(level, depth, keys, k + 1, remaining, chosen, out);
    if (remaining <= 0) return;
    // Memo entries are never modified once stored, so the pointers stay valid.
    const std::vector<Shape>& subs = shapes(keys[k], depth + 1, remaining);
    for (const Shape& shape : subs) {
      const Shape* sub = &shape;
      chosen.emplace_back(keys[k], sub);
      combine(level, depth, keys, k + 1, remaining - static_cast<int>(sub->size()), chosen,
              out);
      chosen.pop_back();
    }
  }

  int levels_;
  int depth_limit_;
  std::size_t cap_;
  std::vector<char> allowed_;
  std::size_t produced_ = 0;
  std::map<std::tuple<int, int, int>, std::vector<Shape>> memo_;
};

void finish_topology(Topology& t) {
  for (int v = 0; v < t.size(); ++v)
    for (const auto& [key, c] : t.nodes[v].children) {
      t.nodes[c].parent = v;
      t.nodes[c].key = key;
      t.nodes[c].depth = t.nodes[v].depth + 1;
    }
  for (int v = 0; v < t.size(); ++v) {
    if (!t.nodes[v].children.empty()) continue;
    std::vector<int> path;
    for (int p = v; p >= 0; p = t.nodes[p].parent) path.push_back(p);
    std::reverse(path.begin(), path.end());
    t.paths.push_back(std::move(path));
  }
}

}  // namespace

std::vector<Topology> enumerate_topologies(int levels, int block_budget, int depth_limit,
                                           int start_level, std::size_t count_cap,
                                           const std::vector<char>& allowed) {
  if (levels < 1) throw ParameterError("level count must be positive");
  if (block_budget < 1 || depth_limit < 1)
    throw ParameterError("block budget and depth limit must be >= 1");
  if (start_level < 0 || start_level >= levels) throw ParameterError("start level out of range");
  if (!allowed.empty() && static_cast<int>(allowed.size()) != levels)
    throw ParameterError("allowed-level mask has wrong length");
  std::vector<Topology> out;
  if (!allowed.empty() && !allowed[start_level]) return out;
  TopologyGenerator gen(levels, depth_limit, count_cap, allowed);
  for (const Shape& s : gen.shapes(start_level, 1, block_budget)) {
    Topology t;
    t.nodes = s;
    finish_topology(t);
    out.push_back(std::move(t));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Topology& a, const Topology& b) { return a.size() < b.size(); });
  return out;
}

// ---------------------------------------------------------------------------
// Configuration DP

std::size_t default_state_cap() {
  if (const char* env = std::getenv("STOCHPROBE_STATE_CAP")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return kDefaultStateCap;
}

namespace {

std::uint64_t hash_ints(const std::int32_t* p, int n) {
  std::uint64_t h = 0x9E3779B97F4A7C15ull;
  for (int i = 0; i < n; ++i) {
    h ^= static_cast<std::uint32_t>(p[i]);
    h *= 0xBF58476D1CE4E5B9ull;
    h ^= h >> 29;
  }
  return h;
}

struct SliceHash {
  const std::vector<std::int32_t>* data;
  int width;
  std::size_t operator()(std::uint32_t id) const {
    return hash_ints(data->data() + static_cast<std::size_t>(id) * width, width);
  }
};

struct SliceEq {
  const std::vector<std::int32_t>* data;
  int width;
  bool operator()(std::uint32_t a, std::uint32_t b) const {
    const std::int32_t* base = data->data();
    return std::equal(base + static_cast<std::size_t>(a) * width,
                      base + static_cast<std::size_t>(a + 1) * width,
                      base + static_cast<std::size_t>(b) * width);
  }
};

using SliceSet = std::unordered_set<std::uint32_t, SliceHash, SliceEq>;

struct Member {
  int action;
  std::vector<std::int32_t> slice;
};

std::int32_t to_int32(std::int64_t v) {
  if (v > INT32_MAX || v < 0)
    throw ParameterError("signature entry out of range; grid too fine for max_ref");
  return static_cast<std::int32_t>(v);
}

// Surrogate over a configuration slice.
double surrogate_slice(const Instance& inst, const Topology& topo, const DpResult& r,
                       const std::int32_t* cfg, int node) {
  const TopologyNode& tn = topo.nodes[node];
  const int K = inst.levels();
  const int I = tn.level;
  const std::int32_t* s = cfg + r.offset[node];
  auto child_value = [&](int key) {
    for (const auto& [k, c] : tn.children)
      if (k == key) return surrogate_slice(inst, topo, r, cfg, c);
    return inst.terminal[key];
  };
  double v = s[K - I] * r.profit_grid;
  double up = 0.0;
  for (int j = I + 1; j < K; ++j) {
    if (s[j - I] == 0) continue;
    const double p = std::min(1.0, s[j - I] * r.grid);
    up += p;
    v += p * child_value(j);
  }
  const double flat = std::max(0.0, 1.0 - up);
  if (flat > 0.0) v += flat * child_value(I);
  return v;
}

}  // namespace

std::vector<Signature> DpResult::signatures(const Topology& topology, std::size_t c) const {
  std::vector<Signature> out;
  const std::int32_t* cfg = configs.data() + c * width;
  for (int b = 0; b < topology.size(); ++b) {
    Signature s;
    s.level = topology.nodes[b].level;
    s.grid = grid;
    s.profit_grid = profit_grid;
    s.units.assign(levels + 1, 0);
    for (int j = s.level; j <= levels; ++j) s.units[j] = cfg[offset[b] + j - s.level];
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::vector<int>> DpResult::items(const Topology& topology, std::size_t c) const {
  std::vector<std::vector<int>> out(topology.size());
  for (std::int64_t s = config_state[c]; s >= 0; s = parent[s])
    for (std::uint32_t i = place_begin[s]; i < place_begin[s + 1]; ++i)
      out[place[i].first].push_back(place[i].second);
  for (auto& v : out) std::reverse(v.begin(), v.end());
  return out;
}

DpResult config_dp(const Instance& instance, const Topology& topology, double grid,
                   const std::vector<int>& caps, double max_ref, std::size_t state_cap) {
  if (!(grid > 0.0)) throw ParameterError("grid must be positive");
  if (!(max_ref > 0.0)) throw ParameterError("max_ref must be positive");
  if (caps.size() != topology.paths.size())
    throw ParameterError("caps vector needs one entry per topology path");
  for (int u : caps)
    if (u < 0 || u > instance.horizon) throw ParameterError("caps must lie in [0, T]");
  const int B = topology.size();
  if (B > 24) throw CapacityError("config_dp: topology too large for antichain masks", B);
  const int K = instance.levels();

  DpResult r;
  r.levels = K;
  r.grid = grid;
  r.profit_grid = grid * max_ref;
  r.offset.resize(B);
  int sig_width = 0;
  for (int b = 0; b < B; ++b) {
    r.offset[b] = sig_width;
    sig_width += K - topology.nodes[b].level + 1;
  }
  r.width = sig_width;
  const int P = static_cast<int>(caps.size());
  const int W = sig_width + P;

  std::vector<std::vector<int>> node_paths(B);
  for (int p = 0; p < P; ++p)
    for (int b : topology.paths[p]) node_paths[b].push_back(p);

  std::vector<std::vector<int>> antichains;
  for (std::uint32_t mask = 1; mask < (1u << B); ++mask) {
    std::vector<int> nodes;
    for (int b = 0; b < B; ++b)
      if (mask >> b & 1u) nodes.push_back(b);
    bool ok = true;
    for (std::size_t i = 0; i < nodes.size() && ok; ++i)
      for (std::size_t j = 0; j < nodes.size() && ok; ++j)
        if (i != j && topology.is_ancestor(nodes[i], nodes[j])) ok = false;
    if (ok) antichains.push_back(std::move(nodes));
  }

  const GroupIndex groups = index_groups(instance);
  std::vector<std::vector<int>> group_actions(groups.count());
  for (std::size_t a = 0; a < instance.actions.size(); ++a)
    group_actions[groups.of_action[a]].push_back(static_cast<int>(a));

  std::vector<std::int32_t> data(W, 0);
  for (int p = 0; p < P; ++p) data[sig_width + p] = caps[p];
  r.parent.push_back(-1);
  r.place_begin = {0, 0};
  SliceSet seen(1024, SliceHash{&data, W}, SliceEq{&data, W});
  seen.insert(0);
  std::uint32_t count = 1;

  std::vector<std::int32_t> buf(W);
  for (int g = 0; g < groups.count(); ++g) {
    // Useful members per node, deduplicated by their signature slice.
    std::vector<std::vector<Member>> members(B);
    for (int b = 0; b < B; ++b) {
      const int I = topology.nodes[b].level;
      for (int a : group_actions[g]) {
        if (!useful_at(instance.actions[a], I)) continue;
        const Signature s = action_signature(instance, a, I, grid, max_ref);
        Member m{a, {}};
        for (int j = I; j <= K; ++j) m.slice.push_back(to_int32(s.units[j]));
        bool dup = false;
        for (const Member& o : members[b]) dup = dup || o.slice == m.slice;
        if (!dup) members[b].push_back(std::move(m));
      }
    }
    std::vector<const std::vector<int>*> usable;
    for (const auto& ac : antichains) {
      bool ok = true;
      for (int b : ac) ok = ok && !members[b].empty();
      if (ok) usable.push_back(&ac);
    }
    if (usable.empty()) continue;

    const std::uint32_t before = count;
    for (std::uint32_t s = 0; s < before; ++s) {
      for (const std::vector<int>* ac : usable) {
        bool room = true;
        for (int b : *ac)
          for (int p : node_paths[b])
            if (data[static_cast<std::size_t>(s) * W + sig_width + p] < 1) room = false;
        if (!room) continue;
        std::vector<std::size_t> choice(ac->size(), 0);
        for (;;) {
          std::copy(data.begin() + static_cast<std::size_t>(s) * W,
                    data.begin() + static_cast<std::size_t>(s + 1) * W, buf.begin());
          for (std::size_t i = 0; i < ac->size(); ++i) {
            const int b = (*ac)[i];
            const Member& m = members[b][choice[i]];
            for (std::size_t j = 0; j < m.slice.size(); ++j) buf[r.offset[b] + j] += m.slice[j];
            for (int p : node_paths[b]) --buf[sig_width + p];
          }
          data.insert(data.end(), buf.begin(), buf.end());
          if (seen.insert(count).second) {
            r.parent.push_back(static_cast<std::int32_t>(s));
            for (std::size_t i = 0; i < ac->size(); ++i)
              r.place.emplace_back((*ac)[i], members[(*ac)[i]][choice[i]].action);
            r.place_begin.push_back(static_cast<std::uint32_t>(r.place.size()));
            if (++count > state_cap)
              throw CapacityError("config_dp: state cap of " + std::to_string(state_cap) +
                                      " exceeded",
                                  count);
          } else {
            data.resize(data.size() - W);
          }
          std::size_t i = 0;
          while (i < ac->size() && ++choice[i] == members[(*ac)[i]].size()) choice[i++] = 0;
          if (i == ac->size()) break;
        }
      }
    }
  }
  r.states = count;

  // Distinct configurations, first found.
  std::vector<std::int32_t> cfg;
  SliceSet distinct(1024, SliceHash{&cfg, sig_width}, SliceEq{&cfg, sig_width});
  std::uint32_t n = 0;
  for (std::uint32_t s = 0; s < count; ++s) {
    cfg.insert(cfg.end(), data.begin() + static_cast<std::size_t>(s) * W,
               data.begin() + static_cast<std::size_t>(s) * W + sig_width);
    if (sig_width == 0 || distinct.insert(n).second) {
      r.config_state.push_back(s);
      ++n;
    } else {
      cfg.resize(cfg.size() - sig_width);
    }
    if (sig_width == 0) break;
  }
  r.configs = std::move(cfg);
  return r;
}

double surrogate_value(const Instance& instance, const Topology& topology,
                       const std::vector<Signature>& signatures) {
  if (static_cast<int>(signatures.size()) != topology.size())
    throw ParameterError("one signature per topology node expected");
  const int K = instance.levels();
  DpResult r;
  r.levels = K;
  r.grid = signatures.empty() ? 0.0 : signatures.front().grid;
  r.profit_grid = signatures.empty() ? 0.0 : signatures.front().profit_grid;
  std::vector<std::int32_t> cfg;
  for (int b = 0; b < topology.size(); ++b) {
    r.offset.push_back(static_cast<int>(cfg.size()));
    for (int j = topology.nodes[b].level; j <= K; ++j)
      cfg.push_back(to_int32(signatures[b].units.at(j)));
  }
  return surrogate_slice(instance, topology, r, cfg.data(), 0);
}

// ---------------------------------------------------------------------------
// Reconstruction

namespace {

int build_block(const Instance& inst, const Topology& topo,
                const std::vector<std::vector<int>>& items, int node, BlockTree& out) {
  const TopologyNode& tn = topo.nodes[node];
  auto topo_child = [&](int key) {
    for (const auto& [k, c] : tn.children)
      if (k == key) return c;
    return -1;
  };
  auto leaf = [&](int level) {
    BlockNode b;
    b.level = level;
    out.nodes.push_back(b);
    return out.size() - 1;
  };
  if (items[node].empty()) {
    const int f = topo_child(tn.level);
    return f >= 0 ? build_block(inst, topo, items, f, out) : leaf(tn.level);
  }
  const int idx = out.size();
  BlockNode b;
  b.level = tn.level;
  b.items = items[node];
  out.nodes.push_back(b);
  const BlockMasses m = exact_masses(inst, out.nodes[idx]);
  std::vector<std::pair<int, int>> kids;
  for (int j = tn.level; j < inst.levels(); ++j) {
    const int c = topo_child(j);
    if (c >= 0)
      kids.emplace_back(j, build_block(inst, topo, items, c, out));
    else if (m.pi[j] > 0.0)
      kids.emplace_back(j, leaf(j));
  }
  out.nodes[idx].children = std::move(kids);
  return idx;
}

}  // namespace

BlockTree materialize(const Instance& instance, const Topology& topology,
                      const std::vector<std::vector<int>>& items) {
  if (static_cast<int>(items.size()) != topology.size())
    throw ParameterError("one item list per topology node expected");
  BlockTree out;
  build_block(instance, topology, items, 0, out);
  return out;
}

Scored reconstruct_and_score(const Instance& instance, const Topology& topology,
                             const DpResult& candidates, int top_k, bool skip_empty) {
  if (top_k < 0) throw ParameterError("top_k must be >= 0");
  Scored best;
  const int root_level = topology.nodes.empty() ? instance.start_level : topology.nodes[0].level;
  best.tree.nodes.push_back(BlockNode{{}, root_level, {}});
  best.value = instance.terminal[root_level];
  best.surrogate = best.value;
  const std::size_t n = candidates.size();
  if (n == 0) return best;

  std::vector<double> score(n);
  for (std::size_t c = 0; c < n; ++c)
    score[c] = surrogate_slice(instance, topology, candidates,
                               candidates.configs.data() + c * candidates.width, 0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  bool have = false;
  for (std::size_t c : order) {
    if (top_k > 0 && best.rescored >= top_k) break;
    const auto items = candidates.items(topology, c);
    if (skip_empty &&
        std::any_of(items.begin(), items.end(), [](const auto& v) { return v.empty(); }))
      continue;
    BlockTree tree = materialize(instance, topology, items);
    const double v = block_profit_exact(instance, tree);
    ++best.rescored;
    if (!have || v > best.value + 1e-12) {
      best.tree = std::move(tree);
      best.value = v;
      best.surrogate = score[c];
      have = true;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// MAX estimation and the end-to-end search

MaxHint parse_max_hint(const std::string& name) {
  if (name == "exact") return MaxHint::kExact;
  if (name == "greedy_probemax") return MaxHint::kGreedyProbemax;
  if (name == "terminal_bound") return MaxHint::kTerminalBound;
  throw HintError("unknown max hint '" + name + "'");
}

const char* to_string(MaxHint hint) {
  switch (hint) {
    case MaxHint::kExact: return "exact";
    case MaxHint::kGreedyProbemax: return "greedy_probemax";
    case MaxHint::kTerminalBound: return "terminal_bound";
  }
  return "unknown";
}

double estimate_max(const Instance& instance, MaxHint hint) {
  switch (hint) {
    case MaxHint::kExact:
      return max_over_starts(instance);
    case MaxHint::kGreedyProbemax: {
      if (instance.kind != "probemax")
        throw HintError("greedy_probemax hint needs a probemax instance, got '" +
                        instance.kind + "'");
      const int I0 = instance.start_level;
      std::vector<Pmf> dists;
      for (const ActionSpec& a : instance.actions) {
        Pmf p;
        for (Transition::InnerIterator it(a.transition, I0); it; ++it)
          p.entries.emplace_back(instance.terminal[it.col()], it.value());
        dists.push_back(canonical(std::move(p)));
      }
      std::vector<Pmf> chosen;
      std::vector<char> used(dists.size(), 0);
      double value = instance.terminal[I0];
      for (int step = 0; step < instance.horizon; ++step) {
        int pick = -1;
        double pick_value = value;
        for (std::size_t i = 0; i < dists.size(); ++i) {
          if (used[i]) continue;
          chosen.push_back(dists[i]);
          const double v = expected_max(chosen, instance.terminal[I0]);
          chosen.pop_back();
          if (pick < 0 || v > pick_value + 1e-12) {
            pick = static_cast<int>(i);
            pick_value = v;
          }
        }
        if (pick < 0) break;
        used[pick] = 1;
        chosen.push_back(dists[pick]);
        value = pick_value;
      }
      return value;
    }
    case MaxHint::kTerminalBound: {
      double g = 0.0;
      for (const ActionSpec& a : instance.actions)
        if (a.profit.size() > 0) g = std::max(g, a.profit.maxCoeff());
      return instance.terminal.maxCoeff() + instance.horizon * g;
    }
  }
  throw HintError("unknown max hint");
}

PtasKnobs faithful_knobs(const Instance& instance, double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw ParameterError("eps must lie in (0, 1]");
  PtasKnobs k;
  k.eps = eps;
  const int n = std::max<int>(1, static_cast<int>(instance.actions.size()));
  k.grid = std::pow(eps, 4) / n;
  const double depth = std::ceil(1.0 / (eps * eps * eps) - 1e-9);
  k.depth_limit = static_cast<int>(std::min<double>(depth, INT_MAX));
  k.caps = std::min(instance.horizon, k.depth_limit);
  const double budget = std::pow(static_cast<double>(instance.levels()), depth);
  k.block_budget = static_cast<int>(std::min<double>(budget, INT_MAX));
  k.top_k = 32;
  return k;
}

PtasResult solve_ptas(const Instance& instance, const PtasKnobs& knobs) {
  const ComplianceReport report = validate_instance(instance);
  if (!report.compliant)
    throw ParameterError("solve_ptas needs a compliant instance: " +
                         report.violations.front().message);
  if (!(knobs.eps > 0.0 && knobs.eps <= 1.0)) throw ParameterError("eps must lie in (0, 1]");
  if (!(knobs.grid > 0.0)) throw ParameterError("grid must be positive");
  if (knobs.block_budget < 1 || knobs.depth_limit < 1)
    throw ParameterError("block budget and depth limit must be >= 1");
  if (knobs.top_k < 0) throw ParameterError("top_k must be >= 0");
  if (knobs.caps && *knobs.caps < 0) throw ParameterError("caps must be >= 0");

  PtasResult res;
  PtasDiagnostics& d = res.diagnostics;
  double max_ref;
  if (knobs.max_ref) {
    max_ref = *knobs.max_ref;
  } else if (knobs.max_hint == MaxHint::kGreedyProbemax) {
    const double f = 1.0 - std::exp(-1.0);
    max_ref = estimate_max(instance, knobs.max_hint) / (f * f);
  } else {
    max_ref = estimate_max(instance, knobs.max_hint);
  }
  if (!(max_ref > 0.0)) max_ref = 1.0;
  d.max_ref = max_ref;
  const int K = instance.levels();
  d.rounding_bound = knobs.block_budget * (1.0 + 3.0 * K) * knobs.grid * max_ref;

  const int start = instance.start_level;
  res.tree.nodes.push_back(BlockNode{{}, start, {}});
  res.value = instance.terminal[start];
  d.best_surrogate = res.value;

  const int cap = std::min(knobs.caps.value_or(instance.horizon), instance.horizon);
  const int depth = std::min(knobs.depth_limit, cap);
  if (cap == 0 || depth == 0) return res;

  std::vector<char> allowed(K, 0);
  for (int I = 0; I < K; ++I)
    for (const ActionSpec& a : instance.actions)
      if (useful_at(a, I)) allowed[I] = 1;

  std::vector<Topology> topologies;
  try {
    topologies =
        enumerate_topologies(K, knobs.block_budget, depth, start, knobs.topology_cap, allowed);
  } catch (const CapacityError& e) {
    d.partial = true;
    d.messages.push_back(e.what());
    return res;
  }
  d.topologies_enumerated = static_cast<int>(topologies.size());

  for (const Topology& t : topologies) {
    ++d.topologies_tried;
    try {
      const std::vector<int> caps(t.paths.size(), cap);
      const DpResult dp = config_dp(instance, t, knobs.grid, caps, max_ref, knobs.state_cap);
      d.states_explored += dp.states;
      d.candidates += dp.size();
      Scored s = reconstruct_and_score(instance, t, dp, knobs.top_k, true);
      d.rescored += s.rescored;
      if (s.rescored > 0 && s.value > res.value + 1e-12) {
        res.value = s.value;
        res.tree = std::move(s.tree);
        d.best_surrogate = s.surrogate;
      }
    } catch (const CapacityError& e) {
      ++d.topologies_failed;
      d.partial = true;
      d.states_explored += e.count();
      d.messages.push_back(e.what());
    }
  }
  return res;
}

}  // namespace stochprobe
