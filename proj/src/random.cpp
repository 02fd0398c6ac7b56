#include "stochprobe/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

namespace stochprobe {

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

int SplitMix64::below(int n) {
  if (n <= 0) return 0;
  return static_cast<int>(next() % static_cast<std::uint64_t>(n));
}

int SplitMix64::between(int lo, int hi) { return lo + below(hi - lo + 1); }

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t instance, std::uint64_t trial) {
  SplitMix64 a(seed);
  SplitMix64 b(a.next() ^ (instance * 0xD1B54A32D192ED03ULL));
  SplitMix64 c(b.next() ^ (trial * 0x8CB92BA72F3D8DD7ULL));
  return c.next();
}

namespace {

double round_to(double x, double q) { return std::round(x / q) * q; }

// `count` positive probabilities; multiples of `quantum` when it is positive.
std::vector<double> draw_probabilities(SplitMix64& rng, int count, double quantum) {
  std::vector<double> p(count);
  if (quantum > 0.0) {
    const int units = static_cast<int>(std::lround(1.0 / quantum));
    count = std::min(count, units);
    p.assign(count, 0.0);
    std::set<int> cuts;
    while (static_cast<int>(cuts.size()) < count - 1) cuts.insert(rng.between(1, units - 1));
    int prev = 0, i = 0;
    for (int c : cuts) {
      p[i++] = (c - prev) * quantum;
      prev = c;
    }
    p[i] = (units - prev) * quantum;
    return p;
  }
  double total = 0.0;
  for (double& x : p) total += (x = 0.05 + rng.uniform());
  for (double& x : p) x /= total;
  return p;
}

std::vector<double> distinct_values(int count,
                                    const std::function<double()>& draw) {
  std::set<double> seen;
  for (int tries = 0; static_cast<int>(seen.size()) < count && tries < 64 * count; ++tries)
    seen.insert(draw());
  return {seen.begin(), seen.end()};
}

}  // namespace

ProblemSpec gen_random(std::uint64_t seed, const GenParams& params) {
  SplitMix64 rng(stream_seed(seed, 0));
  ProblemSpec spec;
  spec.kind = params.kind;
  spec.eps = params.eps;
  spec.k = std::max(1, params.k);
  const bool sizes = params.kind == ProblemKind::kTarget || params.kind == ProblemKind::kSbk;
  const double scale = sizes ? 1.0 : params.value_max;

  // Lossless lattice shared by all items.
  std::vector<double> lattice;
  if (params.lossless) {
    const int top = std::max(1, static_cast<int>(std::floor(scale * (sizes ? 1.25 : 1.0) /
                                                            params.step + 1e-9)));
    const int want = std::min(std::max(1, params.max_values - 1), top);
    std::set<int> picks;
    while (static_cast<int>(picks.size()) < want) picks.insert(rng.between(1, top));
    lattice.push_back(0.0);
    for (int p : picks) lattice.push_back(p * params.step);
  }

  for (int i = 0; i < params.n; ++i) {
    const int support = rng.between(1, std::max(1, params.support));
    std::vector<double> outcomes;
    if (params.lossless) {
      outcomes = distinct_values(std::min<int>(support, lattice.size()), [&] {
        return lattice[rng.below(static_cast<int>(lattice.size()))];
      });
    } else {
      outcomes = distinct_values(support, [&] {
        return round_to(rng.uniform() * scale * (sizes ? 1.25 : 1.0), sizes ? 0.01 : 0.1);
      });
    }
    const std::vector<double> probs =
        draw_probabilities(rng, static_cast<int>(outcomes.size()),
                           params.lossless ? params.prob_quantum : 0.0);
    Item item;
    for (std::size_t j = 0; j < probs.size(); ++j) item.pmf.entries.emplace_back(outcomes[j], probs[j]);
    item.pmf = canonical(std::move(item.pmf));
    if (params.kind == ProblemKind::kCommittedPandora)
      item.cost = round_to(rng.uniform() * 0.8 * item.pmf.mean(), 0.01);
    if (params.kind == ProblemKind::kSbk) item.profit = rng.between(1, 5);
    spec.items.push_back(std::move(item));
  }
  spec.m = std::clamp(params.m, 0, params.n);
  return spec;
}

Instance gen_kernel(SplitMix64& rng, const KernelParams& p) {
  const int K = std::max(1, p.levels);
  Instance inst;
  inst.kind = "random";
  inst.values.levels = K;
  inst.horizon = std::max(1, p.horizon);
  inst.terminal.resize(K);
  for (int I = 0; I < K; ++I) {
    double h = rng.uniform() * p.terminal_max;
    if (p.terminal_quantum > 0.0) h = std::floor(h / p.terminal_quantum) * p.terminal_quantum;
    inst.terminal[I] = h;
  }
  for (int a = 0; a < p.actions; ++a) {
    std::vector<std::vector<std::pair<int, double>>> rows(K);
    Eigen::VectorXd profit = Eigen::VectorXd::Zero(K);
    for (int I = 0; I < K; ++I) {
      if (rng.chance(p.profit_chance)) {
        double g = rng.uniform() * p.profit_max;
        if (p.profit_quantum > 0.0) g = std::floor(g / p.profit_quantum + 0.5) * p.profit_quantum;
        profit[I] = g;
      }
      if (I == K - 1) {
        rows[I].emplace_back(I, 1.0);
        continue;
      }
      std::vector<int> targets;
      for (int J = I + 1; J < K; ++J)
        if (rng.chance(0.6)) targets.push_back(J);
      if (targets.empty()) targets.push_back(rng.between(I + 1, K - 1));
      std::map<int, double> row;
      if (p.prob_quantum > 0.0) {
        const int units = static_cast<int>(std::lround(1.0 / p.prob_quantum));
        const int up = rng.between(0, static_cast<int>(std::floor(p.max_mu * units + 1e-9)));
        for (int u = 0; u < up; ++u) row[targets[rng.below(static_cast<int>(targets.size()))]] += 1;
        row[I] = units - up;
        for (auto& [J, v] : row) v *= p.prob_quantum;
      } else {
        const double up = rng.uniform() * p.max_mu;
        std::vector<double> w(targets.size());
        double total = 0.0;
        for (double& x : w) total += (x = 0.05 + rng.uniform());
        for (std::size_t j = 0; j < targets.size(); ++j) row[targets[j]] = up * w[j] / total;
        row[I] = 1.0 - up;
      }
      for (const auto& [J, v] : row)
        if (v > 0.0) rows[I].emplace_back(J, v);
    }
    const std::string id = "a" + std::to_string(a);
    const std::string group = p.groups > 0 ? "g" + std::to_string(rng.below(p.groups)) : id;
    inst.actions.push_back(make_action(id, group, K, rows, profit));
  }
  mark_compliance(inst);
  return inst;
}

PolicyTree gen_policy(SplitMix64& rng, const Instance& inst, double stop_chance) {
  const GroupIndex groups = index_groups(inst);
  std::vector<char> used(groups.count(), 0);
  PolicyTree tree;
  std::function<int(int, int)> grow = [&](int level, int time) {
    const int idx = tree.size();
    tree.nodes.push_back(PolicyNode{kLeaf, level, time, {}});
    if (time > inst.horizon || rng.chance(stop_chance)) return idx;
    std::vector<int> open;
    for (int a = 0; a < static_cast<int>(inst.actions.size()); ++a)
      if (!used[groups.of_action[a]]) open.push_back(a);
    if (open.empty()) return idx;
    const int a = open[rng.below(static_cast<int>(open.size()))];
    tree.nodes[idx].action = a;
    used[groups.of_action[a]] = 1;
    std::vector<std::pair<int, int>> kids;
    for (Transition::InnerIterator it(inst.actions[a].transition, level); it; ++it)
      if (it.value() > 0.0) kids.emplace_back(static_cast<int>(it.col()), grow(static_cast<int>(it.col()), time + 1));
    used[groups.of_action[a]] = 0;
    tree.nodes[idx].children = std::move(kids);
    return idx;
  };
  grow(inst.start_level, 1);
  return tree;
}

BlockTree gen_block_tree(SplitMix64& rng, const Instance& inst, double eps, double stop_chance) {
  const GroupIndex groups = index_groups(inst);
  std::vector<char> used(groups.count(), 0);
  const double cap = eps * eps;
  BlockTree tree;
  std::function<int(int, int)> grow = [&](int level, int items) {
    const int idx = tree.size();
    tree.nodes.push_back(BlockNode{{}, level, {}});
    if (items >= inst.horizon || rng.chance(stop_chance)) return idx;
    std::vector<int> open;
    for (int a = 0; a < static_cast<int>(inst.actions.size()); ++a)
      if (!used[groups.of_action[a]]) open.push_back(a);
    if (open.empty()) return idx;
    for (std::size_t i = open.size(); i > 1; --i)
      std::swap(open[i - 1], open[rng.below(static_cast<int>(i))]);
    std::vector<int> block{open.front()};
    used[groups.of_action[open.front()]] = 1;
    double mu = inst.actions[open.front()].mu(level);
    for (std::size_t i = 1; i < open.size(); ++i) {
      if (items + static_cast<int>(block.size()) >= inst.horizon || !rng.chance(0.7)) break;
      const int a = open[i];
      const double m = inst.actions[a].mu(level);
      if (used[groups.of_action[a]] || mu + m > cap) continue;
      block.push_back(a);
      used[groups.of_action[a]] = 1;
      mu += m;
    }
    tree.nodes[idx].items = block;
    const BlockMasses masses = exact_masses(inst, tree.nodes[idx]);
    std::vector<std::pair<int, int>> kids;
    for (int J = level; J < inst.levels(); ++J)
      if (masses.pi[J] > 0.0) kids.emplace_back(J, grow(J, items + static_cast<int>(block.size())));
    for (int a : block) used[groups.of_action[a]] = 0;
    tree.nodes[idx].children = std::move(kids);
    return idx;
  };
  grow(inst.start_level, 0);
  return tree;
}

}  // namespace stochprobe
