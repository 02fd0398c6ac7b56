#include <doctest.h>

#include "stochprobe/ptas.hpp"
#include "support.hpp"

using namespace testing;

namespace {

Instance single_up(double up) {
  Instance inst = kernel(2, 1, {0.0, 1.0});
  inst.actions.push_back(
      make_action("a", "a", 2, Rows{{{0, 1.0 - up}, {1, up}}, {{1, 1.0}}}, vec({0, 0})));
  return inst;
}

// A rounds without loss; B loses most of its up mass and all of its profit.
Instance rounding_trap() {
  Instance inst = kernel(2, 1, {0.0, 1.0});
  inst.actions.push_back(
      make_action("A", "A", 2, Rows{{{0, 0.85}, {1, 0.15}}, {{1, 1.0}}}, vec({0, 0})));
  inst.actions.push_back(
      make_action("B", "B", 2, Rows{{{0, 0.851}, {1, 0.149}}, {{1, 1.0}}}, vec({0.02, 0})));
  return inst;
}

bool path_is_clean(const Topology& topo, const std::vector<std::vector<int>>& items,
                   const GroupIndex& g, const std::vector<int>& caps) {
  for (std::size_t j = 0; j < topo.paths.size(); ++j) {
    std::set<int> seen;
    int count = 0;
    for (int node : topo.paths[j])
      for (int a : items[node]) {
        ++count;
        if (!seen.insert(g.of_action[a]).second) return false;
      }
    if (count > caps[j]) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("ptas") {
  TEST_CASE("signature rounding") {
    CHECK(grid_units(0.137, 0.0625) == 2);
    CHECK(grid_units(0.25, 0.0625) == 4);
    CHECK(grid_units(0.3, 0.1) == 3);

    const Signature s = action_signature(single_up(0.137), 0, 0, 0.0625, 1.0);
    CHECK(s.units[1] == 2);
    CHECK(s.entry(1) == doctest::Approx(0.125));
    CHECK(s.units.back() == 0);
    const Signature exact = action_signature(single_up(0.25), 0, 0, 0.0625, 1.0);
    CHECK(exact.entry(1) == 0.25);
    CHECK_THROWS_AS(action_signature(single_up(0.25), 0, 0, 0.0, 1.0), ParameterError);
  }

  TEST_CASE("topology counts") {
    for (int B = 1; B <= 4; ++B)
      for (int D = 1; D <= 4; ++D) {
        const std::vector<Topology> ts = enumerate_topologies(1, B, D, 0);
        CHECK(ts.size() == static_cast<std::size_t>(std::min(B, D)));
        for (const Topology& t : ts)
          for (const TopologyNode& n : t.nodes) CHECK(n.children.size() <= 1);
      }
    const std::vector<Topology> one = enumerate_topologies(2, 1, 3, 0);
    REQUIRE(one.size() == 1);
    CHECK(one[0].size() == 1);
    CHECK(one[0].nodes[0].level == 0);

    const std::vector<Topology> two = enumerate_topologies(2, 2, 2, 0);
    CHECK(two.size() == 3);
    for (const Topology& t : two)
      for (const TopologyNode& n : t.nodes)
        if (n.parent >= 0) {
          CHECK(n.level == n.key);
          CHECK(n.level >= t.nodes[n.parent].level);
        }
    CHECK_THROWS_AS(enumerate_topologies(3, 6, 6, 0, 5), CapacityError);
  }

  TEST_CASE("configuration DP on one block") {
    Instance inst = kernel(2, 2, {0.0, 1.0});
    inst.actions.push_back(
        make_action("a", "a", 2, Rows{{{0, 0.9}, {1, 0.1}}, {{1, 1.0}}}, vec({0, 0})));
    inst.actions.push_back(
        make_action("b", "b", 2, Rows{{{0, 0.95}, {1, 0.05}}, {{1, 1.0}}}, vec({0, 0})));
    const Topology topo = enumerate_topologies(2, 1, 1, 0).front();
    CHECK(config_dp(inst, topo, 0.05, {1}, 1.0).size() == 3);
    CHECK(config_dp(inst, topo, 0.05, {2}, 1.0).size() == 4);
    CHECK(config_dp(inst, topo, 0.05, {0}, 1.0).size() == 1);

    const DpResult coarse = config_dp(inst, topo, 2.0, {2}, 1.0);
    REQUIRE(coarse.size() == 1);
    const std::vector<std::vector<int>> items = coarse.items(topo, 0);
    CHECK(items[0].size() <= 2);
    CHECK_THROWS_AS(config_dp(inst, topo, 0.05, {2}, 1.0, 2), CapacityError);
  }

  TEST_CASE("rescoring picks the exact winner") {
    const Instance inst = rounding_trap();
    const Topology topo = enumerate_topologies(2, 1, 1, 0).front();
    const DpResult dp = config_dp(inst, topo, 0.05, {1}, 1.0);
    REQUIRE(dp.size() == 3);
    const Scored narrow = reconstruct_and_score(inst, topo, dp, 1);
    CHECK(narrow.value == doctest::Approx(0.15));
    const Scored wide = reconstruct_and_score(inst, topo, dp, 2);
    CHECK(wide.value == doctest::Approx(0.169));
    CHECK(inst.actions[wide.tree.root().items.at(0)].id == "B");

    const DpResult empty = config_dp(inst, topo, 0.05, {0}, 1.0);
    const Scored none = reconstruct_and_score(inst, topo, empty, 4);
    CHECK(none.value == doctest::Approx(inst.terminal[0]));
  }

  TEST_CASE("MAX estimates") {
    const Instance inst = build_probemax(adaptivity_spec()).instance;
    CHECK(estimate_max(inst, MaxHint::kExact) == doctest::Approx(max_over_starts(inst)));

    ProblemSpec spec = probemax({Pmf{{{0, 0.5}, {10, 0.5}}}, Pmf{{{6, 1.0}}}}, 1);
    spec.step = 1.0;
    spec.theta = 11.0;
    CHECK(estimate_max(build_probemax(spec).instance, MaxHint::kGreedyProbemax) ==
          doctest::Approx(6.0));
    CHECK_THROWS_AS(estimate_max(coin_flip(), MaxHint::kGreedyProbemax), HintError);

    Instance noop = kernel(2, 1, {0.0, 3.0});
    noop.actions.push_back(noop_action("n", 2));
    CHECK(estimate_max(noop, MaxHint::kTerminalBound) == doctest::Approx(3.0));
    CHECK(parse_max_hint("terminal_bound") == MaxHint::kTerminalBound);
    CHECK_THROWS_AS(parse_max_hint("nope"), HintError);
  }

  TEST_CASE("end-to-end search") {
    PtasKnobs k;
    k.grid = 0.5;
    k.block_budget = 1;
    k.depth_limit = 1;
    const PtasResult coin = solve_ptas(coin_flip(), k);
    CHECK(coin.value == doctest::Approx(5.0));

    const Instance inst = build_probemax(adaptivity_spec()).instance;
    PtasKnobs fine;
    fine.grid = 0.1;
    fine.block_budget = 4;
    fine.depth_limit = 3;
    const PtasResult r = solve_ptas(inst, fine);
    CHECK(r.value >= 0.9 * 3.8);
    CHECK(r.value <= 3.8 + 1e-9);
    CHECK(block_profit_exact(inst, r.tree) == doctest::Approx(r.value));

    PtasKnobs zero = fine;
    zero.caps = 0;
    CHECK(solve_ptas(inst, zero).value == doctest::Approx(inst.terminal[inst.start_level]));

    Instance bad = kernel(2, 1, {0.0, 1.0});
    bad.actions.push_back(
        make_action("d", "d", 2, Rows{{{0, 1.0}}, {{0, 0.5}, {1, 0.5}}}, vec({0, 0})));
    CHECK_THROWS_AS(solve_ptas(bad, k), ParameterError);
  }

  TEST_CASE("faithful preset") {
    const Instance inst = coin_flip();
    const PtasKnobs f = faithful_knobs(inst, 0.9);
    CHECK(f.grid == doctest::Approx(std::pow(0.9, 4) / 1.0));
    CHECK(f.depth_limit == 2);
  }

  TEST_CASE("property: signature additivity and rounding bound") {
    SplitMix64 rng(41);
    for (int trial = 0; trial < 200; ++trial) {
      const Instance inst = gen_kernel(rng, small_kernel(rng, 5, 4, 4));
      const double grid = 0.01 + 0.2 * rng.uniform(), max_ref = 0.5 + rng.uniform();
      const int level = rng.below(inst.levels());
      BlockNode block{{}, level, {}};
      std::vector<std::int64_t> sum;
      for (int a = 0; a < static_cast<int>(inst.actions.size()); ++a) {
        const Signature s = action_signature(inst, a, level, grid, max_ref);
        for (int J = 0; J < inst.levels(); ++J) {
          const double gap = inst.actions[a].phi(level, J) - s.entry(J);
          CHECK(gap >= -1e-9);
          CHECK(gap < grid);
        }
        const double pgap = inst.actions[a].profit[level] - s.entry(inst.levels());
        CHECK(pgap >= -1e-9);
        CHECK(pgap < grid * max_ref);
        if (sum.empty()) sum.assign(s.units.size(), 0);
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += s.units[i];
        block.items.push_back(a);
      }
      CHECK(block_signature(inst, block, grid, max_ref).units == sum);
    }
  }

  TEST_CASE("property: tracebacks are sound") {
    SplitMix64 rng(42);
    for (int trial = 0; trial < 40; ++trial) {
      KernelParams p = small_kernel(rng, 4, 3, 3);
      const Instance inst = gen_kernel(rng, p);
      const GroupIndex g = index_groups(inst);
      const std::vector<Topology> topos = enumerate_topologies(inst.levels(), 3, 2, 0);
      const Topology& topo = topos[rng.below(static_cast<int>(topos.size()))];
      std::vector<int> caps(topo.paths.size());
      for (int& c : caps) c = rng.between(0, inst.horizon);
      const double grid = 0.1;
      const DpResult dp = config_dp(inst, topo, grid, caps, 1.0);
      for (std::size_t c = 0; c < dp.size(); ++c) {
        const std::vector<std::vector<int>> items = dp.items(topo, c);
        CHECK(path_is_clean(topo, items, g, caps));
        const std::vector<Signature> sigs = dp.signatures(topo, c);
        for (int v = 0; v < topo.size(); ++v) {
          const Signature s =
              block_signature(inst, BlockNode{items[v], topo.nodes[v].level, {}}, grid, 1.0);
          CHECK(s.units == sigs[v].units);
        }
        validate_block_tree(inst, materialize(inst, topo, items));
      }
    }
  }

  TEST_CASE("property: zero rounding loss recovers OPT") {
    SplitMix64 rng(43);
    for (int trial = 0; trial < 25; ++trial) {
      KernelParams p = small_kernel(rng, 4, 2, 3);
      p.prob_quantum = 0.25;
      p.profit_quantum = 0.25;
      p.terminal_quantum = 0.25;
      p.terminal_max = 4.0;
      const Instance inst = gen_kernel(rng, p);
      PtasKnobs k;
      k.grid = 0.25;
      k.max_ref = 1.0;
      k.block_budget = 6;
      k.depth_limit = inst.horizon;
      k.top_k = 0;
      CHECK(solve_ptas(inst, k).value == doctest::Approx(naive_value(inst)).epsilon(1e-9));
    }
  }
}
