#include <doctest.h>

#include <cmath>

#include "support.hpp"

using namespace testing;

namespace {

// K = 2; every action stays flat with probability `flat`.
Instance flat_chain(int actions, double flat, int horizon) {
  Instance inst = kernel(2, horizon, {0.0, 1.0});
  for (int a = 0; a < actions; ++a) {
    const std::string id = "a" + std::to_string(a);
    inst.actions.push_back(make_action(id, id, 2, Rows{{{0, flat}, {1, 1.0 - flat}}, {{1, 1.0}}},
                                       vec({0.0, 0.0})));
  }
  return inst;
}

std::vector<int> iota_actions(int n) {
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) out[i] = i;
  return out;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("pmf helpers") {
    const Pmf p{{{0, 0.5}, {4, 0.25}, {10, 0.25}}};
    CHECK(p.mass() == doctest::Approx(1.0));
    CHECK(p.mean() == doctest::Approx(3.5));
    CHECK(p.tail(4) == doctest::Approx(0.5));
    CHECK(p.tail_mean(4) == doctest::Approx(3.5));
    const Pmf merged = canonical(Pmf{{{3, 0.25}, {1, 0.5}, {3, 0.25}}});
    REQUIRE(merged.entries.size() == 2);
    CHECK(merged.entries[0].first == 1);
    CHECK(merged.entries[1].second == doctest::Approx(0.5));
    CHECK_THROWS_AS(validate_pmf(Pmf{{{0, -0.1}, {1, 1.1}}}, "x"), ParameterError);
    CHECK_THROWS_AS(validate_pmf(Pmf{{{0, 0.5}}}, "x"), ParameterError);
    CHECK_THROWS_AS(validate_pmf(Pmf{{{1, 0.5}, {1, 0.5}}}, "x"), ParameterError);
  }

  TEST_CASE("expected_max matches enumeration") {
    SplitMix64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<Pmf> pmfs;
      const int n = rng.between(1, 3);
      for (int i = 0; i < n; ++i) {
        GenParams g;
        g.n = 1;
        g.support = 3;
        pmfs.push_back(gen_random(rng.next(), g).items[0].pmf);
      }
      double brute = 0.0;
      std::function<void(int, double, double)> go = [&](int i, double prob, double best) {
        if (i == n) {
          brute += prob * best;
          return;
        }
        for (const auto& [x, p] : pmfs[i].entries) go(i + 1, prob * p, std::max(best, x));
      };
      go(0, 1.0, 1.5);
      CHECK(expected_max(pmfs, 1.5) == doctest::Approx(brute).epsilon(1e-12));
    }
  }

  TEST_CASE("one-step expectation") {
    Instance inst = kernel(1, 1, {0.0});
    inst.actions.push_back(make_action("a", "a", 1, Rows{{{0, 1.0}}}, vec({5.0})));
    const int seq[] = {0};
    CHECK(evaluate_policy(inst, sequence_policy(inst, seq)) == doctest::Approx(5.0));
  }

  TEST_CASE("coin flip terminal") {
    const Instance inst = coin_flip();
    const int seq[] = {0};
    CHECK(evaluate_policy(inst, sequence_policy(inst, seq)) == doctest::Approx(5.0));
  }

  TEST_CASE("adaptive probing policy is worth 3.8") {
    const Built b = build_probemax(adaptivity_spec());
    const Instance& inst = b.instance;
    ExactSolver solver(inst);
    // Probe X1; on 4 probe X3, on 0 probe X2.
    PolicyTree tree;
    const int x1 = inst.action_index("x0"), x2 = inst.action_index("x1"),
              x3 = inst.action_index("x2");
    const int low = inst.actions[x1].transition.coeff(0, 0) > 0 ? 0 : -1;
    REQUIRE(low == 0);
    int high = -1;
    for (Transition::InnerIterator it(inst.actions[x1].transition, 0); it; ++it)
      if (it.col() > 0) high = static_cast<int>(it.col());
    REQUIRE(high > 0);
    auto grow = [&](auto&& self, int level, int time, const std::vector<int>& plan) -> int {
      const int idx = tree.size();
      tree.nodes.push_back(PolicyNode{kLeaf, level, time, {}});
      if (plan.empty()) return idx;
      const int a = plan.front();
      tree.nodes[idx].action = a;
      std::vector<std::pair<int, int>> kids;
      for (Transition::InnerIterator it(inst.actions[a].transition, level); it; ++it) {
        std::vector<int> rest;
        if (a == x1) rest = {it.col() == high ? x3 : x2};
        kids.emplace_back(static_cast<int>(it.col()),
                          self(self, static_cast<int>(it.col()), time + 1, rest));
      }
      tree.nodes[idx].children = kids;
      return idx;
    };
    grow(grow, 0, 1, {x1});
    CHECK(evaluate_policy(inst, tree) == doctest::Approx(3.8).epsilon(1e-12));
    CHECK(evaluate_policy(inst, tree) == doctest::Approx(optimal_value(inst, 0)).epsilon(1e-12));
  }

  TEST_CASE("path statistics") {
    const Instance one = flat_chain(1, 0.3, 1);
    const int seq1[] = {0};
    const PolicyTree t1 = sequence_policy(one, seq1);
    const PathStats root = path_stats(one, t1, {});
    CHECK(root.reach_probability == 1.0);
    CHECK(root.mu == 0.0);
    const int k0[] = {0};
    const PathStats s1 = path_stats(one, t1, k0);
    CHECK(s1.reach_probability == doctest::Approx(0.3));
    CHECK(s1.mu == doctest::Approx(0.7));

    Instance two = kernel(2, 2, {0.0, 1.0});
    two.actions.push_back(
        make_action("a", "a", 2, Rows{{{0, 0.9}, {1, 0.1}}, {{1, 1.0}}}, vec({0, 0})));
    two.actions.push_back(
        make_action("b", "b", 2, Rows{{{0, 0.95}, {1, 0.05}}, {{1, 1.0}}}, vec({0, 0})));
    const int seq2[] = {0, 1};
    const int k00[] = {0, 0};
    const PathStats s2 = path_stats(two, sequence_policy(two, seq2), k00);
    CHECK(s2.reach_probability == doctest::Approx(0.855));
    CHECK(s2.mu == doctest::Approx(0.15));
    const int bad[] = {0, 0, 0};
    CHECK_THROWS_AS(path_stats(two, sequence_policy(two, seq2), bad), StructuralError);
  }

  TEST_CASE("truncation examples") {
    // Nothing at risk: nothing to cut.
    const Instance safe = flat_chain(3, 1.0, 3);
    const std::vector<int> s3 = iota_actions(3);
    const PolicyTree t = sequence_policy(safe, s3);
    const Truncation none = truncate_with_cut(safe, t, 0.3);
    CHECK(none.cut.empty());
    CHECK(none.tree.size() == t.size());

    // mu = 0.6 per node, eps = 0.5: prefixes 0, 0.6, 1.2, 1.8 stay; 2.4 is cut.
    const Instance risky = flat_chain(5, 0.4, 5);
    const std::vector<int> s4 = iota_actions(4);
    const PolicyTree t4 = sequence_policy(risky, s4);
    CHECK(truncate_with_cut(risky, t4, 0.5).cut.empty());
    const std::vector<double> mu4 = prefix_mu(risky, t4);
    double deepest = 0.0;
    for (int v = 0; v < t4.size(); ++v)
      if (!t4.nodes[v].is_leaf()) deepest = std::max(deepest, mu4[v]);
    CHECK(deepest == doctest::Approx(1.8));
    // A fifth item sits at prefix 2.4 on the flat path and is cut, as is the
    // fifth item on the branch that rose at the fourth.
    const std::vector<int> s5 = iota_actions(5);
    const PolicyTree t5 = sequence_policy(risky, s5);
    const Truncation cut5 = truncate_with_cut(risky, t5, 0.5);
    const std::vector<double> mu5 = prefix_mu(risky, t5);
    CHECK(cut5.cut.size() == 2);
    for (int v : cut5.cut) {
      CHECK(mu5[v] == doctest::Approx(2.4));
      CHECK(t5.nodes[v].time == 5);
    }

    // mu = 1 per node, eps = 1: the second node is cut.
    Instance up = kernel(4, 3, {0.0, 1.0, 2.0, 3.0});
    for (int a = 0; a < 3; ++a) {
      const std::string id = "u" + std::to_string(a);
      up.actions.push_back(make_action(id, id, 4,
                                       Rows{{{1, 1.0}}, {{2, 1.0}}, {{3, 1.0}}, {{3, 1.0}}},
                                       vec({0, 0, 0, 0})));
    }
    const PolicyTree tu = sequence_policy(up, s3);
    const Truncation cu = truncate_with_cut(up, tu, 1.0);
    REQUIRE(cu.cut.size() == 1);
    CHECK(tu.nodes[cu.cut[0]].time == 2);
    CHECK(cu.tree.size() == 2);
    CHECK(evaluate_policy(up, cu.tree) == doctest::Approx(1.0));

    CHECK_THROWS_AS(truncate_policy(up, tu, 0.0), ParameterError);
    CHECK_THROWS_AS(truncate_policy(up, tu, 1.5), ParameterError);
  }

  TEST_CASE("compliance checks") {
    const Built b = build_probemax(adaptivity_spec());
    CHECK(validate_instance(b.instance).violations.empty());

    Instance down = kernel(2, 1, {0.0, 1.0});
    down.actions.push_back(
        make_action("a", "a", 2, Rows{{{0, 1.0}}, {{0, 0.2}, {1, 0.8}}}, vec({0, 0})));
    const ComplianceReport r = mark_compliance(down);
    CHECK_FALSE(r.compliant);
    CHECK_FALSE(down.compliant);
    REQUIRE(r.violations.size() == 1);
    CHECK(r.violations[0].kind == ViolationKind::kValueDecreases);
    CHECK(r.violations[0].from == 1);
    CHECK(r.violations[0].to == 0);

    ProblemSpec pandora;
    pandora.kind = ProblemKind::kCommittedPandora;
    pandora.items = {Item{Pmf{{{10, 1.0}}}, 2.0}};
    Instance w = build_uncommitted_pandora(pandora);
    const ComplianceReport wr = mark_compliance(w);
    CHECK_FALSE(wr.compliant);
    bool negative = false;
    for (const Violation& v : wr.violations) negative |= v.kind == ViolationKind::kNegativeProfit;
    CHECK(negative);
  }

  TEST_CASE("malformed trees are rejected") {
    const Instance inst = coin_flip();
    PolicyTree t;
    t.nodes.push_back(PolicyNode{0, 0, 1, {{0, 1}}});
    t.nodes.push_back(PolicyNode{kLeaf, 0, 2, {}});
    CHECK_THROWS_AS(evaluate_policy(inst, t), StructuralError);
    CHECK_THROWS_AS(inst.action_index("missing"), ReferenceError);
    Instance longer = coin_flip();
    longer.horizon = 2;
    const int twice[] = {0, 0};
    CHECK_THROWS_AS(sequence_policy(longer, twice), StructuralError);
    CHECK_THROWS_AS(sequence_policy(inst, twice), ParameterError);
  }

  TEST_CASE("property: evaluation forms agree and paths respect groups") {
    SplitMix64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const Instance inst = gen_kernel(rng, small_kernel(rng, 6, 4, 5));
      const PolicyTree tree = gen_policy(rng, inst, 0.2);
      const double v = evaluate_policy(inst, tree);
      CHECK(evaluate_policy_node_sum(inst, tree) == doctest::Approx(v).epsilon(1e-9));
      CHECK(walk_value(inst, tree) == doctest::Approx(v).epsilon(1e-9));
      CHECK(subtree_values(inst, tree)[0] == doctest::Approx(v).epsilon(1e-9));

      // Group discipline along every path.
      const GroupIndex g = index_groups(inst);
      std::function<bool(int, std::set<int>)> clean = [&](int node, std::set<int> seen) {
        const PolicyNode& n = tree.nodes[node];
        if (n.is_leaf()) return true;
        if (!seen.insert(g.of_action[n.action]).second) return false;
        for (const auto& [k, c] : n.children)
          if (!clean(c, seen)) return false;
        return true;
      };
      CHECK(clean(0, {}));
    }
  }

  TEST_CASE("property: expected path mass is at most K - 1") {
    SplitMix64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
      const Instance inst = gen_kernel(rng, small_kernel(rng, 6, 4, 6));
      const PolicyTree tree = gen_policy(rng, inst, 0.1);
      // Independent traversal: each node contributes reach * mu.
      std::function<double(int, double)> mass = [&](int node, double reach) {
        const PolicyNode& n = tree.nodes[node];
        if (n.is_leaf()) return 0.0;
        const ActionSpec& a = inst.actions[n.action];
        double s = reach * a.mu(n.level);
        for (const auto& [k, c] : n.children) s += mass(c, reach * a.phi(n.level, k));
        return s;
      };
      const double m = expected_path_mu(inst, tree);
      CHECK(m == doctest::Approx(mass(0, 1.0)).epsilon(1e-9));
      CHECK(m <= inst.levels() - 1 + 1e-9);
    }
  }

  TEST_CASE("property: truncation loss accounting") {
    SplitMix64 rng(13);
    for (int trial = 0; trial < 200; ++trial) {
      KernelParams p = small_kernel(rng, 6, 4, 6);
      p.max_mu = 1.0;
      const Instance inst = gen_kernel(rng, p);
      const PolicyTree tree = gen_policy(rng, inst, 0.05);
      const double eps = 0.4 + 0.6 * rng.uniform();
      const Truncation tr = truncate_with_cut(inst, tree, eps);
      const std::vector<double> reach = reach_probabilities(inst, tree);
      const std::vector<double> value = subtree_values(inst, tree);
      double loss = 0.0;
      for (int v : tr.cut) loss += reach[v] * (value[v] - inst.terminal[tree.nodes[v].level]);
      CHECK(evaluate_policy(inst, tree) - evaluate_policy(inst, tr.tree) ==
            doctest::Approx(loss).epsilon(1e-9));
      const std::vector<double> mu = prefix_mu(inst, tr.tree);
      for (int v = 0; v < tr.tree.size(); ++v)
        if (!tr.tree.nodes[v].is_leaf()) CHECK(mu[v] < 1.0 / eps);
    }
  }
}
