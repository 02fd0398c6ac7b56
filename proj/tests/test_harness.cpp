#include <doctest.h>

#include <cmath>

#include "stochprobe/io.hpp"
#include "stochprobe/simulate.hpp"
#include "stochprobe/suites.hpp"
#include "support.hpp"

using namespace testing;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_instance(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("parse problem documents") {
    const Document d =
        parse_instance(R"({"kind":"probemax","m":1,"items":[{"pmf":[[0,0.5],[10,0.5]]}]})");
    const ProblemSpec* spec = std::get_if<ProblemSpec>(&d);
    REQUIRE(spec);
    CHECK(spec->kind == ProblemKind::kProbemax);
    CHECK(spec->items.size() == 1);
    CHECK(optimal_value(instance_of(d), 0) == doctest::Approx(5.0));

    const std::string neg =
        error_of(R"({"kind":"probemax","m":1,"items":[{"pmf":[[0,1.5],[10,-0.5]]}]})");
    CHECK(neg.find("items[0].pmf[1]") != std::string::npos);
    CHECK(error_of("{\n  \"kind\": \"probemax\",\n  oops\n}").find("line 3") !=
          std::string::npos);
    CHECK_FALSE(error_of(R"({"kind":"probemax","m":1,"items":[{"pmf":[[0,0.4]]}]})").empty());
  }

  TEST_CASE("parse kernel documents") {
    const Document d = parse_instance(
        R"({"levels":2,"T":1,"terminal":[0,10],
            "actions":[{"id":"a","group":"a","rows":[[0,[[0,0.5],[1,0.5]],0.0]]}]})");
    const Instance* inst = std::get_if<Instance>(&d);
    REQUIRE(inst);
    CHECK(inst->actions[0].phi(1, 1) == 1.0);
    CHECK(optimal_value(*inst, 0) == doctest::Approx(5.0));
  }

  TEST_CASE("serialization round trips") {
    SplitMix64 rng(61);
    for (ProblemKind kind : {ProblemKind::kProbemax, ProblemKind::kProbeTopK,
                             ProblemKind::kCommittedPandora, ProblemKind::kTarget,
                             ProblemKind::kSbk}) {
      GenParams g;
      g.kind = kind;
      g.k = 2;
      const std::string text = serialize(gen_random(rng.next(), g));
      const std::string again = serialize(std::get<ProblemSpec>(parse_instance(text)));
      CHECK(text == again);
    }
    for (int trial = 0; trial < 20; ++trial) {
      const Instance inst = gen_kernel(rng, small_kernel(rng, 4, 4, 4));
      const std::string text = serialize(inst);
      const Instance back = std::get<Instance>(parse_instance(text));
      CHECK(serialize(back) == text);
      CHECK(optimal_value(back, back.start_level) ==
            optimal_value(inst, inst.start_level));
    }
  }

  TEST_CASE("policy documents round trip") {
    SplitMix64 rng(62);
    for (int trial = 0; trial < 20; ++trial) {
      const Instance inst = gen_kernel(rng, small_kernel(rng, 4, 3, 4));
      const PolicyTree t = gen_policy(rng, inst, 0.2);
      const PolicyTree back = parse_policy(inst, policy_to_json(inst, t).dump());
      CHECK(evaluate_policy(inst, back) == doctest::Approx(evaluate_policy(inst, t)));
      const BlockTree b = gen_block_tree(rng, inst, 0.3, 0.2);
      const PolicyTree expanded = parse_policy(inst, block_tree_to_json(inst, b).dump());
      CHECK(evaluate_policy(inst, expanded) ==
            doctest::Approx(block_profit_exact(inst, b)).epsilon(1e-9));
    }
  }

  TEST_CASE("generator") {
    GenParams g;
    g.n = 5;
    CHECK(serialize(gen_random(9, g)) == serialize(gen_random(9, g)));
    CHECK(serialize(gen_random(9, g)) != serialize(gen_random(10, g)));

    g.lossless = true;
    g.step = 0.5;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      for (const Item& it : gen_random(seed, g).items)
        for (const auto& [x, p] : it.pmf.entries)
          CHECK(std::abs(x / 0.5 - std::round(x / 0.5)) < 1e-12);

    GenParams empty;
    empty.n = 0;
    const ProblemSpec spec = gen_random(3, empty);
    CHECK(spec.items.empty());
    const Instance inst = build_instance(spec);
    CHECK(optimal_value(inst, inst.start_level) == inst.terminal[inst.start_level]);
  }

  TEST_CASE("stream seeds are distinct") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 50; ++i)
      for (std::uint64_t t = 0; t < 50; ++t) seen.insert(stream_seed(1, i, t));
    CHECK(seen.size() == 2500);
  }

  TEST_CASE("simulation") {
    Instance det = kernel(1, 1, {0.0});
    det.actions.push_back(make_action("a", "a", 1, Rows{{{0, 1.0}}}, vec({5.0})));
    const SimulationResult d = simulate(det, optimal_policy(det), 1, 1000);
    CHECK(d.mean == doctest::Approx(5.0));
    CHECK(d.half_width == 0.0);

    const Instance coin = coin_flip();
    const std::int64_t n = 100000;
    const SimulationResult c = simulate(coin, optimal_policy(coin), 2, n);
    CHECK(std::abs(c.mean - 5.0) <= 3.0 * 5.0 / std::sqrt(static_cast<double>(n)));
    CHECK(c.stddev == doctest::Approx(5.0).epsilon(0.01));

    const SimulationResult one = simulate(coin, optimal_policy(coin), 3, 1);
    CHECK(one.mean == sample_payoff(coin, optimal_policy(coin), stream_seed(3, 0, 0)));

    Instance broken = coin_flip();
    broken.actions[0] =
        make_action("a", "a", 2, Rows{{{0, 0.25}, {1, 0.25}}, {{1, 1.0}}}, vec({0, 0}));
    PolicyTree t;
    t.nodes = {PolicyNode{0, 0, 1, {{0, 1}, {1, 2}}}, PolicyNode{kLeaf, 0, 2, {}},
               PolicyNode{kLeaf, 1, 2, {}}};
    CHECK_THROWS_AS(simulate(broken, t, 1, 10), StructuralError);
  }

  TEST_CASE("property: simulated means track exact values") {
    SplitMix64 rng(63);
    for (int trial = 0; trial < 10; ++trial) {
      const Instance inst = gen_kernel(rng, small_kernel(rng, 4, 4, 4));
      const PolicyTree t = gen_policy(rng, inst, 0.2);
      const SimulationResult s = simulate(inst, t, rng.next(), 20000);
      CHECK(std::abs(s.mean - evaluate_policy(inst, t)) <=
            4.0 * s.stddev / std::sqrt(20000.0) + 1e-9);
    }
  }

  TEST_CASE("suites") {
    RunConfig cfg;
    cfg.suite = "oracle";
    const Report r = run_suite(cfg);
    CHECK(r.pass);
    CHECK(r.rows.size() == 200);

    cfg.suite = "lemma31";
    cfg.instances = 50;
    CHECK(run_suite(cfg).pass);

    cfg.suite = "nope";
    CHECK_THROWS_AS(run_suite(cfg), ParameterError);
    CHECK_THROWS_AS(default_instances("nope"), ParameterError);

    RunConfig a;
    a.suite = "committed";
    a.instances = 12;
    RunConfig b = a;
    b.workers = 3;
    CHECK(to_jsonl(run_suite(a)) == to_jsonl(run_suite(a)));
    CHECK(to_jsonl(run_suite(a)) == to_jsonl(run_suite(b)));
    for (const std::string& name : suite_names()) CHECK(default_instances(name) >= 1);
  }
}
