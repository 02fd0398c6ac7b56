#include <doctest.h>

#include <cmath>

#include "stochprobe/ptas.hpp"
#include "support.hpp"

using namespace testing;

namespace {

void check_pmf(const Pmf& got, const std::vector<std::pair<double, double>>& want) {
  REQUIRE(got.entries.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(got.entries[i].first == doctest::Approx(want[i].first));
    CHECK(got.entries[i].second == doctest::Approx(want[i].second));
  }
}

ProblemSpec sbk_spec(std::vector<Item> items) {
  ProblemSpec spec;
  spec.kind = ProblemKind::kSbk;
  spec.items = std::move(items);
  spec.eps = 0.5;
  spec.step = 0.25;
  spec.small_cut = 0.25;
  spec.max_ref = 1.0;  // theta2 = 4, theta3 = 8
  return spec;
}

double best(const Instance& inst) { return optimal_value(inst, inst.start_level); }

Pmf random_pmf(SplitMix64& rng, double scale) {
  GenParams g;
  g.n = 1;
  g.support = 5;
  g.value_max = scale;
  return gen_random(rng.next(), g).items[0].pmf;
}

// Banked profit on non-overflow leaves, by direct traversal of an SKP tree.
double sbk_walk(const Instance& skp, const PolicyTree& t, int node, double reach, double acc) {
  const PolicyNode& v = t.nodes[node];
  const int overflow = skp.levels() - 1;
  if (v.is_leaf()) return v.level == overflow ? 0.0 : reach * acc;
  const ActionSpec& a = skp.actions[v.action];
  double s = 0.0;
  for (const auto& [key, child] : v.children)
    s += sbk_walk(skp, t, child, reach * a.phi(v.level, key),
                  acc + (key == overflow ? 0.0 : a.meta->reward));
  return s;
}

}  // namespace

TEST_SUITE("problems") {
  TEST_CASE("value discretization examples") {
    const auto [img, map] = discretize_value(Pmf{{{4, 0.5}, {12, 0.5}}}, 10, 2);
    check_pmf(img, {{4, 0.4}, {10, 0.6}});
    CHECK(10 * 0.6 == doctest::Approx(0.5 * 12));
    CHECK(map.canonical_image(12) == 10);
    CHECK(map.canonical_image(4) == 4);

    check_pmf(discretize_value(Pmf{{{2, 0.5}, {6, 0.5}}}, 10, 2).first, {{2, 0.5}, {6, 0.5}});
    check_pmf(discretize_value(Pmf{{{10, 1.0}}}, 10, 2).first, {{10, 1.0}});
    CHECK_THROWS_AS(discretize_value(Pmf{{{4, 1.0}}}, 9, 2), ParameterError);
    CHECK_THROWS_AS(discretize_value(Pmf{{{100, 1.0}}}, 10, 2), DiscretizationError);
  }

  TEST_CASE("size discretization examples") {
    const auto [img, map] = discretize_size_li(Pmf{{{0.01, 0.5}, {0.5, 0.5}}}, 0.1, 0.05);
    check_pmf(img, {{0.0, 0.45}, {0.1, 0.05}, {0.5, 0.5}});
    CHECK(0.1 * 0.05 == doctest::Approx(0.5 * 0.01));
    const Pmf on{{{0.0, 0.5}, {0.1, 0.2}, {0.35, 0.3}}};
    check_pmf(discretize_size_li(on, 0.1, 0.05).first, {{0.0, 0.5}, {0.1, 0.2}, {0.35, 0.3}});
    check_pmf(discretize_size_li(Pmf{{{0.0, 1.0}}}, 0.1, 0.05).first, {{0.0, 1.0}});
  }

  TEST_CASE("probemax builder") {
    CHECK(best(build_probemax(probemax({Pmf{{{6, 1.0}}}}, 1)).instance) == doctest::Approx(6.0));
    CHECK(best(build_probemax(adaptivity_spec()).instance) == doctest::Approx(3.8));

    const Pmf x{{{1, 0.3}, {5, 0.7}}};
    ProblemSpec twin = probemax({x, x}, 1);
    twin.step = 1.0;
    twin.theta = 6.0;
    const Instance inst = build_probemax(twin).instance;
    for (int I = 0; I < inst.levels(); ++I)
      CHECK(action_signature(inst, 0, I, 0.01, 1.0) == action_signature(inst, 1, I, 0.01, 1.0));
  }

  TEST_CASE("probe top-k builder") {
    ProblemSpec one = adaptivity_spec();
    one.kind = ProblemKind::kProbeTopK;
    one.k = 1;
    const Instance topk = build_probetopk(one).instance;
    const Instance pm = build_probemax(adaptivity_spec()).instance;
    REQUIRE(topk.levels() == pm.levels());
    for (std::size_t a = 0; a < pm.actions.size(); ++a)
      CHECK(Eigen::MatrixXd(topk.actions[a].transition)
                .isApprox(Eigen::MatrixXd(pm.actions[a].transition), 1e-12));
    CHECK(best(topk) == doctest::Approx(best(pm)));

    ProblemSpec det;
    det.kind = ProblemKind::kProbeTopK;
    det.k = 2;
    det.m = 2;
    det.items = {Item{Pmf{{{3, 1.0}}}}, Item{Pmf{{{4, 1.0}}}}};
    det.step = 1.0;
    det.theta = 5.0;
    CHECK(best(build_probetopk(det).instance) == doctest::Approx(7.0));

    ProblemSpec coins = det;
    coins.items = {Item{Pmf{{{0, 0.5}, {4, 0.5}}}}, Item{Pmf{{{0, 0.5}, {4, 0.5}}}}};
    CHECK(best(build_probetopk(coins).instance) == doctest::Approx(4.0));
  }

  TEST_CASE("committed builders") {
    ProblemSpec pandora;
    pandora.kind = ProblemKind::kCommittedPandora;
    pandora.items = {Item{Pmf{{{10, 1.0}}}, 2.0}};
    const Instance p = build_committed(pandora);
    CHECK(index_groups(p).count() == 1);
    CHECK(best(p) == doctest::Approx(8.0));

    ProblemSpec topk;
    topk.kind = ProblemKind::kCommittedProbeTopK;
    topk.k = 1;
    topk.m = 1;
    topk.items = {Item{Pmf{{{0, 0.5}, {10, 0.5}}}}};
    CHECK(best(build_committed(topk)) == doctest::Approx(5.0));

    ProblemSpec loss = pandora;
    loss.items = {Item{Pmf{{{10, 1.0}}}, 11.0}};
    const Instance l = build_committed(loss);
    CHECK(l.actions.empty());
    CHECK(best(l) == 0.0);
  }

  TEST_CASE("target builder") {
    ProblemSpec spec;
    spec.kind = ProblemKind::kTarget;
    spec.eps = 0.2;
    spec.m = 2;
    spec.items = {Item{Pmf{{{0, 0.5}, {1, 0.5}}}}, Item{Pmf{{{0, 0.5}, {1, 0.5}}}}};
    CHECK(best(build_target(spec).instance) == doctest::Approx(0.75));
    CHECK(best(build_target_exact(spec, 1.0)) == doctest::Approx(0.75));

    ProblemSpec sure = spec;
    sure.m = 1;
    sure.items = {Item{Pmf{{{1, 1.0}}}}};
    CHECK(best(build_target(sure).instance) == doctest::Approx(1.0));

    ProblemSpec none = spec;
    none.m = 0;
    CHECK(best(build_target(none).instance) == 0.0);
  }

  TEST_CASE("sbk builder") {
    const Item free{Pmf{{{0.0, 1.0}}}, 0.0, 2.0};
    const Built one = build_sbk(sbk_spec({free}));
    CHECK(best(one.instance) == doctest::Approx(2.0));

    const Built two = build_sbk(sbk_spec({free, free}));
    CHECK(best(two.instance) == doctest::Approx(2 * 2.0 - 2.0 * 2.0 / 8.0));

    const Item huge{Pmf{{{3.0, 1.0}}}, 0.0, 2.0};
    CHECK(best(build_sbk(sbk_spec({huge})).instance) == 0.0);

    const Built clamp = build_sbk(sbk_spec({Item{Pmf{{{0.0, 1.0}}}, 0.0, 5.0}}));
    CHECK(clamp.maps[0].clamped);
    CHECK(clamp.instance.actions[0].meta->reward == doctest::Approx(4.0));
  }

  TEST_CASE("greedy probemax") {
    const GreedyResult g =
        greedy_probemax(probemax({Pmf{{{0, 0.5}, {10, 0.5}}}, Pmf{{{6, 1.0}}}}, 1));
    CHECK(g.items == std::vector<int>{1});
    CHECK(g.value == doctest::Approx(6.0));

    const Pmf x{{{0, 0.5}, {2, 0.5}}};
    const GreedyResult all = greedy_probemax(probemax({x, Pmf{{{1, 1.0}}}, x}, 3));
    CHECK(all.items.size() == 3);
    CHECK(all.value == doctest::Approx(1.0 * 0.25 + 2.0 * 0.75));
    const GreedyResult same = greedy_probemax(probemax({x, x, x}, 2));
    CHECK(same.value == doctest::Approx(1.5));
  }

  TEST_CASE("weitzman baseline") {
    const WeitzmanResult one = weitzman({2.0}, {Pmf{{{10, 1.0}}}});
    CHECK(one.caps[0] == doctest::Approx(8.0));
    CHECK(one.value == doctest::Approx(8.0));

    const WeitzmanResult ab = weitzman({1.0, 0.5}, {Pmf{{{0, 0.5}, {10, 0.5}}}, Pmf{{{4, 1.0}}}});
    CHECK(ab.caps[0] == doctest::Approx(8.0));
    CHECK(ab.caps[1] == doctest::Approx(3.5));
    CHECK(ab.order == std::vector<int>{0, 1});
    CHECK(ab.value == doctest::Approx(5.75));

    const WeitzmanResult never = weitzman({5.0}, {Pmf{{{0, 0.5}, {4, 0.5}}}});
    CHECK(never.value == 0.0);
    CHECK(never.order.empty());
    CHECK(fair_cap(Pmf{{{0, 0.5}, {10, 0.5}}}, 1.0) == doctest::Approx(8.0));
  }

  TEST_CASE("skp to sbk examples") {
    ProblemSpec two;
    two.kind = ProblemKind::kSbk;
    two.items = {Item{Pmf{{{0.0, 1.0}}}, 0.0, 3.0}, Item{Pmf{{{0.0, 1.0}}}, 0.0, 3.0}};
    const Instance skp = build_skp(two);
    const int seq[] = {0, 1};
    const SbkReduction r = sbk_from_skp(skp, annotate_skp(skp, sequence_policy(skp, seq)));
    CHECK(r.skp_value == doctest::Approx(6.0));
    CHECK(r.value == doctest::Approx(3.0));

    ProblemSpec single;
    single.kind = ProblemKind::kSbk;
    single.items = {Item{Pmf{{{0.5, 1.0}}}, 0.0, 2.0}};
    const Instance s = build_skp(single);
    const int only[] = {0};
    const SbkReduction rs = sbk_from_skp(s, annotate_skp(s, sequence_policy(s, only)));
    CHECK(rs.cut.empty());
    CHECK(rs.value == doctest::Approx(rs.skp_value));
    CHECK(rs.value == doctest::Approx(2.0));

    AnnotatedPolicy broken = annotate_skp(skp, sequence_policy(skp, seq));
    broken.accumulated.back() += 1.0;
    CHECK_THROWS_AS(sbk_from_skp(skp, broken), StructuralError);
  }

  TEST_CASE("property: value discretization identities") {
    SplitMix64 rng(51);
    for (int trial = 0; trial < 300; ++trial) {
      const Pmf x = random_pmf(rng, 10.0);
      const double step = rng.chance(0.5) ? 0.5 : 1.0;
      const double theta = step * rng.between(std::max(1, static_cast<int>(x.mean() / step)), 24);
      Pmf img;
      DiscretizationMap map;
      try {
        std::tie(img, map) = discretize_value(x, theta, step);
      } catch (const DiscretizationError&) {
        CHECK(x.tail_mean(theta) / theta > 1.0);
        continue;
      }
      CHECK(img.mass() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(theta * img.tail(theta) == doctest::Approx(x.tail_mean(theta)).epsilon(1e-12));
      CHECK(img.mean() <= x.mean() + 1e-12);
      for (const auto& [v, p] : img.entries)
        CHECK(std::abs(v / step - std::round(v / step)) < 1e-9);
      std::map<double, double> per;
      for (const Route& r : map.routes) per[r.outcome] += r.probability;
      for (const auto& [o, p] : x.entries) CHECK(per[o] == doctest::Approx(p).epsilon(1e-12));
    }
  }

  TEST_CASE("property: small-part mean is preserved") {
    SplitMix64 rng(52);
    for (int trial = 0; trial < 300; ++trial) {
      const Pmf x = random_pmf(rng, 1.0);
      const double step = 0.01, cut = 0.01 * rng.between(1, 30);
      const Pmf img = discretize_size_li(x, cut, step).first;
      double small_raw = 0.0, small_img = 0.0;
      for (const auto& [v, p] : x.entries)
        if (v <= cut + 1e-12) small_raw += v * p;
      for (const auto& [v, p] : img.entries)
        if (v <= cut + 1e-12) small_img += v * p;
      CHECK(img.mass() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(small_img == doctest::Approx(small_raw).epsilon(1e-12));
    }
  }

  TEST_CASE("property: canonical replay never loses value") {
    SplitMix64 rng(53);
    for (int trial = 0; trial < 60; ++trial) {
      GenParams g;
      g.n = rng.between(1, 4);
      g.m = rng.between(1, 2);
      g.eps = 0.3;
      const ProblemSpec spec = gen_random(rng.next(), g);
      const Built b = build_probemax(spec);
      for (const PolicyTree& t : {optimal_policy(b.instance), gen_policy(rng, b.instance, 0.2)})
        CHECK(replay_probemax(spec, b, t) >= evaluate_policy(b.instance, t) - 1e-9);
    }
  }

  TEST_CASE("property: committed pandora sits below weitzman") {
    SplitMix64 rng(54);
    for (int trial = 0; trial < 40; ++trial) {
      GenParams g;
      g.kind = ProblemKind::kCommittedPandora;
      g.n = rng.between(1, 4);
      const ProblemSpec spec = gen_random(rng.next(), g);
      const WeitzmanResult w = weitzman(spec);
      CHECK(best(build_committed(spec)) <= w.value + 1e-9);
      CHECK(w.value == doctest::Approx(best(build_uncommitted_pandora(spec))).epsilon(1e-9));
    }
  }

  TEST_CASE("property: sbk reduction keeps a quarter") {
    SplitMix64 rng(55);
    for (int trial = 0; trial < 100; ++trial) {
      GenParams g;
      g.kind = ProblemKind::kSbk;
      g.n = rng.between(1, 4);
      const ProblemSpec spec = gen_random(rng.next(), g);
      const Instance skp = build_skp(spec);
      const PolicyTree pol = rng.chance(0.5) ? optimal_policy(skp) : gen_policy(rng, skp, 0.2);
      const AnnotatedPolicy ann = annotate_skp(skp, pol);
      const SbkReduction r = sbk_from_skp(skp, ann);
      CHECK(r.skp_value == doctest::Approx(evaluate_policy(skp, pol)).epsilon(1e-9));
      CHECK(r.value >= r.skp_value / 4.0 - 1e-9);
      const double walk = sbk_walk(skp, r.tree, 0, 1.0, 0.0);
      CHECK(r.value == doctest::Approx(walk).epsilon(1e-9));
    }
  }
}
