#include "stochprobe/suites.hpp"

#include <algorithm>
#include <atomic>
#include <climits>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include "stochprobe/exact.hpp"
#include "stochprobe/io.hpp"
#include "stochprobe/ptas.hpp"
#include "stochprobe/random.hpp"
#include "stochprobe/simulate.hpp"

namespace stochprobe {

using nlohmann::json;

namespace {

constexpr double kSlack = 1e-9;

double ratio_of(double solver, double oracle) {
  if (std::abs(oracle) <= 1e-15) return std::abs(solver) <= 1e-15 ? 1.0 : 0.0;
  return solver / oracle;
}

void require(ReportRow& row, bool ok, const std::string& what) {
  if (ok) return;
  row.pass = false;
  if (!row.message.empty()) row.message += "; ";
  row.message += what;
}

KernelParams kernel_params(SplitMix64& rng, int max_actions, int max_levels, int max_horizon) {
  KernelParams p;
  p.actions = rng.between(1, max_actions);
  p.levels = rng.between(1, max_levels);
  p.horizon = rng.between(1, max_horizon);
  p.groups = rng.chance(0.3) ? rng.between(1, p.actions) : 0;
  p.profit_chance = 0.4;
  return p;
}

// ---------------------------------------------------------------------------

ReportRow oracle_row(SplitMix64& rng) {
  ReportRow row;
  const Instance inst = gen_kernel(rng, kernel_params(rng, 8, 4, 6));
  row.oracle = optimal_value(inst, inst.start_level);
  const PolicyTree pol = optimal_policy(inst);
  row.solver = evaluate_policy(inst, pol);
  const double node_sum = evaluate_policy_node_sum(inst, pol);
  row.ratio = ratio_of(row.solver, row.oracle);
  require(row, std::abs(row.solver - row.oracle) <= kSlack, "policy value differs from oracle");
  require(row, std::abs(node_sum - row.oracle) <= kSlack, "node-sum value differs from oracle");
  row.diagnostics = {{"levels", inst.levels()},
                     {"actions", inst.actions.size()},
                     {"T", inst.horizon},
                     {"nodes", pol.size()}};
  return row;
}

ReportRow lemma31_row(SplitMix64& rng) {
  ReportRow row;
  const double eps = 0.3;
  KernelParams p = kernel_params(rng, 8, 4, 6);
  p.actions = std::max(p.actions, 2);
  p.levels = std::max(p.levels, 2);
  p.horizon = std::max(p.horizon, 2);
  p.max_mu = rng.chance(0.5) ? 0.05 : 0.3;
  const Instance inst = gen_kernel(rng, p);
  const BlockTree tree = gen_block_tree(rng, inst, eps, 0.2);
  const BlockReport rep = check_block_properties(inst, tree, eps, INT_MAX);
  require(row, rep.p1_ok, "generated tree violates P1");
  const double exact = block_profit_exact(inst, tree);
  const double approx = block_profit_approx(inst, tree);
  const double shrink = 1.0 - eps * eps;
  row.oracle = exact;
  row.solver = approx;
  row.ratio = ratio_of(approx, exact);
  require(row, shrink * approx <= exact + kSlack, "exact below (1-eps^2) approx");
  require(row, approx + kSlack >= std::pow(shrink, inst.levels()) * exact,
          "approx below (1-eps^2)^K exact");
  int multi = 0;
  for (const BlockNode& b : tree.nodes) {
    if (b.is_leaf()) continue;
    multi += b.items.size() > 1;
    const double pe = exact_masses(inst, b).pi.sum();
    const double pa = approx_masses(inst, b).pi.sum();
    require(row, std::abs(pe - 1.0) <= kSlack, "exact edge masses do not sum to one");
    require(row, pa <= 1.0 + kSlack, "approximate edge masses exceed one");
  }
  BlockTree reversed = tree;
  for (BlockNode& b : reversed.nodes) std::reverse(b.items.begin(), b.items.end());
  try {
    const double approx_rev = block_profit_approx(inst, reversed);
    require(row, std::abs(approx_rev - approx) <= 1e-12 * std::max(1.0, std::abs(approx)),
            "approximate profit depends on item order");
    row.diagnostics["approx_reversed"] = approx_rev;
  } catch (const StructuralError&) {
    row.diagnostics["approx_reversed"] = nullptr;
  }
  row.diagnostics["blocks"] = tree.size();
  row.diagnostics["multi_item_blocks"] = multi;
  row.diagnostics["levels"] = inst.levels();
  return row;
}

ReportRow alg1_row(SplitMix64& rng) {
  ReportRow row;
  const double eps = 0.3;
  KernelParams p = kernel_params(rng, 6, 4, 4);
  p.levels = std::max(p.levels, 2);
  const double mus[] = {0.05, 0.3, 1.0};
  p.max_mu = mus[rng.below(3)];
  const Instance inst = gen_kernel(rng, p);
  double max_ref = max_over_starts(inst);
  if (!(max_ref > 0.0)) max_ref = 1.0;
  const PolicyTree pol = optimal_policy(inst);
  row.oracle = evaluate_policy(inst, pol);
  const BlockTree blocks = blockify(inst, pol, eps, max_ref);
  const BlockReport rep = check_block_properties(inst, blocks, eps, INT_MAX);
  row.solver = block_profit_exact(inst, blocks);
  row.ratio = ratio_of(row.solver, row.oracle);
  const double floor = row.oracle - inst.levels() * eps * eps * max_ref - kSlack;
  require(row, rep.p1_ok, "blockified tree violates P1");
  require(row, row.solver >= floor, "block profit below OPT - K eps^2 MAX");
  require(row, row.solver <= row.oracle + kSlack, "block profit above OPT");
  row.diagnostics = {{"max_path_blocks", rep.max_path_blocks},
                     {"blocks", blocks.size()},
                     {"policy_nodes", pol.size()},
                     {"max_ref", max_ref}};
  return row;
}

ReportRow truncation_row(SplitMix64& rng) {
  ReportRow row;
  KernelParams p = kernel_params(rng, 8, 4, 6);
  p.levels = std::max(p.levels, 2);
  const Instance inst = gen_kernel(rng, p);
  const double epss[] = {0.5, 0.75, 1.0};
  const double eps = epss[rng.below(3)];
  const PolicyTree pol = rng.chance(0.5) ? optimal_policy(inst) : gen_policy(rng, inst, 0.1);
  const Truncation t = truncate_with_cut(inst, pol, eps);
  const std::vector<double> values = subtree_values(inst, pol);
  const std::vector<double> reach = reach_probabilities(inst, pol);
  double expected = 0.0;
  for (int v : t.cut)
    expected += reach[v] * (values[v] - inst.terminal[pol.nodes[v].level]);
  row.oracle = values[0];
  row.solver = evaluate_policy(inst, t.tree);
  row.ratio = ratio_of(row.solver, row.oracle);
  require(row, std::abs((row.oracle - row.solver) - expected) <= kSlack,
          "truncation loss differs from the cut accounting");
  const std::vector<double> mu = prefix_mu(inst, t.tree);
  for (int v = 0; v < t.tree.size(); ++v)
    if (!t.tree.nodes[v].is_leaf()) require(row, mu[v] < 1.0 / eps, "internal prefix mass >= 1/eps");
  row.diagnostics = {{"eps", eps}, {"cut", t.cut.size()}, {"loss", row.oracle - row.solver}};
  return row;
}

// Perturbs every positive entry within its grid cell, keeping the support.
Instance signature_twin(SplitMix64& rng, const Instance& inst, double grid, double max_ref) {
  Instance twin = inst;
  const int K = inst.levels();
  for (ActionSpec& a : twin.actions) {
    std::vector<std::vector<std::pair<int, double>>> rows(K);
    Eigen::VectorXd profit = a.profit;
    for (int I = 0; I < K; ++I) {
      std::vector<std::pair<int, double>> row;
      for (Transition::InnerIterator it(a.transition, I); it; ++it)
        row.emplace_back(static_cast<int>(it.col()), it.value());
      rows[I] = row;
      for (int attempt = 0; attempt < 20 && row.size() > 1; ++attempt) {
        std::vector<std::pair<int, double>> cand = row;
        double up = 0.0;
        for (auto& [J, v] : cand)
          if (J != I) up += (v += (rng.uniform() - 0.5) * grid * 0.5);
        bool ok = true;
        for (auto& [J, v] : cand) {
          if (J == I) v = 1.0 - up;
          const double orig = a.phi(I, J);
          ok = ok && v > 0.0 && grid_units(v, grid) == grid_units(orig, grid);
        }
        if (ok) {
          rows[I] = cand;
          break;
        }
      }
      const double g = a.profit[I];
      const double unit = grid * max_ref;
      for (int attempt = 0; attempt < 20 && g > 0.0; ++attempt) {
        const double cand = g + (rng.uniform() - 0.5) * unit * 0.5;
        if (cand > 0.0 && grid_units(cand, unit) == grid_units(g, unit)) {
          profit[I] = cand;
          break;
        }
      }
    }
    a = make_action(a.id, a.group, K, rows, profit);
  }
  mark_compliance(twin);
  return twin;
}

ReportRow signatures_row(SplitMix64& rng) {
  ReportRow row;
  KernelParams p = kernel_params(rng, 6, 4, 4);
  p.actions = std::max(p.actions, 2);
  p.levels = std::max(p.levels, 2);
  p.max_mu = rng.chance(0.5) ? 0.05 : 0.3;
  p.profit_chance = 0.7;
  const Instance inst = gen_kernel(rng, p);
  const double grids[] = {1.0 / 16.0, 0.05, 0.1};
  const double grid = grids[rng.below(3)];
  double max_ref = max_over_starts(inst);
  if (!(max_ref > 0.0)) max_ref = 1.0;
  const int K = inst.levels();

  for (int a = 0; a < static_cast<int>(inst.actions.size()); ++a)
    for (int I = 0; I < K; ++I) {
      const Signature s = action_signature(inst, a, I, grid, max_ref);
      for (int J = 0; J < K; ++J) {
        const double gap = inst.actions[a].phi(I, J) - s.entry(J);
        require(row, gap >= -kSlack && gap < grid, "probability rounding outside [0, grid)");
      }
      const double gap = inst.actions[a].profit[I] - s.entry(K);
      require(row, gap >= -kSlack * max_ref && gap < grid * max_ref,
              "profit rounding outside [0, grid*max_ref)");
    }

  const BlockTree tree = gen_block_tree(rng, inst, 0.3, 0.25);
  const Instance twin = signature_twin(rng, inst, grid, max_ref);
  int blocks = 0;
  std::size_t largest = 1;
  for (const BlockNode& b : tree.nodes) {
    if (b.is_leaf()) continue;
    ++blocks;
    largest = std::max(largest, b.items.size());
    const Signature whole = block_signature(inst, b, grid, max_ref);
    std::vector<std::int64_t> sum(whole.units.size(), 0);
    for (int a : b.items) {
      const Signature s = action_signature(inst, a, b.level, grid, max_ref);
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += s.units[j];
    }
    require(row, sum == whole.units, "block signature is not the sum of its members");
    require(row, block_signature(twin, b, grid, max_ref) == whole, "twin signature differs");
  }
  const double a1 = block_profit_approx(inst, tree);
  const double a2 = block_profit_approx(twin, tree);
  const double bound =
      std::max(1, blocks) * (1.0 + 3.0 * K) * grid * static_cast<double>(largest) * max_ref;
  row.oracle = a1;
  row.solver = a2;
  row.ratio = ratio_of(a2, a1);
  require(row, std::abs(a1 - a2) <= bound + kSlack, "signature-equal trees differ beyond the bound");
  row.diagnostics = {{"grid", grid}, {"blocks", blocks}, {"difference", std::abs(a1 - a2)},
                     {"bound", bound}};
  return row;
}

ProblemSpec lossless_probemax(SplitMix64& rng) {
  GenParams g;
  g.kind = ProblemKind::kProbemax;
  g.n = rng.between(2, 8);
  g.support = 3;
  g.value_max = 6.0;
  g.lossless = true;
  g.step = 1.0;
  g.prob_quantum = rng.chance(0.5) ? 0.1 : 0.05;
  g.max_values = 4;
  g.m = rng.between(1, 3);
  ProblemSpec spec = gen_random(rng.next(), g);
  double top = 0.0;
  for (const Item& it : spec.items) top = std::max(top, it.pmf.entries.back().first);
  spec.step = 1.0;
  spec.theta = top + 1.0;
  return spec;
}

double probability_quantum(const ProblemSpec& spec) {
  // Coarsest of 0.1 / 0.05 dividing every probability.
  for (double q : {0.1, 0.05}) {
    bool ok = true;
    for (const Item& it : spec.items)
      for (const auto& [x, p] : it.pmf.entries) ok = ok && std::abs(p / q - std::round(p / q)) < 1e-9;
    if (ok) return q;
  }
  return 0.05;
}

ReportRow ptas_e2e_row(SplitMix64& rng) {
  ReportRow row;
  const ProblemSpec spec = lossless_probemax(rng);
  const Instance inst = build_probemax(spec).instance;
  row.oracle = optimal_value(inst, inst.start_level);
  PtasKnobs k;
  k.grid = probability_quantum(spec);
  k.block_budget = 6;
  k.depth_limit = 4;
  k.top_k = 32;
  const PtasResult res = solve_ptas(inst, k);
  row.solver = res.value;
  row.ratio = ratio_of(res.value, row.oracle);
  require(row, row.ratio >= 0.75 - 1e-12, "ratio below 0.75");
  require(row, res.value <= row.oracle + kSlack, "value above OPT");
  require(row, std::abs(block_profit_exact(inst, res.tree) - res.value) <= kSlack,
          "reported value differs from the tree's exact value");
  row.baselines["greedy"] = greedy_probemax(spec).value;
  const PtasDiagnostics& d = res.diagnostics;
  row.diagnostics = {{"n", spec.items.size()},       {"m", spec.m},
                     {"levels", inst.levels()},       {"grid", k.grid},
                     {"topologies", d.topologies_tried}, {"states", d.states_explored},
                     {"candidates", d.candidates},    {"rescored", d.rescored},
                     {"partial", d.partial}};
  return row;
}

ReportRow completeness_row(SplitMix64& rng) {
  ReportRow row;
  KernelParams p = kernel_params(rng, 4, 2, 3);
  p.prob_quantum = 0.25;
  p.profit_quantum = 0.25;
  p.terminal_quantum = 0.25;
  p.terminal_max = 4.0;
  const Instance inst = gen_kernel(rng, p);
  row.oracle = optimal_value(inst, inst.start_level);
  PtasKnobs k;
  k.grid = 0.25;
  k.max_ref = 1.0;
  k.block_budget = 6;
  k.depth_limit = inst.horizon;
  k.top_k = 0;
  const PtasResult res = solve_ptas(inst, k);
  row.solver = res.value;
  row.ratio = ratio_of(res.value, row.oracle);
  require(row, std::abs(res.value - row.oracle) <= kSlack, "PTAS value differs from OPT");
  row.diagnostics = {{"levels", inst.levels()},
                     {"actions", inst.actions.size()},
                     {"T", inst.horizon},
                     {"topologies", res.diagnostics.topologies_tried},
                     {"candidates", res.diagnostics.candidates}};
  return row;
}

ReportRow discretization_row(SplitMix64& rng) {
  ReportRow row;
  auto draw_pmf = [&](double hi, double quantum) {
    const int support = rng.between(1, 5);
    std::set<double> xs;
    while (static_cast<int>(xs.size()) < support)
      xs.insert(std::round(rng.uniform() * hi / quantum) * quantum);
    Pmf pmf;
    double total = 0.0;
    std::vector<double> w;
    for (std::size_t i = 0; i < xs.size(); ++i) total += w.emplace_back(0.05 + rng.uniform());
    std::size_t i = 0;
    for (double x : xs) pmf.entries.emplace_back(x, w[i++] / total);
    return pmf;
  };

  const Pmf values = draw_pmf(20.0, 0.1);
  const double steps[] = {0.5, 1.0, 2.0};
  const double step = steps[rng.below(3)];
  double theta = step * rng.between(1, 12);
  std::pair<Pmf, DiscretizationMap> dv;
  for (int tries = 0;; ++tries) {
    try {
      dv = discretize_value(values, theta, step);
      break;
    } catch (const DiscretizationError&) {
      if (tries > 1000) throw;
      theta += step;
    }
  }
  const Pmf& img = dv.first;
  require(row, std::abs(img.mass() - 1.0) <= 1e-12, "value image mass differs from one");
  const double big = values.tail_mean(theta);
  double image_top = 0.0;
  for (const auto& [v, q] : img.entries)
    if (std::abs(v - theta) <= 1e-12) image_top = q;
  require(row, std::abs(theta * image_top - big) <= 1e-12 * std::max(1.0, big),
          "tail identity theta * p_theta != E[X 1{X>=theta}]");
  require(row, img.mean() <= values.mean() + 1e-12, "discretized mean exceeds the true mean");
  std::map<double, double> per_outcome;
  for (const Route& r : dv.second.routes) per_outcome[r.outcome] += r.probability;
  for (const auto& [x, p] : values.entries)
    require(row, std::abs(per_outcome[x] - p) <= 1e-12, "value routes do not split the outcome");

  const Pmf sizes = draw_pmf(1.3, 0.01);
  const double li_steps[] = {0.05, 0.1};
  const double li_step = li_steps[rng.below(2)];
  const double cut = li_step * rng.between(1, 5);
  const auto [li_img, li_map] = discretize_size_li(sizes, cut, li_step);
  require(row, std::abs(li_img.mass() - 1.0) <= 1e-12, "size image mass differs from one");
  double small_true = 0.0, small_img = 0.0;
  for (const auto& [x, p] : sizes.entries)
    if (x <= cut) small_true += x * p;
  std::map<double, double> li_outcome;
  for (const Route& r : li_map.routes) {
    li_outcome[r.outcome] += r.probability;
    if (r.outcome <= cut) {
      small_img += r.image * r.probability;
      require(row, r.image == 0.0 || std::abs(r.image - cut) <= 1e-12,
              "small outcome mapped outside {0, cut}");
    } else {
      const double fl = std::floor(r.outcome / li_step + 1e-9) * li_step;
      require(row, std::abs(r.image - fl) <= 1e-9, "large outcome not floored to the grid");
    }
  }
  for (const auto& [x, p] : sizes.entries)
    require(row, std::abs(li_outcome[x] - p) <= 1e-12, "size routes do not split the outcome");
  require(row, std::abs(small_true - small_img) <= 1e-12, "small-part mean not preserved");
  row.oracle = values.mean();
  row.solver = img.mean();
  row.ratio = ratio_of(row.solver, row.oracle);
  row.diagnostics = {{"theta", theta}, {"step", step}, {"cut", cut}, {"size_step", li_step}};
  return row;
}

ReportRow committed_row(SplitMix64& rng) {
  ReportRow row;
  GenParams g;
  g.kind = ProblemKind::kCommittedPandora;
  g.n = rng.between(1, 6);
  g.support = 3;
  g.k = 1;
  g.m = g.n;
  const ProblemSpec spec = gen_random(rng.next(), g);
  const double committed = optimal_value(build_committed(spec), 0);
  const WeitzmanResult w = weitzman(spec);
  const double uncommitted = optimal_value(build_uncommitted_pandora(spec), 0);
  row.oracle = uncommitted;
  row.solver = w.value;
  row.ratio = ratio_of(w.value, uncommitted);
  row.baselines["committed"] = committed;
  require(row, committed <= w.value + kSlack, "committed value exceeds Weitzman");
  require(row, std::abs(w.value - uncommitted) <= kSlack, "Weitzman differs from the oracle");
  row.diagnostics = {{"n", spec.items.size()}, {"opened_order", w.order}};
  return row;
}

ReportRow adaptivity_row(SplitMix64&) {
  ReportRow row;
  ProblemSpec spec;
  spec.kind = ProblemKind::kProbemax;
  spec.m = 2;
  spec.items = {Item{Pmf{{{0, 0.5}, {4, 0.5}}}}, Item{Pmf{{{3, 1.0}}}},
                Item{Pmf{{{0, 0.9}, {10, 0.1}}}}};
  spec.step = 1.0;
  spec.theta = 11.0;
  const Instance inst = build_probemax(spec).instance;
  row.oracle = optimal_value(inst, 0);
  double best_fixed = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      if (a == b) continue;
      const int seq[] = {a, b};
      best_fixed = std::max(best_fixed, evaluate_policy(inst, sequence_policy(inst, seq)));
    }
  double best_pair = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      const Pmf pair[] = {spec.items[a].pmf, spec.items[b].pmf};
      best_pair = std::max(best_pair, expected_max(pair));
    }
  row.solver = best_fixed;
  row.ratio = ratio_of(best_fixed, row.oracle);
  row.baselines["expected_max_pair"] = best_pair;
  require(row, std::abs(row.oracle - 3.8) <= kSlack, "adaptive OPT differs from 3.8");
  require(row, std::abs(best_fixed - 3.7) <= kSlack, "best fixed pair differs from 3.7");
  require(row, std::abs(best_pair - 3.7) <= kSlack, "expected max of the best pair differs from 3.7");
  return row;
}

// theta3 * (1 - prod(1 - p/theta3)) * Pr[sum of discretized sizes <= 1 + 2 eps].
double coin_formula(const ProblemSpec& spec, const Built& b) {
  const double eps = spec.eps;
  const double theta3 = b.max_ref / (eps * eps * eps);
  std::map<long long, double> dist{{0, 1.0}};
  double none = 1.0;
  for (std::size_t i = 0; i < spec.items.size(); ++i) {
    none *= 1.0 - b.instance.actions[i].meta->reward / theta3;
    std::map<long long, double> next;
    for (const auto& [s, p] : dist)
      for (const auto& [x, q] : b.maps[i].image.entries)
        next[s + std::llround(x / b.step)] += p * q;
    dist = std::move(next);
  }
  double fit = 0.0;
  for (const auto& [s, p] : dist)
    if (s * b.step <= 1.0 + 2.0 * eps + 1e-12) fit += p;
  return theta3 * (1.0 - none) * fit;
}

ReportRow sbk_row(SplitMix64& rng, int index) {
  ReportRow row;
  if (index == 0) {
    ProblemSpec spec;
    spec.kind = ProblemKind::kSbk;
    spec.items = {Item{Pmf{{{0.0, 1.0}}}, 0.0, 3.0}, Item{Pmf{{{0.0, 1.0}}}, 0.0, 3.0}};
    const Instance skp = build_skp(spec);
    const int seq[] = {0, 1};
    const SbkReduction red = sbk_from_skp(skp, annotate_skp(skp, sequence_policy(skp, seq)));
    row.oracle = red.skp_value;
    row.solver = red.value;
    row.ratio = ratio_of(red.value, red.skp_value);
    require(row, std::abs(red.skp_value - 6.0) <= kSlack, "hand example SKP value differs from 6");
    require(row, std::abs(red.value - 3.0) <= kSlack, "hand example SBK value differs from 3");
    row.diagnostics = {{"hand_example", true}};
    return row;
  }
  GenParams g;
  g.kind = ProblemKind::kSbk;
  g.n = rng.between(1, 5);
  g.support = 3;
  ProblemSpec spec = gen_random(rng.next(), g);
  const Instance skp = build_skp(spec);
  const PolicyTree pol = rng.chance(0.5) ? optimal_policy(skp) : gen_policy(rng, skp, 0.15);
  const SbkReduction red = sbk_from_skp(skp, annotate_skp(skp, pol));
  row.oracle = red.skp_value;
  row.solver = red.value;
  row.ratio = ratio_of(red.value, red.skp_value);
  require(row, red.value >= red.skp_value / 4.0 - kSlack, "SBK value below a quarter of SKP");

  // Coin encoding on a lossless relaxation of the same items.
  GenParams lg = g;
  lg.lossless = true;
  lg.step = 0.25;
  lg.prob_quantum = 0.1;
  lg.max_values = 6;
  lg.eps = 0.5;
  ProblemSpec lossless = gen_random(rng.next(), lg);
  double total = 0.0;
  for (const Item& it : lossless.items) total += it.profit;
  lossless.step = 0.25;
  lossless.small_cut = 0.25;
  lossless.max_ref = std::max(1.0, 2.0 * total);
  const Built b = build_sbk(lossless);
  std::vector<int> all(lossless.items.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  const double kernel = evaluate_policy(b.instance, sequence_policy(b.instance, all));
  const double formula = coin_formula(lossless, b);
  require(row, std::abs(kernel - formula) <= kSlack * std::max(1.0, formula),
          "coin encoding differs from the approximate-profit formula");
  row.baselines["coin_kernel"] = kernel;
  row.baselines["coin_formula"] = formula;
  row.diagnostics = {{"root", red.root}, {"cut", red.cut.size()}, {"n", spec.items.size()}};
  return row;
}

ReportRow target_row(SplitMix64& rng) {
  ReportRow row;
  GenParams g;
  g.kind = ProblemKind::kTarget;
  g.n = rng.between(1, 4);
  g.support = 3;
  g.eps = 0.2;
  g.m = rng.between(1, g.n);
  const ProblemSpec spec = gen_random(rng.next(), g);
  const Built b = build_target(spec);
  const double eps = spec.eps;
  row.solver = optimal_value(b.instance, 0);
  row.oracle = optimal_value(build_target_exact(spec, 1.0), 0);
  row.ratio = ratio_of(row.solver, row.oracle);
  const TargetReplay rep =
      replay_target(spec, b, optimal_policy(b.instance), 1.0 - 2.0 * eps, 2.0 * eps);
  require(row, std::abs(rep.total_mass - 1.0) <= kSlack, "replay mass differs from one");
  row.baselines["replay_relaxed"] = rep.value;
  row.diagnostics = {{"slack", std::max(0.0, row.oracle - row.solver)},
                     {"deviating_mass", rep.deviating_mass},
                     {"levels", b.instance.levels()}};
  return row;
}

ReportRow baselines_row(SplitMix64& rng) {
  ReportRow row;
  const ProblemSpec spec = lossless_probemax(rng);
  const Instance inst = build_probemax(spec).instance;
  row.oracle = optimal_value(inst, 0);
  row.solver = greedy_probemax(spec).value;
  row.ratio = ratio_of(row.solver, row.oracle);
  require(row, row.solver <= row.oracle + kSlack, "greedy exceeds the adaptive optimum");

  GenParams g;
  g.kind = ProblemKind::kSbk;
  g.n = rng.between(1, 5);
  const ProblemSpec sbk = gen_random(rng.next(), g);
  const Instance skp = build_skp(sbk);
  const SbkReduction red = sbk_from_skp(skp, annotate_skp(skp, optimal_policy(skp)));
  row.baselines["skp_opt"] = red.skp_value;
  row.baselines["sbk14"] = red.value;
  require(row, red.value >= red.skp_value / 4.0 - kSlack, "sbk14 below a quarter of SKP OPT");
  return row;
}

ReportRow simulation_row(SplitMix64& rng, const RunConfig& cfg, int index) {
  ReportRow row;
  KernelParams p = kernel_params(rng, 6, 4, 5);
  p.levels = std::max(p.levels, 2);
  const Instance inst = gen_kernel(rng, p);
  const PolicyTree pol = rng.chance(0.5) ? optimal_policy(inst) : gen_policy(rng, inst, 0.1);
  row.oracle = evaluate_policy(inst, pol);
  const SimulationResult sim = simulate(inst, pol, cfg.seed, cfg.trials, static_cast<std::uint64_t>(index));
  row.solver = sim.mean;
  row.ratio = ratio_of(sim.mean, row.oracle);
  const double band = 4.0 * sim.stddev / std::sqrt(static_cast<double>(sim.trials)) + kSlack;
  require(row, std::abs(sim.mean - row.oracle) <= band, "simulated mean outside 4 sigma");
  row.diagnostics = {{"stddev", sim.stddev}, {"half_width", sim.half_width}, {"trials", sim.trials}};
  return row;
}

// ---------------------------------------------------------------------------

struct SuiteDef {
  const char* name;
  int count;
  std::function<ReportRow(SplitMix64&, const RunConfig&, int)> row;
  std::function<void(Report&)> finalize;
};

void finalize_ratios(Report& r) {
  double sum = 0.0, lo = 1.0;
  for (const ReportRow& row : r.rows) {
    sum += row.ratio;
    lo = std::min(lo, row.ratio);
  }
  const double mean = r.rows.empty() ? 1.0 : sum / static_cast<double>(r.rows.size());
  r.summary["mean_ratio"] = mean;
  r.summary["min_ratio"] = lo;
  if (mean < 0.90) {
    r.pass = false;
    r.summary["failure"] = "mean ratio below 0.90";
  }
}

void finalize_target(Report& r) {
  double dev = 0.0, slack = 0.0;
  for (const ReportRow& row : r.rows) {
    if (!row.diagnostics.contains("deviating_mass")) continue;
    dev = std::max(dev, row.diagnostics["deviating_mass"].get<double>());
    slack = std::max(slack, row.diagnostics["slack"].get<double>());
  }
  r.summary["max_deviating_mass"] = dev;
  r.summary["max_slack"] = slack;
}

void finalize_blocks(Report& r) {
  int most = 0;
  for (const ReportRow& row : r.rows)
    if (row.diagnostics.contains("max_path_blocks"))
      most = std::max(most, row.diagnostics["max_path_blocks"].get<int>());
  r.summary["max_path_blocks"] = most;
}

const std::vector<SuiteDef>& suites() {
  static const std::vector<SuiteDef> defs = {
      {"oracle", 200, [](SplitMix64& g, const RunConfig&, int) { return oracle_row(g); }, {}},
      {"lemma31", 500, [](SplitMix64& g, const RunConfig&, int) { return lemma31_row(g); }, {}},
      {"alg1", 100, [](SplitMix64& g, const RunConfig&, int) { return alg1_row(g); },
       finalize_blocks},
      {"truncation", 100, [](SplitMix64& g, const RunConfig&, int) { return truncation_row(g); },
       {}},
      {"signatures", 100, [](SplitMix64& g, const RunConfig&, int) { return signatures_row(g); },
       {}},
      {"ptas_e2e", 50, [](SplitMix64& g, const RunConfig&, int) { return ptas_e2e_row(g); },
       finalize_ratios},
      {"completeness", 100,
       [](SplitMix64& g, const RunConfig&, int) { return completeness_row(g); }, {}},
      {"discretization", 1000,
       [](SplitMix64& g, const RunConfig&, int) { return discretization_row(g); }, {}},
      {"committed", 100, [](SplitMix64& g, const RunConfig&, int) { return committed_row(g); },
       {}},
      {"adaptivity", 1, [](SplitMix64& g, const RunConfig&, int) { return adaptivity_row(g); },
       {}},
      {"sbk", 101, [](SplitMix64& g, const RunConfig&, int i) { return sbk_row(g, i); }, {}},
      {"target", 50, [](SplitMix64& g, const RunConfig&, int) { return target_row(g); },
       finalize_target},
      {"baselines", 50, [](SplitMix64& g, const RunConfig&, int) { return baselines_row(g); },
       {}},
      {"simulation", 20,
       [](SplitMix64& g, const RunConfig& c, int i) { return simulation_row(g, c, i); }, {}},
  };
  return defs;
}

const SuiteDef& find_suite(const std::string& name) {
  for (const SuiteDef& d : suites())
    if (name == d.name) return d;
  throw ParameterError("unknown suite '" + name + "'");
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const SuiteDef& d : suites()) out.emplace_back(d.name);
    return out;
  }();
  return names;
}

int default_instances(const std::string& suite) { return find_suite(suite).count; }

Report run_suite(const RunConfig& config) {
  const SuiteDef& def = find_suite(config.suite);
  if (config.trials < 1) throw ParameterError("trials must be >= 1");
  const int count = config.instances.value_or(def.count);
  if (count < 0) throw ParameterError("instance count must be >= 0");
  Report report;
  report.suite = def.name;
  report.rows.resize(count);

  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < count; i = next++) {
      SplitMix64 rng(stream_seed(config.seed, static_cast<std::uint64_t>(i)));
      ReportRow row;
      try {
        row = def.row(rng, config, i);
      } catch (const std::exception& e) {
        row = ReportRow{};
        row.pass = false;
        row.message = std::string("exception: ") + e.what();
      }
      row.suite = def.name;
      row.instance = i;
      report.rows[i] = std::move(row);
    }
  };
  const int workers = std::clamp(config.workers, 1, std::max(1, count));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();

  int failed = 0;
  for (const ReportRow& row : report.rows) failed += !row.pass;
  report.pass = failed == 0;
  report.summary["instances"] = count;
  report.summary["failed"] = failed;
  if (def.finalize) def.finalize(report);
  if (!config.out.empty()) write_file(config.out, to_jsonl(report));
  return report;
}

std::string to_jsonl(const Report& report) {
  std::string out;
  for (const ReportRow& r : report.rows) {
    json j = {{"suite", r.suite},       {"instance", r.instance}, {"pass", r.pass},
              {"oracle", r.oracle},     {"solver", r.solver},     {"ratio", r.ratio},
              {"baselines", r.baselines}, {"diagnostics", r.diagnostics},
              {"message", r.message}};
    out += j.dump() + "\n";
  }
  json s = {{"suite", report.suite}, {"summary", report.summary}, {"pass", report.pass}};
  out += s.dump() + "\n";
  return out;
}

std::string to_table(const Report& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %6s %5s %14s %14s %10s  %s\n", "suite", "inst", "ok",
                "oracle", "solver", "ratio", "message");
  os << line;
  for (const ReportRow& r : report.rows) {
    std::snprintf(line, sizeof line, "%-14s %6d %5s %14s %14s %10s  ", r.suite.c_str(),
                  r.instance, r.pass ? "yes" : "NO", fmt(r.oracle).c_str(),
                  fmt(r.solver).c_str(), fmt(r.ratio).c_str());
    os << line << r.message << "\n";
  }
  os << report.suite << ": " << (report.pass ? "PASS" : "FAIL") << " " << report.summary.dump()
     << "\n";
  return os.str();
}

}  // namespace stochprobe
