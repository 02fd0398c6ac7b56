// Command-line front end: gen, exact, ptas, baseline, simulate, suite, check.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "stochprobe/exact.hpp"
#include "stochprobe/io.hpp"
#include "stochprobe/ptas.hpp"
#include "stochprobe/random.hpp"
#include "stochprobe/simulate.hpp"
#include "stochprobe/suites.hpp"

using namespace stochprobe;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kAssertion = 1;
constexpr int kUsage = 2;
constexpr int kCapacity = 3;

void emit(const json& j, const std::string& out) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
  }
}

Document load(const std::string& path) { return parse_instance(read_file(path)); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact and approximate solvers for stochastic probing dynamic programs"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a random problem spec");
  std::string kind = "probemax";
  GenParams gp;
  std::uint64_t seed = 1;
  std::string out;
  gen->add_option("--kind", kind, "Problem kind")->required();
  gen->add_option("--n", gp.n, "Item count")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", seed, "Random seed");
  gen->add_option("--out", out, "Output path (stdout when omitted)");
  gen->add_option("--support", gp.support, "Max outcomes per item")->check(CLI::PositiveNumber);
  gen->add_option("--value-max", gp.value_max, "Largest value outcome");
  gen->add_option("--m", gp.m, "Probe budget");
  gen->add_option("--k", gp.k, "Choose budget");
  gen->add_option("--eps", gp.eps, "Accuracy parameter stored in the spec");
  gen->add_flag("--lossless", gp.lossless, "Outcomes on the step lattice, quantized probabilities");
  gen->add_option("--step", gp.step, "Lattice step for --lossless");
  gen->add_option("--quantum", gp.prob_quantum, "Probability quantum for --lossless");

  // exact
  auto* exact = app.add_subcommand("exact", "Solve a kernel or spec exactly");
  std::string in;
  exact->add_option("--in", in, "Instance or spec JSON")->required();
  exact->add_option("--out", out, "Output path");

  // ptas
  auto* ptas = app.add_subcommand("ptas", "Block-policy search");
  PtasKnobs knobs;
  std::optional<int> caps;
  std::optional<double> max_ref;
  std::string hint = "exact";
  bool faithful = false;
  ptas->add_option("--in", in, "Instance or spec JSON")->required();
  ptas->add_option("--eps", knobs.eps, "Accuracy parameter");
  ptas->add_option("--grid", knobs.grid, "Signature grid");
  ptas->add_option("--blocks", knobs.block_budget, "Block budget per topology");
  ptas->add_option("--depth", knobs.depth_limit, "Topology depth limit");
  ptas->add_option("--topk", knobs.top_k, "Candidates rescored exactly (0: all)");
  ptas->add_option("--caps", caps, "Items per topology path");
  ptas->add_option("--max-hint", hint, "exact, greedy_probemax or terminal_bound");
  ptas->add_option("--max-ref", max_ref, "Override the MAX estimate");
  ptas->add_flag("--faithful", faithful, "Derive grid, depth, caps and budget from eps");
  ptas->add_option("--out", out, "Output path");

  // baseline
  auto* baseline = app.add_subcommand("baseline", "Run a baseline algorithm on a spec");
  std::string algo;
  baseline->add_option("--in", in, "Spec JSON")->required();
  baseline->add_option("--algo", algo, "Baseline")
      ->required()
      ->check(CLI::IsMember({"greedy", "weitzman", "sbk14"}));
  baseline->add_option("--out", out, "Output path");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Monte-Carlo estimate of a policy's value");
  std::string policy;
  std::int64_t trials = 100000;
  sim->add_option("--in", in, "Instance or spec JSON")->required();
  sim->add_option("--policy", policy, "Policy or block-tree JSON (optimal when omitted)");
  sim->add_option("--trials", trials, "Trial count")->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed, "Random seed");
  sim->add_option("--out", out, "Output path");

  // suite
  auto* suite = app.add_subcommand("suite", "Run an invariant suite");
  RunConfig rc;
  std::string table;
  suite->add_option("--name", rc.suite, "Suite name")->required();
  suite->add_option("--seed", rc.seed, "Random seed");
  suite->add_option("--out", rc.out, "JSON-lines report path");
  suite->add_option("--instances", rc.instances, "Instance count override");
  suite->add_option("--trials", rc.trials, "Simulation trials")->check(CLI::PositiveNumber);
  suite->add_option("--workers", rc.workers, "Worker threads")->check(CLI::PositiveNumber);
  suite->add_option("--table", table, "Write the summary table here instead of stdout");

  // check
  auto* check = app.add_subcommand("check", "Validate an instance");
  check->add_option("--in", in, "Instance or spec JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      gp.kind = parse_problem_kind(kind);
      const std::string text = serialize(gen_random(seed, gp));
      if (out.empty()) {
        std::cout << text;
      } else {
        write_file(out, text);
      }
      return kOk;
    }
    if (*exact) {
      const Instance inst = instance_of(load(in));
      ExactSolver solver(inst);
      const double v = solver.value(1, inst.start_level, solver.full_mask());
      const PolicyTree tree = solver.policy(inst.start_level);
      emit({{"value", v}, {"states", solver.states()}, {"policy", policy_to_json(inst, tree)}},
           out);
      return kOk;
    }
    if (*ptas) {
      const Instance inst = instance_of(load(in));
      if (faithful) {
        const PtasKnobs f = faithful_knobs(inst, knobs.eps);
        knobs.grid = f.grid;
        knobs.depth_limit = f.depth_limit;
        knobs.block_budget = f.block_budget;
        knobs.caps = f.caps;
      }
      if (caps) knobs.caps = caps;
      knobs.max_hint = parse_max_hint(hint);
      knobs.max_ref = max_ref;
      const PtasResult r = solve_ptas(inst, knobs);
      const PtasDiagnostics& d = r.diagnostics;
      emit({{"value", r.value},
            {"tree", block_tree_to_json(inst, r.tree)},
            {"diagnostics",
             {{"topologies_enumerated", d.topologies_enumerated},
              {"topologies_tried", d.topologies_tried},
              {"topologies_failed", d.topologies_failed},
              {"states_explored", d.states_explored},
              {"candidates", d.candidates},
              {"rescored", d.rescored},
              {"partial", d.partial},
              {"max_ref", d.max_ref},
              {"best_surrogate", d.best_surrogate},
              {"rounding_bound", d.rounding_bound},
              {"messages", d.messages}}}},
           out);
      return d.partial && d.topologies_tried == d.topologies_failed && d.topologies_tried > 0
                 ? kCapacity
                 : kOk;
    }
    if (*baseline) {
      const Document doc = load(in);
      const ProblemSpec* spec = std::get_if<ProblemSpec>(&doc);
      if (!spec) throw ParameterError("baselines need a problem spec, not a kernel");
      if (algo == "greedy") {
        const GreedyResult g = greedy_probemax(*spec);
        emit({{"value", g.value}, {"items", g.items}}, out);
      } else if (algo == "weitzman") {
        const WeitzmanResult w = weitzman(*spec);
        emit({{"value", w.value}, {"caps", w.caps}, {"order", w.order}}, out);
      } else {
        const Instance skp = build_skp(*spec);
        const SbkReduction r = sbk_from_skp(skp, annotate_skp(skp, optimal_policy(skp)));
        emit({{"value", r.value},
              {"skp_value", r.skp_value},
              {"root", r.root},
              {"policy", policy_to_json(skp, r.tree)}},
             out);
      }
      return kOk;
    }
    if (*sim) {
      const Instance inst = instance_of(load(in));
      const PolicyTree tree =
          policy.empty() ? optimal_policy(inst) : parse_policy(inst, read_file(policy));
      const SimulationResult s = simulate(inst, tree, seed, trials);
      emit({{"mean", s.mean},
            {"half_width", s.half_width},
            {"stddev", s.stddev},
            {"trials", s.trials},
            {"exact", evaluate_policy(inst, tree)}},
           out);
      return kOk;
    }
    if (*suite) {
      const Report r = run_suite(rc);
      const std::string t = to_table(r);
      if (table.empty()) {
        std::cout << t;
      } else {
        write_file(table, t);
      }
      return r.pass ? kOk : kAssertion;
    }
    if (*check) {
      const Instance inst = instance_of(load(in));
      const ComplianceReport r = validate_instance(inst);
      json v = json::array();
      for (const Violation& x : r.violations)
        v.push_back({{"kind", to_string(x.kind)},
                     {"action", x.action},
                     {"from", x.from},
                     {"to", x.to},
                     {"message", x.message}});
      emit({{"compliant", r.compliant}, {"violations", v}}, out);
      return r.compliant ? kOk : kAssertion;
    }
  } catch (const CapacityError& e) {
    std::cerr << "capacity: " << e.what() << "\n";
    return kCapacity;
  } catch (const ParameterError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return kUsage;
  } catch (const HintError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "input: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAssertion;
  }
  return kUsage;
}
