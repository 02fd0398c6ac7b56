#pragma once

// Application adapters: each problem compiles into a kernel Instance.

#include <optional>
#include <string>
#include <vector>

#include "stochprobe/model.hpp"

namespace stochprobe {

enum class ProblemKind {
  kProbemax,
  kProbeTopK,
  kCommittedProbeTopK,
  kCommittedPandora,
  kTarget,
  kSbk,
};

const char* to_string(ProblemKind kind);
ProblemKind parse_problem_kind(const std::string& name);  // throws ParameterError

struct Item {
  Pmf pmf;  // values X_i, or sizes for target and sbk
  double cost = 0.0;
  double profit = 0.0;
};

struct ProblemSpec {
  ProblemKind kind = ProblemKind::kProbemax;
  std::vector<Item> items;
  int m = 1;
  int k = 1;
  double target = 1.0;
  double capacity = 1.0;
  double eps = 0.1;
  // Discretization overrides; defaults follow eps.
  std::optional<double> step;
  std::optional<double> theta;
  std::optional<double> small_cut;
  std::optional<double> max_ref;
  bool compress_levels = true;
};

void validate_spec(const ProblemSpec& spec);

inline constexpr int kLevelCap = 200'000;

// Mass routed from one raw outcome to one discretized value.
struct Route {
  double outcome;
  double image;
  double probability;
};

struct DiscretizationMap {
  int item = -1;
  double threshold = 0.0;
  double step = 0.0;
  double scale = 1.0;    // factor applied to small outcomes
  bool clamped = false;  // a rescaled mass had to be capped at one
  std::vector<Route> routes;  // per outcome, summing to its probability
  // Deterministic outcome -> value map where one exists (value discretization).
  std::vector<std::pair<double, double>> canonical;
  Pmf image;

  double canonical_image(double outcome) const;  // throws ParameterError if absent
};

// Large outcomes (>= theta) collapse to theta with mass E[X 1{X>=theta}]/theta;
// small ones floor to the step grid with mass scaled to keep the total at one.
std::pair<Pmf, DiscretizationMap> discretize_value(const Pmf& pmf, double theta, double step);

// Outcomes above small_cut floor to the step grid; outcomes at or below it
// move to {0, small_cut} preserving the small-part mean, splitting one atom.
std::pair<Pmf, DiscretizationMap> discretize_size_li(const Pmf& pmf, double small_cut,
                                                     double step);

struct Built {
  Instance instance;
  std::vector<DiscretizationMap> maps;  // one per item
  double threshold = 0.0;
  double step = 0.0;
  double max_ref = 0.0;  // sbk: the OPT estimate behind theta_1..theta_3
};

Built build_probemax(const ProblemSpec& spec);
Built build_probetopk(const ProblemSpec& spec);
Instance build_committed(const ProblemSpec& spec);
Built build_target(const ProblemSpec& spec);
Built build_sbk(const ProblemSpec& spec);

// Lossless kernels used as oracles.
// Uncommitted Pandora: level = best value seen, G = -c_i (not compliant).
Instance build_uncommitted_pandora(const ProblemSpec& spec);
// Target over exact reachable sums (capped at the target); h = 1{sum >= threshold}.
Instance build_target_exact(const ProblemSpec& spec, double threshold);
// SBK over exact (size, profit) states plus an overflow level.
Instance build_sbk_exact(const ProblemSpec& spec);
// Stochastic knapsack: size levels plus an absorbing overflow level (the
// last); G = p * Pr[fit], h = 0.
Instance build_skp(const ProblemSpec& spec);

// Dispatches on spec.kind.
Instance build_instance(const ProblemSpec& spec);

struct GreedyResult {
  std::vector<int> items;
  double value = 0.0;
};
GreedyResult greedy_probemax(const ProblemSpec& spec);

struct WeitzmanResult {
  std::vector<double> caps;  // fair cap per box
  std::vector<int> order;    // boxes with positive cap, by decreasing cap
  double value = 0.0;
};
WeitzmanResult weitzman(const std::vector<double>& costs, const std::vector<Pmf>& pmfs);
WeitzmanResult weitzman(const ProblemSpec& spec);

// Exact solution of E[(X - s)^+] = c.
double fair_cap(const Pmf& pmf, double cost);

struct AnnotatedPolicy {
  PolicyTree tree;
  std::vector<double> accumulated;  // profit banked before each node
};

// Annotations for a policy on a build_skp kernel.
AnnotatedPolicy annotate_skp(const Instance& skp, const PolicyTree& tree);

struct SbkReduction {
  PolicyTree tree;
  double value = 0.0;      // SBK value of `tree`
  double skp_value = 0.0;  // SKP value of the input policy
  int root = 0;            // input node the result is rooted at
  std::vector<int> cut;    // input nodes replaced by leaves
};

// Throws StructuralError on malformed annotations.
SbkReduction sbk_from_skp(const Instance& skp, const AnnotatedPolicy& policy);

// Cuts each path at the first node whose banked profit reaches theta1, so
// every path banks less than theta1 before its last item.
Truncation truncate_profit(const AnnotatedPolicy& policy, double theta1);

// SBK payoff of a policy on an SKP kernel: banked profit on leaves that did
// not overflow.
double sbk_value(const Instance& skp, const AnnotatedPolicy& policy);

// Value of a policy built on the discretized Probemax kernel when run on the
// true distributions, branching on discretized values.
double replay_probemax(const ProblemSpec& spec, const Built& built, const PolicyTree& tree);

struct TargetReplay {
  double value = 0.0;           // Pr[true sum >= threshold]
  double deviating_mass = 0.0;  // mass of paths with |W - W~| >= deviation
  double total_mass = 0.0;
};

// Runs a discretized-target policy on the true sizes, coupling each raw
// outcome with its discretized image through the map routes.
TargetReplay replay_target(const ProblemSpec& spec, const Built& built, const PolicyTree& tree,
                           double threshold, double deviation);

}  // namespace stochprobe
