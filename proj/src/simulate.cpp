#include "stochprobe/simulate.hpp"

#include <cmath>

#include "stochprobe/random.hpp"

namespace stochprobe {

namespace {

constexpr double kZ99 = 2.5758293035489004;

void check_rows(const Instance& inst, const PolicyTree& tree) {
  for (const PolicyNode& n : tree.nodes) {
    if (n.is_leaf()) continue;
    double total = 0.0;
    for (Transition::InnerIterator it(inst.actions[n.action].transition, n.level); it; ++it) {
      if (it.value() < 0.0 || !std::isfinite(it.value()))
        throw StructuralError("action '" + inst.actions[n.action].id + "': invalid probability");
      total += it.value();
    }
    if (std::abs(total - 1.0) > kTolerance)
      throw StructuralError("action '" + inst.actions[n.action].id + "': row " +
                            std::to_string(n.level) + " sums to " + std::to_string(total));
  }
}

double run(const Instance& inst, const PolicyTree& tree, SplitMix64& rng) {
  double payoff = 0.0;
  int v = 0;
  while (true) {
    const PolicyNode& n = tree.nodes[v];
    if (n.is_leaf()) return payoff + inst.terminal[n.level];
    const ActionSpec& a = inst.actions[n.action];
    payoff += a.profit[n.level];
    const double u = rng.uniform();
    double acc = 0.0;
    int key = -1;
    for (Transition::InnerIterator it(a.transition, n.level); it; ++it) {
      if (it.value() <= 0.0) continue;
      key = static_cast<int>(it.col());
      acc += it.value();
      if (u < acc) break;
    }
    v = n.child(key);
  }
}

}  // namespace

double sample_payoff(const Instance& instance, const PolicyTree& tree, std::uint64_t seed) {
  validate_policy(instance, tree);
  check_rows(instance, tree);
  SplitMix64 rng(seed);
  return run(instance, tree, rng);
}

SimulationResult simulate(const Instance& instance, const PolicyTree& tree, std::uint64_t seed,
                          std::int64_t trials, std::uint64_t stream) {
  if (trials < 1) throw ParameterError("trials must be >= 1");
  validate_policy(instance, tree);
  check_rows(instance, tree);
  // Welford accumulation.
  double mean = 0.0, m2 = 0.0;
  for (std::int64_t i = 0; i < trials; ++i) {
    SplitMix64 rng(stream_seed(seed, stream, static_cast<std::uint64_t>(i)));
    const double x = run(instance, tree, rng);
    const double d = x - mean;
    mean += d / static_cast<double>(i + 1);
    m2 += d * (x - mean);
  }
  SimulationResult r;
  r.trials = trials;
  r.mean = mean;
  r.stddev = trials > 1 ? std::sqrt(m2 / static_cast<double>(trials - 1)) : 0.0;
  r.half_width = kZ99 * r.stddev / std::sqrt(static_cast<double>(trials));
  return r;
}

}  // namespace stochprobe
