#pragma once

// Seeded generators for specs, kernels and trees. Every stream is derived
// from (seed, instance, trial), so results never depend on scheduling.

#include <cstdint>

#include "stochprobe/block.hpp"
#include "stochprobe/problems.hpp"

namespace stochprobe {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  double uniform();          // [0, 1)
  int below(int n);          // [0, n)
  int between(int lo, int hi);  // [lo, hi]
  bool chance(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
};

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t instance, std::uint64_t trial = 0);

struct GenParams {
  ProblemKind kind = ProblemKind::kProbemax;
  int n = 4;
  int support = 3;          // max outcomes per item
  double value_max = 10.0;  // outcomes (sizes are fractions of the target/capacity)
  int m = 2;                // clipped to n
  int k = 1;
  double eps = 0.2;
  // Lossless mode: outcomes on the step lattice drawn from at most
  // `max_values` distinct values, probabilities multiples of prob_quantum.
  bool lossless = false;
  double step = 1.0;
  double prob_quantum = 0.1;
  int max_values = 4;
};

ProblemSpec gen_random(std::uint64_t seed, const GenParams& params);

struct KernelParams {
  int actions = 4;
  int levels = 3;
  int horizon = 3;
  int groups = 0;               // 0: every action in its own group
  double prob_quantum = 0.0;    // 0: continuous probabilities
  double max_mu = 1.0;          // bound on 1 - Phi(I, I)
  double profit_chance = 0.5;   // chance that G(I) > 0
  double profit_max = 1.0;
  double profit_quantum = 0.0;
  double terminal_max = 10.0;
  double terminal_quantum = 0.0;
};

// Compliant random kernel; the top level is absorbing.
Instance gen_kernel(SplitMix64& rng, const KernelParams& params);

// Random valid policy from the start level; each node stops with stop_chance.
PolicyTree gen_policy(SplitMix64& rng, const Instance& instance, double stop_chance);

// Random block tree whose multi-item blocks have mass mu(M) <= eps^2.
BlockTree gen_block_tree(SplitMix64& rng, const Instance& instance, double eps,
                         double stop_chance);

}  // namespace stochprobe
