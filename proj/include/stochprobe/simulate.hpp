#pragma once

// Monte-Carlo policy evaluation.

#include <cstdint>

#include "stochprobe/model.hpp"

namespace stochprobe {

struct SimulationResult {
  double mean = 0.0;
  double half_width = 0.0;  // 99% normal interval
  double stddev = 0.0;      // sample standard deviation
  std::int64_t trials = 0;
};

// Trial i draws from the stream (seed, stream, i). Throws StructuralError on
// rows that are not distributions.
SimulationResult simulate(const Instance& instance, const PolicyTree& tree, std::uint64_t seed,
                          std::int64_t trials, std::uint64_t stream = 0);

// Payoff of one sampled run.
double sample_payoff(const Instance& instance, const PolicyTree& tree, std::uint64_t seed);

}  // namespace stochprobe
