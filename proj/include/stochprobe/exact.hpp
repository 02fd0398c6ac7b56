#pragma once

// Memoized Bellman solve over (time, level, remaining groups).

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "stochprobe/model.hpp"

namespace stochprobe {

inline constexpr int kDefaultGroupCap = 24;

class ExactSolver {
 public:
  // Throws CapacityError when the instance has more groups than group_cap
  // (itself at most 32).
  explicit ExactSolver(const Instance& instance, int group_cap = kDefaultGroupCap);

  // DP_t(level, remaining); DP_{T+1}(I, .) = h(I).
  double value(int time, int level, std::uint32_t remaining);
  // Maximizing action index, or kLeaf when stopping is optimal.
  int best_action(int time, int level, std::uint32_t remaining);

  std::uint32_t full_mask() const { return full_mask_; }
  int group_of(int action) const { return groups_.of_action[action]; }
  std::size_t states() const { return memo_.size(); }

  // The optimal adaptive policy from (level, time 1, all groups).
  PolicyTree policy(int start_level);

 private:
  struct Entry {
    double value;
    int action;
  };
  const Entry& solve(int time, int level, std::uint32_t remaining);
  int expand(int time, int level, std::uint32_t remaining, PolicyTree& out);

  const Instance& instance_;
  GroupIndex groups_;
  std::vector<std::vector<int>> members_;  // group -> action indices
  std::uint32_t full_mask_ = 0;
  std::unordered_map<std::uint64_t, Entry> memo_;
};

double optimal_value(const Instance& instance, int start_level);
PolicyTree optimal_policy(const Instance& instance);
double max_over_starts(const Instance& instance);

}  // namespace stochprobe
