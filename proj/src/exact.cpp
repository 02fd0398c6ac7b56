#include "stochprobe/exact.hpp"

#include <algorithm>

namespace stochprobe {

namespace {

std::uint64_t pack(int time, int level, std::uint32_t remaining) {
  return (static_cast<std::uint64_t>(time) << 56) |
         (static_cast<std::uint64_t>(level) << 32) | remaining;
}

}  // namespace

ExactSolver::ExactSolver(const Instance& instance, int group_cap)
    : instance_(instance), groups_(index_groups(instance)) {
  if (groups_.count() > std::min(group_cap, 32))
    throw CapacityError("exact solver: " + std::to_string(groups_.count()) +
                            " action groups exceed the cap of " +
                            std::to_string(std::min(group_cap, 32)),
                        groups_.count());
  if (instance.levels() >= (1 << 24) || instance.horizon >= 255)
    throw CapacityError("exact solver: level count or horizon too large", instance.levels());
  if (instance.terminal.size() != instance.levels())
    throw StructuralError("terminal vector length differs from level count");
  members_.resize(groups_.count());
  for (std::size_t a = 0; a < instance.actions.size(); ++a)
    members_[groups_.of_action[a]].push_back(static_cast<int>(a));
  full_mask_ = groups_.count() == 32 ? ~0u : ((1u << groups_.count()) - 1u);
}

const ExactSolver::Entry& ExactSolver::solve(int time, int level, std::uint32_t remaining) {
  const std::uint64_t key = pack(time, level, remaining);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;

  Entry best{instance_.terminal[level], kLeaf};
  if (time <= instance_.horizon && remaining != 0) {
    double best_q = 0.0;
    int best_a = kLeaf;
    for (int g = 0; g < groups_.count(); ++g) {
      if (!(remaining >> g & 1u)) continue;
      const std::uint32_t next = remaining & ~(1u << g);
      for (int a : members_[g]) {
        const ActionSpec& act = instance_.actions[a];
        double q = act.profit[level];
        for (Transition::InnerIterator it(act.transition, level); it; ++it)
          q += it.value() * solve(time + 1, static_cast<int>(it.col()), next).value;
        if (best_a == kLeaf || q > best_q + 1e-12 || (q > best_q - 1e-12 && a < best_a)) {
          best_q = q;
          best_a = a;
        }
      }
    }
    // Acting is preferred over stopping on ties.
    if (best_a != kLeaf && best_q >= best.value - 1e-12) best = {best_q, best_a};
  }
  return memo_.emplace(key, best).first->second;
}

double ExactSolver::value(int time, int level, std::uint32_t remaining) {
  if (level < 0 || level >= instance_.levels())
    throw ParameterError("level out of range");
  return solve(time, level, remaining).value;
}

int ExactSolver::best_action(int time, int level, std::uint32_t remaining) {
  if (level < 0 || level >= instance_.levels())
    throw ParameterError("level out of range");
  return solve(time, level, remaining).action;
}

int ExactSolver::expand(int time, int level, std::uint32_t remaining, PolicyTree& out) {
  const int idx = out.size();
  PolicyNode n;
  n.level = level;
  n.time = time;
  n.action = solve(time, level, remaining).action;
  out.nodes.push_back(n);
  if (n.action == kLeaf) return idx;
  const std::uint32_t next = remaining & ~(1u << groups_.of_action[n.action]);
  const Transition& row = instance_.actions[n.action].transition;
  std::vector<std::pair<int, int>> kids;
  for (Transition::InnerIterator it(row, level); it; ++it) {
    const int key = static_cast<int>(it.col());
    kids.emplace_back(key, expand(time + 1, key, next, out));
  }
  out.nodes[idx].children = std::move(kids);
  return idx;
}

PolicyTree ExactSolver::policy(int start_level) {
  if (start_level < 0 || start_level >= instance_.levels())
    throw ParameterError("start level out of range");
  PolicyTree out;
  expand(1, start_level, full_mask_, out);
  return out;
}

double optimal_value(const Instance& instance, int start_level) {
  ExactSolver solver(instance);
  return solver.value(1, start_level, solver.full_mask());
}

PolicyTree optimal_policy(const Instance& instance) {
  ExactSolver solver(instance);
  return solver.policy(instance.start_level);
}

double max_over_starts(const Instance& instance) {
  ExactSolver solver(instance);
  double best = solver.value(1, 0, solver.full_mask());
  for (int i = 1; i < instance.levels(); ++i)
    best = std::max(best, solver.value(1, i, solver.full_mask()));
  return best;
}

}  // namespace stochprobe
