#include "stochprobe/problems.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include "stochprobe/exact.hpp"

namespace stochprobe {

namespace {

// floor(x / step), snapping values within 1e-9 of a lattice point onto it.
long long grid_floor(double x, double step) {
  const double q = x / step;
  const double r = std::round(q);
  if (std::abs(q - r) <= 1e-9) return static_cast<long long>(r);
  return static_cast<long long>(std::floor(q));
}

bool on_grid(double x, double step) {
  const double q = x / step;
  return std::abs(q - std::round(q)) <= 1e-9;
}

// Index of `v` in the sorted representative list.
int level_of(const std::vector<double>& reps, double v) {
  auto it = std::lower_bound(reps.begin(), reps.end(), v - 1e-9);
  if (it == reps.end() || std::abs(*it - v) > 1e-9)
    throw DiscretizationError("value " + std::to_string(v) + " is not a level representative");
  return static_cast<int>(it - reps.begin());
}

void check_level_count(std::size_t count, const std::string& what) {
  if (count > static_cast<std::size_t>(kLevelCap))
    throw CapacityError(what + ": " + std::to_string(count) +
                            " levels exceed the cap; use a coarser eps or step",
                        count);
}

using Rows = std::vector<std::vector<std::pair<int, double>>>;

Rows rows_from_maps(const std::vector<std::map<int, double>>& m) {
  Rows rows(m.size());
  for (std::size_t i = 0; i < m.size(); ++i)
    for (const auto& [j, p] : m[i])
      if (p > 0.0) rows[i].emplace_back(j, p);
  return rows;
}

std::string item_id(int i) { return "x" + std::to_string(i); }

void require_kind(const ProblemSpec& spec, std::initializer_list<ProblemKind> kinds,
                  const char* op) {
  for (ProblemKind k : kinds)
    if (spec.kind == k) return;
  throw ParameterError(std::string(op) + ": unsupported problem kind '" + to_string(spec.kind) +
                       "'");
}

Pmf scaled_outcomes(const Pmf& pmf, double by) {
  Pmf out;
  for (const auto& [x, p] : pmf.entries) out.entries.emplace_back(x / by, p);
  return canonical(std::move(out));
}

// Discretized values shared by Probemax and ProbeTop-k.
struct ValueGrid {
  std::vector<double> reps;
  std::vector<Pmf> images;
  std::vector<DiscretizationMap> maps;
  double threshold = 0.0;
  double step = 0.0;
};

ValueGrid discretize_items(const ProblemSpec& spec) {
  ValueGrid g;
  double w = 0.0;
  if (!spec.step || !spec.theta) {
    ProblemSpec probe = spec;
    probe.kind = ProblemKind::kProbemax;
    probe.m = std::min<int>(std::max(spec.m, spec.k), static_cast<int>(spec.items.size()));
    w = greedy_probemax(probe).value;
  }
  if (spec.step) {
    g.step = *spec.step;
  } else {
    g.step = w > 0.0 ? spec.eps * w : 1.0;
  }
  if (!(g.step > 0.0)) throw ParameterError("step must be positive");
  if (spec.theta) {
    g.threshold = *spec.theta;
    if (!on_grid(g.threshold, g.step)) throw ParameterError("theta must be a multiple of step");
  } else {
    const double raw = w > 0.0 ? w / spec.eps : g.step;
    g.threshold = std::max<double>(1, std::ceil(raw / g.step - 1e-9)) * g.step;
    auto clamps = [&] {
      for (const Item& it : spec.items)
        if (it.pmf.tail_mean(g.threshold) > g.threshold * (1.0 + 1e-12)) return true;
      return false;
    };
    while (clamps()) g.threshold += g.step;
  }
  if (!(g.threshold > 0.0)) throw ParameterError("theta must be positive");

  std::set<double> values{0.0};
  for (std::size_t i = 0; i < spec.items.size(); ++i) {
    auto [img, map] = discretize_value(spec.items[i].pmf, g.threshold, g.step);
    map.item = static_cast<int>(i);
    for (const auto& [v, p] : img.entries) values.insert(v);
    g.images.push_back(std::move(img));
    g.maps.push_back(std::move(map));
  }
  if (spec.compress_levels) {
    // Merge representatives that differ by rounding noise.
    for (double v : values)
      if (g.reps.empty() || v - g.reps.back() > 1e-9) g.reps.push_back(v);
  } else {
    const long long top = grid_floor(g.threshold, g.step);
    check_level_count(static_cast<std::size_t>(top + 1), "probemax");
    for (long long i = 0; i <= top; ++i) g.reps.push_back(static_cast<double>(i) * g.step);
  }
  check_level_count(g.reps.size(), "probemax");
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// Specs

const char* to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::kProbemax: return "probemax";
    case ProblemKind::kProbeTopK: return "probetopk";
    case ProblemKind::kCommittedProbeTopK: return "committed_probetopk";
    case ProblemKind::kCommittedPandora: return "committed_pandora";
    case ProblemKind::kTarget: return "target";
    case ProblemKind::kSbk: return "sbk";
  }
  return "unknown";
}

ProblemKind parse_problem_kind(const std::string& name) {
  for (ProblemKind k : {ProblemKind::kProbemax, ProblemKind::kProbeTopK,
                        ProblemKind::kCommittedProbeTopK, ProblemKind::kCommittedPandora,
                        ProblemKind::kTarget, ProblemKind::kSbk})
    if (name == to_string(k)) return k;
  throw ParameterError("unknown problem kind '" + name + "'");
}

void validate_spec(const ProblemSpec& spec) {
  for (std::size_t i = 0; i < spec.items.size(); ++i) {
    const std::string what = "items[" + std::to_string(i) + "].pmf";
    validate_pmf(spec.items[i].pmf, what);
    for (const auto& [x, p] : spec.items[i].pmf.entries)
      if (x < 0.0) throw ParameterError(what + ": negative outcome");
    if (spec.items[i].cost < 0.0) throw ParameterError("items[" + std::to_string(i) + "].cost < 0");
    if (spec.items[i].profit < 0.0)
      throw ParameterError("items[" + std::to_string(i) + "].profit < 0");
  }
  if (spec.m < 0 || spec.m > static_cast<int>(spec.items.size()))
    throw ParameterError("m must lie in [0, n]");
  if (spec.k < 1) throw ParameterError("k must be >= 1");
  if (!(spec.target > 0.0)) throw ParameterError("target must be positive");
  if (!(spec.capacity > 0.0)) throw ParameterError("capacity must be positive");
  if (!(spec.eps > 0.0 && spec.eps <= 1.0)) throw ParameterError("eps must lie in (0, 1]");
}

double DiscretizationMap::canonical_image(double outcome) const {
  for (const auto& [x, v] : canonical)
    if (x == outcome) return v;
  throw ParameterError("outcome has no canonical image");
}

// ---------------------------------------------------------------------------
// Discretization

std::pair<Pmf, DiscretizationMap> discretize_value(const Pmf& pmf, double theta, double step) {
  if (!(step > 0.0) || !(theta > 0.0)) throw ParameterError("theta and step must be positive");
  if (!on_grid(theta, step)) throw ParameterError("theta must be a multiple of step");
  validate_pmf(pmf, "discretize_value");
  DiscretizationMap map;
  map.threshold = theta;
  map.step = step;
  double big_mass = 0.0, big_mean = 0.0, small_mass = 0.0;
  for (const auto& [x, p] : pmf.entries) {
    if (x < 0.0) throw ParameterError("discretize_value: negative outcome");
    if (x >= theta) {
      big_mass += p;
      big_mean += x * p;
    } else {
      small_mass += p;
    }
  }
  const double p_theta = big_mean / theta;
  if (p_theta > 1.0 + 1e-12)
    throw DiscretizationError("discretize_value: large-outcome mass " + std::to_string(p_theta) +
                              " exceeds one; raise theta");
  map.scale = small_mass > 0.0 ? std::max(0.0, 1.0 - p_theta) / small_mass : 1.0;

  std::map<double, double> image;
  if (p_theta > 0.0) image[theta] += p_theta;
  for (const auto& [x, p] : pmf.entries) {
    if (x >= theta) {
      map.routes.push_back({x, theta, p});
      map.canonical.emplace_back(x, theta);
      continue;
    }
    const double v = static_cast<double>(grid_floor(x, step)) * step;
    map.canonical.emplace_back(x, v);
    const double kept = p * map.scale;
    if (kept > 0.0) {
      map.routes.push_back({x, v, kept});
      image[v] += kept;
    }
    if (p - kept > 0.0) map.routes.push_back({x, theta, p - kept});
  }
  for (const auto& [v, p] : image)
    if (p > 0.0) map.image.entries.emplace_back(v, p);
  return {map.image, map};
}

std::pair<Pmf, DiscretizationMap> discretize_size_li(const Pmf& pmf, double small_cut,
                                                     double step) {
  if (!(step > 0.0) || !(small_cut > 0.0))
    throw ParameterError("small_cut and step must be positive");
  if (step > small_cut + 1e-12) throw ParameterError("step must not exceed small_cut");
  validate_pmf(pmf, "discretize_size_li");
  DiscretizationMap map;
  map.threshold = small_cut;
  map.step = step;
  std::vector<std::pair<double, double>> sorted = canonical(pmf).entries;
  double small_mean = 0.0;
  for (const auto& [x, p] : sorted)
    if (x <= small_cut) small_mean += x * p;
  // Mass that moves up to small_cut, taken from the largest small outcomes.
  double up = small_mean / small_cut;
  std::map<double, double> image;
  for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) {
    const auto [x, p] = *it;
    if (x > small_cut) {
      const double v = static_cast<double>(grid_floor(x, step)) * step;
      map.routes.push_back({x, v, p});
      image[v] += p;
      continue;
    }
    const double hi = std::min(p, std::max(0.0, up));
    up -= hi;
    if (hi > 0.0) {
      map.routes.push_back({x, small_cut, hi});
      image[small_cut] += hi;
    }
    if (p - hi > 0.0) {
      map.routes.push_back({x, 0.0, p - hi});
      image[0.0] += p - hi;
    }
  }
  std::reverse(map.routes.begin(), map.routes.end());
  for (const auto& [v, p] : image)
    if (p > 0.0) map.image.entries.emplace_back(v, p);
  return {map.image, map};
}

// ---------------------------------------------------------------------------
// Builders

Built build_probemax(const ProblemSpec& spec) {
  require_kind(spec, {ProblemKind::kProbemax}, "build_probemax");
  validate_spec(spec);
  ValueGrid g = discretize_items(spec);
  const int K = static_cast<int>(g.reps.size());
  Built b;
  Instance& inst = b.instance;
  inst.kind = "probemax";
  inst.values.levels = K;
  inst.values.rep = g.reps;
  inst.horizon = std::max(1, spec.m);
  inst.terminal = Eigen::Map<const Eigen::VectorXd>(g.reps.data(), K);
  inst.start_level = 0;
  if (spec.m > 0) {
    for (std::size_t i = 0; i < spec.items.size(); ++i) {
      std::vector<std::map<int, double>> rows(K);
      for (const auto& [v, p] : g.images[i].entries) {
        const int j = level_of(g.reps, v);
        for (int I = 0; I < K; ++I) rows[I][std::max(I, j)] += p;
      }
      ActionSpec a = make_action(item_id(static_cast<int>(i)), "", K, rows_from_maps(rows),
                                 Eigen::VectorXd::Zero(K));
      a.meta = ActionMeta{static_cast<int>(i), 0.0, 0.0, 0.0};
      inst.actions.push_back(std::move(a));
    }
  }
  mark_compliance(inst);
  b.maps = std::move(g.maps);
  b.threshold = g.threshold;
  b.step = g.step;
  return b;
}

Built build_probetopk(const ProblemSpec& spec) {
  require_kind(spec, {ProblemKind::kProbeTopK}, "build_probetopk");
  validate_spec(spec);
  ValueGrid g = discretize_items(spec);
  const int base = static_cast<int>(g.reps.size());
  const int k = spec.k;

  // Nondecreasing k-tuples of base levels, ordered by (index sum, lex).
  std::vector<std::vector<int>> tuples;
  std::vector<int> cur(k, 0);
  std::function<void(int, int)> gen = [&](int pos, int lo) {
    if (pos == k) {
      tuples.push_back(cur);
      check_level_count(tuples.size(), "probetopk");
      return;
    }
    for (int v = lo; v < base; ++v) {
      cur[pos] = v;
      gen(pos + 1, v);
    }
  };
  gen(0, 0);
  auto sum = [](const std::vector<int>& t) {
    int s = 0;
    for (int v : t) s += v;
    return s;
  };
  std::stable_sort(tuples.begin(), tuples.end(), [&](const auto& a, const auto& b) {
    const int sa = sum(a), sb = sum(b);
    return sa != sb ? sa < sb : a < b;
  });
  std::map<std::vector<int>, int> index;
  for (std::size_t i = 0; i < tuples.size(); ++i) index[tuples[i]] = static_cast<int>(i);
  const int K = static_cast<int>(tuples.size());

  Built b;
  Instance& inst = b.instance;
  inst.kind = "probetopk";
  inst.values.levels = K;
  inst.horizon = std::max(1, spec.m);
  inst.terminal.resize(K);
  for (int i = 0; i < K; ++i) {
    double h = 0.0;
    for (int v : tuples[i]) h += g.reps[v];
    inst.terminal[i] = h;
  }
  inst.start_level = 0;
  if (spec.m > 0) {
    for (std::size_t i = 0; i < spec.items.size(); ++i) {
      std::vector<std::map<int, double>> rows(K);
      for (const auto& [v, p] : g.images[i].entries) {
        const int j = level_of(g.reps, v);
        for (int I = 0; I < K; ++I) {
          std::vector<int> t = tuples[I];
          if (j > t.front()) {
            t.front() = j;
            std::sort(t.begin(), t.end());
          }
          rows[I][index.at(t)] += p;
        }
      }
      ActionSpec a = make_action(item_id(static_cast<int>(i)), "", K, rows_from_maps(rows),
                                 Eigen::VectorXd::Zero(K));
      a.meta = ActionMeta{static_cast<int>(i), 0.0, 0.0, 0.0};
      inst.actions.push_back(std::move(a));
    }
  }
  mark_compliance(inst);
  b.maps = std::move(g.maps);
  b.threshold = g.threshold;
  b.step = g.step;
  return b;
}

Instance build_committed(const ProblemSpec& spec) {
  require_kind(spec, {ProblemKind::kCommittedProbeTopK, ProblemKind::kCommittedPandora},
               "build_committed");
  validate_spec(spec);
  const bool pandora = spec.kind == ProblemKind::kCommittedPandora;
  const int k = spec.k;
  check_level_count(static_cast<std::size_t>(k) + 1, "committed");
  const int K = k + 1;
  Instance inst;
  inst.kind = to_string(spec.kind);
  inst.values.levels = K;
  inst.terminal = Eigen::VectorXd::Zero(K);
  const int n = static_cast<int>(spec.items.size());
  inst.horizon = std::max(1, pandora ? n : spec.m);
  if (pandora || spec.m > 0) {
    for (int i = 0; i < n; ++i) {
      const Item& item = spec.items[i];
      std::vector<std::pair<double, double>> seen;
      for (const auto& [theta, q] : canonical(item.pmf).entries) {
        if (q <= 0.0) continue;
        const double p = item.pmf.tail(theta);
        const double g = item.pmf.tail_mean(theta) - (pandora ? item.cost : 0.0);
        if (pandora && g < 0.0) continue;
        bool dup = false;
        for (const auto& [sp, sg] : seen) dup = dup || (sp == p && sg == g);
        if (dup) continue;
        seen.emplace_back(p, g);
        Rows rows(K);
        Eigen::VectorXd profit = Eigen::VectorXd::Zero(K);
        for (int I = 0; I < k; ++I) {
          if (1.0 - p > 0.0) rows[I].emplace_back(I, 1.0 - p);
          if (p > 0.0) rows[I].emplace_back(I + 1, p);
          profit[I] = g;
        }
        rows[k].emplace_back(k, 1.0);
        std::string id = item_id(i) + "@" + std::to_string(seen.size() - 1);
        ActionSpec a = make_action(std::move(id), item_id(i), K, rows, profit);
        a.meta = ActionMeta{i, theta, item.cost, 0.0};
        inst.actions.push_back(std::move(a));
      }
    }
  }
  mark_compliance(inst);
  return inst;
}

Instance build_uncommitted_pandora(const ProblemSpec& spec) {
  validate_spec(spec);
  std::set<double> values{0.0};
  for (const Item& it : spec.items)
    for (const auto& [x, p] : it.pmf.entries) values.insert(x);
  std::vector<double> reps(values.begin(), values.end());
  const int K = static_cast<int>(reps.size());
  check_level_count(reps.size(), "pandora");
  Instance inst;
  inst.kind = "pandora";
  inst.values.levels = K;
  inst.values.rep = reps;
  inst.terminal = Eigen::Map<const Eigen::VectorXd>(reps.data(), K);
  inst.horizon = std::max<int>(1, static_cast<int>(spec.items.size()));
  for (std::size_t i = 0; i < spec.items.size(); ++i) {
    std::vector<std::map<int, double>> rows(K);
    for (const auto& [x, p] : spec.items[i].pmf.entries) {
      const int j = level_of(reps, x);
      for (int I = 0; I < K; ++I) rows[I][std::max(I, j)] += p;
    }
    ActionSpec a = make_action(item_id(static_cast<int>(i)), "", K, rows_from_maps(rows),
                               Eigen::VectorXd::Constant(K, -spec.items[i].cost));
    a.meta = ActionMeta{static_cast<int>(i), 0.0, spec.items[i].cost, 0.0};
    inst.actions.push_back(std::move(a));
  }
  mark_compliance(inst);
  return inst;
}

Built build_target(const ProblemSpec& spec) {
  require_kind(spec, {ProblemKind::kTarget}, "build_target");
  validate_spec(spec);
  const double eps = spec.eps;
  const double step = spec.step.value_or(std::pow(eps, 5));
  const double cut = spec.small_cut.value_or(std::pow(eps, 4));
  if (!(step > 0.0)) throw ParameterError("step must be positive");
  if (!on_grid(1.0, step)) throw ParameterError("1 / step must be an integer");
  if (!on_grid(cut, step)) throw ParameterError("small_cut must be a multiple of step");
  const long long top = grid_floor(1.0, step);
  check_level_count(static_cast<std::size_t>(top + 1), "target");
  const int K = static_cast<int>(top + 1);

  Built b;
  b.step = step;
  b.threshold = cut;
  Instance& inst = b.instance;
  inst.kind = "target";
  inst.values.levels = K;
  inst.values.rep.resize(K);
  inst.terminal.resize(K);
  for (int i = 0; i < K; ++i) {
    inst.values.rep[i] = i == K - 1 ? 1.0 : i * step;
    inst.terminal[i] = inst.values.rep[i] >= 1.0 - 2.0 * eps - 1e-12 ? 1.0 : 0.0;
  }
  inst.horizon = std::max(1, spec.m);
  for (std::size_t i = 0; i < spec.items.size(); ++i) {
    auto [img, map] = discretize_size_li(scaled_outcomes(spec.items[i].pmf, spec.target), cut, step);
    map.item = static_cast<int>(i);
    if (spec.m > 0) {
      std::vector<std::map<int, double>> rows(K);
      for (const auto& [v, p] : img.entries) {
        const long long d = grid_floor(v, step);
        for (int I = 0; I < K; ++I)
          rows[I][static_cast<int>(std::min<long long>(K - 1, I + d))] += p;
      }
      ActionSpec a = make_action(item_id(static_cast<int>(i)), "", K, rows_from_maps(rows),
                                 Eigen::VectorXd::Zero(K));
      a.meta = ActionMeta{static_cast<int>(i), 0.0, 0.0, 0.0};
      inst.actions.push_back(std::move(a));
    }
    b.maps.push_back(std::move(map));
  }
  mark_compliance(inst);
  return b;
}

namespace {

long long sum_key(double v) { return std::llround(v * 1e9); }

}  // namespace

Instance build_target_exact(const ProblemSpec& spec, double threshold) {
  require_kind(spec, {ProblemKind::kTarget}, "build_target_exact");
  validate_spec(spec);
  const double cap = std::max(1.0, threshold);
  std::vector<Pmf> sizes;
  for (const Item& it : spec.items) sizes.push_back(scaled_outcomes(it.pmf, spec.target));
  std::map<long long, double> sums{{0, 0.0}};
  for (const Pmf& p : sizes) {
    std::map<long long, double> next = sums;
    for (const auto& [key, s] : sums)
      for (const auto& [x, q] : p.entries) {
        const double v = std::min(cap, s + x);
        next.emplace(sum_key(v), v);
      }
    sums = std::move(next);
    check_level_count(sums.size(), "target (exact)");
  }
  std::vector<double> reps;
  std::map<long long, int> index;
  for (const auto& [key, v] : sums) {
    index[key] = static_cast<int>(reps.size());
    reps.push_back(v);
  }
  const int K = static_cast<int>(reps.size());
  Instance inst;
  inst.kind = "target_exact";
  inst.values.levels = K;
  inst.values.rep = reps;
  inst.terminal.resize(K);
  for (int i = 0; i < K; ++i) inst.terminal[i] = reps[i] >= threshold - 1e-12 ? 1.0 : 0.0;
  inst.horizon = std::max(1, spec.m);
  if (spec.m > 0) {
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      std::vector<std::map<int, double>> rows(K);
      for (int I = 0; I < K; ++I)
        for (const auto& [x, q] : sizes[i].entries) {
          const double v = std::min(cap, reps[I] + x);
          auto it = index.find(sum_key(v));
          // Sums of unused items can fall outside the table only at the cap.
          rows[I][it == index.end() ? K - 1 : it->second] += q;
        }
      ActionSpec a = make_action(item_id(static_cast<int>(i)), "", K, rows_from_maps(rows),
                                 Eigen::VectorXd::Zero(K));
      inst.actions.push_back(std::move(a));
    }
  }
  mark_compliance(inst);
  return inst;
}

Built build_sbk(const ProblemSpec& spec) {
  require_kind(spec, {ProblemKind::kSbk}, "build_sbk");
  validate_spec(spec);
  const double eps = spec.eps;
  Built b;
  double max_ref = 0.0;
  if (spec.max_ref) {
    max_ref = *spec.max_ref;
  } else {
    max_ref = optimal_value(build_sbk_exact(spec), 0);
  }
  if (!(max_ref > 0.0)) {
    for (const Item& it : spec.items) max_ref = std::max(max_ref, it.profit);
    if (!(max_ref > 0.0)) max_ref = 1.0;
  }
  b.max_ref = max_ref;
  const double theta2 = max_ref / (eps * eps);
  const double theta3 = max_ref / (eps * eps * eps);
  const double step = spec.step.value_or(std::pow(eps, 15));
  const double cut = spec.small_cut.value_or(std::pow(eps, 12));
  if (!(step > 0.0)) throw ParameterError("step must be positive");
  if (!on_grid(cut, step)) throw ParameterError("small_cut must be a multiple of step");
  const long long top = grid_floor(1.0 + 3.0 * eps, step);
  check_level_count(static_cast<std::size_t>(2 * (top + 1)), "sbk");
  const int S = static_cast<int>(top + 1);
  const int K = 2 * S;
  b.step = step;
  b.threshold = theta2;

  Instance& inst = b.instance;
  inst.kind = "sbk";
  inst.values.levels = K;
  inst.terminal = Eigen::VectorXd::Zero(K);
  for (int s = 0; s < S; ++s)
    if (s * step <= 1.0 + 2.0 * eps + 1e-12) inst.terminal[2 * s + 1] = theta3;
  const int n = static_cast<int>(spec.items.size());
  inst.horizon = std::max(1, n);
  for (int i = 0; i < n; ++i) {
    const Item& item = spec.items[i];
    Pmf sizes = scaled_outcomes(item.pmf, spec.capacity);
    double p_hat = item.profit;
    bool clamped = false;
    if (item.profit >= theta2) {
      // Fitting mass grows by p / theta2; the rest overflows.
      Pmf scaled;
      double fit = 0.0;
      for (const auto& [x, q] : sizes.entries)
        if (x <= 1.0) fit += q * item.profit / theta2;
      const double shrink = fit > 1.0 ? 1.0 / fit : 1.0;
      clamped = fit > 1.0;
      double kept = 0.0;
      for (const auto& [x, q] : sizes.entries)
        if (x <= 1.0) {
          scaled.entries.emplace_back(x, q * item.profit / theta2 * shrink);
          kept += q * item.profit / theta2 * shrink;
        }
      if (1.0 - kept > 0.0) scaled.entries.emplace_back(1.0 + 4.0 * eps, 1.0 - kept);
      sizes = canonical(std::move(scaled));
      p_hat = theta2;
    }
    auto [img, map] = discretize_size_li(sizes, cut, step);
    map.item = i;
    map.clamped = clamped;
    const double bias = p_hat / theta3;
    std::vector<std::map<int, double>> rows(K);
    for (int s = 0; s < S; ++s)
      for (int c = 0; c < 2; ++c) {
        const int I = 2 * s + c;
        if (s == S - 1) {
          rows[I][I] = 1.0;
          continue;
        }
        for (const auto& [v, q] : img.entries) {
          const int s2 = static_cast<int>(std::min<long long>(S - 1, s + grid_floor(v, step)));
          if (c == 1) {
            rows[I][2 * s2 + 1] += q;
          } else {
            if (bias > 0.0) rows[I][2 * s2 + 1] += q * bias;
            if (bias < 1.0) rows[I][2 * s2] += q * (1.0 - bias);
          }
        }
      }
    ActionSpec a = make_action(item_id(i), "", K, rows_from_maps(rows), Eigen::VectorXd::Zero(K));
    a.meta = ActionMeta{i, 0.0, 0.0, p_hat};
    inst.actions.push_back(std::move(a));
    b.maps.push_back(std::move(map));
  }
  mark_compliance(inst);
  return b;
}

namespace {

// Reachable (size, profit) pairs with size within capacity, lex-sorted.
struct KnapsackStates {
  std::vector<std::pair<double, double>> states;
  std::map<std::pair<long long, long long>, int> index;

  int find(double s, double p) const {
    auto it = index.find({sum_key(s), sum_key(p)});
    return it == index.end() ? -1 : it->second;
  }
};

KnapsackStates knapsack_states(const std::vector<Pmf>& sizes, const std::vector<double>& profits,
                               bool track_profit) {
  std::map<std::pair<long long, long long>, std::pair<double, double>> seen{
      {{0, 0}, {0.0, 0.0}}};
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    auto next = seen;
    for (const auto& [key, sp] : seen)
      for (const auto& [x, q] : sizes[i].entries) {
        const double s = sp.first + x;
        if (s > 1.0 + 1e-12) continue;
        const double p = track_profit ? sp.second + profits[i] : 0.0;
        next.emplace(std::make_pair(sum_key(s), sum_key(p)), std::make_pair(s, p));
      }
    seen = std::move(next);
    check_level_count(seen.size() + 1, "knapsack");
  }
  KnapsackStates ks;
  for (const auto& [key, sp] : seen) {
    ks.index[key] = static_cast<int>(ks.states.size());
    ks.states.push_back(sp);
  }
  return ks;
}

}  // namespace

Instance build_sbk_exact(const ProblemSpec& spec) {
  require_kind(spec, {ProblemKind::kSbk}, "build_sbk_exact");
  validate_spec(spec);
  std::vector<Pmf> sizes;
  std::vector<double> profits;
  for (const Item& it : spec.items) {
    sizes.push_back(scaled_outcomes(it.pmf, spec.capacity));
    profits.push_back(it.profit);
  }
  const KnapsackStates ks = knapsack_states(sizes, profits, true);
  const int over = static_cast<int>(ks.states.size());
  const int K = over + 1;
  Instance inst;
  inst.kind = "sbk_exact";
  inst.values.levels = K;
  inst.terminal = Eigen::VectorXd::Zero(K);
  for (int i = 0; i < over; ++i) inst.terminal[i] = ks.states[i].second;
  inst.horizon = std::max<int>(1, static_cast<int>(sizes.size()));
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    std::vector<std::map<int, double>> rows(K);
    for (int I = 0; I < over; ++I)
      for (const auto& [x, q] : sizes[i].entries) {
        const double s = ks.states[I].first + x;
        const int j = s > 1.0 + 1e-12 ? over : ks.find(s, ks.states[I].second + profits[i]);
        rows[I][j < 0 ? over : j] += q;
      }
    rows[over][over] = 1.0;
    ActionSpec a = make_action(item_id(static_cast<int>(i)), "", K, rows_from_maps(rows),
                               Eigen::VectorXd::Zero(K));
    a.meta = ActionMeta{static_cast<int>(i), 0.0, 0.0, profits[i]};
    inst.actions.push_back(std::move(a));
  }
  mark_compliance(inst);
  return inst;
}

Instance build_skp(const ProblemSpec& spec) {
  require_kind(spec, {ProblemKind::kSbk}, "build_skp");
  validate_spec(spec);
  std::vector<Pmf> sizes;
  std::vector<double> profits;
  for (const Item& it : spec.items) {
    sizes.push_back(scaled_outcomes(it.pmf, spec.capacity));
    profits.push_back(it.profit);
  }
  const KnapsackStates ks = knapsack_states(sizes, profits, false);
  const int over = static_cast<int>(ks.states.size());
  const int K = over + 1;
  Instance inst;
  inst.kind = "skp";
  inst.values.levels = K;
  inst.terminal = Eigen::VectorXd::Zero(K);
  inst.horizon = std::max<int>(1, static_cast<int>(sizes.size()));
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    std::vector<std::map<int, double>> rows(K);
    Eigen::VectorXd profit = Eigen::VectorXd::Zero(K);
    for (int I = 0; I < over; ++I)
      for (const auto& [x, q] : sizes[i].entries) {
        const double s = ks.states[I].first + x;
        const int j = s > 1.0 + 1e-12 ? -1 : ks.find(s, 0.0);
        rows[I][j < 0 ? over : j] += q;
        if (j >= 0) profit[I] += q * profits[i];
      }
    rows[over][over] = 1.0;
    ActionSpec a = make_action(item_id(static_cast<int>(i)), "", K, rows_from_maps(rows), profit);
    a.meta = ActionMeta{static_cast<int>(i), 0.0, 0.0, profits[i]};
    inst.actions.push_back(std::move(a));
  }
  mark_compliance(inst);
  return inst;
}

Instance build_instance(const ProblemSpec& spec) {
  switch (spec.kind) {
    case ProblemKind::kProbemax: return build_probemax(spec).instance;
    case ProblemKind::kProbeTopK: return build_probetopk(spec).instance;
    case ProblemKind::kCommittedProbeTopK:
    case ProblemKind::kCommittedPandora: return build_committed(spec);
    case ProblemKind::kTarget: return build_target(spec).instance;
    case ProblemKind::kSbk: return build_sbk(spec).instance;
  }
  throw ParameterError("unknown problem kind");
}

// ---------------------------------------------------------------------------
// Baselines

GreedyResult greedy_probemax(const ProblemSpec& spec) {
  require_kind(spec, {ProblemKind::kProbemax}, "greedy_probemax");
  GreedyResult r;
  std::vector<Pmf> chosen;
  std::vector<char> used(spec.items.size(), 0);
  for (int step = 0; step < spec.m; ++step) {
    int pick = -1;
    double best = 0.0;
    for (std::size_t i = 0; i < spec.items.size(); ++i) {
      if (used[i]) continue;
      chosen.push_back(spec.items[i].pmf);
      const double v = expected_max(chosen);
      chosen.pop_back();
      if (pick < 0 || v > best + 1e-12) {
        pick = static_cast<int>(i);
        best = v;
      }
    }
    if (pick < 0) break;
    used[pick] = 1;
    chosen.push_back(spec.items[pick].pmf);
    r.items.push_back(pick);
    r.value = best;
  }
  return r;
}

double fair_cap(const Pmf& pmf, double cost) {
  std::vector<std::pair<double, double>> desc = canonical(pmf).entries;
  std::reverse(desc.begin(), desc.end());
  if (desc.empty()) throw ParameterError("fair_cap: empty pmf");
  if (cost <= 0.0) return desc.front().first;
  double a = 0.0, b = 0.0;
  for (std::size_t j = 0; j < desc.size(); ++j) {
    a += desc[j].second * desc[j].first;
    b += desc[j].second;
    if (b <= 0.0) continue;
    if (j + 1 == desc.size() || a - b * desc[j + 1].first >= cost) return (a - cost) / b;
  }
  return (a - cost) / b;
}

WeitzmanResult weitzman(const std::vector<double>& costs, const std::vector<Pmf>& pmfs) {
  if (costs.size() != pmfs.size()) throw ParameterError("weitzman: one cost per box expected");
  WeitzmanResult r;
  for (std::size_t i = 0; i < pmfs.size(); ++i) r.caps.push_back(fair_cap(pmfs[i], costs[i]));
  for (std::size_t i = 0; i < pmfs.size(); ++i)
    if (r.caps[i] > 0.0) r.order.push_back(static_cast<int>(i));
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](int a, int b) { return r.caps[a] > r.caps[b]; });
  std::map<std::pair<std::size_t, double>, double> memo;
  std::function<double(std::size_t, double)> run = [&](std::size_t pos, double best) {
    if (pos == r.order.size() || best >= r.caps[r.order[pos]]) return best;
    auto key = std::make_pair(pos, best);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const int box = r.order[pos];
    double v = -costs[box];
    for (const auto& [x, p] : pmfs[box].entries) v += p * run(pos + 1, std::max(best, x));
    memo.emplace(key, v);
    return v;
  };
  r.value = run(0, 0.0);
  return r;
}

WeitzmanResult weitzman(const ProblemSpec& spec) {
  std::vector<double> costs;
  std::vector<Pmf> pmfs;
  for (const Item& it : spec.items) {
    costs.push_back(it.cost);
    pmfs.push_back(it.pmf);
  }
  return weitzman(costs, pmfs);
}

// ---------------------------------------------------------------------------
// SKP -> SBK

AnnotatedPolicy annotate_skp(const Instance& skp, const PolicyTree& tree) {
  validate_policy(skp, tree);
  const int over = skp.levels() - 1;
  AnnotatedPolicy a;
  a.tree = tree;
  a.accumulated.assign(tree.nodes.size(), 0.0);
  std::function<void(int)> walk = [&](int v) {
    const PolicyNode& n = tree.nodes[v];
    if (n.is_leaf()) return;
    const ActionSpec& act = skp.actions[n.action];
    const double reward = act.meta ? act.meta->reward : 0.0;
    for (const auto& [key, c] : n.children) {
      a.accumulated[c] = a.accumulated[v] + (key == over ? 0.0 : reward);
      walk(c);
    }
  };
  walk(0);
  return a;
}

namespace {

void check_annotations(const Instance& skp, const AnnotatedPolicy& p) {
  validate_policy(skp, p.tree);
  if (p.accumulated.size() != p.tree.nodes.size())
    throw StructuralError("profit annotations: one value per node expected");
  const int over = skp.levels() - 1;
  for (int v = 0; v < p.tree.size(); ++v) {
    if (!std::isfinite(p.accumulated[v]) || p.accumulated[v] < -1e-9)
      throw StructuralError("profit annotation of node " + std::to_string(v) + " is invalid");
    const PolicyNode& n = p.tree.nodes[v];
    if (n.is_leaf()) continue;
    const ActionSpec& act = skp.actions[n.action];
    const double reward = act.meta ? act.meta->reward : 0.0;
    for (const auto& [key, c] : n.children) {
      const double want = p.accumulated[v] + (key == over ? 0.0 : reward);
      if (std::abs(p.accumulated[c] - want) > 1e-9 * std::max(1.0, std::abs(want)))
        throw StructuralError("profit annotation of node " + std::to_string(c) +
                              " disagrees with its parent");
    }
  }
}

int copy_indexed(const PolicyTree& src, int node, PolicyTree& dst, std::vector<int>& origin) {
  const int idx = dst.size();
  dst.nodes.push_back(src.nodes[node]);
  dst.nodes[idx].children.clear();
  origin.push_back(node);
  for (const auto& [key, c] : src.nodes[node].children) {
    const int ci = copy_indexed(src, c, dst, origin);
    dst.nodes[idx].children.emplace_back(key, ci);
  }
  return idx;
}

}  // namespace

Truncation truncate_profit(const AnnotatedPolicy& policy, double theta1) {
  return truncate_on_weight(policy.tree, policy.accumulated, theta1);
}

double sbk_value(const Instance& skp, const AnnotatedPolicy& policy) {
  check_annotations(skp, policy);
  const std::vector<double> reach = reach_probabilities(skp, policy.tree);
  const int over = skp.levels() - 1;
  double v = 0.0;
  for (int i = 0; i < policy.tree.size(); ++i) {
    const PolicyNode& n = policy.tree.nodes[i];
    if (n.is_leaf() && n.level != over) v += reach[i] * policy.accumulated[i];
  }
  return v;
}

SbkReduction sbk_from_skp(const Instance& skp, const AnnotatedPolicy& policy) {
  check_annotations(skp, policy);
  const std::vector<double> values = subtree_values(skp, policy.tree);
  SbkReduction r;
  r.skp_value = values[0];
  for (int v = 1; v < policy.tree.size(); ++v)
    if (values[v] > values[r.root] + 1e-12) r.root = v;

  AnnotatedPolicy rooted;
  std::vector<int> origin;
  copy_indexed(policy.tree, r.root, rooted.tree, origin);
  for (int o : origin) rooted.accumulated.push_back(policy.accumulated[o] - policy.accumulated[r.root]);

  const Truncation t = truncate_on_weight(rooted.tree, rooted.accumulated, values[r.root] / 2.0);
  for (int c : t.cut) r.cut.push_back(origin[c]);

  // Carry annotations over to the truncated tree.
  AnnotatedPolicy out;
  out.tree = t.tree;
  out.accumulated.assign(t.tree.nodes.size(), 0.0);
  std::function<void(int, int)> walk = [&](int src, int dst) {
    out.accumulated[dst] = rooted.accumulated[src];
    const PolicyNode& d = out.tree.nodes[dst];
    const PolicyNode& s = rooted.tree.nodes[src];
    for (std::size_t i = 0; i < d.children.size(); ++i)
      walk(s.children[i].second, d.children[i].second);
  };
  walk(0, 0);
  r.value = sbk_value(skp, out);
  r.tree = std::move(out.tree);
  return r;
}

// ---------------------------------------------------------------------------
// Replays

double replay_probemax(const ProblemSpec& spec, const Built& built, const PolicyTree& tree) {
  const Instance& inst = built.instance;
  validate_policy(inst, tree);
  std::function<double(int, double)> run = [&](int v, double best) {
    const PolicyNode& n = tree.nodes[v];
    if (n.is_leaf()) return best;
    const int item = inst.actions[n.action].meta->item;
    const DiscretizationMap& map = built.maps[item];
    double total = 0.0;
    for (const auto& [x, p] : spec.items[item].pmf.entries) {
      const int j = level_of(inst.values.rep, map.canonical_image(x));
      const int c = n.child(std::max(n.level, j));
      const double next = std::max(best, x);
      total += p * (c < 0 ? next : run(c, next));
    }
    return total;
  };
  return run(0, 0.0);
}

TargetReplay replay_target(const ProblemSpec& spec, const Built& built, const PolicyTree& tree,
                           double threshold, double deviation) {
  const Instance& inst = built.instance;
  validate_policy(inst, tree);
  const int K = inst.levels();
  TargetReplay r;
  std::function<void(int, double, double, double)> run = [&](int v, double prob, double w,
                                                              double wd) {
    const PolicyNode& n = tree.nodes[v];
    auto settle = [&] {
      r.total_mass += prob;
      if (w >= threshold - 1e-12) r.value += prob;
      if (std::abs(w - wd) >= deviation - 1e-12) r.deviating_mass += prob;
    };
    if (n.is_leaf()) return settle();
    const int item = inst.actions[n.action].meta->item;
    for (const Route& route : built.maps[item].routes) {
      if (route.probability <= 0.0) continue;
      const long long d = grid_floor(route.image, built.step);
      const int key = static_cast<int>(std::min<long long>(K - 1, n.level + d));
      const int c = n.child(key);
      const double w2 = w + route.outcome;
      const double wd2 = wd + route.image;
      if (c < 0) {
        r.total_mass += prob * route.probability;
        if (w2 >= threshold - 1e-12) r.value += prob * route.probability;
        if (std::abs(w2 - wd2) >= deviation - 1e-12) r.deviating_mass += prob * route.probability;
      } else {
        run(c, prob * route.probability, w2, wd2);
      }
    }
  };
  (void)spec;
  run(0, 1.0, 0.0, 0.0);
  return r;
}

}  // namespace stochprobe
