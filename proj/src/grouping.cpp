/*
Copyright 2026 The Hetplan Authors. All rights reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#include "hetplan/grouping.hpp"

#include <algorithm>
#include <numeric>

#include "hetplan/util.hpp"

namespace hetplan {

double effective_power(const std::vector<double>& member_powers, int tp_dim,
                       int n_microbatches) {
  if (member_powers.empty()) throw InvalidArgumentError("effective_power: empty group");
  if (tp_dim < 1 || static_cast<int>(member_powers.size()) % tp_dim != 0) {
    throw InvalidArgumentError("effective_power: group size not divisible by tp_dim");
  }
  if (n_microbatches < 1) throw InvalidArgumentError("effective_power: n_microbatches < 1");
  const int depth = static_cast<int>(member_powers.size()) / tp_dim;
  double sum = 0;
  for (double g : member_powers) sum += g;
  const double rho =
      static_cast<double>(depth - 1) / static_cast<double>(n_microbatches + depth - 1);
  return sum * (1.0 - rho);
}

std::vector<TpUnit> build_tp_units(const std::vector<GroupingDevice>& devices, int tp_dim) {
  if (tp_dim < 1) throw InvalidArgumentError("tp_dim must be >= 1");
  std::vector<GroupingDevice> sorted = devices;
  std::sort(sorted.begin(), sorted.end(),
            [](const GroupingDevice& a, const GroupingDevice& b) { return a.id < b.id; });

  std::vector<TpUnit> units;
  size_t i = 0;
  while (i < sorted.size()) {
    size_t j = i;
    while (j < sorted.size() && sorted[j].id.node_id == sorted[i].id.node_id) ++j;
    const size_t node_count = j - i;
    if (node_count % tp_dim != 0) {
      throw InfeasibleError("tp_dim " + std::to_string(tp_dim)
                            + " does not divide the GPU count of node "
                            + std::to_string(sorted[i].id.node_id) + " (divisibility)");
    }
    for (size_t base = i; base < j; base += tp_dim) {
      TpUnit u;
      u.node_id = sorted[base].id.node_id;
      u.gpu_type = sorted[base].gpu_type;
      for (size_t k = base; k < base + tp_dim; ++k) {
        if (sorted[k].gpu_type != u.gpu_type) {
          throw InfeasibleError("mixed GPU types on node " + std::to_string(u.node_id)
                                + "; TP units must be same-type");
        }
        u.devices.push_back(sorted[k].id);
        u.power += sorted[k].compute_power;
        u.memory += sorted[k].memory;
      }
      units.push_back(std::move(u));
    }
    i = j;
  }
  return units;
}

namespace {

struct SearchState {
  const std::vector<TpUnit>* units;
  int n_microbatches;
  double min_mem;
  int top_k;
  long long budget;       // < 0 means unlimited
  long long visited = 0;
  bool aborted = false;

  // per active group
  std::vector<double> group_power;
  std::vector<double> group_mem;
  std::vector<int> group_units;
  std::vector<int> rgs;   // restricted growth string over units

  struct Candidate {
    double objective;
    int n_groups;
    std::vector<int> rgs;
    double z;
  };
  std::vector<Candidate> best;  // ordered best-first, at most top_k
  double prune_floor = -1;      // objectives strictly below never win

  double group_effective(int gi) const {
    const int depth = group_units[gi];
    const double rho = static_cast<double>(depth - 1)
                       / static_cast<double>(n_microbatches + depth - 1);
    return group_power[gi] * (1.0 - rho);
  }

  // Candidate ranking: higher objective, then fewer groups. Equal on both
  // keeps the earlier (lexicographically smaller) enumeration.
  static bool better(const Candidate& a, const Candidate& b) {
    if (a.objective != b.objective) return a.objective > b.objective;
    return a.n_groups < b.n_groups;
  }

  void offer(double objective, double z) {
    Candidate c{objective, static_cast<int>(group_power.size()), rgs, z};
    auto pos = std::upper_bound(best.begin(), best.end(), c, better);
    // Skip duplicates of an already-recorded partition (cannot happen with
    // RGS enumeration, but seeds may coincide with a DFS leaf).
    for (const auto& b : best) {
      if (b.rgs == c.rgs) return;
    }
    best.insert(pos, std::move(c));
    if (static_cast<int>(best.size()) > top_k) best.pop_back();
  }

  double kth_objective() const {
    if (static_cast<int>(best.size()) < top_k) return prune_floor;
    return std::max(prune_floor, best.back().objective);
  }
};

void dfs(SearchState& st, size_t next) {
  if (st.aborted) return;
  const auto& units = *st.units;
  if (next == units.size()) {
    double z = 0;
    bool first = true;
    for (size_t gi = 0; gi < st.group_power.size(); ++gi) {
      if (st.group_mem[gi] < st.min_mem) return;  // constraint (3b)
      const double g = st.group_effective(gi);
      z = first ? g : std::min(z, g);
      first = false;
    }
    st.offer(static_cast<double>(st.group_power.size()) * z, z);
    return;
  }

  // Bound: the final objective m*z is at most the sum of final effective
  // powers; each existing group's factor (1 - rho) only shrinks as units are
  // added, and every unassigned unit contributes at most its raw power.
  double bound = 0;
  for (size_t gi = 0; gi < st.group_power.size(); ++gi) bound += st.group_effective(gi);
  double remaining_mem = 0;
  for (size_t i = next; i < units.size(); ++i) {
    bound += units[i].power;
    remaining_mem += units[i].memory;
  }
  const double cutoff = st.kth_objective();
  if (cutoff >= 0 && bound < cutoff) return;

  // Memory deficits must be coverable by unassigned units.
  double deficit = 0;
  for (size_t gi = 0; gi < st.group_mem.size(); ++gi) {
    deficit += std::max(0.0, st.min_mem - st.group_mem[gi]);
  }
  if (deficit > remaining_mem) return;

  const TpUnit& u = units[next];
  const size_t n_groups = st.group_power.size();
  for (size_t gi = 0; gi <= n_groups; ++gi) {
    if (st.budget >= 0 && st.visited >= st.budget) {
      st.aborted = true;
      return;
    }
    ++st.visited;
    if (gi == n_groups) {
      st.group_power.push_back(u.power);
      st.group_mem.push_back(u.memory);
      st.group_units.push_back(1);
    } else {
      st.group_power[gi] += u.power;
      st.group_mem[gi] += u.memory;
      st.group_units[gi] += 1;
    }
    st.rgs.push_back(static_cast<int>(gi));
    dfs(st, next + 1);
    st.rgs.pop_back();
    if (gi == n_groups) {
      st.group_power.pop_back();
      st.group_mem.pop_back();
      st.group_units.pop_back();
    } else {
      st.group_power[gi] -= u.power;
      st.group_mem[gi] -= u.memory;
      st.group_units[gi] -= 1;
    }
    if (st.aborted) return;
  }
}

// Deterministic warm-start partitions evaluated up front. They only raise the
// prune floor; the DFS re-discovers any of them that actually wins.
std::vector<std::vector<int>> seed_partitions(const std::vector<TpUnit>& units) {
  const int n = static_cast<int>(units.size());
  std::vector<std::vector<int>> seeds;
  seeds.push_back(std::vector<int>(n, 0));  // one group
  std::vector<int> singletons(n);
  std::iota(singletons.begin(), singletons.end(), 0);
  seeds.push_back(singletons);
  std::vector<int> by_type(n), by_node(n);
  std::map<std::string, int> type_ix;
  std::map<int, int> node_ix;
  for (int i = 0; i < n; ++i) {
    by_type[i] = type_ix.emplace(units[i].gpu_type, static_cast<int>(type_ix.size()))
                     .first->second;
    by_node[i] = node_ix.emplace(units[i].node_id, static_cast<int>(node_ix.size()))
                     .first->second;
  }
  seeds.push_back(by_type);
  seeds.push_back(by_node);
  return seeds;
}

double evaluate_partition(const std::vector<TpUnit>& units, const std::vector<int>& rgs,
                          int n_microbatches, double min_mem, double* z_out) {
  int m = *std::max_element(rgs.begin(), rgs.end()) + 1;
  std::vector<double> power(m, 0), mem(m, 0);
  std::vector<int> count(m, 0);
  for (size_t i = 0; i < rgs.size(); ++i) {
    power[rgs[i]] += units[i].power;
    mem[rgs[i]] += units[i].memory;
    count[rgs[i]] += 1;
  }
  double z = 0;
  for (int gi = 0; gi < m; ++gi) {
    if (count[gi] == 0 || mem[gi] < min_mem) return -1;
    const double rho = static_cast<double>(count[gi] - 1)
                       / static_cast<double>(n_microbatches + count[gi] - 1);
    const double g = power[gi] * (1.0 - rho);
    z = gi == 0 ? g : std::min(z, g);
  }
  if (z_out) *z_out = z;
  return m * z;
}

GroupingSolution make_solution(const std::vector<TpUnit>& units,
                               const std::vector<int>& rgs, double objective, double z,
                               bool optimal, long long visited) {
  GroupingSolution sol;
  const int m = *std::max_element(rgs.begin(), rgs.end()) + 1;
  sol.groups.assign(m, {});
  for (size_t i = 0; i < units.size(); ++i) {
    sol.groups[rgs[i]].push_back(units[i]);
    for (const auto& d : units[i].devices) sol.assignment[d] = rgs[i];
  }
  for (int gi = 0; gi < m; ++gi) sol.valid_groups.push_back(gi);
  sol.z = z;
  sol.objective = objective;
  sol.optimal = optimal;
  sol.nodes_visited = visited;
  return sol;
}

}  // namespace

std::vector<GroupingSolution> solve_grouping_topk(const GroupingProblem& problem) {
  if (problem.n_microbatches < 1) {
    throw InvalidArgumentError("grouping: n_microbatches must be >= 1");
  }
  auto units = build_tp_units(problem.devices, problem.tp_dim);
  if (units.empty()) throw InvalidArgumentError("grouping: no devices");

  double total_mem = 0;
  for (const auto& u : units) total_mem += u.memory;
  // The auxiliary constant must dominate MIN_mem (and any realizable G) for
  // the lifted constraints to be vacuous on empty groups.
  if (problem.big_l > 0 && problem.big_l <= problem.min_mem) {
    throw InvalidArgumentError("grouping: big_l must exceed min_mem");
  }
  if (total_mem < problem.min_mem) {
    throw InfeasibleError("grouping infeasible: total memory "
                          + format_double(total_mem) + " B < MIN_mem "
                          + format_double(problem.min_mem)
                          + " B; no DP group assignment can satisfy the group memory "
                            "constraint (3b)");
  }

  SearchState st;
  st.units = &units;
  st.n_microbatches = problem.n_microbatches;
  st.min_mem = problem.min_mem;
  st.top_k = std::max(1, problem.top_k);
  const bool exhaustive = static_cast<int>(units.size()) <= problem.exact_threshold;
  st.budget = exhaustive ? -1 : problem.node_budget;

  double seed_obj = -1, seed_z = 0;
  std::vector<int> seed_rgs;
  for (const auto& s : seed_partitions(units)) {
    double z = 0;
    double obj = evaluate_partition(units, s, problem.n_microbatches, problem.min_mem, &z);
    if (obj > seed_obj) {
      seed_obj = obj;
      seed_z = z;
      seed_rgs = s;
    }
  }
  // Seeds prune strictly-worse subtrees only; equal-objective partitions must
  // still be enumerated so tie-breaking stays lexicographic.
  st.prune_floor = seed_obj;

  dfs(st, 0);

  std::vector<GroupingSolution> out;
  const bool optimal = !st.aborted;
  if (st.best.empty()) {
    if (seed_obj < 0) {
      throw InfeasibleError("grouping infeasible: no partition satisfies the group memory "
                            "constraint (3b)");
    }
    out.push_back(make_solution(units, seed_rgs, seed_obj, seed_z, false, st.visited));
    return out;
  }
  // A budget abort may terminate before the seed's partition is re-visited.
  if (!optimal && seed_obj > st.best.front().objective) {
    out.push_back(make_solution(units, seed_rgs, seed_obj, seed_z, false, st.visited));
    return out;
  }
  for (const auto& c : st.best) {
    out.push_back(make_solution(units, c.rgs, c.objective, c.z, optimal, st.visited));
  }
  return out;
}

GroupingSolution solve_grouping(const GroupingProblem& problem) {
  return solve_grouping_topk(problem).front();
}

std::vector<int> enumerate_tp_dims(const ClusterSpec& spec) {
  int g = 0;
  for (const auto& nd : spec.nodes) g = std::gcd(g, nd.gpu_count);
  std::vector<int> dims;
  for (int t = 1; t <= g; ++t) {
    if (g % t == 0) dims.push_back(t);
  }
  if (dims.empty()) dims.push_back(1);
  return dims;
}

}  // namespace hetplan
