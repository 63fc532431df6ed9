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
#ifndef HETPLAN_GROUPING_HPP_
#define HETPLAN_GROUPING_HPP_

#include <map>
#include <string>
#include <vector>

#include "hetplan/cluster.hpp"
#include "hetplan/types.hpp"

namespace hetplan {

// tp_dim co-located same-type GPUs; the atomic placement entity. Tensor
// parallelism must be symmetric across DP chains, so units never split.
struct TpUnit {
  int node_id = 0;
  std::string gpu_type;
  std::vector<DeviceId> devices;  // local_rank ascending
  double power = 0;               // sum of member powers
  double memory = 0;              // sum of member memories
};

struct GroupingDevice {
  DeviceId id;
  std::string gpu_type;
  double compute_power = 0;
  double memory = 0;
};

struct GroupingProblem {
  std::vector<GroupingDevice> devices;
  int tp_dim = 1;
  int n_microbatches = 1;
  double min_mem = 0;   // per-group floor on summed member memory
  double big_l = 0;     // auxiliary constant of the integer program (checkers only)
  // Solver knobs (planner-config keys).
  int exact_threshold = 8;        // unit counts up to this run to completion
  long long node_budget = 5'000'000;  // branch visits allowed beyond the threshold
  int top_k = 1;                  // distinct solutions to retain
};

struct GroupingSolution {
  std::map<DeviceId, int> assignment;      // device -> group index
  std::vector<std::vector<TpUnit>> groups; // canonical order (by smallest member rank)
  std::vector<int> valid_groups;           // indices with at least one unit; all of them
  double z = 0;                            // min effective power over valid groups
  double objective = 0;                    // |valid_groups| * z
  bool optimal = true;                     // false if the node budget ran out
  long long nodes_visited = 0;
};

// (sum of powers) * (1 - rho) with rho = (P-1)/(K+P-1), P = |group| / tp_dim.
double effective_power(const std::vector<double>& member_powers, int tp_dim,
                       int n_microbatches);

// Form TP units from a device list: consecutive runs of tp_dim devices per
// node, same type. Throws if any node's device count is not divisible.
std::vector<TpUnit> build_tp_units(const std::vector<GroupingDevice>& devices, int tp_dim);

// Maximize (number of groups) * (minimum effective power) over set partitions
// of TP units, subject to every group's summed memory >= min_mem. Exhaustive
// branch-and-bound with symmetry breaking; first k solutions are kept when
// top_k > 1. Ties prefer fewer groups, then the lexicographically smallest
// assignment in enumeration order.
GroupingSolution solve_grouping(const GroupingProblem& problem);
std::vector<GroupingSolution> solve_grouping_topk(const GroupingProblem& problem);

// All t >= 1 dividing every node's GPU count, ascending. Always contains 1.
std::vector<int> enumerate_tp_dims(const ClusterSpec& spec);

}  // namespace hetplan

#endif  // HETPLAN_GROUPING_HPP_
