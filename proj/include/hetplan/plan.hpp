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
#ifndef HETPLAN_PLAN_HPP_
#define HETPLAN_PLAN_HPP_

#include <string>
#include <vector>

#include "hetplan/cost.hpp"
#include "hetplan/types.hpp"

namespace hetplan {

struct StagePlan {
  int stage_index = 1;  // 1-based
  std::string gpu_type;
  std::vector<DeviceId> devices;  // the TP unit, local_rank ascending
  int layer_begin = 0;            // [layer_begin, layer_end)
  int layer_end = 0;
  double est_time_s = 0;
  double est_mem_bytes = 0;
  double mem_capacity_bytes = 0;

  int layer_count() const { return layer_end - layer_begin; }
};

struct GroupPlan {
  std::vector<StagePlan> stages;
  int microbatches = 0;  // this group's share of the iteration's microbatches
};

struct GroupingSummary {
  double objective = 0;
  double z = 0;
  bool optimal = true;
};

struct CandidateSummary {
  int tp_dim = 0;
  std::string status;          // "selected", "candidate", or "infeasible: <why>"
  double grouping_objective = 0;
  double t_star = 0;           // 0 when infeasible
};

struct ParallelPlan {
  int tp_dim = 1;
  int n_layers = 0;
  int n_microbatches_total = 0;
  std::vector<GroupPlan> groups;
  CostEstimate cost;
  GroupingSummary grouping;
  std::string sync_overlap = "sum";
  std::vector<CandidateSummary> candidates;

  // Consistency checks the planner guarantees; load re-validates them.
  void validate() const;
};

// Split K microbatches over n_groups, earlier groups taking the remainder;
// every group runs at least one.
std::vector<int> split_microbatches(int total, int n_groups);

std::string plan_to_json(const ParallelPlan& plan);
ParallelPlan plan_from_json(const std::string& text);
ParallelPlan load_plan_file(const std::string& path);
void write_plan_file(const ParallelPlan& plan, const std::string& path);

// Human-readable decomposition: groups, stages, layers, times, memory,
// cost breakdown, and the rejected-candidate summary.
std::string explain(const ParallelPlan& plan);

}  // namespace hetplan

#endif  // HETPLAN_PLAN_HPP_
