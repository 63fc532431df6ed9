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
#ifndef HETPLAN_PLANNER_HPP_
#define HETPLAN_PLANNER_HPP_

#include <string>
#include <vector>

#include "hetplan/cluster.hpp"
#include "hetplan/plan.hpp"
#include "hetplan/profile.hpp"

namespace hetplan {

struct PlannerOptions {
  std::vector<int> tp_dims;      // empty -> every valid TP dimension
  double min_mem_override = 0;   // 0 -> derive from the memory model
  int exact_threshold = 8;
  long long node_budget = 5'000'000;
  int top_k = 1;                 // groupings retained per TP dimension
  SyncOverlap sync_overlap = SyncOverlap::sum;
  bool validate_with_sim = false;   // recompute cost via the simulator, warn >1%
  bool derive_power = false;        // take powers from the profile table
  std::string power_reference;      // reference type for derive_power
  bool allow_zero_layer_stages = false;
};

// Full planning loop: for each valid TP dimension, group devices, map stages,
// balance layers, estimate cost; return the cheapest plan. Deterministic.
ParallelPlan plan_cluster(const ClusterSpec& spec, const ModelConfig& cfg,
                          const ProfileTable& profile, const MemoryModel& memmodel,
                          const PlannerOptions& options = {});

}  // namespace hetplan

#endif  // HETPLAN_PLANNER_HPP_
