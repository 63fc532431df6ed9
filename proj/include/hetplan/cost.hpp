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
#ifndef HETPLAN_COST_HPP_
#define HETPLAN_COST_HPP_

#include <string>
#include <vector>

#include "hetplan/cluster.hpp"
#include "hetplan/pipeline_sim.hpp"
#include "hetplan/profile.hpp"
#include "hetplan/types.hpp"

namespace hetplan {

struct ParallelPlan;

// Per-layer gradient rings may share links, so the default is to serialize
// them (sum); `max` is the optimistic overlap for sensitivity runs.
enum class SyncOverlap { sum, max };

struct GroupCost {
  double pipeline_fill = 0;   // sum of per-stage times
  double steady = 0;          // (K_j - 1) * max stage time
  double total = 0;
  double bubble_ratio = 0;    // (P-1)/(K_j+P-1)
  int microbatches = 0;
};

struct CostEstimate {
  std::vector<GroupCost> per_group;
  double t_sync = 0;
  double t_star = 0;  // max group total + t_sync
};

struct LayerRing {
  int layer = 0;
  // One holder per DP group that stores the layer: (group, stage_index, unit
  // rank-0 device). Ring order is ascending global rank of the representative.
  struct Holder {
    int group = 0;
    int stage_index = 0;
    DeviceId representative;
  };
  std::vector<Holder> holders;
  double grad_bytes = 0;      // full layer gradient (before TP sharding)
  double min_bandwidth = 0;   // slowest consecutive link in the ring
  double seconds = 0;         // 2(d-1)/d * grad_bytes/tp / min_bandwidth
};

struct SyncSpec {
  std::vector<LayerRing> layers;
  double total_seconds = 0;
  double total_bytes = 0;  // ring traffic summed over layers
};

// Closed-form per-iteration estimate: per group, fill + steady with stage
// times from the profile plus boundary activation transfers; plus T_sync.
CostEstimate estimate_iteration(const ParallelPlan& plan, const ProfileTable& profile,
                                const ModelConfig& cfg, const ClusterSpec& spec,
                                SyncOverlap overlap = SyncOverlap::sum);

SyncSpec estimate_sync(const ParallelPlan& plan, const ModelConfig& cfg,
                       const ClusterSpec& spec, SyncOverlap overlap = SyncOverlap::sum);

struct SimOptions {
  bool combined_time = false;  // forward = full stage time, backward = 0
  double fb_ratio = 2.0;       // backward/forward time ratio in split mode
  bool zero_comm = false;      // drop boundary transfers (validation runs)
};

struct GroupSim {
  PipelineSimResult pipeline;
  std::vector<std::vector<DeviceId>> stage_devices;  // per stage
  int microbatches = 0;
};

struct PlanSimResult {
  std::vector<GroupSim> groups;
  double makespan = 0;  // max over groups (gradient sync excluded)
};

PlanSimResult simulate_1f1b(const ParallelPlan& plan, const ProfileTable& profile,
                            const ModelConfig& cfg, const ClusterSpec& spec,
                            const SimOptions& options = {});

}  // namespace hetplan

#endif  // HETPLAN_COST_HPP_
