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
#ifndef HETPLAN_STAGE_MAP_HPP_
#define HETPLAN_STAGE_MAP_HPP_

#include <string>
#include <vector>

#include "hetplan/cluster.hpp"
#include "hetplan/grouping.hpp"

namespace hetplan {

struct StageSlot {
  int stage_index = 1;  // 1-based within the group
  TpUnit unit;
};

struct GroupStages {
  std::vector<StageSlot> stages;  // stage_index ascending
};

struct StageMapping {
  std::vector<GroupStages> groups;
  bool joint_phase_completed = true;   // weakest-first loop placed every unit
  std::string halt_reason;             // which joint condition failed, if any
};

// Weakest-type-first placement: while every DP group still needs a unit of the
// slowest remaining type and a single node can supply one to each group, all
// groups take their next stage from that node (keeping cross-group DP traffic
// on NVLink). Afterwards, leftover units fill remaining typed slots in
// (power, node, rank) order. A final pass swaps same-type units between groups
// when that strictly increases the number of intra-node DP pairs.
StageMapping map_nodes_and_stages(const ClusterSpec& spec, const GroupingSolution& grouping,
                                  int tp_dim);

enum class LinkRole { tp, dp, pp };

struct LinkUse {
  DeviceId a, b;
  LinkRole role;       // highest-priority role served by this pair
  bool intra_node;
};

struct LinkReport {
  std::vector<LinkUse> links;
  std::vector<LinkUse> tp_violations;  // TP pairs not on NVLink; empty by construction
  int dp_pairs_total = 0;
  int dp_pairs_on_nvlink = 0;
  int pp_pairs_cross_node = 0;
};

LinkReport classify_links(const ClusterSpec& spec, const StageMapping& mapping);

}  // namespace hetplan

#endif  // HETPLAN_STAGE_MAP_HPP_
