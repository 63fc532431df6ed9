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
#ifndef HETPLAN_RECOVERY_HPP_
#define HETPLAN_RECOVERY_HPP_

#include <map>
#include <string>
#include <vector>

#include "hetplan/checkpoint.hpp"
#include "hetplan/cluster.hpp"
#include "hetplan/plan.hpp"

namespace hetplan {

enum class FetchTier { local, peer, cloud };

struct FetchOp {
  uint32_t layer = 0;
  uint32_t old_tp_rank = 0;
  FetchTier tier = FetchTier::local;
  ShardLocation source;
  uint64_t bytes = 0;
};

struct ReshardOp {
  uint32_t layer = 0;
  std::string op;  // "copy", "split", or "concat"
  std::vector<uint32_t> from_ranks;  // old ranks, ascending
  uint32_t to_rank = 0;              // rank under the new tp_dim
};

struct DeviceRecovery {
  DeviceId device;
  uint32_t new_tp_rank = 0;
  std::vector<FetchOp> fetches;      // deduplicated, (layer, rank) ascending
  std::vector<ReshardOp> reshards;
  double est_seconds = 0;            // serial fetch queue for this device
};

struct RecoveryPlan {
  uint64_t step = 0;
  uint32_t tp_old = 1;
  uint32_t tp_new = 1;
  std::vector<DeviceRecovery> targets;
  uint64_t local_bytes = 0;
  uint64_t peer_bytes = 0;
  uint64_t cloud_bytes = 0;
  double est_seconds = 0;             // max over device queues (devices run in parallel)
  double est_seconds_cloud_only = 0;  // same fetch sets forced through the cloud tier
};

// Choose a source for every old shard each new device needs, preferring the
// device's own node, then a peer node over RDMA, then the cloud store; attach
// split/concat ops when the TP dimension changes. Bandwidth-only time model:
// per-device queues are serial, devices run in parallel, reshard CPU time is
// free.
RecoveryPlan plan_recovery(const ParallelPlan& old_plan, const ParallelPlan& new_plan,
                           const LayerBitmap& bitmap, const ClusterSpec& spec);

std::string recovery_to_json(const RecoveryPlan& rp);
RecoveryPlan recovery_from_json(const std::string& text);

// Fetch the planned shards from the checkpoint tree at `root`, verify digests
// against its manifest, apply the reshard ops, and return every device's new
// layer shards. Byte-identical to resharding the original full state.
std::map<DeviceId, std::vector<LayerShard>> execute_recovery(const RecoveryPlan& rp,
                                                             const std::string& root);

}  // namespace hetplan

#endif  // HETPLAN_RECOVERY_HPP_
