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
#include <filesystem>
#include <random>

#include "doctest.h"
#include "hetplan/recovery.hpp"

using namespace hetplan;
namespace fs = std::filesystem;

namespace {

ClusterSpec recovery_cluster() {
  return load_cluster_spec(R"({
    "gpu_types": {"A100": {"compute_power": 1.0, "memory_bytes": 80e9},
                  "H20":  {"compute_power": 1.5, "memory_bytes": 100e9}},
    "nodes": [{"node_id": 0, "count": 4, "type": "A100"},
              {"node_id": 1, "count": 4, "type": "H20"},
              {"node_id": 2, "count": 2, "type": "A100"},
              {"node_id": 3, "count": 2, "type": "H20"}],
    "bandwidths": {"intra_node": 6e11, "inter_node": 5e10,
                   "cloud": 1.2e9, "local_disk": 3.5e9}
  })");
}

StagePlan stage(int index, const std::string& type, std::vector<DeviceId> devices,
                int begin, int end) {
  StagePlan st;
  st.stage_index = index;
  st.gpu_type = type;
  st.devices = std::move(devices);
  st.layer_begin = begin;
  st.layer_end = end;
  return st;
}

// Two-stage tp=2 pipelines: stage 1 = an A100 pair on node 0, stage 2 = an
// H20 pair on node 1, layers split half and half.
ParallelPlan paired_plan(int n_groups, int n_layers, int K) {
  ParallelPlan plan;
  plan.tp_dim = 2;
  plan.n_layers = n_layers;
  plan.n_microbatches_total = K;
  const int mid = n_layers / 2;
  for (int g = 0; g < n_groups; ++g) {
    GroupPlan group;
    group.microbatches = std::max(1, K / n_groups);
    group.stages.push_back(
        stage(1, "A100", {DeviceId{0, 2 * g}, DeviceId{0, 2 * g + 1}}, 0, mid));
    group.stages.push_back(
        stage(2, "H20", {DeviceId{1, 2 * g}, DeviceId{1, 2 * g + 1}}, mid, n_layers));
    plan.groups.push_back(group);
  }
  return plan;
}

std::string fresh_root(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("hetplan_rec_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("scenario A: surviving replicas recover without peer or cloud traffic") {
  ClusterSpec spec = recovery_cluster();
  ParallelPlan old_plan = paired_plan(2, 8, 8);
  const std::string root = fresh_root("a");
  auto state = make_synthetic_state(8, 16, 100, 10);
  save_layerwise(state, old_plan, 10, root);
  auto bitmap = bitmap_from_json(read_text_file(root + "/bitmap.json"));

  // One group preempted; the survivor keeps the same placement.
  ParallelPlan new_plan = paired_plan(1, 8, 8);
  RecoveryPlan rp = plan_recovery(old_plan, new_plan, bitmap, spec);
  CHECK(rp.cloud_bytes == 0);
  CHECK(rp.peer_bytes == 0);
  CHECK(rp.local_bytes > 0);
  for (const auto& t : rp.targets) {
    for (const auto& f : t.fetches) CHECK(f.tier == FetchTier::local);
  }

  auto restored = execute_recovery(rp, root);
  // Every restored shard equals a fresh shard of the original state.
  for (const auto& [device, layers] : restored) {
    (void)device;
    for (const auto& shard : layers) {
      auto expect = shard_layer(state[shard.layer_id], 2)[shard.tp_rank];
      expect.step = 10;
      CHECK(shard == expect);
    }
  }
}

TEST_CASE("scenario B: layers lost with node 0 come from the cloud, rest stay local") {
  ClusterSpec spec = recovery_cluster();
  ParallelPlan old_plan = paired_plan(2, 8, 8);
  const std::string root = fresh_root("b");
  auto state = make_synthetic_state(8, 16, 200, 11);
  save_layerwise(state, old_plan, 11, root);
  auto bitmap = bitmap_from_json(read_text_file(root + "/bitmap.json"));

  // Node 0 is preempted: drop its locations from the bitmap (its disk is gone).
  uint64_t missing_bytes = 0;
  for (auto& e : bitmap.entries) {
    std::vector<ShardLocation> kept;
    for (const auto& loc : e.locations) {
      if (loc.cloud || loc.node_id != 0) kept.push_back(loc);
    }
    if (kept.size() == 1 && kept[0].cloud) missing_bytes += e.bytes;
    e.locations = std::move(kept);
  }
  REQUIRE(missing_bytes > 0);  // layers [0, mid) lived only on node 0

  // New plan: the four H20 GPUs form one tp=4 group holding everything.
  ParallelPlan new_plan;
  new_plan.tp_dim = 4;
  new_plan.n_layers = 8;
  new_plan.n_microbatches_total = 8;
  GroupPlan group;
  group.microbatches = 8;
  group.stages.push_back(stage(1, "H20",
                               {DeviceId{1, 0}, DeviceId{1, 1}, DeviceId{1, 2},
                                DeviceId{1, 3}},
                               0, 8));
  new_plan.groups.push_back(group);

  RecoveryPlan rp = plan_recovery(old_plan, new_plan, bitmap, spec);
  CHECK(rp.cloud_bytes == missing_bytes);  // exactly the bitmap-missing shards
  CHECK(rp.peer_bytes == 0);
  CHECK(rp.local_bytes > 0);

  // tp 2 -> 4: new ranks 0,1 read old shard 0; ranks 2,3 read old shard 1.
  for (const auto& t : rp.targets) {
    for (const auto& op : t.reshards) {
      CHECK(op.op == "split");
      CHECK(op.from_ranks == std::vector<uint32_t>{t.new_tp_rank / 2});
    }
  }

  auto restored = execute_recovery(rp, root);
  for (const auto& [device, layers] : restored) {
    (void)device;
    for (const auto& shard : layers) {
      auto expect = shard_layer(state[shard.layer_id], 4)[shard.tp_rank];
      expect.step = 11;
      CHECK(shard == expect);
    }
  }
}

TEST_CASE("scenario C: added nodes pull entirely from peers over RDMA") {
  ClusterSpec spec = recovery_cluster();
  ParallelPlan old_plan = paired_plan(2, 8, 8);
  const std::string root = fresh_root("c");
  auto state = make_synthetic_state(8, 16, 300, 12);
  save_layerwise(state, old_plan, 12, root);
  auto bitmap = bitmap_from_json(read_text_file(root + "/bitmap.json"));

  // Growth: one more DP group on the new nodes 2 and 3.
  ParallelPlan new_plan = paired_plan(2, 8, 12);
  GroupPlan extra;
  extra.microbatches = 4;
  extra.stages.push_back(stage(1, "A100", {DeviceId{2, 0}, DeviceId{2, 1}}, 0, 4));
  extra.stages.push_back(stage(2, "H20", {DeviceId{3, 0}, DeviceId{3, 1}}, 4, 8));
  new_plan.groups.push_back(extra);

  RecoveryPlan rp = plan_recovery(old_plan, new_plan, bitmap, spec);
  CHECK(rp.cloud_bytes == 0);
  CHECK(rp.peer_bytes > 0);
  for (const auto& t : rp.targets) {
    const bool newcomer = t.device.node_id >= 2;
    for (const auto& f : t.fetches) {
      CHECK(f.tier == (newcomer ? FetchTier::peer : FetchTier::local));
    }
  }
  auto restored = execute_recovery(rp, root);
  CHECK(restored.count(DeviceId{2, 0}) == 1);
  CHECK(restored.at(DeviceId{2, 0}).size() == 4);
}

TEST_CASE("unaltered tp: each rank reads exactly its layer files") {
  // Three-stage pipeline over six layers shrinks to two stages of three.
  ClusterSpec spec = load_cluster_spec(R"({
    "gpu_types": {"G": {"compute_power": 1, "memory_bytes": 80e9}},
    "nodes": [{"node_id": 0, "count": 3, "type": "G"}],
    "bandwidths": {"intra_node": 6e11, "inter_node": 5e10, "cloud": 1.2e9,
                   "local_disk": 3.5e9}
  })");
  ParallelPlan old_plan;
  old_plan.tp_dim = 1;
  old_plan.n_layers = 6;
  old_plan.n_microbatches_total = 4;
  GroupPlan g;
  g.microbatches = 4;
  for (int s = 0; s < 3; ++s) {
    g.stages.push_back(stage(s + 1, "G", {DeviceId{0, s}}, 2 * s, 2 * s + 2));
  }
  old_plan.groups.push_back(g);
  const std::string root = fresh_root("fig_a");
  auto state = make_synthetic_state(6, 8, 7, 2);
  save_layerwise(state, old_plan, 2, root);
  auto bitmap = bitmap_from_json(read_text_file(root + "/bitmap.json"));

  ParallelPlan new_plan;
  new_plan.tp_dim = 1;
  new_plan.n_layers = 6;
  new_plan.n_microbatches_total = 4;
  GroupPlan g2;
  g2.microbatches = 4;
  g2.stages.push_back(stage(1, "G", {DeviceId{0, 0}}, 0, 3));
  g2.stages.push_back(stage(2, "G", {DeviceId{0, 1}}, 3, 6));
  new_plan.groups.push_back(g2);

  RecoveryPlan rp = plan_recovery(old_plan, new_plan, bitmap, spec);
  REQUIRE(rp.targets.size() == 2);
  const auto& rank0 = rp.targets[0];
  REQUIRE(rank0.fetches.size() == 3);
  for (uint32_t l = 0; l < 3; ++l) {
    CHECK(rank0.fetches[l].layer == l);
    CHECK(rank0.fetches[l].old_tp_rank == 0);
    CHECK(rank0.reshards[l].op == "copy");
  }
}

TEST_CASE("tp 2 -> 1 concatenates both old shards") {
  ClusterSpec spec = load_cluster_spec(R"({
    "gpu_types": {"G": {"compute_power": 1, "memory_bytes": 80e9}},
    "nodes": [{"node_id": 0, "count": 2, "type": "G"}],
    "bandwidths": {"intra_node": 6e11, "inter_node": 5e10, "cloud": 1.2e9,
                   "local_disk": 3.5e9}
  })");
  ParallelPlan old_plan;
  old_plan.tp_dim = 2;
  old_plan.n_layers = 2;
  old_plan.n_microbatches_total = 2;
  GroupPlan g;
  g.microbatches = 2;
  g.stages.push_back(stage(1, "G", {DeviceId{0, 0}, DeviceId{0, 1}}, 0, 2));
  old_plan.groups.push_back(g);
  const std::string root = fresh_root("fig_c");
  auto state = make_synthetic_state(2, 8, 31, 4);
  save_layerwise(state, old_plan, 4, root);
  auto bitmap = bitmap_from_json(read_text_file(root + "/bitmap.json"));

  ParallelPlan new_plan;
  new_plan.tp_dim = 1;
  new_plan.n_layers = 2;
  new_plan.n_microbatches_total = 2;
  GroupPlan g2;
  g2.microbatches = 2;
  g2.stages.push_back(stage(1, "G", {DeviceId{0, 0}}, 0, 2));
  new_plan.groups.push_back(g2);

  RecoveryPlan rp = plan_recovery(old_plan, new_plan, bitmap, spec);
  REQUIRE(rp.targets.size() == 1);
  for (const auto& op : rp.targets[0].reshards) {
    CHECK(op.op == "concat");
    CHECK(op.from_ranks == std::vector<uint32_t>{0, 1});
  }
  auto restored = execute_recovery(rp, root);
  const auto& layers = restored.at(DeviceId{0, 0});
  REQUIRE(layers.size() == 2);
  for (const auto& shard : layers) {
    auto expect = state[shard.layer_id];
    expect.step = 4;
    CHECK(shard == expect);  // full tensors: resharding inverted exactly
  }
}

TEST_CASE("no-op recovery stays local and restores the saved state") {
  ClusterSpec spec = recovery_cluster();
  ParallelPlan plan = paired_plan(1, 4, 4);
  const std::string root = fresh_root("noop");
  auto state = make_synthetic_state(4, 16, 17, 3);
  save_layerwise(state, plan, 3, root);
  auto bitmap = bitmap_from_json(read_text_file(root + "/bitmap.json"));
  RecoveryPlan rp = plan_recovery(plan, plan, bitmap, spec);
  CHECK(rp.cloud_bytes == 0);
  CHECK(rp.peer_bytes == 0);
  auto restored = execute_recovery(rp, root);
  for (const auto& [device, layers] : restored) {
    (void)device;
    for (const auto& shard : layers) {
      auto expect = shard_layer(state[shard.layer_id], 2)[shard.tp_rank];
      expect.step = 3;
      CHECK(shard == expect);
    }
  }
}

TEST_CASE("local-first: the cloud is never chosen while any node holds the shard") {
  ClusterSpec spec = recovery_cluster();
  ParallelPlan plan = paired_plan(1, 8, 4);
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    LayerBitmap bitmap;
    bitmap.step = 1;
    bitmap.tp_dim = 2;
    bitmap.n_layers = 8;
    for (uint32_t l = 0; l < 8; ++l) {
      for (uint32_t r = 0; r < 2; ++r) {
        BitmapEntry e;
        e.layer = l;
        e.tp_rank = r;
        e.bytes = 1000;
        e.locations.push_back({true, -1});  // cloud always present
        for (int node = 0; node < 4; ++node) {
          if (rng() % 3 == 0) e.locations.push_back({false, node});
        }
        bitmap.entries.push_back(e);
      }
    }
    RecoveryPlan rp = plan_recovery(plan, plan, bitmap, spec);
    for (const auto& t : rp.targets) {
      for (const auto& f : t.fetches) {
        const auto* entry = bitmap.find(f.layer, f.old_tp_rank);
        bool has_node_copy = false;
        for (const auto& loc : entry->locations) has_node_copy |= !loc.cloud;
        if (has_node_copy) CHECK(f.tier != FetchTier::cloud);
      }
    }
  }
}

TEST_CASE("time model: local < mixed < cloud-only for the same shard set") {
  ClusterSpec spec = recovery_cluster();
  ParallelPlan plan = paired_plan(1, 8, 4);
  auto bitmap_with = [&](bool node0, bool node1) {
    LayerBitmap b;
    b.step = 1;
    b.tp_dim = 2;
    b.n_layers = 8;
    for (uint32_t l = 0; l < 8; ++l) {
      for (uint32_t r = 0; r < 2; ++r) {
        BitmapEntry e;
        e.layer = l;
        e.tp_rank = r;
        e.bytes = 1 << 20;
        e.locations.push_back({true, -1});
        if (node0) e.locations.push_back({false, 0});
        if (node1) e.locations.push_back({false, 1});
        b.entries.push_back(e);
      }
    }
    return b;
  };
  const double full_local = plan_recovery(plan, plan, bitmap_with(true, true), spec)
                                .est_seconds;
  const double partial = plan_recovery(plan, plan, bitmap_with(false, true), spec)
                             .est_seconds;
  const double cloud_only = plan_recovery(plan, plan, bitmap_with(false, false), spec)
                                .est_seconds;
  CHECK(full_local < partial);
  CHECK(partial < cloud_only);
}

TEST_CASE("unrecoverable shards and mixed steps are rejected") {
  ClusterSpec spec = recovery_cluster();
  ParallelPlan plan = paired_plan(1, 4, 4);
  const std::string root = fresh_root("bad");
  auto state = make_synthetic_state(4, 16, 55, 6);
  save_layerwise(state, plan, 6, root);
  auto bitmap = bitmap_from_json(read_text_file(root + "/bitmap.json"));

  LayerBitmap empty_loc = bitmap;
  empty_loc.entries[0].locations.clear();
  CHECK_THROWS_AS(plan_recovery(plan, plan, empty_loc, spec), UnrecoverableError);

  // A recovery plan stamped with a different step must not load this tree.
  RecoveryPlan rp = plan_recovery(plan, plan, bitmap, spec);
  rp.step = 7;
  CHECK_THROWS_AS(execute_recovery(rp, root), UnrecoverableError);

  // Corrupting a shard file breaks its digest.
  RecoveryPlan ok = plan_recovery(plan, plan, bitmap, spec);
  const std::string victim = node_store_dir(root, 0) + "/" + shard_file_name(0, 0, 2);
  auto bytes = read_text_file(victim);
  bytes[bytes.size() - 1] ^= 0x01;
  write_text_file(victim, bytes);
  CHECK_THROWS_AS(execute_recovery(ok, root), UnrecoverableError);
}

TEST_CASE("recovery plans round trip through JSON") {
  ClusterSpec spec = recovery_cluster();
  ParallelPlan plan = paired_plan(2, 8, 8);
  const std::string root = fresh_root("json");
  auto state = make_synthetic_state(8, 16, 5, 1);
  save_layerwise(state, plan, 1, root);
  auto bitmap = bitmap_from_json(read_text_file(root + "/bitmap.json"));
  RecoveryPlan rp = plan_recovery(plan, plan, bitmap, spec);
  RecoveryPlan back = recovery_from_json(recovery_to_json(rp));
  CHECK(recovery_to_json(back) == recovery_to_json(rp));
}
