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
#ifndef HETPLAN_CLUSTER_HPP_
#define HETPLAN_CLUSTER_HPP_

#include <map>
#include <string>
#include <vector>

#include "hetplan/types.hpp"

namespace hetplan {

// One GPU model. compute_power is a dimensionless normalized throughput
// (larger = faster); memory is bytes of HBM per device.
struct GpuType {
  std::string name;
  double compute_power = 0;
  double memory = 0;
};

// All GPUs on a node share one type.
struct NodeSpec {
  int node_id = 0;
  int gpu_count = 0;
  std::string gpu_type;
};

// Two-level link model: NVLink-class inside a node, RDMA-class across nodes,
// plus storage-tier bandwidths used by the recovery planner. All bytes/s.
struct ClusterSpec {
  std::vector<NodeSpec> nodes;  // sorted by node_id ascending
  std::map<std::string, GpuType> gpu_types;
  double intra_node_bw = 0;
  double inter_node_bw = 0;
  double cloud_bw = 0;
  double local_disk_bw = 0;
  std::vector<std::string> warnings;  // non-fatal findings from load

  int device_count() const;
  const NodeSpec& node(int node_id) const;
  const GpuType& type_of(const DeviceId& d) const;
  bool has_device(const DeviceId& d) const;

  // Deterministic device enumeration: node_id ascending, local_rank ascending.
  // global_rank and device_at are inverse bijections over 0..N-1.
  int global_rank(const DeviceId& d) const;
  DeviceId device_at(int global_rank) const;
  std::vector<DeviceId> all_devices() const;
};

ClusterSpec load_cluster_spec(const std::string& text);
ClusterSpec load_cluster_file(const std::string& path);

// intra_node_bw if a and b share a node (including a == b), else inter_node_bw.
double link_bandwidth(const ClusterSpec& spec, const DeviceId& a, const DeviceId& b);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace hetplan

#endif  // HETPLAN_CLUSTER_HPP_
