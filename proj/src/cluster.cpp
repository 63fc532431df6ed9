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
#include "hetplan/cluster.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "hetplan/util.hpp"
#include "json.hpp"

namespace hetplan {

using nlohmann::json;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot open file for writing: " + path);
  out << content;
  if (!out) throw ParseError("write failed: " + path);
}

int ClusterSpec::device_count() const {
  int n = 0;
  for (const auto& nd : nodes) n += nd.gpu_count;
  return n;
}

const NodeSpec& ClusterSpec::node(int node_id) const {
  for (const auto& nd : nodes) {
    if (nd.node_id == node_id) return nd;
  }
  throw InvalidArgumentError("unknown node_id " + std::to_string(node_id));
}

const GpuType& ClusterSpec::type_of(const DeviceId& d) const {
  const auto& nd = node(d.node_id);
  auto it = gpu_types.find(nd.gpu_type);
  HP_CHECK(it != gpu_types.end(), "node references a known GPU type");
  return it->second;
}

bool ClusterSpec::has_device(const DeviceId& d) const {
  for (const auto& nd : nodes) {
    if (nd.node_id == d.node_id) {
      return d.local_rank >= 0 && d.local_rank < nd.gpu_count;
    }
  }
  return false;
}

int ClusterSpec::global_rank(const DeviceId& d) const {
  int base = 0;
  for (const auto& nd : nodes) {
    if (nd.node_id == d.node_id) {
      if (d.local_rank < 0 || d.local_rank >= nd.gpu_count) {
        throw InvalidArgumentError("device " + d.str() + " out of range");
      }
      return base + d.local_rank;
    }
    base += nd.gpu_count;
  }
  throw InvalidArgumentError("unknown device " + d.str());
}

DeviceId ClusterSpec::device_at(int global_rank) const {
  int base = 0;
  for (const auto& nd : nodes) {
    if (global_rank < base + nd.gpu_count) {
      return DeviceId{nd.node_id, global_rank - base};
    }
    base += nd.gpu_count;
  }
  throw InvalidArgumentError("global rank " + std::to_string(global_rank) + " out of range");
}

std::vector<DeviceId> ClusterSpec::all_devices() const {
  std::vector<DeviceId> out;
  for (const auto& nd : nodes) {
    for (int r = 0; r < nd.gpu_count; ++r) out.push_back({nd.node_id, r});
  }
  return out;
}

namespace {

double require_number(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw ParseError(ctx + ": missing or non-numeric key '" + key + "'");
  }
  return j.at(key).get<double>();
}

}  // namespace

ClusterSpec load_cluster_spec(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("cluster spec: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("gpu_types") || !doc.contains("nodes")
      || !doc.contains("bandwidths")) {
    throw ParseError("cluster spec: expected sections gpu_types, nodes, bandwidths");
  }

  ClusterSpec spec;
  for (const auto& [name, body] : doc.at("gpu_types").items()) {
    GpuType t;
    t.name = name;
    t.compute_power = require_number(body, "compute_power", "gpu_types." + name);
    t.memory = require_number(body, "memory_bytes", "gpu_types." + name);
    if (t.compute_power <= 0 || t.memory <= 0) {
      throw ParseError("gpu_types." + name + ": compute_power and memory_bytes must be positive");
    }
    spec.gpu_types[name] = t;
  }
  if (spec.gpu_types.empty()) throw ParseError("cluster spec: no gpu_types defined");

  std::set<int> seen_ids;
  for (const auto& nd : doc.at("nodes")) {
    NodeSpec n;
    n.node_id = static_cast<int>(require_number(nd, "node_id", "nodes[]"));
    n.gpu_count = static_cast<int>(require_number(nd, "count", "nodes[]"));
    if (!nd.contains("type") || !nd.at("type").is_string()) {
      throw ParseError("nodes[]: missing string key 'type'");
    }
    n.gpu_type = nd.at("type").get<std::string>();
    if (n.gpu_count <= 0) {
      throw ParseError("node " + std::to_string(n.node_id) + ": count must be positive");
    }
    if (!spec.gpu_types.count(n.gpu_type)) {
      throw ParseError("node " + std::to_string(n.node_id) + ": unknown GPU type '"
                       + n.gpu_type + "'");
    }
    if (!seen_ids.insert(n.node_id).second) {
      throw ParseError("duplicate node_id " + std::to_string(n.node_id));
    }
    spec.nodes.push_back(n);
  }
  if (spec.nodes.empty()) throw ParseError("cluster spec: no nodes defined");
  std::sort(spec.nodes.begin(), spec.nodes.end(),
            [](const NodeSpec& a, const NodeSpec& b) { return a.node_id < b.node_id; });

  const json& bw = doc.at("bandwidths");
  spec.intra_node_bw = require_number(bw, "intra_node", "bandwidths");
  spec.inter_node_bw = require_number(bw, "inter_node", "bandwidths");
  spec.cloud_bw = require_number(bw, "cloud", "bandwidths");
  spec.local_disk_bw = require_number(bw, "local_disk", "bandwidths");
  if (spec.intra_node_bw <= 0 || spec.inter_node_bw <= 0 || spec.cloud_bw <= 0
      || spec.local_disk_bw <= 0) {
    throw ParseError("bandwidths must all be positive");
  }
  if (spec.intra_node_bw < spec.inter_node_bw) {
    spec.warnings.push_back("intra_node bandwidth is below inter_node bandwidth");
  }
  return spec;
}

ClusterSpec load_cluster_file(const std::string& path) {
  return load_cluster_spec(read_text_file(path));
}

double link_bandwidth(const ClusterSpec& spec, const DeviceId& a, const DeviceId& b) {
  if (!spec.has_device(a)) throw InvalidArgumentError("unknown device " + a.str());
  if (!spec.has_device(b)) throw InvalidArgumentError("unknown device " + b.str());
  // Self links count as the fastest class.
  return a.node_id == b.node_id ? spec.intra_node_bw : spec.inter_node_bw;
}

}  // namespace hetplan
