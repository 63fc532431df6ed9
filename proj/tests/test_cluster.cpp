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
#include "doctest.h"
#include "hetplan/cluster.hpp"

using namespace hetplan;

namespace {

const char* kTwoNodeSpec = R"({
  "gpu_types": {
    "A100": {"compute_power": 1.0, "memory_bytes": 80.0e9},
    "H800": {"compute_power": 2.0, "memory_bytes": 80.0e9}
  },
  "nodes": [
    {"node_id": 0, "count": 8, "type": "A100"},
    {"node_id": 1, "count": 4, "type": "H800"}
  ],
  "bandwidths": {
    "intra_node": 600.0e9, "inter_node": 50.0e9,
    "cloud": 1.2e9, "local_disk": 3.5e9
  }
})";

}  // namespace

TEST_CASE("load_cluster_spec parses the two-node example") {
  ClusterSpec spec = load_cluster_spec(kTwoNodeSpec);
  CHECK(spec.device_count() == 12);
  CHECK(spec.gpu_types.size() == 2);
  CHECK(spec.nodes[0].gpu_type == "A100");
  CHECK(spec.nodes[1].gpu_count == 4);
  CHECK(spec.warnings.empty());
}

TEST_CASE("load_cluster_spec accepts a single-GPU cluster") {
  ClusterSpec spec = load_cluster_spec(R"({
    "gpu_types": {"A100": {"compute_power": 1.0, "memory_bytes": 8.0e9}},
    "nodes": [{"node_id": 0, "count": 1, "type": "A100"}],
    "bandwidths": {"intra_node": 1e9, "inter_node": 1e8, "cloud": 1e7, "local_disk": 1e8}
  })");
  CHECK(spec.device_count() == 1);
}

TEST_CASE("load_cluster_spec rejects bad documents") {
  CHECK_THROWS_AS(load_cluster_spec("not json"), ParseError);
  // duplicate node_id
  CHECK_THROWS_AS(load_cluster_spec(R"({
    "gpu_types": {"A": {"compute_power": 1, "memory_bytes": 1}},
    "nodes": [{"node_id": 0, "count": 1, "type": "A"},
              {"node_id": 0, "count": 1, "type": "A"}],
    "bandwidths": {"intra_node": 2, "inter_node": 1, "cloud": 1, "local_disk": 1}
  })"), ParseError);
  // unknown type
  CHECK_THROWS_AS(load_cluster_spec(R"({
    "gpu_types": {"A": {"compute_power": 1, "memory_bytes": 1}},
    "nodes": [{"node_id": 0, "count": 1, "type": "B"}],
    "bandwidths": {"intra_node": 2, "inter_node": 1, "cloud": 1, "local_disk": 1}
  })"), ParseError);
  // nonpositive power
  CHECK_THROWS_AS(load_cluster_spec(R"({
    "gpu_types": {"A": {"compute_power": 0, "memory_bytes": 1}},
    "nodes": [{"node_id": 0, "count": 1, "type": "A"}],
    "bandwidths": {"intra_node": 2, "inter_node": 1, "cloud": 1, "local_disk": 1}
  })"), ParseError);
}

TEST_CASE("intra below inter bandwidth is a warning, not an error") {
  ClusterSpec spec = load_cluster_spec(R"({
    "gpu_types": {"A": {"compute_power": 1, "memory_bytes": 1}},
    "nodes": [{"node_id": 0, "count": 1, "type": "A"}],
    "bandwidths": {"intra_node": 1, "inter_node": 2, "cloud": 1, "local_disk": 1}
  })");
  REQUIRE(spec.warnings.size() == 1);
}

TEST_CASE("device enumeration is a bijection") {
  ClusterSpec spec = load_cluster_spec(kTwoNodeSpec);
  for (int g = 0; g < spec.device_count(); ++g) {
    CHECK(spec.global_rank(spec.device_at(g)) == g);
  }
  // node_id ascending, local_rank ascending
  CHECK(spec.device_at(0) == DeviceId{0, 0});
  CHECK(spec.device_at(7) == DeviceId{0, 7});
  CHECK(spec.device_at(8) == DeviceId{1, 0});
  CHECK(spec.device_at(11) == DeviceId{1, 3});
}

TEST_CASE("link_bandwidth yields exactly two classes and is symmetric") {
  ClusterSpec spec = load_cluster_spec(kTwoNodeSpec);
  const DeviceId a{0, 0}, b{0, 3}, c{1, 0};
  CHECK(link_bandwidth(spec, a, b) == spec.intra_node_bw);
  CHECK(link_bandwidth(spec, a, c) == spec.inter_node_bw);
  CHECK(link_bandwidth(spec, a, a) == spec.intra_node_bw);  // self link: fastest class
  for (const auto& x : spec.all_devices()) {
    for (const auto& y : spec.all_devices()) {
      const double fwd = link_bandwidth(spec, x, y);
      CHECK(fwd == link_bandwidth(spec, y, x));
      CHECK((fwd == spec.intra_node_bw || fwd == spec.inter_node_bw));
    }
  }
  CHECK_THROWS_AS(link_bandwidth(spec, a, DeviceId{9, 0}), InvalidArgumentError);
}
