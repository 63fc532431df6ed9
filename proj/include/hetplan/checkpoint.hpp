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
#ifndef HETPLAN_CHECKPOINT_HPP_
#define HETPLAN_CHECKPOINT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "hetplan/plan.hpp"
#include "hetplan/types.hpp"

namespace hetplan {

// Shard file format (little-endian, dtype fixed to f32):
//   header:  magic "HPSD", u32 version=1, u32 layer_id, u32 tp_rank,
//            u32 tp_dim, u64 step, u32 tensor_count
//   record:  u8 role (0 param, 1 momentum, 2 variance), u8 split_axis
//            (0 none, 1 rows, 2 cols), u8 dtype (0 f32), u8 ndim,
//            u32 name_len, name bytes, u64 dims[ndim], f32 data[numel]
// The manifest digest is 64-bit FNV-1a over everything after the header.

enum class SplitAxis : uint8_t { none = 0, rows = 1, cols = 2 };

struct TensorShard {
  std::string name;
  SplitAxis split_axis = SplitAxis::none;
  std::vector<uint64_t> shape;  // 1-D or 2-D
  std::vector<float> data;      // row-major

  uint64_t numel() const;
};

// One layer's slice of parameters and optimizer state for one TP rank.
// tp_dim == 1, tp_rank == 0 represents the full (unsharded) layer.
struct LayerShard {
  uint32_t layer_id = 0;
  uint32_t tp_rank = 0;
  uint32_t tp_dim = 1;
  uint64_t step = 0;
  std::vector<TensorShard> params;
  std::vector<TensorShard> momentum;  // parallel to params
  std::vector<TensorShard> variance;  // parallel to params
};

bool operator==(const TensorShard& a, const TensorShard& b);
bool operator==(const LayerShard& a, const LayerShard& b);

// Split a full layer into tp_dim shards (split-axis tensors partitioned,
// replicated tensors copied) and the inverse merge. Both are bit-exact moves.
std::vector<LayerShard> shard_layer(const LayerShard& full, int tp_dim);
LayerShard merge_shards(std::vector<LayerShard> shards);
std::vector<LayerShard> reshard(const std::vector<LayerShard>& shards, int new_dim);

std::vector<uint8_t> serialize_shard(const LayerShard& shard);
LayerShard deserialize_shard(const std::vector<uint8_t>& bytes);
void write_shard_file(const std::string& path, const LayerShard& shard);
LayerShard read_shard_file(const std::string& path);
uint64_t shard_digest(const std::vector<uint8_t>& bytes);  // FNV-1a past the header

std::string shard_file_name(uint32_t layer, uint32_t tp_rank, uint32_t tp_dim);

struct ShardInfo {
  uint32_t tp_rank = 0;
  std::string file;
  uint64_t digest = 0;
  uint64_t bytes = 0;
};

struct ManifestLayer {
  uint32_t layer = 0;
  uint32_t tp_dim = 1;
  std::vector<ShardInfo> shards;
};

struct CheckpointManifest {
  uint64_t step = 0;
  uint32_t n_layers = 0;
  std::vector<ManifestLayer> layers;
};

std::string manifest_to_json(const CheckpointManifest& m);
CheckpointManifest manifest_from_json(const std::string& text);

// Where a shard currently lives: a node's local disk, or the cloud store.
struct ShardLocation {
  bool cloud = false;
  int node_id = -1;

  std::string str() const { return cloud ? "cloud" : "node:" + std::to_string(node_id); }
  static ShardLocation parse(const std::string& s);
  bool operator==(const ShardLocation& o) const {
    return cloud == o.cloud && node_id == o.node_id;
  }
};

struct BitmapEntry {
  uint32_t layer = 0;
  uint32_t tp_rank = 0;  // rank under the bitmap's (old) tp_dim
  uint64_t bytes = 0;
  std::vector<ShardLocation> locations;
};

struct LayerBitmap {
  uint64_t step = 0;
  uint32_t tp_dim = 1;
  uint32_t n_layers = 0;
  std::vector<BitmapEntry> entries;

  const BitmapEntry* find(uint32_t layer, uint32_t tp_rank) const;
};

std::string bitmap_to_json(const LayerBitmap& b);
LayerBitmap bitmap_from_json(const std::string& text);

// Checkpoint tree on disk:
//   root/nodes/node<N>/<shard files>   root/cloud/<shard files>
//   root/manifest.json                 root/bitmap.json
std::string node_store_dir(const std::string& root, int node_id);
std::string cloud_store_dir(const std::string& root);

// Write one shard file per (layer, tp_rank) into the local store of every
// node whose stage holds the layer, plus the cloud store; emit manifest and
// bitmap. `state` holds the full per-layer tensors, layer_id ascending.
CheckpointManifest save_layerwise(const std::vector<LayerShard>& state,
                                  const ParallelPlan& plan, uint64_t step,
                                  const std::string& root);

// Deterministic dense test model: per layer, col-split qkv and fc1, row-split
// attention output and fc2, replicated layernorm, plus matching optimizer
// moments. hidden must be divisible by every TP dim in use.
std::vector<LayerShard> make_synthetic_state(int n_layers, int hidden, uint64_t seed,
                                             uint64_t step = 0, bool zero_optimizer = false);

}  // namespace hetplan

#endif  // HETPLAN_CHECKPOINT_HPP_
