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
#include "hetplan/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "hetplan/cluster.hpp"
#include "hetplan/util.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace hetplan {

using nlohmann::json;

namespace {

constexpr uint32_t kMagic = 0x44535048;  // "HPSD" little-endian
constexpr uint32_t kVersion = 1;
constexpr size_t kHeaderBytes = 4 + 4 + 4 + 4 + 4 + 8 + 4;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct Reader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw ParseError("shard file truncated");
  }
  uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos++]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[pos++]) << (8 * i);
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  std::vector<float> floats(size_t n) {
    need(n * 4);
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) {
      uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<uint32_t>(buf[pos++]) << (8 * b);
      float f;
      std::memcpy(&f, &bits, 4);
      out[i] = f;
    }
    return out;
  }
};

void append_tensor(std::vector<uint8_t>& out, const TensorShard& t, uint8_t role) {
  out.push_back(role);
  out.push_back(static_cast<uint8_t>(t.split_axis));
  out.push_back(0);  // dtype f32
  out.push_back(static_cast<uint8_t>(t.shape.size()));
  put_u32(out, static_cast<uint32_t>(t.name.size()));
  out.insert(out.end(), t.name.begin(), t.name.end());
  for (uint64_t d : t.shape) put_u64(out, d);
  for (float f : t.data) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
}

TensorShard read_tensor(Reader& r, uint8_t* role_out) {
  TensorShard t;
  *role_out = r.u8();
  const uint8_t axis = r.u8();
  if (axis > 2) throw ParseError("shard file: bad split_axis");
  t.split_axis = static_cast<SplitAxis>(axis);
  if (r.u8() != 0) throw ParseError("shard file: only f32 tensors supported");
  const uint8_t ndim = r.u8();
  if (ndim < 1 || ndim > 2) throw ParseError("shard file: tensors must be 1-D or 2-D");
  const uint32_t name_len = r.u32();
  t.name = r.str(name_len);
  uint64_t numel = 1;
  for (int i = 0; i < ndim; ++i) {
    t.shape.push_back(r.u64());
    numel *= t.shape.back();
  }
  t.data = r.floats(numel);
  return t;
}

uint64_t rows_of(const TensorShard& t) { return t.shape[0]; }
uint64_t cols_of(const TensorShard& t) { return t.shape.size() == 2 ? t.shape[1] : 1; }

TensorShard slice_tensor(const TensorShard& full, int tp_dim, int rank) {
  if (full.split_axis == SplitAxis::none) return full;
  const uint64_t rows = rows_of(full);
  const uint64_t cols = cols_of(full);
  const uint64_t axis_len = full.split_axis == SplitAxis::rows ? rows : cols;
  if (axis_len % tp_dim != 0) {
    throw InvalidArgumentError("tensor " + full.name + ": split axis length "
                               + std::to_string(axis_len) + " not divisible by tp_dim "
                               + std::to_string(tp_dim));
  }
  TensorShard out;
  out.name = full.name;
  out.split_axis = full.split_axis;
  const uint64_t chunk = axis_len / tp_dim;
  if (full.split_axis == SplitAxis::rows) {
    out.shape = full.shape;
    out.shape[0] = chunk;
    const uint64_t begin = static_cast<uint64_t>(rank) * chunk * cols;
    out.data.assign(full.data.begin() + begin, full.data.begin() + begin + chunk * cols);
  } else {
    if (full.shape.size() != 2) {
      throw InvalidArgumentError("tensor " + full.name + ": column split needs 2-D shape");
    }
    out.shape = {rows, chunk};
    out.data.reserve(rows * chunk);
    for (uint64_t r = 0; r < rows; ++r) {
      const auto base = full.data.begin() + r * cols + rank * chunk;
      out.data.insert(out.data.end(), base, base + chunk);
    }
  }
  return out;
}

TensorShard concat_tensors(const std::vector<const TensorShard*>& parts) {
  const TensorShard& first = *parts.front();
  if (first.split_axis == SplitAxis::none) return first;
  TensorShard out;
  out.name = first.name;
  out.split_axis = first.split_axis;
  if (first.split_axis == SplitAxis::rows) {
    out.shape = first.shape;
    out.shape[0] = 0;
    for (const auto* p : parts) {
      out.shape[0] += p->shape[0];
      out.data.insert(out.data.end(), p->data.begin(), p->data.end());
    }
  } else {
    const uint64_t rows = rows_of(first);
    uint64_t cols = 0;
    for (const auto* p : parts) cols += cols_of(*p);
    out.shape = {rows, cols};
    out.data.resize(rows * cols);
    uint64_t col_base = 0;
    for (const auto* p : parts) {
      const uint64_t pc = cols_of(*p);
      for (uint64_t r = 0; r < rows; ++r) {
        std::copy(p->data.begin() + r * pc, p->data.begin() + (r + 1) * pc,
                  out.data.begin() + r * cols + col_base);
      }
      col_base += pc;
    }
  }
  return out;
}

}  // namespace

uint64_t TensorShard::numel() const {
  uint64_t n = 1;
  for (uint64_t d : shape) n *= d;
  return n;
}

bool operator==(const TensorShard& a, const TensorShard& b) {
  return a.name == b.name && a.split_axis == b.split_axis && a.shape == b.shape
         && a.data == b.data;
}

bool operator==(const LayerShard& a, const LayerShard& b) {
  return a.layer_id == b.layer_id && a.tp_rank == b.tp_rank && a.tp_dim == b.tp_dim
         && a.step == b.step && a.params == b.params && a.momentum == b.momentum
         && a.variance == b.variance;
}

std::vector<LayerShard> shard_layer(const LayerShard& full, int tp_dim) {
  HP_CHECK(full.tp_dim == 1 && full.tp_rank == 0, "shard_layer takes a full layer");
  if (tp_dim < 1) throw InvalidArgumentError("shard_layer: tp_dim must be >= 1");
  std::vector<LayerShard> out;
  for (int r = 0; r < tp_dim; ++r) {
    LayerShard s;
    s.layer_id = full.layer_id;
    s.tp_rank = static_cast<uint32_t>(r);
    s.tp_dim = static_cast<uint32_t>(tp_dim);
    s.step = full.step;
    for (const auto& t : full.params) s.params.push_back(slice_tensor(t, tp_dim, r));
    for (const auto& t : full.momentum) s.momentum.push_back(slice_tensor(t, tp_dim, r));
    for (const auto& t : full.variance) s.variance.push_back(slice_tensor(t, tp_dim, r));
    out.push_back(std::move(s));
  }
  return out;
}

LayerShard merge_shards(std::vector<LayerShard> shards) {
  if (shards.empty()) throw InvalidArgumentError("merge_shards: empty shard set");
  std::sort(shards.begin(), shards.end(),
            [](const LayerShard& a, const LayerShard& b) { return a.tp_rank < b.tp_rank; });
  const uint32_t d = shards.front().tp_dim;
  if (shards.size() != d) {
    throw InvalidArgumentError("merge_shards: expected " + std::to_string(d)
                               + " shards, got " + std::to_string(shards.size()));
  }
  for (uint32_t r = 0; r < d; ++r) {
    if (shards[r].tp_rank != r || shards[r].tp_dim != d
        || shards[r].layer_id != shards[0].layer_id || shards[r].step != shards[0].step) {
      throw InvalidArgumentError("merge_shards: inconsistent shard set for layer "
                                 + std::to_string(shards[0].layer_id));
    }
  }
  LayerShard full;
  full.layer_id = shards[0].layer_id;
  full.tp_rank = 0;
  full.tp_dim = 1;
  full.step = shards[0].step;
  auto merge_list = [&](std::vector<TensorShard> LayerShard::* member) {
    const auto& first = shards[0].*member;
    std::vector<TensorShard> merged;
    for (size_t ti = 0; ti < first.size(); ++ti) {
      std::vector<const TensorShard*> parts;
      for (const auto& s : shards) parts.push_back(&(s.*member)[ti]);
      merged.push_back(concat_tensors(parts));
    }
    return merged;
  };
  full.params = merge_list(&LayerShard::params);
  full.momentum = merge_list(&LayerShard::momentum);
  full.variance = merge_list(&LayerShard::variance);
  return full;
}

std::vector<LayerShard> reshard(const std::vector<LayerShard>& shards, int new_dim) {
  std::vector<LayerShard> copy = shards;
  return shard_layer(merge_shards(std::move(copy)), new_dim);
}

std::vector<uint8_t> serialize_shard(const LayerShard& shard) {
  HP_CHECK(shard.momentum.size() == shard.params.size()
               && shard.variance.size() == shard.params.size(),
           "optimizer state parallels the parameter list");
  std::vector<uint8_t> out;
  put_u32(out, kMagic);
  put_u32(out, kVersion);
  put_u32(out, shard.layer_id);
  put_u32(out, shard.tp_rank);
  put_u32(out, shard.tp_dim);
  put_u64(out, shard.step);
  put_u32(out, static_cast<uint32_t>(shard.params.size() * 3));
  for (size_t i = 0; i < shard.params.size(); ++i) {
    append_tensor(out, shard.params[i], 0);
    append_tensor(out, shard.momentum[i], 1);
    append_tensor(out, shard.variance[i], 2);
  }
  return out;
}

LayerShard deserialize_shard(const std::vector<uint8_t>& bytes) {
  Reader r{bytes};
  if (r.u32() != kMagic) throw ParseError("shard file: bad magic");
  if (r.u32() != kVersion) throw ParseError("shard file: unsupported version");
  LayerShard s;
  s.layer_id = r.u32();
  s.tp_rank = r.u32();
  s.tp_dim = r.u32();
  s.step = r.u64();
  const uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    uint8_t role;
    TensorShard t = read_tensor(r, &role);
    switch (role) {
      case 0: s.params.push_back(std::move(t)); break;
      case 1: s.momentum.push_back(std::move(t)); break;
      case 2: s.variance.push_back(std::move(t)); break;
      default: throw ParseError("shard file: bad tensor role");
    }
  }
  if (r.pos != bytes.size()) throw ParseError("shard file: trailing bytes");
  if (s.momentum.size() != s.params.size() || s.variance.size() != s.params.size()) {
    throw ParseError("shard file: optimizer state does not parallel parameters");
  }
  return s;
}

void write_shard_file(const std::string& path, const LayerShard& shard) {
  const auto bytes = serialize_shard(shard);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot open shard file for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError("shard write failed: " + path);
}

LayerShard read_shard_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnrecoverableError("cannot open shard file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return deserialize_shard(bytes);
}

uint64_t shard_digest(const std::vector<uint8_t>& bytes) {
  HP_CHECK(bytes.size() >= kHeaderBytes, "shard buffer holds at least a header");
  return fnv1a64(bytes.data() + kHeaderBytes, bytes.size() - kHeaderBytes);
}

std::string shard_file_name(uint32_t layer, uint32_t tp_rank, uint32_t tp_dim) {
  return "layer" + std::to_string(layer) + "_tp" + std::to_string(tp_rank) + "of"
         + std::to_string(tp_dim);
}

std::string manifest_to_json(const CheckpointManifest& m) {
  json layers = json::array();
  for (const auto& l : m.layers) {
    json shards = json::array();
    for (const auto& s : l.shards) {
      shards.push_back({{"tp_rank", s.tp_rank},
                        {"file", s.file},
                        {"digest", to_hex64(s.digest)},
                        {"bytes", s.bytes}});
    }
    layers.push_back({{"layer", l.layer}, {"tp_dim", l.tp_dim}, {"shards", shards}});
  }
  json doc{{"step", m.step}, {"n_layers", m.n_layers}, {"layers", layers}};
  return doc.dump(2) + "\n";
}

CheckpointManifest manifest_from_json(const std::string& text) {
  try {
    json doc = json::parse(text);
    CheckpointManifest m;
    m.step = doc.at("step").get<uint64_t>();
    m.n_layers = doc.at("n_layers").get<uint32_t>();
    for (const auto& l : doc.at("layers")) {
      ManifestLayer ml;
      ml.layer = l.at("layer").get<uint32_t>();
      ml.tp_dim = l.at("tp_dim").get<uint32_t>();
      for (const auto& s : l.at("shards")) {
        ShardInfo si;
        si.tp_rank = s.at("tp_rank").get<uint32_t>();
        si.file = s.at("file").get<std::string>();
        si.digest = parse_hex64(s.at("digest").get<std::string>());
        si.bytes = s.at("bytes").get<uint64_t>();
        ml.shards.push_back(std::move(si));
      }
      m.layers.push_back(std::move(ml));
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
}

ShardLocation ShardLocation::parse(const std::string& s) {
  if (s == "cloud") return ShardLocation{true, -1};
  if (s.rfind("node:", 0) == 0) {
    return ShardLocation{false, std::stoi(s.substr(5))};
  }
  throw ParseError("bad shard location '" + s + "' (expected 'cloud' or 'node:<id>')");
}

const BitmapEntry* LayerBitmap::find(uint32_t layer, uint32_t tp_rank) const {
  for (const auto& e : entries) {
    if (e.layer == layer && e.tp_rank == tp_rank) return &e;
  }
  return nullptr;
}

std::string bitmap_to_json(const LayerBitmap& b) {
  json shards = json::array();
  for (const auto& e : b.entries) {
    json locs = json::array();
    for (const auto& l : e.locations) locs.push_back(l.str());
    shards.push_back({{"layer", e.layer},
                      {"tp_rank", e.tp_rank},
                      {"bytes", e.bytes},
                      {"locations", locs}});
  }
  json doc{{"step", b.step},
           {"tp_dim", b.tp_dim},
           {"n_layers", b.n_layers},
           {"shards", shards}};
  return doc.dump(2) + "\n";
}

LayerBitmap bitmap_from_json(const std::string& text) {
  try {
    json doc = json::parse(text);
    LayerBitmap b;
    b.step = doc.at("step").get<uint64_t>();
    b.tp_dim = doc.at("tp_dim").get<uint32_t>();
    b.n_layers = doc.at("n_layers").get<uint32_t>();
    for (const auto& s : doc.at("shards")) {
      BitmapEntry e;
      e.layer = s.at("layer").get<uint32_t>();
      e.tp_rank = s.at("tp_rank").get<uint32_t>();
      e.bytes = s.at("bytes").get<uint64_t>();
      for (const auto& l : s.at("locations")) {
        e.locations.push_back(ShardLocation::parse(l.get<std::string>()));
      }
      b.entries.push_back(std::move(e));
    }
    return b;
  } catch (const json::exception& e) {
    throw ParseError(std::string("layer bitmap: ") + e.what());
  }
}

std::string node_store_dir(const std::string& root, int node_id) {
  return root + "/nodes/node" + std::to_string(node_id);
}

std::string cloud_store_dir(const std::string& root) { return root + "/cloud"; }

CheckpointManifest save_layerwise(const std::vector<LayerShard>& state,
                                  const ParallelPlan& plan, uint64_t step,
                                  const std::string& root) {
  if (static_cast<int>(state.size()) != plan.n_layers) {
    throw InvalidArgumentError("save_layerwise: state has " + std::to_string(state.size())
                               + " layers, plan expects " + std::to_string(plan.n_layers));
  }
  for (int l = 0; l < plan.n_layers; ++l) {
    if (state[l].layer_id != static_cast<uint32_t>(l)) {
      throw InvalidArgumentError("save_layerwise: layer " + std::to_string(l)
                                 + " missing from state");
    }
  }
  const uint32_t d = static_cast<uint32_t>(plan.tp_dim);

  // Nodes holding each layer: every DP group stores a replica on the node of
  // the stage that owns the layer.
  std::vector<std::set<int>> holder_nodes(plan.n_layers);
  for (const auto& group : plan.groups) {
    for (const auto& st : group.stages) {
      for (int l = st.layer_begin; l < st.layer_end; ++l) {
        holder_nodes[l].insert(st.devices.front().node_id);
      }
    }
  }

  fs::create_directories(cloud_store_dir(root));
  CheckpointManifest manifest;
  manifest.step = step;
  manifest.n_layers = static_cast<uint32_t>(plan.n_layers);
  LayerBitmap bitmap;
  bitmap.step = step;
  bitmap.tp_dim = d;
  bitmap.n_layers = manifest.n_layers;

  for (int l = 0; l < plan.n_layers; ++l) {
    LayerShard full = state[l];
    full.step = step;
    ManifestLayer ml;
    ml.layer = static_cast<uint32_t>(l);
    ml.tp_dim = d;
    const auto shards = shard_layer(full, static_cast<int>(d));
    for (const auto& shard : shards) {
      const std::string name = shard_file_name(shard.layer_id, shard.tp_rank, d);
      const auto bytes = serialize_shard(shard);
      for (int node : holder_nodes[l]) {
        fs::create_directories(node_store_dir(root, node));
        write_text_file(node_store_dir(root, node) + "/" + name,
                        std::string(bytes.begin(), bytes.end()));
      }
      write_text_file(cloud_store_dir(root) + "/" + name,
                      std::string(bytes.begin(), bytes.end()));
      ml.shards.push_back({shard.tp_rank, name, shard_digest(bytes), bytes.size()});
      BitmapEntry entry;
      entry.layer = static_cast<uint32_t>(l);
      entry.tp_rank = shard.tp_rank;
      entry.bytes = bytes.size();
      for (int node : holder_nodes[l]) entry.locations.push_back({false, node});
      entry.locations.push_back({true, -1});
      bitmap.entries.push_back(std::move(entry));
    }
    manifest.layers.push_back(std::move(ml));
  }
  write_text_file(root + "/manifest.json", manifest_to_json(manifest));
  write_text_file(root + "/bitmap.json", bitmap_to_json(bitmap));
  return manifest;
}

std::vector<LayerShard> make_synthetic_state(int n_layers, int hidden, uint64_t seed,
                                             uint64_t step, bool zero_optimizer) {
  if (n_layers < 1 || hidden < 1) {
    throw InvalidArgumentError("synthetic state needs n_layers >= 1 and hidden >= 1");
  }
  const uint64_t h = static_cast<uint64_t>(hidden);
  std::vector<LayerShard> state;
  for (int l = 0; l < n_layers; ++l) {
    // Distinct stream per layer so layer content does not depend on n_layers.
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + static_cast<uint64_t>(l));
    auto fill = [&rng](TensorShard& t) {
      t.data.resize(t.numel());
      for (auto& f : t.data) {
        // Top 24 bits of the generator scaled to [0, 1); portable across
        // implementations, unlike uniform_real_distribution.
        f = static_cast<float>(rng() >> 40) * 0x1p-24f;
      }
    };
    LayerShard layer;
    layer.layer_id = static_cast<uint32_t>(l);
    layer.tp_dim = 1;
    layer.step = step;
    auto add = [&](const std::string& name, SplitAxis axis, std::vector<uint64_t> shape) {
      TensorShard t;
      t.name = name;
      t.split_axis = axis;
      t.shape = std::move(shape);
      fill(t);
      layer.params.push_back(std::move(t));
    };
    add("attn_qkv", SplitAxis::cols, {h, 3 * h});
    add("attn_out", SplitAxis::rows, {h, h});
    add("mlp_fc1", SplitAxis::cols, {h, 4 * h});
    add("mlp_fc2", SplitAxis::rows, {4 * h, h});
    add("ln_weight", SplitAxis::none, {h});
    for (const auto& p : layer.params) {
      TensorShard m = p, v = p;
      if (zero_optimizer) {
        std::fill(m.data.begin(), m.data.end(), 0.0f);
        std::fill(v.data.begin(), v.data.end(), 0.0f);
      } else {
        fill(m);
        fill(v);
      }
      layer.momentum.push_back(std::move(m));
      layer.variance.push_back(std::move(v));
    }
    state.push_back(std::move(layer));
  }
  return state;
}

}  // namespace hetplan
