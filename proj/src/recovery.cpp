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
#include "hetplan/recovery.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "hetplan/util.hpp"
#include "json.hpp"

namespace hetplan {

using nlohmann::json;

namespace {

// Old TP ranks whose span of the split axis overlaps new rank r's span.
std::vector<uint32_t> old_ranks_for(uint32_t r, uint32_t d_old, uint32_t d_new) {
  std::vector<uint32_t> out;
  for (uint32_t k = 0; k < d_old; ++k) {
    // [k/d_old, (k+1)/d_old) overlaps [r/d_new, (r+1)/d_new)
    if (static_cast<uint64_t>(k) * d_new < static_cast<uint64_t>(r + 1) * d_old
        && static_cast<uint64_t>(r) * d_old < static_cast<uint64_t>(k + 1) * d_new) {
      out.push_back(k);
    }
  }
  return out;
}

double tier_bandwidth(const ClusterSpec& spec, FetchTier tier) {
  switch (tier) {
    case FetchTier::local:
      return spec.local_disk_bw;
    case FetchTier::peer:
      // The peer's disk feeds the RDMA link in series, so the effective rate
      // is the harmonic combination; always below a plain local read.
      return 1.0 / (1.0 / spec.local_disk_bw + 1.0 / spec.inter_node_bw);
    case FetchTier::cloud:
      return spec.cloud_bw;
  }
  throw InternalError("unknown fetch tier");
}

std::string tier_name(FetchTier t) {
  switch (t) {
    case FetchTier::local: return "local";
    case FetchTier::peer: return "peer";
    case FetchTier::cloud: return "cloud";
  }
  return "?";
}

FetchTier tier_from_name(const std::string& s) {
  if (s == "local") return FetchTier::local;
  if (s == "peer") return FetchTier::peer;
  if (s == "cloud") return FetchTier::cloud;
  throw ParseError("bad tier '" + s + "'");
}

// Contiguous slice along a tensor's split axis; offsets are in axis elements.
TensorShard slice_span(const TensorShard& t, uint64_t offset, uint64_t length) {
  TensorShard out;
  out.name = t.name;
  out.split_axis = t.split_axis;
  if (t.split_axis == SplitAxis::none) return t;
  const uint64_t rows = t.shape[0];
  const uint64_t cols = t.shape.size() == 2 ? t.shape[1] : 1;
  if (t.split_axis == SplitAxis::rows) {
    HP_CHECK(offset + length <= rows, "row span inside tensor");
    out.shape = t.shape;
    out.shape[0] = length;
    out.data.assign(t.data.begin() + offset * cols,
                    t.data.begin() + (offset + length) * cols);
  } else {
    HP_CHECK(t.shape.size() == 2 && offset + length <= cols, "column span inside tensor");
    out.shape = {rows, length};
    out.data.reserve(rows * length);
    for (uint64_t r = 0; r < rows; ++r) {
      out.data.insert(out.data.end(), t.data.begin() + r * cols + offset,
                      t.data.begin() + r * cols + offset + length);
    }
  }
  return out;
}

// Build new rank r's shard from the contiguous old shards that cover it.
LayerShard cut_new_shard(const std::vector<LayerShard>& old_shards, uint32_t r,
                         uint32_t d_old, uint32_t d_new) {
  HP_CHECK(!old_shards.empty(), "reshard needs at least one source shard");
  const uint32_t k0 = old_shards.front().tp_rank;
  LayerShard out;
  out.layer_id = old_shards.front().layer_id;
  out.tp_rank = r;
  out.tp_dim = d_new;
  out.step = old_shards.front().step;
  auto cut_list = [&](std::vector<TensorShard> LayerShard::* member) {
    std::vector<TensorShard> result;
    const size_t count = (old_shards.front().*member).size();
    for (size_t ti = 0; ti < count; ++ti) {
      std::vector<const TensorShard*> parts;
      for (const auto& s : old_shards) parts.push_back(&(s.*member)[ti]);
      const TensorShard& first = *parts.front();
      if (first.split_axis == SplitAxis::none) {
        result.push_back(first);
        continue;
      }
      TensorShard span = parts.size() == 1 ? first : [&] {
        // concat along the split axis
        TensorShard acc = first;
        for (size_t i = 1; i < parts.size(); ++i) {
          std::vector<const TensorShard*> two{&acc, parts[i]};
          // reuse slice/concat primitives: concatenating pairwise keeps code small
          TensorShard merged;
          merged.name = acc.name;
          merged.split_axis = acc.split_axis;
          if (acc.split_axis == SplitAxis::rows) {
            merged.shape = acc.shape;
            merged.shape[0] += parts[i]->shape[0];
            merged.data = acc.data;
            merged.data.insert(merged.data.end(), parts[i]->data.begin(),
                               parts[i]->data.end());
          } else {
            const uint64_t rows = acc.shape[0];
            const uint64_t c1 = acc.shape[1], c2 = parts[i]->shape[1];
            merged.shape = {rows, c1 + c2};
            merged.data.resize(rows * (c1 + c2));
            for (uint64_t row = 0; row < rows; ++row) {
              std::copy(acc.data.begin() + row * c1, acc.data.begin() + (row + 1) * c1,
                        merged.data.begin() + row * (c1 + c2));
              std::copy(parts[i]->data.begin() + row * c2,
                        parts[i]->data.begin() + (row + 1) * c2,
                        merged.data.begin() + row * (c1 + c2) + c1);
            }
          }
          acc = std::move(merged);
        }
        return acc;
      }();
      // Axis length of the full tensor, recovered from one old shard.
      const uint64_t axis_shard = first.split_axis == SplitAxis::rows
                                      ? first.shape[0]
                                      : first.shape[1];
      const uint64_t axis_full = axis_shard * d_old;
      HP_CHECK(axis_full % d_new == 0, "split axis divisible by the new tp_dim");
      const uint64_t new_len = axis_full / d_new;
      const uint64_t global_off = static_cast<uint64_t>(r) * new_len;
      const uint64_t span_off = static_cast<uint64_t>(k0) * (axis_full / d_old);
      HP_CHECK(global_off >= span_off, "fetched shards cover the new rank's span");
      result.push_back(slice_span(span, global_off - span_off, new_len));
    }
    return result;
  };
  out.params = cut_list(&LayerShard::params);
  out.momentum = cut_list(&LayerShard::momentum);
  out.variance = cut_list(&LayerShard::variance);
  return out;
}

}  // namespace

RecoveryPlan plan_recovery(const ParallelPlan& old_plan, const ParallelPlan& new_plan,
                           const LayerBitmap& bitmap, const ClusterSpec& spec) {
  if (bitmap.tp_dim != static_cast<uint32_t>(old_plan.tp_dim)) {
    throw ParseError("layer bitmap tp_dim " + std::to_string(bitmap.tp_dim)
                     + " does not match the old plan's tp_dim "
                     + std::to_string(old_plan.tp_dim));
  }
  if (bitmap.n_layers != static_cast<uint32_t>(new_plan.n_layers)) {
    throw ParseError("layer bitmap covers " + std::to_string(bitmap.n_layers)
                     + " layers, plans expect " + std::to_string(new_plan.n_layers));
  }
  const uint32_t d_old = static_cast<uint32_t>(old_plan.tp_dim);
  const uint32_t d_new = static_cast<uint32_t>(new_plan.tp_dim);

  RecoveryPlan rp;
  rp.step = bitmap.step;
  rp.tp_old = d_old;
  rp.tp_new = d_new;

  for (const auto& group : new_plan.groups) {
    for (const auto& st : group.stages) {
      for (size_t r = 0; r < st.devices.size(); ++r) {
        DeviceRecovery dr;
        dr.device = st.devices[r];
        dr.new_tp_rank = static_cast<uint32_t>(r);
        std::set<std::pair<uint32_t, uint32_t>> wanted;  // (layer, old rank)
        for (int layer = st.layer_begin; layer < st.layer_end; ++layer) {
          const auto from = old_ranks_for(dr.new_tp_rank, d_old, d_new);
          ReshardOp op;
          op.layer = static_cast<uint32_t>(layer);
          op.from_ranks = from;
          op.to_rank = dr.new_tp_rank;
          op.op = d_old == d_new ? "copy" : (d_new > d_old ? "split" : "concat");
          dr.reshards.push_back(op);
          for (uint32_t k : from) wanted.insert({static_cast<uint32_t>(layer), k});
        }
        for (const auto& [layer, rank] : wanted) {
          const BitmapEntry* entry = bitmap.find(layer, rank);
          if (!entry || entry->locations.empty()) {
            throw UnrecoverableError(
                "shard layer" + std::to_string(layer) + "/tp" + std::to_string(rank)
                + " has no recorded location; unrecoverable (cloud replica missing)");
          }
          FetchOp fetch;
          fetch.layer = layer;
          fetch.old_tp_rank = rank;
          fetch.bytes = entry->bytes;
          // Tier preference: this device's node, a peer node, then the cloud.
          const ShardLocation* same_node = nullptr;
          const ShardLocation* peer = nullptr;
          const ShardLocation* cloud = nullptr;
          for (const auto& loc : entry->locations) {
            if (loc.cloud) {
              if (!cloud) cloud = &loc;
            } else if (loc.node_id == dr.device.node_id) {
              same_node = &loc;
            } else if (!peer || loc.node_id < peer->node_id) {
              peer = &loc;
            }
          }
          if (same_node) {
            fetch.tier = FetchTier::local;
            fetch.source = *same_node;
          } else if (peer) {
            fetch.tier = FetchTier::peer;
            fetch.source = *peer;
          } else {
            fetch.tier = FetchTier::cloud;
            fetch.source = *cloud;
          }
          dr.fetches.push_back(fetch);
        }
        for (const auto& f : dr.fetches) {
          dr.est_seconds += static_cast<double>(f.bytes) / tier_bandwidth(spec, f.tier);
        }
        double cloud_only = 0;
        for (const auto& f : dr.fetches) {
          cloud_only += static_cast<double>(f.bytes) / spec.cloud_bw;
        }
        rp.est_seconds = std::max(rp.est_seconds, dr.est_seconds);
        rp.est_seconds_cloud_only = std::max(rp.est_seconds_cloud_only, cloud_only);
        rp.targets.push_back(std::move(dr));
      }
    }
  }
  // Tier totals count each shard once per tier it is pulled from: the bytes a
  // storage tier actually serves, independent of replica fan-out.
  std::set<std::tuple<uint32_t, uint32_t, int>> tier_seen;
  for (const auto& dr : rp.targets) {
    for (const auto& f : dr.fetches) {
      if (!tier_seen.insert({f.layer, f.old_tp_rank, static_cast<int>(f.tier)}).second) {
        continue;
      }
      switch (f.tier) {
        case FetchTier::local: rp.local_bytes += f.bytes; break;
        case FetchTier::peer: rp.peer_bytes += f.bytes; break;
        case FetchTier::cloud: rp.cloud_bytes += f.bytes; break;
      }
    }
  }
  return rp;
}

std::string recovery_to_json(const RecoveryPlan& rp) {
  json targets = json::array();
  for (const auto& dr : rp.targets) {
    json fetches = json::array();
    for (const auto& f : dr.fetches) {
      fetches.push_back({{"layer", f.layer},
                         {"tp_rank", f.old_tp_rank},
                         {"tier", tier_name(f.tier)},
                         {"source", f.source.str()},
                         {"bytes", f.bytes}});
    }
    json reshards = json::array();
    for (const auto& op : dr.reshards) {
      reshards.push_back({{"layer", op.layer},
                          {"op", op.op},
                          {"from_ranks", op.from_ranks},
                          {"to_rank", op.to_rank}});
    }
    targets.push_back({{"device", {{"node", dr.device.node_id}, {"rank", dr.device.local_rank}}},
                       {"new_tp_rank", dr.new_tp_rank},
                       {"fetches", fetches},
                       {"reshards", reshards},
                       {"est_seconds", dr.est_seconds}});
  }
  json doc{{"step", rp.step},
           {"tp_old", rp.tp_old},
           {"tp_new", rp.tp_new},
           {"targets", targets},
           {"totals",
            {{"local_bytes", rp.local_bytes},
             {"peer_bytes", rp.peer_bytes},
             {"cloud_bytes", rp.cloud_bytes},
             {"est_seconds", rp.est_seconds},
             {"est_seconds_cloud_only", rp.est_seconds_cloud_only}}}};
  return doc.dump(2) + "\n";
}

RecoveryPlan recovery_from_json(const std::string& text) {
  try {
    json doc = json::parse(text);
    RecoveryPlan rp;
    rp.step = doc.at("step").get<uint64_t>();
    rp.tp_old = doc.at("tp_old").get<uint32_t>();
    rp.tp_new = doc.at("tp_new").get<uint32_t>();
    for (const auto& t : doc.at("targets")) {
      DeviceRecovery dr;
      dr.device = {t.at("device").at("node").get<int>(), t.at("device").at("rank").get<int>()};
      dr.new_tp_rank = t.at("new_tp_rank").get<uint32_t>();
      for (const auto& f : t.at("fetches")) {
        FetchOp op;
        op.layer = f.at("layer").get<uint32_t>();
        op.old_tp_rank = f.at("tp_rank").get<uint32_t>();
        op.tier = tier_from_name(f.at("tier").get<std::string>());
        op.source = ShardLocation::parse(f.at("source").get<std::string>());
        op.bytes = f.at("bytes").get<uint64_t>();
        dr.fetches.push_back(op);
      }
      for (const auto& r : t.at("reshards")) {
        ReshardOp op;
        op.layer = r.at("layer").get<uint32_t>();
        op.op = r.at("op").get<std::string>();
        op.from_ranks = r.at("from_ranks").get<std::vector<uint32_t>>();
        op.to_rank = r.at("to_rank").get<uint32_t>();
        dr.reshards.push_back(op);
      }
      dr.est_seconds = t.at("est_seconds").get<double>();
      rp.targets.push_back(std::move(dr));
    }
    const json& totals = doc.at("totals");
    rp.local_bytes = totals.at("local_bytes").get<uint64_t>();
    rp.peer_bytes = totals.at("peer_bytes").get<uint64_t>();
    rp.cloud_bytes = totals.at("cloud_bytes").get<uint64_t>();
    rp.est_seconds = totals.at("est_seconds").get<double>();
    rp.est_seconds_cloud_only = totals.at("est_seconds_cloud_only").get<double>();
    return rp;
  } catch (const json::exception& e) {
    throw ParseError(std::string("recovery plan: ") + e.what());
  }
}

std::map<DeviceId, std::vector<LayerShard>> execute_recovery(const RecoveryPlan& rp,
                                                             const std::string& root) {
  CheckpointManifest manifest = manifest_from_json(read_text_file(root + "/manifest.json"));
  if (manifest.step != rp.step) {
    throw UnrecoverableError("mixed-step recovery rejected: manifest step "
                             + std::to_string(manifest.step) + " vs recovery plan step "
                             + std::to_string(rp.step));
  }
  auto digest_of = [&manifest](uint32_t layer, uint32_t rank) -> const ShardInfo& {
    for (const auto& l : manifest.layers) {
      if (l.layer != layer) continue;
      for (const auto& s : l.shards) {
        if (s.tp_rank == rank) return s;
      }
    }
    throw UnrecoverableError("manifest has no shard for layer " + std::to_string(layer)
                             + " tp_rank " + std::to_string(rank));
  };

  std::map<DeviceId, std::vector<LayerShard>> restored;
  for (const auto& dr : rp.targets) {
    // Fetch phase: read every planned shard from its chosen source, checking
    // content digests against the manifest.
    std::map<std::pair<uint32_t, uint32_t>, LayerShard> fetched;
    for (const auto& f : dr.fetches) {
      const ShardInfo& info = digest_of(f.layer, f.old_tp_rank);
      const std::string dir = f.source.cloud ? cloud_store_dir(root)
                                             : node_store_dir(root, f.source.node_id);
      const std::string path = dir + "/" + info.file;
      std::ifstream in(path, std::ios::binary);
      if (!in) throw UnrecoverableError("cannot read shard " + path);
      std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
      if (shard_digest(bytes) != info.digest) {
        throw UnrecoverableError("digest mismatch for " + path);
      }
      LayerShard shard = deserialize_shard(bytes);
      if (shard.step != rp.step) {
        throw UnrecoverableError("mixed-step recovery rejected: shard " + path
                                 + " is from step " + std::to_string(shard.step));
      }
      fetched[{f.layer, f.old_tp_rank}] = std::move(shard);
    }
    // Reshard phase.
    std::vector<LayerShard> layers;
    for (const auto& op : dr.reshards) {
      std::vector<LayerShard> sources;
      for (uint32_t k : op.from_ranks) {
        auto it = fetched.find({op.layer, k});
        HP_CHECK(it != fetched.end(), "reshard sources were fetched");
        sources.push_back(it->second);
      }
      layers.push_back(cut_new_shard(sources, op.to_rank, rp.tp_old, rp.tp_new));
    }
    std::sort(layers.begin(), layers.end(),
              [](const LayerShard& a, const LayerShard& b) { return a.layer_id < b.layer_id; });
    restored[dr.device] = std::move(layers);
  }
  return restored;
}

}  // namespace hetplan
