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
#include "hetplan/profile.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hetplan/util.hpp"
#include "json.hpp"

namespace hetplan {

using nlohmann::json;

namespace {

bool is_power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }

}  // namespace

ModelConfig load_model_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  ModelConfig cfg;
  auto num = [&doc](const char* key) {
    if (!doc.contains(key) || !doc.at(key).is_number()) {
      throw ParseError(std::string("model config: missing numeric key '") + key + "'");
    }
    return doc.at(key).get<double>();
  };
  cfg.n_layers = static_cast<int>(num("n_layers"));
  cfg.per_layer_param_bytes = num("per_layer_param_bytes");
  cfg.per_layer_activation_bytes = num("per_layer_activation_bytes");
  cfg.optimizer_multiplier = num("optimizer_multiplier");
  cfg.n_microbatches = static_cast<int>(num("n_microbatches"));
  if (doc.contains("global_batch_tokens")) {
    cfg.global_batch_tokens = doc.at("global_batch_tokens").get<long long>();
  }
  if (cfg.n_layers <= 0 || cfg.per_layer_param_bytes <= 0 || cfg.per_layer_activation_bytes <= 0
      || cfg.optimizer_multiplier <= 0 || cfg.n_microbatches < 1 || cfg.global_batch_tokens <= 0) {
    throw ParseError("model config: all fields must be positive (n_microbatches >= 1)");
  }
  return cfg;
}

ModelConfig load_model_config_file(const std::string& path) {
  return load_model_config(read_text_file(path));
}

void ProfileTable::add(const std::string& gpu_type, int tp_dim, int layer_count,
                       double seconds) {
  if (!is_power_of_two(layer_count)) {
    throw ParseError("profile table: layer_count " + std::to_string(layer_count)
                     + " is not a power of two");
  }
  if (tp_dim < 1) throw ParseError("profile table: tp_dim must be >= 1");
  if (seconds <= 0) throw ParseError("profile table: seconds must be positive");
  auto& per_tp = entries_[{gpu_type, tp_dim}];
  per_tp[layer_count] = seconds;
  // Times must be nondecreasing in layer count within one (type, tp) series.
  double prev = 0;
  for (const auto& [n, t] : per_tp) {
    (void)n;
    if (t < prev) {
      throw ParseError("profile table: times for " + gpu_type + " tp=" + std::to_string(tp_dim)
                       + " are not nondecreasing in layer_count");
    }
    prev = t;
  }
}

bool ProfileTable::has(const std::string& gpu_type, int tp_dim, int layer_count) const {
  auto it = entries_.find({gpu_type, tp_dim});
  return it != entries_.end() && it->second.count(layer_count) > 0;
}

double ProfileTable::at(const std::string& gpu_type, int tp_dim, int layer_count) const {
  auto it = entries_.find({gpu_type, tp_dim});
  if (it == entries_.end() || !it->second.count(layer_count)) {
    throw InvalidArgumentError("profile table: no entry for " + gpu_type + " tp="
                               + std::to_string(tp_dim) + " layers="
                               + std::to_string(layer_count));
  }
  return it->second.at(layer_count);
}

std::vector<std::string> ProfileTable::gpu_types() const {
  std::vector<std::string> out;
  for (const auto& [key, _] : entries_) {
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  }
  return out;
}

std::vector<int> ProfileTable::tp_dims(const std::string& gpu_type) const {
  std::vector<int> out;
  for (const auto& [key, _] : entries_) {
    if (key.first == gpu_type) out.push_back(key.second);
  }
  return out;
}

std::vector<int> ProfileTable::layer_counts(const std::string& gpu_type, int tp_dim) const {
  std::vector<int> out;
  auto it = entries_.find({gpu_type, tp_dim});
  if (it != entries_.end()) {
    for (const auto& [n, _] : it->second) out.push_back(n);
  }
  return out;
}

ProfileTable ProfileTable::parse(const std::string& text) {
  ProfileTable table;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool any = false;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    std::string type;
    int tp = 0, layers = 0;
    double seconds = 0;
    if (!(row >> type)) continue;  // blank line
    if (!(row >> tp >> layers >> seconds)) {
      throw ParseError("profile table line " + std::to_string(lineno)
                       + ": expected 'gpu_type tp_dim layer_count seconds'");
    }
    std::string extra;
    if (row >> extra) {
      throw ParseError("profile table line " + std::to_string(lineno) + ": trailing tokens");
    }
    try {
      table.add(type, tp, layers, seconds);
    } catch (const ParseError& e) {
      throw ParseError("profile table line " + std::to_string(lineno) + ": " + e.what());
    }
    any = true;
  }
  if (!any) throw ParseError("profile table: no rows");
  return table;
}

ProfileTable ProfileTable::load_file(const std::string& path) {
  return parse(read_text_file(path));
}

std::string ProfileTable::serialize() const {
  std::ostringstream os;
  os << "# gpu_type tp_dim layer_count seconds\n";
  for (const auto& [key, per_tp] : entries_) {
    for (const auto& [layers, seconds] : per_tp) {
      os << key.first << " " << key.second << " " << layers << " "
         << format_double(seconds) << "\n";
    }
  }
  return os.str();
}

double estimate_stage_time(const ProfileTable& table, const std::string& gpu_type,
                           int tp_dim, int n_layers) {
  if (n_layers < 1) throw InvalidArgumentError("estimate_stage_time: n_layers must be >= 1");
  double total = 0;
  for (int bit = 0; (1 << bit) <= n_layers; ++bit) {
    if (n_layers & (1 << bit)) {
      total += table.at(gpu_type, tp_dim, 1 << bit);
    }
  }
  return total;
}

MemoryModel MemoryModel::from_config(const ModelConfig& cfg) {
  MemoryModel m;
  m.per_layer_param_bytes = cfg.per_layer_param_bytes;
  m.per_layer_activation_bytes = cfg.per_layer_activation_bytes;
  m.optimizer_multiplier = cfg.optimizer_multiplier;
  return m;
}

double MemoryModel::fixed_per_layer(int layers, int tp_dim) const {
  HP_CHECK(layers >= 0 && tp_dim >= 1, "fixed_per_layer arguments in range");
  return layers * per_layer_param_bytes * (1.0 + optimizer_multiplier) / tp_dim;
}

double MemoryModel::variable_per_layer(int layers, int stage_index, int total_stages,
                                       int n_microbatches, int tp_dim) const {
  if (stage_index < 1 || stage_index > total_stages) {
    throw InvalidArgumentError("variable_per_layer: stage_index "
                               + std::to_string(stage_index) + " not in 1.."
                               + std::to_string(total_stages));
  }
  // Stage p keeps at most min(K, P - p + 1) microbatches' activations alive.
  int in_flight = std::min(n_microbatches, total_stages - stage_index + 1);
  return layers * per_layer_activation_bytes * in_flight / tp_dim;
}

double MemoryModel::required_group_memory(const ModelConfig& cfg, int tp_dim) const {
  if (min_mem_override > 0) return min_mem_override;
  // Group memory sums over every member device, so TP sharding cancels: the
  // tp_dim shards of a layer jointly occupy the full unsharded footprint.
  (void)tp_dim;
  return cfg.n_layers * per_layer_param_bytes * (1.0 + optimizer_multiplier)
         + cfg.n_layers * per_layer_activation_bytes;
}

double estimate_memory(const MemoryModel& mem, const ModelConfig& cfg, int layers,
                       int stage_index, int total_stages, int tp_dim) {
  if (layers == 0) return 0;
  return mem.fixed_per_layer(layers, tp_dim)
         + mem.variable_per_layer(layers, stage_index, total_stages, cfg.n_microbatches,
                                  tp_dim);
}

std::map<std::string, double> derive_power(const ProfileTable& table,
                                           const std::string& reference_type, int tp_dim) {
  auto types = table.gpu_types();
  if (std::find(types.begin(), types.end(), reference_type) == types.end()) {
    throw InvalidArgumentError("derive_power: reference type '" + reference_type
                               + "' not in profile table");
  }
  // Largest layer count present for every type at this tp_dim.
  std::vector<int> common = table.layer_counts(types.front(), tp_dim);
  for (const auto& t : types) {
    auto counts = table.layer_counts(t, tp_dim);
    std::vector<int> merged;
    std::set_intersection(common.begin(), common.end(), counts.begin(), counts.end(),
                          std::back_inserter(merged));
    common = std::move(merged);
  }
  if (common.empty()) {
    throw InvalidArgumentError("derive_power: no layer count profiled for every type at tp="
                               + std::to_string(tp_dim));
  }
  int anchor = common.back();
  double ref_time = table.at(reference_type, tp_dim, anchor);
  std::map<std::string, double> out;
  for (const auto& t : types) {
    out[t] = ref_time / table.at(t, tp_dim, anchor);
  }
  return out;
}

ProfileTable synthesize_profile(const ClusterSpec& spec, double base_seconds_per_layer,
                                int max_layers) {
  if (base_seconds_per_layer <= 0) {
    throw InvalidArgumentError("synthesize_profile: base seconds must be positive");
  }
  if (max_layers < 1) throw InvalidArgumentError("synthesize_profile: max_layers must be >= 1");
  // TP dims worth emitting: divisors of each node's GPU count, union over nodes.
  std::vector<int> tps;
  for (const auto& nd : spec.nodes) {
    for (int t = 1; t <= nd.gpu_count; ++t) {
      if (nd.gpu_count % t == 0 && std::find(tps.begin(), tps.end(), t) == tps.end()) {
        tps.push_back(t);
      }
    }
  }
  std::sort(tps.begin(), tps.end());
  ProfileTable table;
  for (const auto& [name, type] : spec.gpu_types) {
    for (int tp : tps) {
      double overhead = (1.0 + 0.05 * (tp - 1)) / tp;
      for (int n = 1; n <= max_layers; n *= 2) {
        table.add(name, tp, n, base_seconds_per_layer / type.compute_power * n * overhead);
      }
    }
  }
  return table;
}

}  // namespace hetplan
