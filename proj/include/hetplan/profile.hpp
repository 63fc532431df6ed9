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
#ifndef HETPLAN_PROFILE_HPP_
#define HETPLAN_PROFILE_HPP_

#include <map>
#include <string>
#include <vector>

#include "hetplan/cluster.hpp"
#include "hetplan/types.hpp"

namespace hetplan {

// Static description of the model being trained. Byte coefficients are
// per transformer layer before tensor-parallel sharding.
struct ModelConfig {
  int n_layers = 0;
  double per_layer_param_bytes = 0;
  double per_layer_activation_bytes = 0;  // one microbatch's activations, one layer
  double optimizer_multiplier = 0;        // optimizer+gradient bytes per param byte
  int n_microbatches = 0;                 // total microbatches per iteration
  long long global_batch_tokens = 1;      // bookkeeping only
};

ModelConfig load_model_config(const std::string& text);
ModelConfig load_model_config_file(const std::string& path);

// Measured (or synthesized) forward+backward times for one microbatch through
// `layer_count` layers, keyed by GPU type and TP dimension. Only power-of-two
// layer counts are stored; estimate_stage_time composes arbitrary counts from
// the binary expansion.
class ProfileTable {
 public:
  void add(const std::string& gpu_type, int tp_dim, int layer_count, double seconds);
  bool has(const std::string& gpu_type, int tp_dim, int layer_count) const;
  double at(const std::string& gpu_type, int tp_dim, int layer_count) const;

  std::vector<std::string> gpu_types() const;
  std::vector<int> tp_dims(const std::string& gpu_type) const;
  std::vector<int> layer_counts(const std::string& gpu_type, int tp_dim) const;

  // Rows of "gpu_type tp_dim layer_count seconds"; '#' starts a comment.
  static ProfileTable parse(const std::string& text);
  static ProfileTable load_file(const std::string& path);
  std::string serialize() const;

 private:
  // (type, tp) -> layer_count -> seconds, all ordered for determinism
  std::map<std::pair<std::string, int>, std::map<int, double>> entries_;
};

// Estimated time for n_layers layers: sum of profiled power-of-two blocks
// selected by the binary digits of n_layers.
double estimate_stage_time(const ProfileTable& table, const std::string& gpu_type,
                           int tp_dim, int n_layers);

// Per-device memory model. Fixed part covers parameters, gradients and
// optimizer state; variable part covers in-flight forward activations, of
// which stage p of P holds at most min(K, P - p + 1) under 1F1B.
struct MemoryModel {
  double per_layer_param_bytes = 0;
  double per_layer_activation_bytes = 0;
  double optimizer_multiplier = 0;
  double min_mem_override = 0;  // 0 = derive from the model config

  static MemoryModel from_config(const ModelConfig& cfg);

  double fixed_per_layer(int layers, int tp_dim) const;
  double variable_per_layer(int layers, int stage_index, int total_stages, int n_microbatches,
                            int tp_dim) const;

  // Necessary bound on a DP group's summed device memory: every feasible
  // layer split needs the full (unsharded) fixed footprint plus one in-flight
  // microbatch of activations for every layer. Independent of tp_dim.
  double required_group_memory(const ModelConfig& cfg, int tp_dim) const;
};

double estimate_memory(const MemoryModel& mem, const ModelConfig& cfg, int layers,
                       int stage_index, int total_stages, int tp_dim);

// power(t) = T(reference)/T(t) at the largest layer count profiled for every
// type at tp_dim; the reference maps to 1.0.
std::map<std::string, double> derive_power(const ProfileTable& table,
                                           const std::string& reference_type, int tp_dim);

// Synthetic table for tests and dry runs: time = base_seconds / power * layers
// * tp_overhead(tp), with tp_overhead(tp) = (1 + 0.05*(tp-1)) / tp.
ProfileTable synthesize_profile(const ClusterSpec& spec, double base_seconds_per_layer,
                                int max_layers);

}  // namespace hetplan

#endif  // HETPLAN_PROFILE_HPP_
