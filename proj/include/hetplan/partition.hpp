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
#ifndef HETPLAN_PARTITION_HPP_
#define HETPLAN_PARTITION_HPP_

#include <string>
#include <vector>

#include "hetplan/profile.hpp"

namespace hetplan {

struct PartitionStage {
  std::string gpu_type;
  double compute_power = 1;  // used when no profile table is supplied
  double memory = 0;         // per-device capacity, bytes
  int stage_index = 1;       // 1-based pipeline position
};

struct PartitionProblem {
  std::vector<PartitionStage> stages;
  int n_layers = 0;
  int n_microbatches = 1;
  int tp_dim = 1;
  const ProfileTable* profile = nullptr;   // nullptr -> time = layers / power
  const MemoryModel* memmodel = nullptr;   // nullptr -> no memory constraint
  const ModelConfig* config = nullptr;     // required when memmodel is set
  bool allow_zero_layers = false;
};

struct Partition {
  std::vector<int> layers;
  std::vector<double> stage_times;
  double bottleneck = 0;
};

// Minimize the slowest stage's time subject to sum(layers) == n_layers and the
// per-stage memory cap. Exact dynamic program over (stage, layers-remaining);
// among optima the earliest stages take as many layers as possible.
Partition balance_workload(const PartitionProblem& problem);

// 1 - sum_i(K * t_i) / (P * makespan) with the closed-form pipeline makespan.
double idle_fraction(const Partition& partition, int n_microbatches);

}  // namespace hetplan

#endif  // HETPLAN_PARTITION_HPP_
