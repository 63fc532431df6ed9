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
#include "hetplan/partition.hpp"

#include <algorithm>
#include <limits>

#include "hetplan/util.hpp"

namespace hetplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct StageEval {
  std::vector<double> time;   // time[l], l = 0..n_layers; inf if memory-infeasible
};

double stage_time(const PartitionProblem& pb, const PartitionStage& st, int layers) {
  if (layers == 0) return 0;
  if (pb.profile) {
    return estimate_stage_time(*pb.profile, st.gpu_type, pb.tp_dim, layers);
  }
  return static_cast<double>(layers) / st.compute_power;
}

bool memory_ok(const PartitionProblem& pb, const PartitionStage& st, int layers, int P) {
  if (!pb.memmodel) return true;
  HP_CHECK(pb.config != nullptr, "partition problem with a memory model carries a config");
  const double bytes =
      estimate_memory(*pb.memmodel, *pb.config, layers, st.stage_index, P, pb.tp_dim);
  return bytes <= st.memory;
}

}  // namespace

Partition balance_workload(const PartitionProblem& pb) {
  const int P = static_cast<int>(pb.stages.size());
  const int n = pb.n_layers;
  if (P == 0) throw InvalidArgumentError("balance_workload: no stages");
  const int min_layers = pb.allow_zero_layers ? 0 : 1;
  if (n < min_layers * P) {
    throw InfeasibleError("balance_workload: " + std::to_string(n) + " layers over "
                          + std::to_string(P) + " stages; every stage needs at least one");
  }

  std::vector<StageEval> eval(P);
  for (int i = 0; i < P; ++i) {
    eval[i].time.assign(n + 1, kInf);
    for (int l = min_layers; l <= n; ++l) {
      if (memory_ok(pb, pb.stages[i], l, P)) {
        eval[i].time[l] = stage_time(pb, pb.stages[i], l);
      }
    }
    if (pb.allow_zero_layers) eval[i].time[0] = 0;
  }

  // best[i][r]: minimal achievable bottleneck for stages i..P-1 holding r layers.
  std::vector<std::vector<double>> best(P + 1, std::vector<double>(n + 1, kInf));
  best[P][0] = 0;
  for (int i = P - 1; i >= 0; --i) {
    for (int r = 0; r <= n; ++r) {
      for (int l = min_layers; l <= r; ++l) {
        if (eval[i].time[l] == kInf) continue;
        if (best[i + 1][r - l] == kInf) continue;
        best[i][r] = std::min(best[i][r], std::max(eval[i].time[l], best[i + 1][r - l]));
      }
    }
  }
  const double bottleneck = best[0][n];
  if (bottleneck == kInf) {
    throw InfeasibleError(
        "balance_workload: no layer split fits every stage's memory capacity (the "
        "per-stage memory constraint is binding)");
  }

  // Reconstruct, giving earlier stages as many layers as the optimum allows.
  Partition out;
  int remaining = n;
  for (int i = 0; i < P; ++i) {
    int chosen = -1;
    for (int l = remaining; l >= min_layers; --l) {
      if (eval[i].time[l] <= bottleneck && best[i + 1][remaining - l] <= bottleneck) {
        chosen = l;
        break;
      }
    }
    HP_CHECK(chosen >= 0, "optimal bottleneck admits a witness split");
    out.layers.push_back(chosen);
    out.stage_times.push_back(eval[i].time[chosen]);
    remaining -= chosen;
  }
  HP_CHECK(remaining == 0, "layer counts sum to n_layers");
  out.bottleneck = *std::max_element(out.stage_times.begin(), out.stage_times.end());
  return out;
}

double idle_fraction(const Partition& partition, int n_microbatches) {
  const int P = static_cast<int>(partition.stage_times.size());
  if (P == 0) return 0;
  const int K = n_microbatches;
  double fill = 0, peak = 0, work = 0;
  for (double t : partition.stage_times) {
    fill += t;
    peak = std::max(peak, t);
    work += K * t;
  }
  const double makespan = fill + (K - 1) * peak;
  if (makespan <= 0) return 0;
  double idle = 1.0 - work / (P * makespan);
  return std::clamp(idle, 0.0, 1.0);
}

}  // namespace hetplan
