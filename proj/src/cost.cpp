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
#include "hetplan/cost.hpp"

#include <algorithm>

#include "hetplan/plan.hpp"
#include "hetplan/util.hpp"

namespace hetplan {

namespace {

// Forward activation (and its gradient on the way back) crossing the boundary
// between stage i and i+1; one tensor per microbatch, rank-matched links.
double boundary_seconds(const ClusterSpec& spec, const ModelConfig& cfg,
                        const StagePlan& a, const StagePlan& b) {
  double bw = 0;
  const size_t n = std::min(a.devices.size(), b.devices.size());
  for (size_t r = 0; r < n; ++r) {
    const double link = link_bandwidth(spec, a.devices[r], b.devices[r]);
    bw = r == 0 ? link : std::min(bw, link);
  }
  HP_CHECK(bw > 0, "boundary link has positive bandwidth");
  return cfg.per_layer_activation_bytes / bw;
}

// Combined per-stage, per-microbatch time: profiled compute plus this stage's
// outbound transfers (activation forward, gradient backward).
std::vector<double> stage_times_with_comm(const GroupPlan& group, const ProfileTable& profile,
                                          const ModelConfig& cfg, const ClusterSpec& spec,
                                          int tp_dim, std::vector<double>* fwd_send,
                                          std::vector<double>* bwd_send) {
  const int P = static_cast<int>(group.stages.size());
  std::vector<double> tau(std::max(0, P - 1), 0);
  for (int i = 0; i + 1 < P; ++i) {
    tau[i] = boundary_seconds(spec, cfg, group.stages[i], group.stages[i + 1]);
  }
  std::vector<double> times(P, 0);
  if (fwd_send) fwd_send->assign(P, 0);
  if (bwd_send) bwd_send->assign(P, 0);
  for (int i = 0; i < P; ++i) {
    const auto& st = group.stages[i];
    double t = estimate_stage_time(profile, st.gpu_type, tp_dim, st.layer_count());
    if (i + 1 < P) {
      t += tau[i];
      if (fwd_send) (*fwd_send)[i] = tau[i];
    }
    if (i > 0) {
      t += tau[i - 1];
      if (bwd_send) (*bwd_send)[i] = tau[i - 1];
    }
    times[i] = t;
  }
  return times;
}

}  // namespace

SyncSpec estimate_sync(const ParallelPlan& plan, const ModelConfig& cfg,
                       const ClusterSpec& spec, SyncOverlap overlap) {
  SyncSpec sync;
  for (int layer = 0; layer < plan.n_layers; ++layer) {
    LayerRing ring;
    ring.layer = layer;
    ring.grad_bytes = cfg.per_layer_param_bytes;
    for (size_t j = 0; j < plan.groups.size(); ++j) {
      for (const auto& st : plan.groups[j].stages) {
        if (layer >= st.layer_begin && layer < st.layer_end) {
          ring.holders.push_back({static_cast<int>(j), st.stage_index, st.devices.front()});
          break;
        }
      }
    }
    HP_CHECK(!ring.holders.empty(), "every layer is held by at least one group");
    const int d = static_cast<int>(ring.holders.size());
    if (d >= 2) {
      // Canonical ring: representatives ordered by global rank; the slowest
      // consecutive link (cyclically) paces the whole ring.
      std::sort(ring.holders.begin(), ring.holders.end(),
                [&spec](const LayerRing::Holder& a, const LayerRing::Holder& b) {
                  return spec.global_rank(a.representative)
                         < spec.global_rank(b.representative);
                });
      double min_bw = 0;
      for (int i = 0; i < d; ++i) {
        const double bw = link_bandwidth(spec, ring.holders[i].representative,
                                         ring.holders[(i + 1) % d].representative);
        min_bw = i == 0 ? bw : std::min(min_bw, bw);
      }
      ring.min_bandwidth = min_bw;
      // Ring allreduce moves 2(d-1)/d of the shard volume; per-TP-rank rings
      // run in parallel on disjoint devices, so one ring's volume is grad/tp.
      const double volume = ring.grad_bytes / plan.tp_dim;
      ring.seconds = 2.0 * (d - 1) / d * volume / min_bw;
      sync.total_bytes += 2.0 * (d - 1) / d * volume * plan.tp_dim;
    }
    sync.layers.push_back(std::move(ring));
  }
  double total = 0;
  for (const auto& ring : sync.layers) {
    total = overlap == SyncOverlap::sum ? total + ring.seconds
                                        : std::max(total, ring.seconds);
  }
  sync.total_seconds = total;
  return sync;
}

CostEstimate estimate_iteration(const ParallelPlan& plan, const ProfileTable& profile,
                                const ModelConfig& cfg, const ClusterSpec& spec,
                                SyncOverlap overlap) {
  CostEstimate est;
  double worst = 0;
  for (const auto& group : plan.groups) {
    const auto times = stage_times_with_comm(group, profile, cfg, spec, plan.tp_dim,
                                             nullptr, nullptr);
    GroupCost gc;
    gc.microbatches = group.microbatches;
    double peak = 0;
    for (double t : times) {
      gc.pipeline_fill += t;
      peak = std::max(peak, t);
    }
    gc.steady = (group.microbatches - 1) * peak;
    gc.total = gc.pipeline_fill + gc.steady;
    const int P = static_cast<int>(group.stages.size());
    gc.bubble_ratio = static_cast<double>(P - 1) / (group.microbatches + P - 1);
    worst = std::max(worst, gc.total);
    est.per_group.push_back(gc);
  }
  est.t_sync = estimate_sync(plan, cfg, spec, overlap).total_seconds;
  est.t_star = worst + est.t_sync;
  return est;
}

PlanSimResult simulate_1f1b(const ParallelPlan& plan, const ProfileTable& profile,
                            const ModelConfig& cfg, const ClusterSpec& spec,
                            const SimOptions& options) {
  HP_CHECK(options.fb_ratio >= 0, "backward/forward ratio is nonnegative");
  PlanSimResult result;
  for (const auto& group : plan.groups) {
    std::vector<double> fwd_send, bwd_send;
    std::vector<double> times = stage_times_with_comm(group, profile, cfg, spec,
                                                      plan.tp_dim, &fwd_send, &bwd_send);
    const int P = static_cast<int>(group.stages.size());
    std::vector<StageTiming> timings(P);
    for (int i = 0; i < P; ++i) {
      const double compute = times[i] - fwd_send[i] - bwd_send[i];
      if (options.combined_time) {
        timings[i].forward = compute;
        timings[i].backward = 0;
      } else {
        timings[i].forward = compute / (1.0 + options.fb_ratio);
        timings[i].backward = compute * options.fb_ratio / (1.0 + options.fb_ratio);
      }
      if (!options.zero_comm) {
        timings[i].send_forward = fwd_send[i];
        timings[i].send_backward = bwd_send[i];
      }
    }
    GroupSim gs;
    gs.microbatches = group.microbatches;
    gs.pipeline = simulate_pipeline(timings, group.microbatches);
    for (const auto& st : group.stages) gs.stage_devices.push_back(st.devices);
    result.makespan = std::max(result.makespan, gs.pipeline.makespan);
    result.groups.push_back(std::move(gs));
  }
  return result;
}

}  // namespace hetplan
