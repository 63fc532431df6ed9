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
#include "hetplan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>

#include "hetplan/cost.hpp"
#include "hetplan/grouping.hpp"
#include "hetplan/partition.hpp"
#include "hetplan/stage_map.hpp"
#include "hetplan/util.hpp"

namespace hetplan {

namespace {

std::vector<GroupingDevice> grouping_devices(const ClusterSpec& spec,
                                             const std::map<std::string, double>* powers) {
  std::vector<GroupingDevice> out;
  for (const auto& d : spec.all_devices()) {
    const GpuType& t = spec.type_of(d);
    double g = t.compute_power;
    if (powers) {
      auto it = powers->find(t.name);
      if (it == powers->end()) {
        throw InvalidArgumentError("derived powers missing GPU type " + t.name);
      }
      g = it->second;
    }
    out.push_back({d, t.name, g, t.memory});
  }
  return out;
}

// Assemble one candidate plan from a grouping; throws InfeasibleError when the
// layer partition cannot satisfy the per-stage memory constraint.
ParallelPlan assemble(const ClusterSpec& spec, const ModelConfig& cfg,
                      const ProfileTable& profile, const MemoryModel& memmodel,
                      const PlannerOptions& options, int tp_dim,
                      const GroupingSolution& grouping) {
  StageMapping mapping = map_nodes_and_stages(spec, grouping, tp_dim);

  ParallelPlan plan;
  plan.tp_dim = tp_dim;
  plan.n_layers = cfg.n_layers;
  plan.n_microbatches_total = cfg.n_microbatches;
  plan.grouping.objective = grouping.objective;
  plan.grouping.z = grouping.z;
  plan.grouping.optimal = grouping.optimal;
  plan.sync_overlap = options.sync_overlap == SyncOverlap::sum ? "sum" : "max";

  const auto microbatch_split =
      split_microbatches(cfg.n_microbatches, static_cast<int>(mapping.groups.size()));

  for (size_t j = 0; j < mapping.groups.size(); ++j) {
    const auto& stages = mapping.groups[j].stages;
    PartitionProblem pp;
    pp.n_layers = cfg.n_layers;
    pp.n_microbatches = microbatch_split[j];
    pp.tp_dim = tp_dim;
    pp.profile = &profile;
    pp.memmodel = &memmodel;
    pp.config = &cfg;
    pp.allow_zero_layers = options.allow_zero_layer_stages;
    for (const auto& slot : stages) {
      const GpuType& t = spec.gpu_types.at(slot.unit.gpu_type);
      pp.stages.push_back({slot.unit.gpu_type, t.compute_power, t.memory, slot.stage_index});
    }
    Partition part = balance_workload(pp);

    GroupPlan group;
    group.microbatches = microbatch_split[j];
    int cursor = 0;
    const int P = static_cast<int>(stages.size());
    for (int i = 0; i < P; ++i) {
      StagePlan st;
      st.stage_index = stages[i].stage_index;
      st.gpu_type = stages[i].unit.gpu_type;
      st.devices = stages[i].unit.devices;
      st.layer_begin = cursor;
      st.layer_end = cursor + part.layers[i];
      cursor = st.layer_end;
      st.est_time_s = part.stage_times[i];
      st.est_mem_bytes = estimate_memory(memmodel, cfg, part.layers[i], st.stage_index, P,
                                         tp_dim);
      st.mem_capacity_bytes = spec.gpu_types.at(st.gpu_type).memory;
      group.stages.push_back(std::move(st));
    }
    plan.groups.push_back(std::move(group));
  }

  plan.cost = estimate_iteration(plan, profile, cfg, spec, options.sync_overlap);
  plan.validate();
  return plan;
}

}  // namespace

ParallelPlan plan_cluster(const ClusterSpec& spec, const ModelConfig& cfg,
                          const ProfileTable& profile, const MemoryModel& memmodel,
                          const PlannerOptions& options) {
  std::vector<int> tp_dims = options.tp_dims;
  const std::vector<int> valid = enumerate_tp_dims(spec);
  if (tp_dims.empty()) {
    tp_dims = valid;
  } else {
    std::sort(tp_dims.begin(), tp_dims.end());
    tp_dims.erase(std::unique(tp_dims.begin(), tp_dims.end()), tp_dims.end());
  }

  std::optional<std::map<std::string, double>> derived;
  if (options.derive_power) {
    std::string ref = options.power_reference;
    if (ref.empty()) ref = spec.gpu_types.begin()->first;
    derived = derive_power(profile, ref, 1);
  }

  std::optional<ParallelPlan> best;
  std::vector<CandidateSummary> summaries;

  for (int tp : tp_dims) {
    CandidateSummary summary;
    summary.tp_dim = tp;
    if (std::find(valid.begin(), valid.end(), tp) == valid.end()) {
      summary.status = "infeasible: tp_dim does not divide every node's GPU count "
                       "(divisibility)";
      summaries.push_back(summary);
      continue;
    }
    GroupingProblem gp;
    gp.devices = grouping_devices(spec, derived ? &*derived : nullptr);
    gp.tp_dim = tp;
    gp.n_microbatches = cfg.n_microbatches;
    gp.min_mem = options.min_mem_override > 0 ? options.min_mem_override
                                              : memmodel.required_group_memory(cfg, tp);
    double total_mem = 0;
    for (const auto& d : gp.devices) total_mem += d.memory;
    gp.big_l = std::max(total_mem, gp.min_mem) * 2 + 1;
    gp.exact_threshold = options.exact_threshold;
    gp.node_budget = options.node_budget;
    gp.top_k = options.top_k;

    std::vector<GroupingSolution> groupings;
    try {
      groupings = solve_grouping_topk(gp);
    } catch (const InfeasibleError& e) {
      summary.status = std::string("infeasible: ") + e.what();
      summaries.push_back(summary);
      continue;
    }

    bool produced = false;
    std::string last_error;
    for (const auto& grouping : groupings) {
      try {
        ParallelPlan candidate =
            assemble(spec, cfg, profile, memmodel, options, tp, grouping);
        summary.grouping_objective = grouping.objective;
        summary.t_star = candidate.cost.t_star;
        summary.status = "candidate";
        produced = true;
        if (!best || candidate.cost.t_star < best->cost.t_star) {
          best = std::move(candidate);
        }
        break;  // groupings are ordered best-first; take the first that maps
      } catch (const InfeasibleError& e) {
        last_error = e.what();
      }
    }
    if (!produced) {
      summary.status = "infeasible: " + last_error;
    }
    summaries.push_back(summary);
  }

  if (!best) {
    std::ostringstream os;
    os << "no feasible plan; per-TP-dimension binding constraints:";
    for (const auto& s : summaries) {
      os << "\n  tp=" << s.tp_dim << ": " << s.status;
    }
    throw InfeasibleError(os.str());
  }

  for (auto& s : summaries) {
    if (s.status == "candidate" && s.tp_dim == best->tp_dim) s.status = "selected";
  }
  best->candidates = summaries;

  if (options.validate_with_sim) {
    SimOptions sim_opts;
    sim_opts.combined_time = true;
    PlanSimResult sim = simulate_1f1b(*best, profile, cfg, spec, sim_opts);
    for (size_t j = 0; j < sim.groups.size(); ++j) {
      const double estimated = best->cost.per_group[j].total;
      const double simulated = sim.groups[j].pipeline.makespan;
      if (estimated > 0 && std::abs(simulated - estimated) / estimated > 0.01) {
        std::cerr << "warning: group " << j << " simulated makespan " << simulated
                  << "s diverges >1% from estimate " << estimated << "s\n";
      }
    }
  }
  return *best;
}

}  // namespace hetplan
