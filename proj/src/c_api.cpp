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
#include "hetplan/c_api.h"

#include <cstring>
#include <filesystem>
#include <sstream>

#include "hetplan/checkpoint.hpp"
#include "hetplan/cluster.hpp"
#include "hetplan/cost.hpp"
#include "hetplan/plan.hpp"
#include "hetplan/planner.hpp"
#include "hetplan/profile.hpp"
#include "hetplan/recovery.hpp"
#include "hetplan/util.hpp"
#include "json.hpp"

using nlohmann::json;

/* Opaque handle definitions. */
struct hp_cluster {
  hetplan::ClusterSpec spec;
};
struct hp_model {
  hetplan::ModelConfig config;
  hetplan::MemoryModel memory;
};
struct hp_profile {
  hetplan::ProfileTable table;
};
struct hp_plan {
  hetplan::ParallelPlan plan;
};
struct hp_sim_result {
  hetplan::PlanSimResult sim;
};
struct hp_recovery {
  hetplan::RecoveryPlan plan;
};

namespace {

thread_local std::string g_last_error;

hp_status classify(const std::exception& e) {
  g_last_error = e.what();
  if (dynamic_cast<const hetplan::ParseError*>(&e)) return HP_PARSE_ERROR;
  if (dynamic_cast<const hetplan::InfeasibleError*>(&e)) return HP_INFEASIBLE;
  if (dynamic_cast<const hetplan::UnrecoverableError*>(&e)) return HP_UNRECOVERABLE;
  if (dynamic_cast<const hetplan::InvalidArgumentError*>(&e)) return HP_INVALID_ARGUMENT;
  return HP_INTERNAL_ERROR;
}

template <typename Fn>
hp_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return HP_OK;
  } catch (const std::exception& e) {
    return classify(e);
  } catch (...) {
    g_last_error = "unknown error";
    return HP_INTERNAL_ERROR;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

hp_status require(bool cond, const char* what) {
  if (!cond) {
    g_last_error = what;
    return HP_INVALID_ARGUMENT;
  }
  return HP_OK;
}

}  // namespace

extern "C" {

const char* hp_version(void) { return "0.1.0"; }

const char* hp_last_error(void) { return g_last_error.c_str(); }

void hp_string_free(char* s) { std::free(s); }

hp_status hp_cluster_load_file(const char* path, hp_cluster** out) {
  if (hp_status s = require(path && out, "null argument"); s != HP_OK) return s;
  return guarded([&] { *out = new hp_cluster{hetplan::load_cluster_file(path)}; });
}

hp_status hp_cluster_parse(const char* text, hp_cluster** out) {
  if (hp_status s = require(text && out, "null argument"); s != HP_OK) return s;
  return guarded([&] { *out = new hp_cluster{hetplan::load_cluster_spec(text)}; });
}

int hp_cluster_device_count(const hp_cluster* cluster) {
  return cluster ? cluster->spec.device_count() : 0;
}

hp_status hp_cluster_warnings(const hp_cluster* cluster, char** out) {
  if (hp_status s = require(cluster && out, "null argument"); s != HP_OK) return s;
  return guarded([&] { *out = dup_string(hetplan::join(cluster->spec.warnings, "\n")); });
}

void hp_cluster_free(hp_cluster* cluster) { delete cluster; }

hp_status hp_model_load_file(const char* path, hp_model** out) {
  if (hp_status s = require(path && out, "null argument"); s != HP_OK) return s;
  return guarded([&] {
    auto cfg = hetplan::load_model_config_file(path);
    *out = new hp_model{cfg, hetplan::MemoryModel::from_config(cfg)};
  });
}

hp_status hp_model_parse(const char* text, hp_model** out) {
  if (hp_status s = require(text && out, "null argument"); s != HP_OK) return s;
  return guarded([&] {
    auto cfg = hetplan::load_model_config(text);
    *out = new hp_model{cfg, hetplan::MemoryModel::from_config(cfg)};
  });
}

void hp_model_free(hp_model* model) { delete model; }

hp_status hp_profile_load_file(const char* path, hp_profile** out) {
  if (hp_status s = require(path && out, "null argument"); s != HP_OK) return s;
  return guarded([&] { *out = new hp_profile{hetplan::ProfileTable::load_file(path)}; });
}

hp_status hp_profile_parse(const char* text, hp_profile** out) {
  if (hp_status s = require(text && out, "null argument"); s != HP_OK) return s;
  return guarded([&] { *out = new hp_profile{hetplan::ProfileTable::parse(text)}; });
}

hp_status hp_profile_synth(const hp_cluster* cluster, double base_seconds_per_layer,
                           int max_layers, hp_profile** out) {
  if (hp_status s = require(cluster && out, "null argument"); s != HP_OK) return s;
  return guarded([&] {
    *out = new hp_profile{
        hetplan::synthesize_profile(cluster->spec, base_seconds_per_layer, max_layers)};
  });
}

hp_status hp_profile_write_file(const hp_profile* profile, const char* path) {
  if (hp_status s = require(profile && path, "null argument"); s != HP_OK) return s;
  return guarded([&] { hetplan::write_text_file(path, profile->table.serialize()); });
}

void hp_profile_free(hp_profile* profile) { delete profile; }

void hp_plan_options_init(hp_plan_options* options) {
  if (!options) return;
  options->tp_dims = nullptr;
  options->n_tp_dims = 0;
  options->min_mem_override = 0;
  options->exact_threshold = 8;
  options->node_budget = 5'000'000;
  options->top_k = 1;
  options->sync_overlap_max = 0;
  options->validate_with_sim = 0;
  options->derive_power = 0;
  options->power_reference = nullptr;
}

hp_status hp_plan_compute(const hp_cluster* cluster, const hp_model* model,
                          const hp_profile* profile, const hp_plan_options* options,
                          hp_plan** out) {
  if (hp_status s = require(cluster && model && profile && out, "null argument"); s != HP_OK) {
    return s;
  }
  return guarded([&] {
    hetplan::PlannerOptions po;
    if (options) {
      for (int i = 0; i < options->n_tp_dims; ++i) po.tp_dims.push_back(options->tp_dims[i]);
      po.min_mem_override = options->min_mem_override;
      po.exact_threshold = options->exact_threshold;
      po.node_budget = options->node_budget;
      po.top_k = options->top_k;
      po.sync_overlap = options->sync_overlap_max ? hetplan::SyncOverlap::max
                                                  : hetplan::SyncOverlap::sum;
      po.validate_with_sim = options->validate_with_sim != 0;
      po.derive_power = options->derive_power != 0;
      if (options->power_reference) po.power_reference = options->power_reference;
    }
    *out = new hp_plan{hetplan::plan_cluster(cluster->spec, model->config, profile->table,
                                             model->memory, po)};
  });
}

hp_status hp_plan_load_file(const char* path, hp_plan** out) {
  if (hp_status s = require(path && out, "null argument"); s != HP_OK) return s;
  return guarded([&] { *out = new hp_plan{hetplan::load_plan_file(path)}; });
}

hp_status hp_plan_write_file(const hp_plan* plan, const char* path) {
  if (hp_status s = require(plan && path, "null argument"); s != HP_OK) return s;
  return guarded([&] { hetplan::write_plan_file(plan->plan, path); });
}

hp_status hp_plan_to_json(const hp_plan* plan, char** out) {
  if (hp_status s = require(plan && out, "null argument"); s != HP_OK) return s;
  return guarded([&] { *out = dup_string(hetplan::plan_to_json(plan->plan)); });
}

hp_status hp_plan_explain(const hp_plan* plan, char** out) {
  if (hp_status s = require(plan && out, "null argument"); s != HP_OK) return s;
  return guarded([&] { *out = dup_string(hetplan::explain(plan->plan)); });
}

void hp_plan_free(hp_plan* plan) { delete plan; }

hp_status hp_estimate_to_json(const hp_plan* plan, const hp_cluster* cluster,
                              const hp_model* model, const hp_profile* profile, char** out) {
  if (hp_status s = require(plan && cluster && model && profile && out, "null argument");
      s != HP_OK) {
    return s;
  }
  return guarded([&] {
    const auto overlap = plan->plan.sync_overlap == "max" ? hetplan::SyncOverlap::max
                                                          : hetplan::SyncOverlap::sum;
    const auto est = hetplan::estimate_iteration(plan->plan, profile->table, model->config,
                                                 cluster->spec, overlap);
    const auto sync = hetplan::estimate_sync(plan->plan, model->config, cluster->spec,
                                             overlap);
    json per_group = json::array();
    for (const auto& g : est.per_group) {
      per_group.push_back({{"pipeline_fill_s", g.pipeline_fill},
                           {"steady_s", g.steady},
                           {"total_s", g.total},
                           {"bubble_ratio", g.bubble_ratio},
                           {"microbatches", g.microbatches}});
    }
    json rings = json::array();
    for (const auto& ring : sync.layers) {
      json holders = json::array();
      for (const auto& h : ring.holders) {
        holders.push_back({{"group", h.group},
                           {"stage_index", h.stage_index},
                           {"device", {{"node", h.representative.node_id},
                                       {"rank", h.representative.local_rank}}}});
      }
      rings.push_back({{"layer", ring.layer},
                       {"replicas", ring.holders.size()},
                       {"holders", holders},
                       {"grad_bytes", ring.grad_bytes},
                       {"min_bandwidth", ring.min_bandwidth},
                       {"seconds", ring.seconds}});
    }
    json doc{{"t_star_s", est.t_star},
             {"t_sync_s", est.t_sync},
             {"per_group", per_group},
             {"sync", {{"total_seconds", sync.total_seconds},
                       {"total_bytes", sync.total_bytes},
                       {"layers", rings}}}};
    *out = dup_string(doc.dump(2) + "\n");
  });
}

void hp_sim_options_init(hp_sim_options* options) {
  if (!options) return;
  options->combined_time = 0;
  options->fb_ratio = 2.0;
  options->zero_comm = 0;
}

hp_status hp_simulate(const hp_plan* plan, const hp_cluster* cluster, const hp_model* model,
                      const hp_profile* profile, const hp_sim_options* options,
                      hp_sim_result** out) {
  if (hp_status s = require(plan && cluster && model && profile && out, "null argument");
      s != HP_OK) {
    return s;
  }
  return guarded([&] {
    hetplan::SimOptions so;
    if (options) {
      so.combined_time = options->combined_time != 0;
      so.fb_ratio = options->fb_ratio;
      so.zero_comm = options->zero_comm != 0;
    }
    *out = new hp_sim_result{
        hetplan::simulate_1f1b(plan->plan, profile->table, model->config, cluster->spec, so)};
  });
}

double hp_sim_makespan(const hp_sim_result* result) {
  return result ? result->sim.makespan : 0.0;
}

hp_status hp_sim_result_to_json(const hp_sim_result* result, char** out) {
  if (hp_status s = require(result && out, "null argument"); s != HP_OK) return s;
  return guarded([&] {
    json groups = json::array();
    for (const auto& g : result->sim.groups) {
      json peaks = json::array();
      for (int p : g.pipeline.peak_in_flight) peaks.push_back(p);
      json devices = json::array();
      const double makespan = g.pipeline.makespan;
      for (size_t stage = 0; stage < g.stage_devices.size(); ++stage) {
        for (const auto& d : g.stage_devices[stage]) {
          const double busy = g.pipeline.busy[stage];
          devices.push_back({{"device", d.str()},
                             {"busy_s", busy},
                             {"idle_fraction", makespan > 0 ? 1.0 - busy / makespan : 0.0}});
        }
      }
      groups.push_back({{"makespan_s", g.pipeline.makespan},
                        {"idle_fraction", g.pipeline.idle_fraction()},
                        {"microbatches", g.microbatches},
                        {"peak_in_flight", peaks},
                        {"devices", devices}});
    }
    json doc{{"makespan_s", result->sim.makespan}, {"groups", groups}};
    *out = dup_string(doc.dump(2) + "\n");
  });
}

hp_status hp_sim_timeline_csv(const hp_sim_result* result, char** out) {
  if (hp_status s = require(result && out, "null argument"); s != HP_OK) return s;
  return guarded([&] {
    std::ostringstream os;
    os << "device,event,microbatch,start_s,end_s\n";
    for (size_t gi = 0; gi < result->sim.groups.size(); ++gi) {
      const auto& g = result->sim.groups[gi];
      for (const auto& ev : g.pipeline.events) {
        for (const auto& d : g.stage_devices[ev.stage]) {
          os << d.str() << "," << ev.kind << "," << ev.microbatch << ","
             << hetplan::format_double(ev.start) << "," << hetplan::format_double(ev.end)
             << "\n";
        }
      }
    }
    *out = dup_string(os.str());
  });
}

void hp_sim_result_free(hp_sim_result* result) { delete result; }

hp_status hp_checkpoint_save(const hp_plan* plan, const char* root, unsigned long long step,
                             int hidden_dim, unsigned long long seed, int zero_optimizer) {
  if (hp_status s = require(plan && root, "null argument"); s != HP_OK) return s;
  return guarded([&] {
    std::filesystem::create_directories(root);
    auto state = hetplan::make_synthetic_state(plan->plan.n_layers, hidden_dim, seed, step,
                                               zero_optimizer != 0);
    hetplan::save_layerwise(state, plan->plan, step, root);
  });
}

hp_status hp_recovery_compute(const hp_plan* old_plan, const hp_plan* new_plan,
                              const char* bitmap_path, const hp_cluster* cluster,
                              hp_recovery** out) {
  if (hp_status s = require(old_plan && new_plan && bitmap_path && cluster && out,
                            "null argument");
      s != HP_OK) {
    return s;
  }
  return guarded([&] {
    auto bitmap = hetplan::bitmap_from_json(hetplan::read_text_file(bitmap_path));
    *out = new hp_recovery{
        hetplan::plan_recovery(old_plan->plan, new_plan->plan, bitmap, cluster->spec)};
  });
}

hp_status hp_recovery_load_file(const char* path, hp_recovery** out) {
  if (hp_status s = require(path && out, "null argument"); s != HP_OK) return s;
  return guarded([&] {
    *out = new hp_recovery{hetplan::recovery_from_json(hetplan::read_text_file(path))};
  });
}

hp_status hp_recovery_write_file(const hp_recovery* recovery, const char* path) {
  if (hp_status s = require(recovery && path, "null argument"); s != HP_OK) return s;
  return guarded([&] {
    hetplan::write_text_file(path, hetplan::recovery_to_json(recovery->plan));
  });
}

hp_status hp_recovery_to_json(const hp_recovery* recovery, char** out) {
  if (hp_status s = require(recovery && out, "null argument"); s != HP_OK) return s;
  return guarded([&] { *out = dup_string(hetplan::recovery_to_json(recovery->plan)); });
}

hp_status hp_recovery_execute(const hp_recovery* recovery, const char* root,
                              const char* out_dir) {
  if (hp_status s = require(recovery && root && out_dir, "null argument"); s != HP_OK) {
    return s;
  }
  return guarded([&] {
    auto restored = hetplan::execute_recovery(recovery->plan, root);
    for (const auto& [device, layers] : restored) {
      const std::string dir = std::string(out_dir) + "/" + device.str();
      std::filesystem::create_directories(dir);
      for (const auto& shard : layers) {
        hetplan::write_shard_file(
            dir + "/" + hetplan::shard_file_name(shard.layer_id, shard.tp_rank, shard.tp_dim),
            shard);
      }
    }
  });
}

void hp_recovery_free(hp_recovery* recovery) { delete recovery; }

} /* extern "C" */
