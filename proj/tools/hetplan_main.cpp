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

// Command-line front end. Deliberately built against the C API only, so it
// doubles as a living example of driving the shared library from C.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hetplan/c_api.h"
#include "json.hpp"

namespace {

int fail(hp_status status) {
  std::fprintf(stderr, "error: %s\n", hp_last_error());
  return static_cast<int>(status);
}

#define TRY(expr)                              \
  do {                                         \
    hp_status status_ = (expr);                \
    if (status_ != HP_OK) return fail(status_); \
  } while (0)

struct ClusterHandle {
  hp_cluster* ptr = nullptr;
  ~ClusterHandle() { hp_cluster_free(ptr); }
};
struct ModelHandle {
  hp_model* ptr = nullptr;
  ~ModelHandle() { hp_model_free(ptr); }
};
struct ProfileHandle {
  hp_profile* ptr = nullptr;
  ~ProfileHandle() { hp_profile_free(ptr); }
};
struct PlanHandle {
  hp_plan* ptr = nullptr;
  ~PlanHandle() { hp_plan_free(ptr); }
};
struct SimHandle {
  hp_sim_result* ptr = nullptr;
  ~SimHandle() { hp_sim_result_free(ptr); }
};
struct RecoveryHandle {
  hp_recovery* ptr = nullptr;
  ~RecoveryHandle() { hp_recovery_free(ptr); }
};
struct OwnedString {
  char* ptr = nullptr;
  ~OwnedString() { hp_string_free(ptr); }
};

void print_warnings(const hp_cluster* cluster) {
  OwnedString w;
  if (hp_cluster_warnings(cluster, &w.ptr) == HP_OK && w.ptr && w.ptr[0]) {
    std::fprintf(stderr, "warning: %s\n", w.ptr);
  }
}

bool write_file(const std::string& path, const char* content) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) return false;
  std::fputs(content, f);
  return std::fclose(f) == 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hetplan: 3D-parallel training planner, simulator and recovery engine "
               "for heterogeneous GPU clusters"};
  app.require_subcommand(1);

  // ---- plan ----
  std::string cluster_path, model_path, profile_path, out_path = "plan.json";
  std::vector<int> tp_dims;
  double min_mem = 0;
  int exact_threshold = 8;
  long long node_budget = 5'000'000;
  int top_k = 1;
  bool sync_max = false, validate_sim = false, derive_pow = false, quiet = false;
  std::string power_ref;
  auto* plan_cmd = app.add_subcommand("plan", "compute the minimum-cost parallel plan");
  plan_cmd->add_option("--cluster", cluster_path, "cluster spec JSON")->required();
  plan_cmd->add_option("--model", model_path, "model config JSON")->required();
  plan_cmd->add_option("--profile", profile_path, "profile table")->required();
  plan_cmd->add_option("--out", out_path, "output plan path (default plan.json)");
  plan_cmd->add_option("--tp-dims", tp_dims, "restrict the TP dimensions to try");
  plan_cmd->add_option("--min-mem", min_mem, "override MIN_mem in bytes");
  plan_cmd->add_option("--exact-threshold", exact_threshold,
                       "exhaustive grouping up to this many TP units");
  plan_cmd->add_option("--solver-budget", node_budget, "branch budget past the threshold");
  plan_cmd->add_option("--topk", top_k, "groupings retained per TP dimension");
  plan_cmd->add_flag("--sync-overlap-max", sync_max,
                     "assume per-layer sync rings overlap (default: serialized)");
  plan_cmd->add_flag("--validate-sim", validate_sim, "cross-check the cost via simulation");
  plan_cmd->add_flag("--derive-power", derive_pow, "derive powers from the profile table");
  plan_cmd->add_option("--power-reference", power_ref, "reference type for --derive-power");
  plan_cmd->add_flag("--quiet", quiet, "suppress the plan summary");

  // ---- simulate ----
  std::string plan_path, timeline_path;
  bool combined = false, zero_comm = false, compare = false;
  double fb_ratio = 2.0;
  auto* sim_cmd = app.add_subcommand("simulate", "event-driven 1F1B simulation of a plan");
  sim_cmd->add_option("--plan", plan_path, "plan JSON")->required();
  sim_cmd->add_option("--cluster", cluster_path, "cluster spec JSON")->required();
  sim_cmd->add_option("--model", model_path, "model config JSON")->required();
  sim_cmd->add_option("--profile", profile_path, "profile table")->required();
  sim_cmd->add_flag("--combined-time", combined, "forward = full stage time, backward = 0");
  sim_cmd->add_option("--fb-ratio", fb_ratio, "backward/forward time ratio (default 2)");
  sim_cmd->add_flag("--zero-comm", zero_comm, "drop boundary transfers");
  sim_cmd->add_flag("--compare-estimate", compare,
                    "print |simulated - estimated| per group and flag >1%");
  sim_cmd->add_option("--timeline", timeline_path, "write a CSV timeline here");

  // ---- explain ----
  auto* explain_cmd = app.add_subcommand("explain", "describe a plan in plain text");
  explain_cmd->add_option("--plan", plan_path, "plan JSON")->required();

  // ---- save-ckpt ----
  std::string root = "ckpt";
  unsigned long long step = 0, seed = 1;
  int hidden = 64;
  bool zero_opt = false;
  auto* save_cmd = app.add_subcommand("save-ckpt",
                                      "write a layer-wise checkpoint of a synthetic model");
  save_cmd->add_option("--plan", plan_path, "plan JSON")->required();
  save_cmd->add_option("--root", root, "checkpoint tree root (default ckpt)");
  save_cmd->add_option("--step", step, "training step recorded in the checkpoint");
  save_cmd->add_option("--hidden", hidden, "synthetic hidden size (default 64)");
  save_cmd->add_option("--seed", seed, "synthetic tensor seed");
  save_cmd->add_flag("--zero-opt", zero_opt, "zero-initialized optimizer state");

  // ---- recover-plan ----
  std::string old_plan_path, new_plan_path, bitmap_path, rp_out = "recovery.json";
  auto* recover_cmd = app.add_subcommand("recover-plan",
                                         "plan minimal-cost checkpoint recovery");
  recover_cmd->add_option("--old-plan", old_plan_path, "plan the checkpoint was saved under")
      ->required();
  recover_cmd->add_option("--new-plan", new_plan_path, "plan to restore into")->required();
  recover_cmd->add_option("--bitmap", bitmap_path, "layer bitmap JSON")->required();
  recover_cmd->add_option("--cluster", cluster_path, "cluster spec JSON")->required();
  recover_cmd->add_option("--out", rp_out, "output recovery plan path");

  // ---- restore ----
  std::string rp_path, restore_out = "restored";
  auto* restore_cmd = app.add_subcommand("restore", "execute a recovery plan");
  restore_cmd->add_option("--recovery-plan", rp_path, "recovery plan JSON")->required();
  restore_cmd->add_option("--root", root, "checkpoint tree root")->required();
  restore_cmd->add_option("--out", restore_out, "directory for restored per-device shards");

  // ---- synth-profile ----
  double base_seconds = 0.05;
  int max_layers = 64;
  std::string profile_out = "profile.tbl";
  auto* synth_cmd = app.add_subcommand("synth-profile",
                                       "generate a synthetic profile table for a cluster");
  synth_cmd->add_option("--cluster", cluster_path, "cluster spec JSON")->required();
  synth_cmd->add_option("--base-seconds", base_seconds,
                        "per-layer seconds for a power-1.0 GPU at tp=1");
  synth_cmd->add_option("--max-layers", max_layers, "profile powers of two up to this");
  synth_cmd->add_option("--out", profile_out, "output table path");

  CLI11_PARSE(app, argc, argv);

  if (plan_cmd->parsed()) {
    ClusterHandle cluster;
    ModelHandle model;
    ProfileHandle profile;
    TRY(hp_cluster_load_file(cluster_path.c_str(), &cluster.ptr));
    print_warnings(cluster.ptr);
    TRY(hp_model_load_file(model_path.c_str(), &model.ptr));
    TRY(hp_profile_load_file(profile_path.c_str(), &profile.ptr));
    hp_plan_options options;
    hp_plan_options_init(&options);
    if (!tp_dims.empty()) {
      options.tp_dims = tp_dims.data();
      options.n_tp_dims = static_cast<int>(tp_dims.size());
    }
    options.min_mem_override = min_mem;
    options.exact_threshold = exact_threshold;
    options.node_budget = node_budget;
    options.top_k = top_k;
    options.sync_overlap_max = sync_max ? 1 : 0;
    options.validate_with_sim = validate_sim ? 1 : 0;
    options.derive_power = derive_pow ? 1 : 0;
    if (!power_ref.empty()) options.power_reference = power_ref.c_str();
    PlanHandle plan;
    TRY(hp_plan_compute(cluster.ptr, model.ptr, profile.ptr, &options, &plan.ptr));
    TRY(hp_plan_write_file(plan.ptr, out_path.c_str()));
    if (!quiet) {
      OwnedString text;
      TRY(hp_plan_explain(plan.ptr, &text.ptr));
      std::fputs(text.ptr, stdout);
      std::printf("plan written to %s\n", out_path.c_str());
    }
    return 0;
  }

  if (sim_cmd->parsed()) {
    ClusterHandle cluster;
    ModelHandle model;
    ProfileHandle profile;
    PlanHandle plan;
    TRY(hp_cluster_load_file(cluster_path.c_str(), &cluster.ptr));
    TRY(hp_model_load_file(model_path.c_str(), &model.ptr));
    TRY(hp_profile_load_file(profile_path.c_str(), &profile.ptr));
    TRY(hp_plan_load_file(plan_path.c_str(), &plan.ptr));
    hp_sim_options options;
    hp_sim_options_init(&options);
    options.combined_time = combined ? 1 : 0;
    options.fb_ratio = fb_ratio;
    options.zero_comm = zero_comm ? 1 : 0;
    SimHandle sim;
    TRY(hp_simulate(plan.ptr, cluster.ptr, model.ptr, profile.ptr, &options, &sim.ptr));
    OwnedString json;
    TRY(hp_sim_result_to_json(sim.ptr, &json.ptr));
    if (!compare) {
      std::fputs(json.ptr, stdout);
    } else {
      OwnedString est;
      TRY(hp_estimate_to_json(plan.ptr, cluster.ptr, model.ptr, profile.ptr, &est.ptr));
      // Per-group |simulated - estimated| with a 1% divergence flag.
      nlohmann::json sim_doc = nlohmann::json::parse(json.ptr);
      nlohmann::json est_doc = nlohmann::json::parse(est.ptr);
      nlohmann::json comparison = nlohmann::json::array();
      const auto& sim_groups = sim_doc.at("groups");
      const auto& est_groups = est_doc.at("per_group");
      for (size_t g = 0; g < sim_groups.size() && g < est_groups.size(); ++g) {
        const double simulated = sim_groups[g].at("makespan_s").get<double>();
        const double estimated = est_groups[g].at("total_s").get<double>();
        const double diff = std::abs(simulated - estimated);
        const double rel = estimated > 0 ? diff / estimated : 0.0;
        comparison.push_back({{"group", g},
                              {"simulated_s", simulated},
                              {"estimated_s", estimated},
                              {"abs_diff_s", diff},
                              {"rel_diff", rel},
                              {"diverges_over_1pct", rel > 0.01}});
        if (rel > 0.01) {
          std::fprintf(stderr,
                       "warning: group %zu simulated %.6fs vs estimated %.6fs "
                       "(%.2f%% apart)\n",
                       g, simulated, estimated, rel * 100.0);
        }
      }
      nlohmann::json merged{{"simulation", sim_doc},
                            {"estimate", est_doc},
                            {"comparison", comparison}};
      std::fputs((merged.dump(2) + "\n").c_str(), stdout);
    }
    if (!timeline_path.empty()) {
      OwnedString csv;
      TRY(hp_sim_timeline_csv(sim.ptr, &csv.ptr));
      if (!write_file(timeline_path, csv.ptr)) {
        std::fprintf(stderr, "error: cannot write %s\n", timeline_path.c_str());
        return HP_PARSE_ERROR;
      }
    }
    return 0;
  }

  if (explain_cmd->parsed()) {
    PlanHandle plan;
    TRY(hp_plan_load_file(plan_path.c_str(), &plan.ptr));
    OwnedString text;
    TRY(hp_plan_explain(plan.ptr, &text.ptr));
    std::fputs(text.ptr, stdout);
    return 0;
  }

  if (save_cmd->parsed()) {
    PlanHandle plan;
    TRY(hp_plan_load_file(plan_path.c_str(), &plan.ptr));
    TRY(hp_checkpoint_save(plan.ptr, root.c_str(), step, hidden, seed, zero_opt ? 1 : 0));
    std::printf("checkpoint written under %s (step %llu)\n", root.c_str(), step);
    return 0;
  }

  if (recover_cmd->parsed()) {
    ClusterHandle cluster;
    PlanHandle old_plan, new_plan;
    TRY(hp_cluster_load_file(cluster_path.c_str(), &cluster.ptr));
    TRY(hp_plan_load_file(old_plan_path.c_str(), &old_plan.ptr));
    TRY(hp_plan_load_file(new_plan_path.c_str(), &new_plan.ptr));
    RecoveryHandle recovery;
    TRY(hp_recovery_compute(old_plan.ptr, new_plan.ptr, bitmap_path.c_str(), cluster.ptr,
                            &recovery.ptr));
    TRY(hp_recovery_write_file(recovery.ptr, rp_out.c_str()));
    OwnedString json;
    TRY(hp_recovery_to_json(recovery.ptr, &json.ptr));
    std::fputs(json.ptr, stdout);
    std::printf("recovery plan written to %s\n", rp_out.c_str());
    return 0;
  }

  if (restore_cmd->parsed()) {
    RecoveryHandle recovery;
    TRY(hp_recovery_load_file(rp_path.c_str(), &recovery.ptr));
    TRY(hp_recovery_execute(recovery.ptr, root.c_str(), restore_out.c_str()));
    std::printf("restored per-device shards under %s\n", restore_out.c_str());
    return 0;
  }

  if (synth_cmd->parsed()) {
    ClusterHandle cluster;
    TRY(hp_cluster_load_file(cluster_path.c_str(), &cluster.ptr));
    ProfileHandle profile;
    TRY(hp_profile_synth(cluster.ptr, base_seconds, max_layers, &profile.ptr));
    TRY(hp_profile_write_file(profile.ptr, profile_out.c_str()));
    std::printf("profile table written to %s\n", profile_out.c_str());
    return 0;
  }

  return 0;
}
