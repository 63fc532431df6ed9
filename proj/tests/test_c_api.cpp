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
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "hetplan/c_api.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const char* kCluster = R"({
  "gpu_types": {"A100": {"compute_power": 1.0, "memory_bytes": 80e9},
                "H800": {"compute_power": 2.0, "memory_bytes": 80e9}},
  "nodes": [{"node_id": 0, "count": 4, "type": "A100"},
            {"node_id": 1, "count": 2, "type": "H800"}],
  "bandwidths": {"intra_node": 6e11, "inter_node": 5e10,
                 "cloud": 1.2e9, "local_disk": 3.5e9}
})";

const char* kModel = R"({
  "n_layers": 24, "per_layer_param_bytes": 1e9,
  "per_layer_activation_bytes": 2e8, "optimizer_multiplier": 3,
  "n_microbatches": 8
})";

}  // namespace

TEST_CASE("end to end through the C surface") {
  hp_cluster* cluster = nullptr;
  REQUIRE(hp_cluster_parse(kCluster, &cluster) == HP_OK);
  CHECK(hp_cluster_device_count(cluster) == 6);

  hp_model* model = nullptr;
  REQUIRE(hp_model_parse(kModel, &model) == HP_OK);

  hp_profile* profile = nullptr;
  REQUIRE(hp_profile_synth(cluster, 0.05, 32, &profile) == HP_OK);

  hp_plan_options options;
  hp_plan_options_init(&options);
  hp_plan* plan = nullptr;
  REQUIRE(hp_plan_compute(cluster, model, profile, &options, &plan) == HP_OK);

  char* json = nullptr;
  REQUIRE(hp_plan_to_json(plan, &json) == HP_OK);
  CHECK(std::string(json).find("\"tp_dim\": 2") != std::string::npos);
  hp_string_free(json);

  char* text = nullptr;
  REQUIRE(hp_plan_explain(plan, &text) == HP_OK);
  CHECK(std::strstr(text, "parallel plan") != nullptr);
  hp_string_free(text);

  hp_sim_options sim_options;
  hp_sim_options_init(&sim_options);
  sim_options.combined_time = 1;
  hp_sim_result* sim = nullptr;
  REQUIRE(hp_simulate(plan, cluster, model, profile, &sim_options, &sim) == HP_OK);
  CHECK(hp_sim_makespan(sim) > 0.0);
  char* csv = nullptr;
  REQUIRE(hp_sim_timeline_csv(sim, &csv) == HP_OK);
  CHECK(std::strstr(csv, "device,event,microbatch") != nullptr);
  hp_string_free(csv);
  hp_sim_result_free(sim);

  char* estimate = nullptr;
  REQUIRE(hp_estimate_to_json(plan, cluster, model, profile, &estimate) == HP_OK);
  CHECK(std::strstr(estimate, "t_star_s") != nullptr);
  hp_string_free(estimate);

  // Checkpoint + recovery round trip through files.
  const std::string root = (fs::temp_directory_path() / "hetplan_capi_ckpt").string();
  fs::remove_all(root);
  REQUIRE(hp_checkpoint_save(plan, root.c_str(), 9, 16, 1, 0) == HP_OK);
  hp_recovery* recovery = nullptr;
  const std::string bitmap = root + "/bitmap.json";
  REQUIRE(hp_recovery_compute(plan, plan, bitmap.c_str(), cluster, &recovery) == HP_OK);
  char* rp_json = nullptr;
  REQUIRE(hp_recovery_to_json(recovery, &rp_json) == HP_OK);
  CHECK(std::strstr(rp_json, "cloud_bytes") != nullptr);
  hp_string_free(rp_json);
  const std::string out = (fs::temp_directory_path() / "hetplan_capi_restore").string();
  fs::remove_all(out);
  REQUIRE(hp_recovery_execute(recovery, root.c_str(), out.c_str()) == HP_OK);
  CHECK(fs::exists(out));
  hp_recovery_free(recovery);

  hp_plan_free(plan);
  hp_profile_free(profile);
  hp_model_free(model);
  hp_cluster_free(cluster);
}

TEST_CASE("error codes and messages cross the boundary") {
  hp_cluster* cluster = nullptr;
  CHECK(hp_cluster_parse("not json", &cluster) == HP_PARSE_ERROR);
  CHECK(std::string(hp_last_error()).find("cluster spec") != std::string::npos);
  CHECK(hp_cluster_load_file("/nonexistent/file.json", &cluster) == HP_PARSE_ERROR);

  REQUIRE(hp_cluster_parse(kCluster, &cluster) == HP_OK);
  hp_model* model = nullptr;
  // A model too large for the cluster memory: infeasible plan.
  REQUIRE(hp_model_parse(R"({"n_layers": 24, "per_layer_param_bytes": 2e11,
    "per_layer_activation_bytes": 2e8, "optimizer_multiplier": 3,
    "n_microbatches": 8})", &model) == HP_OK);
  hp_profile* profile = nullptr;
  REQUIRE(hp_profile_synth(cluster, 0.05, 32, &profile) == HP_OK);
  hp_plan* plan = nullptr;
  CHECK(hp_plan_compute(cluster, model, profile, nullptr, &plan) == HP_INFEASIBLE);
  CHECK(std::string(hp_last_error()).find("(3b)") != std::string::npos);

  CHECK(hp_plan_compute(nullptr, model, profile, nullptr, &plan) == HP_INVALID_ARGUMENT);

  hp_profile_free(profile);
  hp_model_free(model);
  hp_cluster_free(cluster);
}

TEST_CASE("a uniform four-stage plan simulates to the 3/11 bubble") {
  // The same path the `simulate` subcommand drives: plan file in, JSON out.
  const char* uniform_cluster = R"({
    "gpu_types": {"G": {"compute_power": 1.0, "memory_bytes": 1e12}},
    "nodes": [{"node_id": 0, "count": 4, "type": "G"}],
    "bandwidths": {"intra_node": 6e11, "inter_node": 5e10,
                   "cloud": 1.2e9, "local_disk": 3.5e9}
  })";
  const char* uniform_plan = R"({
    "meta": {"tool": "hetplan", "format": 1},
    "tp_dim": 1, "n_layers": 4, "n_microbatches": 8,
    "groups": [{"microbatches": 8, "stages": [
      {"stage_index": 1, "gpu_type": "G", "devices": [{"node": 0, "rank": 0}],
       "layer_range": [0, 1]},
      {"stage_index": 2, "gpu_type": "G", "devices": [{"node": 0, "rank": 1}],
       "layer_range": [1, 2]},
      {"stage_index": 3, "gpu_type": "G", "devices": [{"node": 0, "rank": 2}],
       "layer_range": [2, 3]},
      {"stage_index": 4, "gpu_type": "G", "devices": [{"node": 0, "rank": 3}],
       "layer_range": [3, 4]}]}],
    "cost": {"t_star_s": 0, "t_sync_s": 0, "per_group": []},
    "flags": {"optimal_grouping": true, "sync_overlap": "sum"},
    "grouping": {"objective": 0, "z": 0},
    "candidates": []
  })";
  const std::string plan_path =
      (fs::temp_directory_path() / "hetplan_capi_uniform_plan.json").string();
  std::ofstream(plan_path) << uniform_plan;

  hp_cluster* cluster = nullptr;
  REQUIRE(hp_cluster_parse(uniform_cluster, &cluster) == HP_OK);
  hp_model* model = nullptr;
  REQUIRE(hp_model_parse(R"({"n_layers": 4, "per_layer_param_bytes": 1e6,
    "per_layer_activation_bytes": 1e-9, "optimizer_multiplier": 3,
    "n_microbatches": 8})", &model) == HP_OK);
  hp_profile* profile = nullptr;
  REQUIRE(hp_profile_parse("G 1 1 1.0\nG 1 2 2.0\nG 1 4 4.0\n", &profile) == HP_OK);
  hp_plan* plan = nullptr;
  REQUIRE(hp_plan_load_file(plan_path.c_str(), &plan) == HP_OK);

  hp_sim_options options;
  hp_sim_options_init(&options);
  options.combined_time = 1;
  options.zero_comm = 1;
  hp_sim_result* sim = nullptr;
  REQUIRE(hp_simulate(plan, cluster, model, profile, &options, &sim) == HP_OK);
  CHECK(hp_sim_makespan(sim) == doctest::Approx(11.0));  // 4 + 7*1
  char* json = nullptr;
  REQUIRE(hp_sim_result_to_json(sim, &json) == HP_OK);
  auto doc = nlohmann::json::parse(json);
  CHECK(doc.at("groups").at(0).at("idle_fraction").get<double>()
        == doctest::Approx(3.0 / 11.0));
  const auto& peaks = doc.at("groups").at(0).at("peak_in_flight");
  CHECK(peaks.at(0).get<int>() == 4);
  hp_string_free(json);
  hp_sim_result_free(sim);
  hp_plan_free(plan);
  hp_profile_free(profile);
  hp_model_free(model);
  hp_cluster_free(cluster);
}

TEST_CASE("warnings surface through the C API") {
  hp_cluster* cluster = nullptr;
  REQUIRE(hp_cluster_parse(R"({
    "gpu_types": {"A": {"compute_power": 1, "memory_bytes": 1}},
    "nodes": [{"node_id": 0, "count": 1, "type": "A"}],
    "bandwidths": {"intra_node": 1, "inter_node": 2, "cloud": 1, "local_disk": 1}
  })", &cluster) == HP_OK);
  char* warnings = nullptr;
  REQUIRE(hp_cluster_warnings(cluster, &warnings) == HP_OK);
  CHECK(std::strlen(warnings) > 0);
  hp_string_free(warnings);
  hp_cluster_free(cluster);
}
