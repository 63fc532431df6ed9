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
#include "hetplan/plan.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "hetplan/util.hpp"
#include "json.hpp"

namespace hetplan {

using nlohmann::json;

void ParallelPlan::validate() const {
  HP_CHECK(tp_dim >= 1, "tp_dim >= 1");
  HP_CHECK(!groups.empty(), "plan has at least one group");
  std::set<DeviceId> seen;
  for (const auto& group : groups) {
    HP_CHECK(!group.stages.empty(), "group has at least one stage");
    int expected_index = 1;
    int cursor = 0;
    for (const auto& st : group.stages) {
      HP_CHECK(st.stage_index == expected_index++, "stage indices contiguous from 1");
      HP_CHECK(static_cast<int>(st.devices.size()) == tp_dim, "stage holds tp_dim devices");
      HP_CHECK(st.layer_begin == cursor, "layer ranges tile [0, n_layers)");
      HP_CHECK(st.layer_end >= st.layer_begin, "layer range is not inverted");
      cursor = st.layer_end;
      for (const auto& d : st.devices) {
        HP_CHECK(d.node_id == st.devices.front().node_id, "TP unit is co-located");
        HP_CHECK(seen.insert(d).second, "device appears exactly once in the plan");
      }
    }
    HP_CHECK(cursor == n_layers, "every group covers all layers");
  }
}

std::vector<int> split_microbatches(int total, int n_groups) {
  HP_CHECK(n_groups >= 1, "at least one group");
  std::vector<int> out(n_groups, 0);
  const int base = total / n_groups;
  int rem = total % n_groups;
  for (int j = 0; j < n_groups; ++j) {
    out[j] = std::max(1, base + (j < rem ? 1 : 0));
  }
  return out;
}

namespace {

json device_to_json(const DeviceId& d) {
  return json{{"node", d.node_id}, {"rank", d.local_rank}};
}

DeviceId device_from_json(const json& j) {
  return DeviceId{j.at("node").get<int>(), j.at("rank").get<int>()};
}

}  // namespace

std::string plan_to_json(const ParallelPlan& plan) {
  json groups = json::array();
  for (const auto& group : plan.groups) {
    json stages = json::array();
    for (const auto& st : group.stages) {
      json devices = json::array();
      for (const auto& d : st.devices) devices.push_back(device_to_json(d));
      stages.push_back({{"stage_index", st.stage_index},
                        {"gpu_type", st.gpu_type},
                        {"devices", devices},
                        {"layer_range", json::array({st.layer_begin, st.layer_end})},
                        {"est_time_s", st.est_time_s},
                        {"est_mem_bytes", st.est_mem_bytes},
                        {"mem_capacity_bytes", st.mem_capacity_bytes}});
    }
    groups.push_back({{"stages", stages}, {"microbatches", group.microbatches}});
  }
  json per_group = json::array();
  for (const auto& gc : plan.cost.per_group) {
    per_group.push_back({{"pipeline_fill_s", gc.pipeline_fill},
                         {"steady_s", gc.steady},
                         {"total_s", gc.total},
                         {"bubble_ratio", gc.bubble_ratio},
                         {"microbatches", gc.microbatches}});
  }
  json candidates = json::array();
  for (const auto& c : plan.candidates) {
    candidates.push_back({{"tp_dim", c.tp_dim},
                          {"status", c.status},
                          {"grouping_objective", c.grouping_objective},
                          {"t_star_s", c.t_star}});
  }
  json doc{{"meta", {{"tool", "hetplan"}, {"format", 1}}},
           {"tp_dim", plan.tp_dim},
           {"n_layers", plan.n_layers},
           {"n_microbatches", plan.n_microbatches_total},
           {"groups", groups},
           {"cost",
            {{"t_star_s", plan.cost.t_star},
             {"t_sync_s", plan.cost.t_sync},
             {"per_group", per_group}}},
           {"flags",
            {{"optimal_grouping", plan.grouping.optimal},
             {"sync_overlap", plan.sync_overlap}}},
           {"grouping", {{"objective", plan.grouping.objective}, {"z", plan.grouping.z}}},
           {"candidates", candidates}};
  return doc.dump(2) + "\n";
}

ParallelPlan plan_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("plan document: ") + e.what());
  }
  try {
    ParallelPlan plan;
    plan.tp_dim = doc.at("tp_dim").get<int>();
    plan.n_layers = doc.at("n_layers").get<int>();
    plan.n_microbatches_total = doc.at("n_microbatches").get<int>();
    for (const auto& g : doc.at("groups")) {
      GroupPlan group;
      group.microbatches = g.at("microbatches").get<int>();
      for (const auto& s : g.at("stages")) {
        StagePlan st;
        st.stage_index = s.at("stage_index").get<int>();
        st.gpu_type = s.at("gpu_type").get<std::string>();
        for (const auto& d : s.at("devices")) st.devices.push_back(device_from_json(d));
        st.layer_begin = s.at("layer_range").at(0).get<int>();
        st.layer_end = s.at("layer_range").at(1).get<int>();
        st.est_time_s = s.value("est_time_s", 0.0);
        st.est_mem_bytes = s.value("est_mem_bytes", 0.0);
        st.mem_capacity_bytes = s.value("mem_capacity_bytes", 0.0);
        group.stages.push_back(std::move(st));
      }
      plan.groups.push_back(std::move(group));
    }
    const json& cost = doc.at("cost");
    plan.cost.t_star = cost.at("t_star_s").get<double>();
    plan.cost.t_sync = cost.at("t_sync_s").get<double>();
    for (const auto& g : cost.at("per_group")) {
      GroupCost gc;
      gc.pipeline_fill = g.at("pipeline_fill_s").get<double>();
      gc.steady = g.at("steady_s").get<double>();
      gc.total = g.at("total_s").get<double>();
      gc.bubble_ratio = g.at("bubble_ratio").get<double>();
      gc.microbatches = g.at("microbatches").get<int>();
      plan.cost.per_group.push_back(gc);
    }
    plan.grouping.objective = doc.at("grouping").at("objective").get<double>();
    plan.grouping.z = doc.at("grouping").at("z").get<double>();
    plan.grouping.optimal = doc.at("flags").at("optimal_grouping").get<bool>();
    plan.sync_overlap = doc.at("flags").at("sync_overlap").get<std::string>();
    for (const auto& c : doc.value("candidates", json::array())) {
      CandidateSummary cs;
      cs.tp_dim = c.at("tp_dim").get<int>();
      cs.status = c.at("status").get<std::string>();
      cs.grouping_objective = c.at("grouping_objective").get<double>();
      cs.t_star = c.at("t_star_s").get<double>();
      plan.candidates.push_back(std::move(cs));
    }
    plan.validate();
    return plan;
  } catch (const json::exception& e) {
    throw ParseError(std::string("plan document: ") + e.what());
  }
}

ParallelPlan load_plan_file(const std::string& path) {
  return plan_from_json(read_text_file(path));
}

void write_plan_file(const ParallelPlan& plan, const std::string& path) {
  write_text_file(path, plan_to_json(plan));
}

std::string explain(const ParallelPlan& plan) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  os << "parallel plan: tp_dim=" << plan.tp_dim << ", " << plan.groups.size()
     << " DP group(s), " << plan.n_layers << " layers, " << plan.n_microbatches_total
     << " microbatches/iteration\n";
  os << "grouping objective=" << plan.grouping.objective << " (z=" << plan.grouping.z
     << ", " << (plan.grouping.optimal ? "optimal" : "best-found") << ")\n";
  for (size_t j = 0; j < plan.groups.size(); ++j) {
    const auto& group = plan.groups[j];
    int total_layers = 0;
    for (const auto& st : group.stages) total_layers += st.layer_count();
    os << "group " << j << ": " << group.stages.size() << " stage(s), "
       << group.microbatches << " microbatch(es), " << total_layers << " layers\n";
    for (const auto& st : group.stages) {
      os << "  stage " << st.stage_index << ": " << st.gpu_type << " [";
      for (size_t i = 0; i < st.devices.size(); ++i) {
        os << (i ? " " : "") << st.devices[i].str();
      }
      os << "] layers [" << st.layer_begin << "," << st.layer_end << ") time="
         << st.est_time_s << "s mem=" << st.est_mem_bytes / 1e9 << "GB/"
         << st.mem_capacity_bytes / 1e9 << "GB\n";
    }
    if (j < plan.cost.per_group.size()) {
      const auto& gc = plan.cost.per_group[j];
      os << "  fill=" << gc.pipeline_fill << "s steady=" << gc.steady << "s total="
         << gc.total << "s bubble=" << gc.bubble_ratio << "\n";
    }
  }
  os << "T* = " << plan.cost.t_star << "s (sync " << plan.cost.t_sync << "s, overlap="
     << plan.sync_overlap << ")\n";
  if (!plan.candidates.empty()) {
    os << "candidates:\n";
    for (const auto& c : plan.candidates) {
      os << "  tp=" << c.tp_dim << ": " << c.status;
      if (c.status.rfind("infeasible", 0) != 0) {
        os << " objective=" << c.grouping_objective << " T*=" << c.t_star << "s";
      }
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace hetplan
