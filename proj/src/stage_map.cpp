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
#include "hetplan/stage_map.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "hetplan/util.hpp"

namespace hetplan {

namespace {

struct UnitRef {
  const TpUnit* unit;
  bool assigned = false;
};

bool unit_order(const TpUnit& a, const TpUnit& b) {
  if (a.power != b.power) return a.power < b.power;
  if (a.node_id != b.node_id) return a.node_id < b.node_id;
  return a.devices.front().local_rank < b.devices.front().local_rank;
}

// Matched same-type units across groups approximate the gradient rings the
// pair will share; count how many of those pairs stay inside one node.
int count_intra_node_dp_pairs(const std::vector<GroupStages>& groups) {
  int count = 0;
  for (size_t j = 0; j < groups.size(); ++j) {
    for (size_t k = j + 1; k < groups.size(); ++k) {
      std::map<std::string, std::vector<const TpUnit*>> by_type_j, by_type_k;
      for (const auto& s : groups[j].stages) by_type_j[s.unit.gpu_type].push_back(&s.unit);
      for (const auto& s : groups[k].stages) by_type_k[s.unit.gpu_type].push_back(&s.unit);
      for (const auto& [type, units_j] : by_type_j) {
        auto it = by_type_k.find(type);
        if (it == by_type_k.end()) continue;
        const size_t n = std::min(units_j.size(), it->second.size());
        for (size_t i = 0; i < n; ++i) {
          if (units_j[i]->node_id == it->second[i]->node_id) ++count;
        }
      }
    }
  }
  return count;
}

}  // namespace

StageMapping map_nodes_and_stages(const ClusterSpec& spec, const GroupingSolution& grouping,
                                  int tp_dim) {
  (void)tp_dim;
  for (const auto& [dev, gi] : grouping.assignment) {
    (void)gi;
    if (!spec.has_device(dev)) {
      throw InvalidArgumentError("grouping references device " + dev.str()
                                 + " absent from the cluster spec");
    }
  }

  const size_t n_groups = grouping.groups.size();
  StageMapping mapping;
  mapping.groups.assign(n_groups, {});

  // Required type multiset per group; the physical unit behind each slot may
  // be rebound, the multiset never changes.
  std::vector<std::map<std::string, int>> need(n_groups);
  for (size_t gi = 0; gi < n_groups; ++gi) {
    for (const auto& u : grouping.groups[gi]) need[gi][u.gpu_type] += 1;
  }

  // Pool of physical units, canonical order.
  std::vector<TpUnit> pool;
  for (const auto& group : grouping.groups) {
    pool.insert(pool.end(), group.begin(), group.end());
  }
  std::sort(pool.begin(), pool.end(), [](const TpUnit& a, const TpUnit& b) {
    if (a.node_id != b.node_id) return a.node_id < b.node_id;
    return a.devices.front().local_rank < b.devices.front().local_rank;
  });
  std::vector<bool> taken(pool.size(), false);

  // Types by ascending power (name breaks exact ties deterministically).
  std::vector<std::pair<double, std::string>> type_rank;
  {
    std::set<std::string> seen;
    for (const auto& u : pool) {
      if (seen.insert(u.gpu_type).second) type_rank.push_back({u.power, u.gpu_type});
    }
    std::sort(type_rank.begin(), type_rank.end());
  }

  std::vector<int> cursor(n_groups, 1);  // next stage index per group

  // Joint phase: weakest remaining type, all groups at once, one node.
  while (true) {
    std::string t;
    for (const auto& [power, name] : type_rank) {
      (void)power;
      bool pooled = false;
      for (size_t i = 0; i < pool.size(); ++i) {
        if (!taken[i] && pool[i].gpu_type == name) {
          pooled = true;
          break;
        }
      }
      if (pooled) {
        t = name;
        break;
      }
    }
    if (t.empty()) break;  // everything placed

    bool every_group_needs = true;
    for (size_t gi = 0; gi < n_groups; ++gi) {
      if (need[gi][t] <= 0) {
        every_group_needs = false;
        break;
      }
    }
    if (!every_group_needs) {
      mapping.joint_phase_completed = false;
      mapping.halt_reason = "type " + t + " is not needed by every DP group";
      break;
    }
    // One node must be able to supply every group this round.
    std::map<int, std::vector<size_t>> avail_by_node;
    for (size_t i = 0; i < pool.size(); ++i) {
      if (!taken[i] && pool[i].gpu_type == t) avail_by_node[pool[i].node_id].push_back(i);
    }
    int host = -1;
    for (const auto& [node_id, idx] : avail_by_node) {
      if (idx.size() >= n_groups) {
        host = node_id;
        break;
      }
    }
    if (host < 0) {
      mapping.joint_phase_completed = false;
      mapping.halt_reason = "no single node can host a " + t + " stage for every DP group";
      break;
    }
    const auto& supply = avail_by_node[host];
    for (size_t gi = 0; gi < n_groups; ++gi) {
      const size_t pick = supply[gi];
      taken[pick] = true;
      need[gi][t] -= 1;
      mapping.groups[gi].stages.push_back({cursor[gi]++, pool[pick]});
    }
  }

  // Fallback: remaining units in (power, node, rank) order fill the earliest
  // open stage of the first group still needing that type.
  std::vector<size_t> rest;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (!taken[i]) rest.push_back(i);
  }
  std::sort(rest.begin(), rest.end(),
            [&pool](size_t a, size_t b) { return unit_order(pool[a], pool[b]); });
  for (size_t i : rest) {
    bool placed = false;
    for (size_t gi = 0; gi < n_groups; ++gi) {
      if (need[gi][pool[i].gpu_type] > 0) {
        need[gi][pool[i].gpu_type] -= 1;
        mapping.groups[gi].stages.push_back({cursor[gi]++, pool[i]});
        placed = true;
        break;
      }
    }
    HP_CHECK(placed, "every pooled unit belongs to some group's type multiset");
  }
  for (size_t gi = 0; gi < n_groups; ++gi) {
    HP_CHECK(mapping.groups[gi].stages.size() == grouping.groups[gi].size(),
             "stage count matches the grouping");
  }

  // DP-affinity pass: swap same-type units between slots while the number of
  // intra-node DP pairs strictly increases.
  bool improved = true;
  while (improved) {
    improved = false;
    int current = count_intra_node_dp_pairs(mapping.groups);
    for (size_t j = 0; j < n_groups && !improved; ++j) {
      for (size_t sj = 0; sj < mapping.groups[j].stages.size() && !improved; ++sj) {
        for (size_t k = 0; k < n_groups && !improved; ++k) {
          for (size_t sk = 0; sk < mapping.groups[k].stages.size() && !improved; ++sk) {
            if (j == k && sj == sk) continue;
            auto& a = mapping.groups[j].stages[sj];
            auto& b = mapping.groups[k].stages[sk];
            if (a.unit.gpu_type != b.unit.gpu_type) continue;
            std::swap(a.unit, b.unit);
            if (count_intra_node_dp_pairs(mapping.groups) > current) {
              improved = true;
            } else {
              std::swap(a.unit, b.unit);
            }
          }
        }
      }
    }
  }
  return mapping;
}

LinkReport classify_links(const ClusterSpec& spec, const StageMapping& mapping) {
  LinkReport report;
  std::map<std::pair<DeviceId, DeviceId>, LinkRole> roles;
  auto add_pair = [&](const DeviceId& x, const DeviceId& y, LinkRole role) {
    auto key = x < y ? std::make_pair(x, y) : std::make_pair(y, x);
    auto it = roles.find(key);
    // TP outranks DP outranks PP.
    if (it == roles.end() || static_cast<int>(role) < static_cast<int>(it->second)) {
      roles[key] = role;
    }
  };

  for (const auto& group : mapping.groups) {
    for (const auto& slot : group.stages) {
      const auto& devs = slot.unit.devices;
      for (size_t i = 0; i < devs.size(); ++i) {
        for (size_t j = i + 1; j < devs.size(); ++j) add_pair(devs[i], devs[j], LinkRole::tp);
      }
    }
    for (size_t s = 0; s + 1 < group.stages.size(); ++s) {
      const auto& a = group.stages[s].unit.devices;
      const auto& b = group.stages[s + 1].unit.devices;
      for (size_t r = 0; r < std::min(a.size(), b.size()); ++r) {
        add_pair(a[r], b[r], LinkRole::pp);
      }
    }
  }
  // DP pairs: rank-matched devices of type-matched units across groups.
  for (size_t j = 0; j < mapping.groups.size(); ++j) {
    for (size_t k = j + 1; k < mapping.groups.size(); ++k) {
      std::map<std::string, std::vector<const TpUnit*>> tj, tk;
      for (const auto& s : mapping.groups[j].stages) tj[s.unit.gpu_type].push_back(&s.unit);
      for (const auto& s : mapping.groups[k].stages) tk[s.unit.gpu_type].push_back(&s.unit);
      for (const auto& [type, uj] : tj) {
        auto it = tk.find(type);
        if (it == tk.end()) continue;
        const size_t n = std::min(uj.size(), it->second.size());
        for (size_t i = 0; i < n; ++i) {
          const auto& a = uj[i]->devices;
          const auto& b = it->second[i]->devices;
          for (size_t r = 0; r < std::min(a.size(), b.size()); ++r) {
            add_pair(a[r], b[r], LinkRole::dp);
          }
        }
      }
    }
  }

  for (const auto& [key, role] : roles) {
    LinkUse use{key.first, key.second, role, key.first.node_id == key.second.node_id};
    (void)spec;
    report.links.push_back(use);
    if (role == LinkRole::tp && !use.intra_node) report.tp_violations.push_back(use);
    if (role == LinkRole::dp) {
      ++report.dp_pairs_total;
      if (use.intra_node) ++report.dp_pairs_on_nvlink;
    }
    if (role == LinkRole::pp && !use.intra_node) ++report.pp_pairs_cross_node;
  }
  return report;
}

}  // namespace hetplan
