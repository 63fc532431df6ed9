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
#include "hetplan/pipeline_sim.hpp"

#include <algorithm>
#include <utility>

#include "hetplan/util.hpp"

namespace hetplan {

double PipelineSimResult::idle_fraction() const {
  if (busy.empty() || makespan <= 0) return 0;
  double total_busy = 0;
  for (double b : busy) total_busy += b;
  return 1.0 - total_busy / (static_cast<double>(busy.size()) * makespan);
}

namespace {

struct Task {
  int stage;
  bool forward;
  int microbatch;
  double duration;
  double start = 0;
  double end = 0;
  bool done = false;
};

}  // namespace

PipelineSimResult simulate_pipeline(const std::vector<StageTiming>& stages,
                                    int n_microbatches) {
  const int P = static_cast<int>(stages.size());
  const int K = n_microbatches;
  HP_CHECK(P >= 1 && K >= 1, "pipeline needs at least one stage and microbatch");

  // Static per-stage order: warmup forwards, 1F1B steady state, backward drain.
  std::vector<std::vector<Task>> order(P);
  for (int p = 0; p < P; ++p) {
    const int warmup = std::min(K, P - 1 - p);
    const double fdur = stages[p].forward + (p + 1 < P ? stages[p].send_forward : 0.0);
    const double bdur = stages[p].backward + (p > 0 ? stages[p].send_backward : 0.0);
    auto& seq = order[p];
    for (int m = 0; m < warmup; ++m) seq.push_back({p, true, m, fdur});
    for (int m = warmup; m < K; ++m) {
      seq.push_back({p, true, m, fdur});
      seq.push_back({p, false, m - warmup, bdur});
    }
    for (int m = K - warmup; m < K; ++m) seq.push_back({p, false, m, bdur});
    HP_CHECK(static_cast<int>(seq.size()) == 2 * K, "every microbatch scheduled twice");
  }

  // Each task waits for the previous task on its stage and for its producer:
  // F(p,m) needs F(p-1,m); B(p,m) needs B(p+1,m). B at the last stage only
  // needs F(P-1,m), which precedes it in the stage order. Resolve times with a
  // ready-queue pass; order of resolution cannot change the result because
  // start times depend only on dependency end times.
  std::vector<std::vector<double>> f_end(P, std::vector<double>(K, -1));
  std::vector<std::vector<double>> b_end(P, std::vector<double>(K, -1));
  std::vector<int> cursor(P, 0);  // next unresolved task per stage
  std::vector<double> stage_free(P, 0);

  PipelineSimResult res;
  res.busy.assign(P, 0);
  res.peak_in_flight.assign(P, 0);

  int resolved = 0;
  const int total = P * 2 * K;
  while (resolved < total) {
    bool progressed = false;
    for (int p = 0; p < P; ++p) {
      while (cursor[p] < static_cast<int>(order[p].size())) {
        Task& t = order[p][cursor[p]];
        double dep = 0;
        if (t.forward) {
          if (p > 0) {
            if (f_end[p - 1][t.microbatch] < 0) break;
            dep = f_end[p - 1][t.microbatch];
          }
        } else {
          if (p + 1 < P) {
            if (b_end[p + 1][t.microbatch] < 0) break;
            dep = b_end[p + 1][t.microbatch];
          } else {
            HP_CHECK(f_end[p][t.microbatch] >= 0, "backward follows its forward");
            dep = f_end[p][t.microbatch];
          }
        }
        t.start = std::max(stage_free[p], dep);
        t.end = t.start + t.duration;
        stage_free[p] = t.end;
        (t.forward ? f_end : b_end)[p][t.microbatch] = t.end;
        res.busy[p] += t.duration;
        res.makespan = std::max(res.makespan, t.end);
        ++cursor[p];
        ++resolved;
        progressed = true;
      }
    }
    HP_CHECK(progressed, "1F1B schedule is deadlock-free");
  }

  for (int p = 0; p < P; ++p) {
    for (const Task& t : order[p]) {
      res.events.push_back({p, t.forward ? 'F' : 'B', t.microbatch, t.start, t.end});
    }
  }
  std::sort(res.events.begin(), res.events.end(), [](const SimEvent& a, const SimEvent& b) {
    return std::tie(a.start, a.stage, a.microbatch, a.kind)
           < std::tie(b.start, b.stage, b.microbatch, b.kind);
  });

  // Peak live microbatches per stage: +1 at forward start, -1 at backward end.
  // Frees apply before allocations at equal timestamps.
  for (int p = 0; p < P; ++p) {
    std::vector<std::pair<double, int>> deltas;
    for (const Task& t : order[p]) {
      if (t.forward) {
        deltas.emplace_back(t.start, +1);
      } else {
        deltas.emplace_back(t.end, -1);
      }
    }
    std::sort(deltas.begin(), deltas.end());
    int live = 0;
    for (const auto& [time, d] : deltas) {
      (void)time;
      live += d;
      res.peak_in_flight[p] = std::max(res.peak_in_flight[p], live);
    }
    HP_CHECK(live == 0, "every activation eventually freed");
  }
  return res;
}

}  // namespace hetplan
