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
#ifndef HETPLAN_PIPELINE_SIM_HPP_
#define HETPLAN_PIPELINE_SIM_HPP_

#include <vector>

namespace hetplan {

// Per-stage task durations for one microbatch. Outbound transfers are modeled
// as synchronous sends: they extend the sending stage's task, and the receiver
// sees the data only when the extended task ends.
struct StageTiming {
  double forward = 0;
  double backward = 0;
  double send_forward = 0;   // activation to the next stage (0 for the last)
  double send_backward = 0;  // gradient to the previous stage (0 for the first)
};

struct SimEvent {
  int stage = 0;  // 0-based
  char kind = 'F';
  int microbatch = 0;  // 0-based
  double start = 0;
  double end = 0;
};

struct PipelineSimResult {
  double makespan = 0;
  std::vector<double> busy;          // per stage, sum of task durations
  std::vector<int> peak_in_flight;   // per stage, max live microbatches
  std::vector<SimEvent> events;      // ordered by (start, stage, microbatch)

  // 1 - sum(busy) / (P * makespan); the fill/drain bubble for uniform stages.
  double idle_fraction() const;
};

// Discrete-event 1F1B schedule: stage p (0-based) runs min(K, P-1-p) warmup
// forwards, then alternates one-forward-one-backward, then drains backwards.
// The per-stage task order is static; each task additionally waits for its
// producer (forward: previous stage, backward: next stage). Deterministic.
PipelineSimResult simulate_pipeline(const std::vector<StageTiming>& stages,
                                    int n_microbatches);

}  // namespace hetplan

#endif  // HETPLAN_PIPELINE_SIM_HPP_
