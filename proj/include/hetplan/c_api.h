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
#ifndef HETPLAN_C_API_H_
#define HETPLAN_C_API_H_

/*
 * C interface to the planner, simulator and recovery engine. All objects are
 * opaque handles owned by the library; every function returns an hp_status
 * and reports results through out-parameters. On failure the thread-local
 * message from hp_last_error() describes the cause. Strings returned through
 * char** out-parameters are heap-allocated; release them with hp_string_free.
 */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct hp_cluster hp_cluster;
typedef struct hp_model hp_model;
typedef struct hp_profile hp_profile;
typedef struct hp_plan hp_plan;
typedef struct hp_sim_result hp_sim_result;
typedef struct hp_recovery hp_recovery;

/* Values double as CLI exit codes. */
typedef enum hp_status {
  HP_OK = 0,
  HP_PARSE_ERROR = 2,
  HP_INFEASIBLE = 3,
  HP_UNRECOVERABLE = 4,
  HP_INTERNAL_ERROR = 5,
  HP_INVALID_ARGUMENT = 6
} hp_status;

const char* hp_version(void);
const char* hp_last_error(void); /* thread-local; valid until the next call */
void hp_string_free(char* s);

/* ---- cluster spec ---- */
hp_status hp_cluster_load_file(const char* path, hp_cluster** out);
hp_status hp_cluster_parse(const char* text, hp_cluster** out);
int hp_cluster_device_count(const hp_cluster* cluster);
/* Newline-separated warnings collected at load; empty string if none. */
hp_status hp_cluster_warnings(const hp_cluster* cluster, char** out);
void hp_cluster_free(hp_cluster* cluster);

/* ---- model config ---- */
hp_status hp_model_load_file(const char* path, hp_model** out);
hp_status hp_model_parse(const char* text, hp_model** out);
void hp_model_free(hp_model* model);

/* ---- profile table ---- */
hp_status hp_profile_load_file(const char* path, hp_profile** out);
hp_status hp_profile_parse(const char* text, hp_profile** out);
hp_status hp_profile_synth(const hp_cluster* cluster, double base_seconds_per_layer,
                           int max_layers, hp_profile** out);
hp_status hp_profile_write_file(const hp_profile* profile, const char* path);
void hp_profile_free(hp_profile* profile);

/* ---- planning ---- */
typedef struct hp_plan_options {
  const int* tp_dims;       /* NULL -> every valid TP dimension */
  int n_tp_dims;
  double min_mem_override;  /* 0 -> derive from the model config */
  int exact_threshold;      /* exhaustive grouping up to this many TP units */
  long long node_budget;    /* branch budget beyond the threshold */
  int top_k;                /* groupings retained per TP dimension */
  int sync_overlap_max;     /* 0 sum (default), 1 max */
  int validate_with_sim;
  int derive_power;         /* take relative powers from the profile table */
  const char* power_reference; /* reference GPU type; NULL -> first type */
} hp_plan_options;

void hp_plan_options_init(hp_plan_options* options);

hp_status hp_plan_compute(const hp_cluster* cluster, const hp_model* model,
                          const hp_profile* profile, const hp_plan_options* options,
                          hp_plan** out);
hp_status hp_plan_load_file(const char* path, hp_plan** out);
hp_status hp_plan_write_file(const hp_plan* plan, const char* path);
hp_status hp_plan_to_json(const hp_plan* plan, char** out);
hp_status hp_plan_explain(const hp_plan* plan, char** out);
void hp_plan_free(hp_plan* plan);

/* ---- cost estimate and simulation ---- */
hp_status hp_estimate_to_json(const hp_plan* plan, const hp_cluster* cluster,
                              const hp_model* model, const hp_profile* profile,
                              char** out);

typedef struct hp_sim_options {
  int combined_time; /* forward = full stage time, backward = 0 */
  double fb_ratio;   /* backward/forward ratio in split mode, default 2.0 */
  int zero_comm;
} hp_sim_options;

void hp_sim_options_init(hp_sim_options* options);

hp_status hp_simulate(const hp_plan* plan, const hp_cluster* cluster, const hp_model* model,
                      const hp_profile* profile, const hp_sim_options* options,
                      hp_sim_result** out);
double hp_sim_makespan(const hp_sim_result* result);
hp_status hp_sim_result_to_json(const hp_sim_result* result, char** out);
/* CSV rows: device,event,microbatch,start_s,end_s */
hp_status hp_sim_timeline_csv(const hp_sim_result* result, char** out);
void hp_sim_result_free(hp_sim_result* result);

/* ---- checkpointing and recovery ---- */
hp_status hp_checkpoint_save(const hp_plan* plan, const char* root,
                             unsigned long long step, int hidden_dim,
                             unsigned long long seed, int zero_optimizer);

hp_status hp_recovery_compute(const hp_plan* old_plan, const hp_plan* new_plan,
                              const char* bitmap_path, const hp_cluster* cluster,
                              hp_recovery** out);
hp_status hp_recovery_load_file(const char* path, hp_recovery** out);
hp_status hp_recovery_write_file(const hp_recovery* recovery, const char* path);
hp_status hp_recovery_to_json(const hp_recovery* recovery, char** out);
/* Fetch + reshard into out_dir/n<node>r<rank>/<shard files>. */
hp_status hp_recovery_execute(const hp_recovery* recovery, const char* root,
                              const char* out_dir);
void hp_recovery_free(hp_recovery* recovery);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* HETPLAN_C_API_H_ */
