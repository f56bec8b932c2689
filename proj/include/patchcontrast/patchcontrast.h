// Copyright 2026 The PatchContrast Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


/* C interface to the patchcontrast pretraining library.
 *
 * Every fallible call returns a pc_status. On failure the message of the
 * last error on the calling thread is available from pc_last_error() until
 * the next failing call. Handles are opaque and owned by the caller; free
 * each with its matching *_free function (NULL is accepted). */

#ifndef PATCHCONTRAST_H_
#define PATCHCONTRAST_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PC_API __declspec(dllexport)
#else
#define PC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pc_status {
  PC_OK = 0,
  PC_ERR_DIMENSION = 1,
  PC_ERR_FORMAT = 2,
  PC_ERR_ARGUMENT = 3,
  PC_ERR_CONTRACT = 4,
  PC_ERR_FIT = 5,
  PC_ERR_CONFIG = 6,
  PC_ERR_IO = 7,
  PC_ERR_NUMERIC = 8,
  PC_ERR_CHECKPOINT = 9,
  PC_ERR_INTERNAL = 99
} pc_status;

PC_API const char* pc_version(void);
PC_API const char* pc_last_error(void);
/* Short lowercase name of a status, e.g. "config". */
PC_API const char* pc_status_name(pc_status status);
/* Applies log levels from the SPDLOG_LEVEL environment variable. */
PC_API void pc_log_levels_from_env(void);

/* ---- configuration ----------------------------------------------------- */

typedef struct pc_config pc_config;

PC_API pc_status pc_config_load(const char* path, pc_config** out);
PC_API pc_status pc_config_parse(const char* text, pc_config** out);
/* "desk" or "full". */
PC_API pc_status pc_config_profile(const char* name, pc_config** out);
PC_API uint64_t pc_config_hash(const pc_config* config);
/* Canonical text form, valid until the handle is freed or modified. */
PC_API const char* pc_config_text(pc_config* config);
PC_API void pc_config_free(pc_config* config);

/* ---- point clouds and tensor files ------------------------------------- */

typedef struct pc_cloud pc_cloud;

PC_API pc_status pc_cloud_read(const char* path, pc_cloud** out);
PC_API size_t pc_cloud_size(const pc_cloud* cloud);
/* Copies x, y, z, intensity of every point into `xyzi` (4 * size values). */
PC_API pc_status pc_cloud_copy(const pc_cloud* cloud, double* xyzi, size_t capacity);
PC_API void pc_cloud_free(pc_cloud* cloud);

typedef struct pc_tensors pc_tensors;

PC_API pc_status pc_tensors_read(const char* path, pc_tensors** out);
PC_API size_t pc_tensors_count(const pc_tensors* tensors);
/* Entries are in key order. NULL when out of range. */
PC_API const char* pc_tensors_name(const pc_tensors* tensors, size_t i);
PC_API size_t pc_tensors_rank(const pc_tensors* tensors, size_t i);
PC_API const size_t* pc_tensors_shape(const pc_tensors* tensors, size_t i);
PC_API const double* pc_tensors_data(const pc_tensors* tensors, size_t i, size_t* size);
PC_API void pc_tensors_free(pc_tensors* tensors);

/* ---- pipeline ---------------------------------------------------------- */

typedef struct pc_pretrain_options {
  const char* scene_dir;   /* NULL: the config's data.scene_dir */
  const char* output_dir;  /* NULL: the config's data.output_dir */
  const char* resume_from; /* checkpoint path or NULL */
  size_t stop_after;       /* last step to run; 0 runs to the end */
} pc_pretrain_options;

typedef struct pc_pretrain_summary {
  size_t scenes;
  size_t last_step;
  size_t steps_run;
  size_t scenes_skipped;
  size_t unusable_scenes;
  double final_total_loss; /* NaN when the last step had no usable scene */
} pc_pretrain_summary;

/* Trains on every *.bin cloud of the scene directory in file name order and
 * writes metrics.jsonl and checkpoints/ under the output directory. */
PC_API pc_status pc_pretrain(const pc_config* config, const pc_pretrain_options* options,
                             pc_pretrain_summary* summary);

/* Writes the BEV embeddings of the occupied cells of each scene to a tensor
 * file. `scenes` is a *.bin file or a directory of them. Entries per scene:
 * "<stem>/features" (cells x C) and "<stem>/cells" (cells x 1 row-major
 * index), plus "<stem>/labels" when a "<stem>.labels.pctn" file with a
 * "class" entry sits next to the cloud. */
PC_API pc_status pc_embed(const pc_config* config, const char* checkpoint, const char* scenes,
                          const char* out_path, size_t* scenes_embedded);

typedef struct pc_cluster_summary {
  size_t rows;
  size_t k;
  size_t iterations;
  int converged;
  double inertia;
  int has_labels;
  double purity;
  double purity_baseline;
} pc_cluster_summary;

/* k-means over every "*\/features" row of an embedding file. Writes
 * "assignments" and "centroids" to `out_path` and one cluster id per line to
 * `out_path` + ".txt". Purity is reported when the file carries labels. */
PC_API pc_status pc_cluster(const char* embeddings, size_t k, uint64_t seed, size_t max_iters,
                            const char* out_path, pc_cluster_summary* summary);

typedef struct pc_grad_report pc_grad_report;

/* Finite-difference check of every differentiable op and the full training
 * objective on a toy scene. */
PC_API pc_status pc_check_grads(uint64_t seed, pc_grad_report** out);
PC_API size_t pc_grad_report_count(const pc_grad_report* report);
PC_API const char* pc_grad_report_name(const pc_grad_report* report, size_t i);
PC_API double pc_grad_report_error(const pc_grad_report* report, size_t i);
PC_API void pc_grad_report_free(pc_grad_report* report);

/* Writes scene_NNNN.bin and scene_NNNN.labels.pctn ("class" and "instance"
 * per point) for `count` synthetic scenes. NULL config uses the desk
 * profile's scene spec. */
PC_API pc_status pc_gen_synthetic(const pc_config* config, size_t count, uint64_t seed, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* PATCHCONTRAST_H_ */
