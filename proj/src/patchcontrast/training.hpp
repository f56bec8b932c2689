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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchcontrast/config.hpp"
#include "patchcontrast/encoders.hpp"

namespace patchcontrast {

struct Schedule {
  double max_lr = 0.003;
  std::size_t total_steps = 1;
  std::size_t warmup_steps = 0;

  static Schedule for_run(const TrainConfig& train);
  void validate() const;
};

// Linear warmup from 0, then half-cosine decay to 0 at total_steps.
double lr_at(const Schedule& schedule, std::size_t step);

struct OptimizerState {
  TensorMap first_moment;
  TensorMap second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerState zeros_like(const ParamStore& params);
};

// One bias-corrected Adam update. Every parameter must have a gradient of
// the same shape; a non-finite gradient raises NumericError naming it.
void adam_step(ParamStore& params, const TensorMap& grads, OptimizerState& state, double lr);

struct Checkpoint {
  ParamStore params;
  OptimizerState optimizer;
  std::uint64_t step = 0;
  std::uint64_t config_hash = 0;
};

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const OptimizerState& optimizer,
                     std::uint64_t step, std::uint64_t config_hash);
// Validates the stored hash against `expected_hash` and every tensor shape
// against `model` when given.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_hash = {},
                           const ModelConfig* model = nullptr);

// ---- scene pipeline --------------------------------------------------------

// One scene as seen by a training step or an evaluation pass.
struct PreparedScene {
  SceneViewPair pair;
  SceneGeometry geometry;
};

PreparedScene prepare_scene(const RunConfig& cfg, const PointCloud& cloud, const PlaneModel& plane,
                            std::uint64_t sample_seed);

struct SceneLosses {
  double proposal = 0.0;
  double p2p = 0.0;
  double rec = 0.0;
  double total = 0.0;
};

struct SceneResult {
  bool skipped = false;  // no proposal pairs survived
  SceneLosses losses;
  TensorMap grads;       // empty unless requested
};

SceneResult run_scene(const RunConfig& cfg, const ParamStore& params, const PreparedScene& scene,
                      std::uint64_t sample_seed, bool with_grads);

// ---- training loop ---------------------------------------------------------

struct StepMetrics {
  std::size_t step = 0;
  double lr = 0.0;
  std::optional<SceneLosses> losses;  // absent when every scene was skipped
  std::size_t scenes_skipped = 0;
};

std::string metrics_line(const StepMetrics& m);

struct TrainOptions {
  std::filesystem::path output_dir;           // empty: nothing written
  std::optional<std::filesystem::path> resume_from;
  std::size_t stop_after = 0;                  // last step to run; 0 runs to the end
};

struct TrainResult {
  ParamStore params;
  OptimizerState optimizer;
  std::size_t last_step = 0;
  std::vector<StepMetrics> metrics;            // steps run by this call
  std::size_t scenes_skipped = 0;
  std::size_t unusable_scenes = 0;             // no ground plane could be fit
  std::filesystem::path final_checkpoint;
};

// Deterministic in (cfg, scenes, cfg.seed) regardless of thread count.
TrainResult train(const RunConfig& cfg, std::span<const PointCloud> scenes, const TrainOptions& options = {});

std::filesystem::path checkpoint_path(const std::filesystem::path& output_dir, std::size_t step);
std::uint64_t sample_seed(std::uint64_t run_seed, std::size_t sample);

}  // namespace patchcontrast
