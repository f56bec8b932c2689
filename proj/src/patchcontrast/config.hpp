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
#include <string>

#include "patchcontrast/augmentation.hpp"
#include "patchcontrast/eval.hpp"
#include "patchcontrast/geometry.hpp"
#include "patchcontrast/losses.hpp"
#include "patchcontrast/params.hpp"

namespace patchcontrast {

struct TrainConfig {
  std::size_t steps = 300;
  std::size_t batch_scenes = 4;
  double max_lr = 0.003;
  double warmup_fraction = 0.05;
  std::size_t checkpoint_every = 100;  // 0 writes only the final checkpoint
  std::size_t threads = 1;
};

struct EvalConfig {
  std::size_t kmeans_k = 20;
  std::size_t kmeans_iters = 100;
};

struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 0;
  ModelConfig model;
  AugmentationConfig augmentation;
  RansacParams ransac;
  double background_margin = 0.2;
  ProposalParams proposals;
  PatchParams patches;
  LossWeights loss;
  NegativePool p2p_negative_pool = NegativePool::kMixed;
  TrainConfig train;
  EvalConfig eval;
  SyntheticSpec synthetic;
  std::string scene_dir;
  std::string output_dir = "run";

  // Full-size hyperparameters.
  static RunConfig full();
  // Widths and counts shrunk for a laptop CPU.
  static RunConfig desk();
  static RunConfig profile_named(const std::string& name);

  void validate() const;
  // Stable across processes; excludes the data and output paths.
  std::uint64_t hash() const;
};

// Parses the hierarchical key-value text. A top-level `profile` key picks
// the base; every other key overrides it. Unknown keys raise ConfigError
// naming the dotted key.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
// Canonical text form; parse_run_config(to_yaml(c)) == c.
std::string to_yaml(const RunConfig& cfg);

const char* pool_name(NegativePool pool);

}  // namespace patchcontrast
