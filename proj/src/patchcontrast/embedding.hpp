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
#include <span>
#include <vector>

#include "patchcontrast/config.hpp"
#include "patchcontrast/eval.hpp"

namespace patchcontrast {

// Projected proposal embeddings (2N' x z) of one augmented view pair.
// Zero rows when no proposal pair survives.
TensorData proposal_projections(const RunConfig& cfg, const ParamStore& params, const PointCloud& cloud,
                                const PlaneModel& plane, std::uint64_t seed);

struct CellEmbeddings {
  TensorData features;             // occupied cells x C
  std::vector<std::size_t> cells;  // row-major cell index per row
  std::vector<int> labels;         // majority point label per row; empty without labels
};

// BEV features of the cells that contain at least one point. Ties in the
// majority vote go to the smallest label.
CellEmbeddings bev_cell_embeddings(const RunConfig& cfg, const ParamStore& params, const PointCloud& cloud,
                                   std::span<const int> point_labels = {});

// Seeded subsample with the same number of rows from every label (the
// size of the rarest label).
std::vector<std::size_t> balanced_subsample(std::span<const int> labels, std::uint64_t seed);

struct SignalReport {
  double retrieval = 0.0;         // mean top-1 over scenes
  double retrieval_chance = 0.0;  // mean 1 / N' over scenes
  std::size_t retrieval_scenes = 0;
  double purity = 0.0;
  double purity_baseline = 0.0;
  std::size_t clustered_cells = 0;
};

// Retrieval on augmented view pairs of held-out scenes and k-means purity
// of their class-balanced BEV cell embeddings.
SignalReport evaluate_signal(const RunConfig& cfg, const ParamStore& params, std::span<const SyntheticScene> scenes,
                             std::uint64_t seed);

}  // namespace patchcontrast
