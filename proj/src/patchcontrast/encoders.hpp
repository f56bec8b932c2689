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

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "patchcontrast/augmentation.hpp"
#include "patchcontrast/bev.hpp"
#include "patchcontrast/geometry.hpp"
#include "patchcontrast/params.hpp"

namespace patchcontrast {

// Shared per-point MLP over (sampled BEV feature ++ center-relative xyz)
// followed by a max-pool per segment. inputs: n x (C + 3) -> count x C.
Tensor point_encoder(const BoundParams& params, std::string_view prefix, const Tensor& inputs,
                     std::span<const std::size_t> segment, std::size_t count);
Tensor encode_proposal(const BoundParams& params, const Tensor& point_features);
Tensor encode_patch(const BoundParams& params, const Tensor& point_features);

// Single-hidden-layer MLP 3 -> C -> C over patch offsets. q: n x 3.
Tensor positional_encode(const BoundParams& params, const Tensor& offsets);

enum class Projector { kProposal, kPatch };
// C -> C -> z
Tensor project(const BoundParams& params, Projector which, const Tensor& x);

// Elementwise max over consecutive groups of m rows: (G * m) x C -> G x C.
Tensor aggregate_patches(const Tensor& patch_embeddings, std::size_t m);

// Proposals and patches of one view pair. patches[k][v - 1] belong to pair
// slot k in view v.
struct SceneGeometry {
  std::vector<ProposalPair> proposals;
  std::vector<std::array<std::array<Patch, kPatchesPerProposal>, 2>> patches;

  std::size_t num_pairs() const { return proposals.size(); }
};

SceneGeometry build_scene_geometry(const SceneViewPair& pair, const PlaneModel& plane, double background_margin,
                                   const ProposalParams& proposal_params, const PatchParams& patch_params,
                                   bool with_patches, std::uint64_t seed);

// Embeddings of one scene. Rows are interleaved by view: proposal row
// 2k + (v - 1) is pair slot k in view v, and patch rows of that proposal
// occupy [(2k + v - 1) * m, (2k + v) * m).
struct EmbeddingSet {
  std::size_t num_pairs = 0;
  std::size_t num_patches = 0;
  Tensor proposals;         // 2N' x C
  Tensor patches;           // 2N'm x C
  Tensor positional;        // 2N'm x C
  Tensor proj_proposals;    // 2N' x z
  Tensor proj_patches;      // 2N' x z, aggregated patches

  bool has_patches() const { return num_patches > 0; }
  // N' x C rows of one view.
  Tensor view_proposals(int view) const;
};

EmbeddingSet forward_scene(const BoundParams& params, const ModelConfig& cfg, const SceneViewPair& pair,
                           const SceneGeometry& geometry);

}  // namespace patchcontrast
