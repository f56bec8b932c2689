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

#include "patchcontrast/encoders.hpp"

#include <map>

#include "patchcontrast/errors.hpp"
#include "patchcontrast/rng.hpp"

namespace patchcontrast {

Tensor point_encoder(const BoundParams& params, std::string_view prefix, const Tensor& inputs,
                     std::span<const std::size_t> segment, std::size_t count) {
  if (inputs.rows() == 0) throw ContractViolation("point encoder needs at least one point");
  return segment_max(mlp2(params, prefix, inputs), segment, count);
}

Tensor encode_proposal(const BoundParams& params, const Tensor& point_features) {
  const std::vector<std::size_t> seg(point_features.rows(), 0);
  return point_encoder(params, "proposal_encoder", point_features, seg, 1);
}

Tensor encode_patch(const BoundParams& params, const Tensor& point_features) {
  const std::vector<std::size_t> seg(point_features.rows(), 0);
  return point_encoder(params, "patch_encoder", point_features, seg, 1);
}

Tensor positional_encode(const BoundParams& params, const Tensor& offsets) {
  return mlp2(params, "positional", offsets);
}

Tensor project(const BoundParams& params, Projector which, const Tensor& x) {
  return mlp2(params, which == Projector::kProposal ? "proposal_projector" : "patch_projector", x);
}

Tensor aggregate_patches(const Tensor& patch_embeddings, std::size_t m) {
  if (m == 0 || patch_embeddings.rows() % m != 0) {
    throw ContractViolation("aggregate_patches: rows not a multiple of the patch count");
  }
  std::vector<std::size_t> seg(patch_embeddings.rows());
  for (std::size_t r = 0; r < seg.size(); ++r) seg[r] = r / m;
  return segment_max(patch_embeddings, seg, seg.size() / m);
}

SceneGeometry build_scene_geometry(const SceneViewPair& pair, const PlaneModel& plane, double background_margin,
                                   const ProposalParams& proposal_params, const PatchParams& patch_params,
                                   bool with_patches, std::uint64_t seed) {
  SceneGeometry geo;
  geo.proposals = extract_proposal_pairs(pair, plane, background_margin, proposal_params,
                                         derive_seed(seed, "proposals"));
  if (!with_patches) return geo;
  const std::vector<Vec3> v1 = positions(pair.s1);
  const std::vector<Vec3> v2 = positions(pair.s2);
  const std::uint64_t patch_seed = derive_seed(seed, "patches");
  geo.patches.reserve(geo.proposals.size());
  for (const ProposalPair& pp : geo.proposals) {
    geo.patches.push_back({extract_patches(pp.first, v1, patch_params, patch_seed),
                           extract_patches(pp.second, v2, patch_params, patch_seed)});
  }
  return geo;
}

Tensor EmbeddingSet::view_proposals(int view) const {
  std::vector<std::size_t> rows(num_pairs);
  for (std::size_t k = 0; k < num_pairs; ++k) rows[k] = 2 * k + static_cast<std::size_t>(view - 1);
  return gather_rows(proposals, rows);
}

namespace {

// Gathers sampled BEV features for a list of (view, point) rows and appends
// the offset of each point from its anchor.
class PointFeatureTable {
 public:
  PointFeatureTable(const SceneViewPair& pair, const BevFeatureMap& bev1, const BevFeatureMap& bev2)
      : pair_(pair), bev_{&bev1, &bev2} {}

  void add(int view, std::size_t point, const Vec3& anchor) {
    auto& index = slot_[view - 1];
    auto [it, inserted] = index.try_emplace(point, order_[view - 1].size());
    if (inserted) order_[view - 1].push_back(point);
    rows_.push_back({view, it->second});
    const Point& p = pair_.view(view).points[point];
    offsets_.push_back({p.x - anchor.x(), p.y - anchor.y(), p.z - anchor.z()});
  }

  std::size_t size() const { return rows_.size(); }

  Tensor build(Graph& g) const {
    std::vector<Tensor> sampled;
    std::size_t base[2] = {0, 0};
    for (int v = 0; v < 2; ++v) {
      std::vector<std::array<double, 2>> xy;
      xy.reserve(order_[v].size());
      for (std::size_t idx : order_[v]) {
        const Point& p = pair_.view(v + 1).points[idx];
        xy.push_back({p.x, p.y});
      }
      if (!xy.empty()) sampled.push_back(bilinear_sample(*bev_[v], xy));
      base[v] = v == 0 ? 0 : order_[0].size();
    }
    Tensor all = concat_rows(sampled);
    std::vector<std::size_t> gather(rows_.size());
    for (std::size_t i = 0; i < rows_.size(); ++i) gather[i] = base[rows_[i].first - 1] + rows_[i].second;
    TensorData rel = TensorData::zeros({offsets_.size(), 3});
    for (std::size_t i = 0; i < offsets_.size(); ++i)
      for (std::size_t j = 0; j < 3; ++j) rel.at(i, j) = offsets_[i][j];
    return concat_cols(gather_rows(all, gather), g.constant(std::move(rel)));
  }

 private:
  const SceneViewPair& pair_;
  const BevFeatureMap* bev_[2];
  std::map<std::size_t, std::size_t> slot_[2];
  std::vector<std::size_t> order_[2];
  std::vector<std::pair<int, std::size_t>> rows_;
  std::vector<std::array<double, 3>> offsets_;
};

}  // namespace

EmbeddingSet forward_scene(const BoundParams& params, const ModelConfig& cfg, const SceneViewPair& pair,
                           const SceneGeometry& geometry) {
  const std::size_t npairs = geometry.num_pairs();
  if (npairs == 0) throw ContractViolation("forward_scene: scene has no proposal pairs");
  const std::size_t m = cfg.num_patches;
  if (m > 0 && geometry.patches.size() != npairs) {
    throw ContractViolation("forward_scene: patch geometry missing for the configured patch count");
  }
  Graph& g = param(params, "backbone.conv.w").graph();

  const BackboneOutput b1 = backbone_forward(params, cfg, pair.s1);
  const BackboneOutput b2 = backbone_forward(params, cfg, pair.s2);

  EmbeddingSet out;
  out.num_pairs = npairs;
  out.num_patches = m;

  {
    PointFeatureTable table(pair, b1.bev, b2.bev);
    std::vector<std::size_t> seg;
    for (std::size_t k = 0; k < npairs; ++k) {
      for (int v : {1, 2}) {
        const Proposal& prop = geometry.proposals[k].view(v);
        for (std::size_t idx : prop.members) {
          table.add(v, idx, prop.center);
          seg.push_back(2 * k + static_cast<std::size_t>(v - 1));
        }
      }
    }
    out.proposals = point_encoder(params, "proposal_encoder", table.build(g), seg, 2 * npairs);
  }
  out.proj_proposals = project(params, Projector::kProposal, out.proposals);
  if (m == 0) return out;

  {
    PointFeatureTable table(pair, b1.bev, b2.bev);
    std::vector<std::size_t> seg;
    TensorData offsets = TensorData::zeros({2 * npairs * m, 3});
    for (std::size_t k = 0; k < npairs; ++k) {
      for (int v : {1, 2}) {
        const std::size_t group = 2 * k + static_cast<std::size_t>(v - 1);
        for (std::size_t j = 0; j < m; ++j) {
          const Patch& patch = geometry.patches[k][static_cast<std::size_t>(v - 1)][j];
          for (std::size_t idx : patch.members) {
            table.add(v, idx, patch.keypoint);
            seg.push_back(group * m + j);
          }
          for (std::size_t d = 0; d < 3; ++d) offsets.at(group * m + j, d) = patch.normalized_center[static_cast<Eigen::Index>(d)];
        }
      }
    }
    out.patches = point_encoder(params, "patch_encoder", table.build(g), seg, 2 * npairs * m);
    out.positional = positional_encode(params, g.constant(std::move(offsets)));
  }
  out.proj_patches = project(params, Projector::kPatch, aggregate_patches(out.patches, m));
  return out;
}

}  // namespace patchcontrast
