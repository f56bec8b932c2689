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

#include "patchcontrast/embedding.hpp"

#include <algorithm>
#include <map>

#include "patchcontrast/bev.hpp"
#include "patchcontrast/errors.hpp"
#include "patchcontrast/rng.hpp"
#include "patchcontrast/training.hpp"

namespace patchcontrast {

TensorData proposal_projections(const RunConfig& cfg, const ParamStore& params, const PointCloud& cloud,
                                const PlaneModel& plane, std::uint64_t seed) {
  const PreparedScene scene = prepare_scene(cfg, cloud, plane, seed);
  if (scene.geometry.num_pairs() == 0) return TensorData::zeros({0, cfg.model.projection_dim});
  Graph g;
  const BoundParams bound = bind_params(g, params, false);
  return forward_scene(bound, cfg.model, scene.pair, scene.geometry).proj_proposals.data();
}

CellEmbeddings bev_cell_embeddings(const RunConfig& cfg, const ParamStore& params, const PointCloud& cloud,
                                   std::span<const int> point_labels) {
  if (!point_labels.empty() && point_labels.size() != cloud.size()) {
    throw ArgumentError("bev_cell_embeddings: label count does not match the cloud");
  }
  Graph g;
  const BoundParams bound = bind_params(g, params, false);
  const BackboneOutput out = backbone_forward(bound, cfg.model, cloud);
  std::map<std::size_t, std::map<int, std::size_t>> votes;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    ++votes[out.point_cell[i]][point_labels.empty() ? 0 : point_labels[i]];
  }
  const std::size_t c = cfg.model.feature_dim;
  const auto grid = out.bev.grid.values();
  CellEmbeddings res;
  res.features = TensorData::zeros({votes.size(), c});
  std::size_t row = 0;
  for (const auto& [cell, counts] : votes) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(cell * c), c,
                res.features.values.begin() + static_cast<std::ptrdiff_t>(row * c));
    res.cells.push_back(cell);
    if (!point_labels.empty()) {
      int best = 0;
      std::size_t best_count = 0;
      for (const auto& [label, count] : counts) {
        if (count > best_count) {
          best = label;
          best_count = count;
        }
      }
      res.labels.push_back(best);
    }
    ++row;
  }
  return res;
}

std::vector<std::size_t> balanced_subsample(std::span<const int> labels, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);
  std::size_t per_label = labels.size();
  for (const auto& [label, rows] : by_label) per_label = std::min(per_label, rows.size());
  std::vector<std::size_t> out;
  for (auto& [label, rows] : by_label) {
    CounterRng rng(seed, "balanced", static_cast<std::uint64_t>(label));
    for (std::size_t i = 0; i < per_label; ++i) std::swap(rows[i], rows[i + rng.below(rows.size() - i)]);
    out.insert(out.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(per_label));
  }
  std::sort(out.begin(), out.end());
  return out;
}

SignalReport evaluate_signal(const RunConfig& cfg, const ParamStore& params, std::span<const SyntheticScene> scenes,
                             std::uint64_t seed) {
  SignalReport rep;
  std::vector<double> features;
  std::vector<int> labels;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const SyntheticScene& scene = scenes[s];
    try {
      const PlaneModel plane = fit_ground_plane(scene.cloud, cfg.ransac, derive_seed(seed, "eval_ransac", s));
      const TensorData proj = proposal_projections(cfg, params, scene.cloud, plane, derive_seed(seed, "eval", s));
      if (proj.rows() >= 2) {
        rep.retrieval += cross_view_retrieval(proj);
        rep.retrieval_chance += 2.0 / static_cast<double>(proj.rows());
        ++rep.retrieval_scenes;
      }
    } catch (const FitError&) {
      // no ground, no proposals
    }
    const auto classes = scene.point_classes();
    const CellEmbeddings cells = bev_cell_embeddings(cfg, params, scene.cloud, classes);
    features.insert(features.end(), cells.features.values.begin(), cells.features.values.end());
    labels.insert(labels.end(), cells.labels.begin(), cells.labels.end());
  }
  if (rep.retrieval_scenes > 0) {
    rep.retrieval /= static_cast<double>(rep.retrieval_scenes);
    rep.retrieval_chance /= static_cast<double>(rep.retrieval_scenes);
  }
  const std::size_t c = cfg.model.feature_dim;
  const auto keep = balanced_subsample(labels, derive_seed(seed, "eval_cells"));
  if (keep.size() >= cfg.eval.kmeans_k) {
    TensorData subset = TensorData::zeros({keep.size(), c});
    std::vector<int> subset_labels(keep.size());
    for (std::size_t r = 0; r < keep.size(); ++r) {
      std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(keep[r] * c), c,
                  subset.values.begin() + static_cast<std::ptrdiff_t>(r * c));
      subset_labels[r] = labels[keep[r]];
    }
    const KMeansResult km = kmeans(subset, cfg.eval.kmeans_k, derive_seed(seed, "eval_kmeans"), cfg.eval.kmeans_iters);
    rep.purity = cluster_purity(km.assignments, subset_labels);
    rep.purity_baseline = purity_permutation_baseline(km.assignments, subset_labels, derive_seed(seed, "eval_perm"));
    rep.clustered_cells = keep.size();
  }
  return rep;
}

}  // namespace patchcontrast
