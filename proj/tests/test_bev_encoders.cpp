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


#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "patchcontrast/augmentation.hpp"
#include "patchcontrast/bev.hpp"
#include "patchcontrast/config.hpp"
#include "patchcontrast/encoders.hpp"
#include "patchcontrast/errors.hpp"
#include "patchcontrast/eval.hpp"
#include "patchcontrast/params.hpp"
#include "patchcontrast/training.hpp"
#include "test_support.hpp"

using namespace patchcontrast;
using pctest::random_tensor;

namespace {

ModelConfig small_model() {
  ModelConfig m;
  m.point_hidden_dim = 6;
  m.point_feature_dim = 5;
  m.feature_dim = 8;
  m.projection_dim = 4;
  m.grid_height = 6;
  m.grid_width = 6;
  return m;
}

// Random biases keep relu inputs away from exact zeros.
ParamStore generic_params(const ModelConfig& m, std::uint64_t seed) {
  ParamStore p = init_params(m, seed);
  for (auto& [name, t] : p) {
    if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0) {
      t = random_tensor(seed, name, t.shape, 0.05, 0.3);
    }
  }
  return p;
}

std::vector<double> row(const TensorData& t, std::size_t r) {
  return {t.values.begin() + static_cast<std::ptrdiff_t>(r * t.cols()),
          t.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * t.cols())};
}

}  // namespace

TEST_CASE("single point fills exactly one cell before the convolution") {
  const ModelConfig m = small_model();
  const ParamStore p = generic_params(m, 1);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Graph g;
    const BoundParams bp = bind_params(g, p, false);
    const PointCloud c = pctest::random_cloud(seed, 1);
    const BackboneOutput out = backbone_forward(bp, m, c);
    const TensorData s = out.scattered.data();
    const std::size_t C = m.point_feature_dim;
    std::size_t nonzero_cells = 0;
    for (std::size_t cell = 0; cell < m.grid_height * m.grid_width; ++cell) {
      bool any = false;
      for (std::size_t k = 0; k < C; ++k) any = any || s.values[cell * C + k] != 0.0;
      if (any) {
        ++nonzero_cells;
        CHECK(cell == out.point_cell[0]);
      }
    }
    CHECK(nonzero_cells == 1);
  }
}

TEST_CASE("two points in one cell scatter to their elementwise max") {
  const ModelConfig m = small_model();
  const ParamStore p = generic_params(m, 2);
  Graph g;
  const BoundParams bp = bind_params(g, p, false);
  // Far corners fix the bounds; the two probes share a cell.
  const PointCloud c = PointCloud::from_points(
      {{-6, -6, 0, 0.1}, {6, 6, 1, 0.9}, {0.2, 0.3, 0.4, 0.2}, {0.4, 0.5, 1.5, 0.8}});
  const BackboneOutput out = backbone_forward(bp, m, c);
  REQUIRE(out.point_cell[2] == out.point_cell[3]);
  const TensorData f = out.per_point.data();
  const TensorData s = out.scattered.data();
  const std::size_t cell = out.point_cell[2];
  for (std::size_t k = 0; k < m.point_feature_dim; ++k) {
    CHECK(s.values[cell * m.point_feature_dim + k] == std::max(f.at(2, k), f.at(3, k)));
  }
}

TEST_CASE("gradient of the summed feature map w.r.t. the point MLP") {
  const ModelConfig m = small_model();
  const PointCloud c = pctest::random_cloud(3, 40, 4.0, 1.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ParamStore p = generic_params(m, seed);
    const std::vector<std::string> names{"backbone.point.l1.w", "backbone.point.l1.b", "backbone.point.l2.w",
                                         "backbone.point.l2.b", "backbone.conv.w", "backbone.conv.b"};
    std::vector<TensorData> in;
    for (const auto& n : names) in.push_back(p.at(n));
    const auto rep = grad_check(
        [&](Graph& g, std::span<const Tensor> t) {
          BoundParams bp = bind_params(g, p, false);
          for (std::size_t i = 0; i < names.size(); ++i) bp[names[i]] = t[i];
          return sum(backbone_forward(bp, m, c).bev.grid);
        },
        in);
    INFO("seed " << seed << " input " << rep.input << " index " << rep.index);
    CHECK(rep.max_rel_error < 1e-4);
  }
}

TEST_CASE("bilinear sampling examples") {
  BevFeatureMap bev;
  bev.height = 3;
  bev.width = 4;
  bev.bounds = {0, 4, 0, 3};
  Graph g;
  const TensorData grid = random_tensor(5, "grid", {3, 4, 2});
  bev.grid = g.constant(grid);
  auto cell_value = [&](std::size_t r, std::size_t c, std::size_t k) { return grid.values[(r * 4 + c) * 2 + k]; };

  const std::vector<std::array<double, 2>> at{{1.5, 2.5}, {2.0, 0.5}};
  const TensorData s = bilinear_sample(bev, at).data();
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(s.at(0, k) == cell_value(2, 1, k));
    CHECK(s.at(1, k) == doctest::Approx(0.5 * (cell_value(0, 1, k) + cell_value(0, 2, k))).epsilon(1e-14));
  }
}

TEST_CASE("constant grid samples constant everywhere") {
  BevFeatureMap bev;
  bev.height = 4;
  bev.width = 5;
  bev.bounds = {-2, 3, -1, 3};
  Graph g;
  bev.grid = g.constant(TensorData({4, 5, 1}, std::vector<double>(20, 0.75)));
  std::vector<std::array<double, 2>> at;
  CounterRng rng(1, "xy");
  for (int i = 0; i < 200; ++i) at.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10)});
  for (double v : bilinear_sample(bev, at).values()) CHECK(v == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("bilinear sampling is a convex combination of neighbors") {
  BevFeatureMap bev;
  bev.height = 5;
  bev.width = 5;
  bev.bounds = {0, 5, 0, 5};
  Graph g;
  const TensorData grid = random_tensor(6, "grid", {5, 5, 3});
  bev.grid = g.constant(grid);
  CounterRng rng(2, "xy");
  for (int i = 0; i < 500; ++i) {
    const double x = rng.uniform(-1, 6), y = rng.uniform(-1, 6);
    const std::vector<std::array<double, 2>> at{{x, y}};
    const TensorData s = bilinear_sample(bev, at).data();
    const GridPoint gp = bev.locate(x, y);
    const auto clampi = [](double v) { return static_cast<std::size_t>(std::clamp(v, 0.0, 4.0)); };
    const std::size_t r0 = clampi(std::floor(gp.row)), r1 = clampi(std::floor(gp.row) + 1);
    const std::size_t c0 = clampi(std::floor(gp.col)), c1 = clampi(std::floor(gp.col) + 1);
    for (std::size_t k = 0; k < 3; ++k) {
      double lo = 1e9, hi = -1e9;
      for (std::size_t r : {r0, r1}) {
        for (std::size_t c : {c0, c1}) {
          lo = std::min(lo, grid.values[(r * 5 + c) * 3 + k]);
          hi = std::max(hi, grid.values[(r * 5 + c) * 3 + k]);
        }
      }
      CHECK(s.at(0, k) >= lo - 1e-15);
      CHECK(s.at(0, k) <= hi + 1e-15);
    }
  }
}

TEST_CASE("single point sampled at its cell center recovers the convolved cell") {
  ModelConfig m = small_model();
  m.grid_height = 3;
  m.grid_width = 3;
  const ParamStore p = generic_params(m, 4);
  Graph g;
  const BoundParams bp = bind_params(g, p, false);
  const PointCloud c = PointCloud::from_points({{2.0, -1.0, 0.5, 0.4}});
  const BackboneOutput out = backbone_forward(bp, m, c);
  const auto center = out.bev.cell_center(out.point_cell[0]);
  CHECK(center[0] == doctest::Approx(2.0));
  CHECK(center[1] == doctest::Approx(-1.0));
  const std::vector<std::array<double, 2>> at{{2.0, -1.0}};
  const TensorData s = bilinear_sample(out.bev, at).data();
  const TensorData f = out.bev.grid.data();
  for (std::size_t k = 0; k < m.feature_dim; ++k) CHECK(s.at(0, k) == f.values[out.point_cell[0] * m.feature_dim + k]);
}

TEST_CASE("point encoders are permutation invariant and idempotent under duplicates") {
  const ModelConfig m = small_model();
  const ParamStore p = generic_params(m, 5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Graph g;
    const BoundParams bp = bind_params(g, p, false);
    const TensorData x = random_tensor(seed, "pts", {7, m.feature_dim + 3});
    std::vector<std::size_t> perm{3, 0, 6, 2, 5, 1, 4};
    std::vector<std::size_t> dup{0, 1, 2, 3, 4, 5, 6, 2, 2, 5};
    for (auto enc : {&encode_proposal, &encode_patch}) {
      const Tensor base = enc(bp, g.constant(x));
      CHECK(enc(bp, gather_rows(g.constant(x), perm)).data() == base.data());
      CHECK(enc(bp, gather_rows(g.constant(x), dup)).data() == base.data());
    }
    const std::vector<std::size_t> one{4};
    const Tensor single = gather_rows(g.constant(x), one);
    CHECK(encode_proposal(bp, single).data().values == mlp2(bp, "proposal_encoder", single).data().values);
  }
}

TEST_CASE("positional encoding examples") {
  const ModelConfig m = small_model();
  ParamStore zero = init_params(m, 1);
  for (const char* n : {"positional.l1.w", "positional.l1.b", "positional.l2.w", "positional.l2.b"}) {
    std::fill(zero[n].values.begin(), zero[n].values.end(), 0.0);
  }
  Graph g;
  const BoundParams bz = bind_params(g, zero, false);
  for (double v : positional_encode(bz, g.constant(random_tensor(2, "q", {3, 3}))).values()) CHECK(v == 0.0);

  const ParamStore p = generic_params(m, 6);
  const BoundParams bp = bind_params(g, p, false);
  TensorData q = random_tensor(3, "q", {2, 3});
  for (std::size_t d = 0; d < 3; ++d) q.at(1, d) = q.at(0, d);
  const TensorData e = positional_encode(bp, g.constant(q)).data();
  CHECK(row(e, 0) == row(e, 1));

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ParamStore ps = generic_params(m, seed);
    std::vector<TensorData> in{random_tensor(seed, "q", {4, 3}), ps.at("positional.l1.w"), ps.at("positional.l2.w")};
    const auto rep = grad_check(
        [&](Graph& gr, std::span<const Tensor> t) {
          BoundParams b = bind_params(gr, ps, false);
          b["positional.l1.w"] = t[1];
          b["positional.l2.w"] = t[2];
          return sum(tanh(positional_encode(b, t[0])));
        },
        in);
    CHECK(rep.max_rel_error < 1e-4);
  }
}

TEST_CASE("projector examples") {
  const ModelConfig m = small_model();
  ParamStore zero = init_params(m, 1);
  for (auto& [name, t] : zero) {
    if (name.rfind("proposal_projector", 0) == 0) std::fill(t.values.begin(), t.values.end(), 0.0);
  }
  Graph g;
  const BoundParams bz = bind_params(g, zero, false);
  for (double v : project(bz, Projector::kProposal, g.constant(random_tensor(1, "x", {2, m.feature_dim}))).values()) {
    CHECK(v == 0.0);
  }

  // Positive inputs, weights and biases keep every hidden unit active, so
  // the projector is the composition of its two affine maps.
  ParamStore pos = init_params(m, 2);
  for (const char* n : {"patch_projector.l1.w", "patch_projector.l1.b"}) pos[n] = random_tensor(2, n, pos[n].shape, 0.1, 1.0);
  const BoundParams bp = bind_params(g, pos, false);
  const TensorData x = random_tensor(3, "x", {3, m.feature_dim}, 0.1, 1.0);
  const TensorData y = project(bp, Projector::kPatch, g.constant(x)).data();
  const TensorData& w1 = pos.at("patch_projector.l1.w");
  const TensorData& b1 = pos.at("patch_projector.l1.b");
  const TensorData& w2 = pos.at("patch_projector.l2.w");
  const TensorData& b2 = pos.at("patch_projector.l2.b");
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> h(m.feature_dim);
    for (std::size_t j = 0; j < m.feature_dim; ++j) {
      h[j] = b1.values[j];
      for (std::size_t i = 0; i < m.feature_dim; ++i) h[j] += x.at(r, i) * w1.at(i, j);
    }
    for (std::size_t j = 0; j < m.projection_dim; ++j) {
      double o = b2.values[j];
      for (std::size_t i = 0; i < m.feature_dim; ++i) o += h[i] * w2.at(i, j);
      CHECK(std::abs(y.at(r, j) - o) <= 1e-12);
    }
  }

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ParamStore ps = generic_params(m, seed);
    std::vector<TensorData> in{random_tensor(seed, "x", {3, m.feature_dim}), ps.at("proposal_projector.l1.w"),
                               ps.at("proposal_projector.l2.w")};
    const auto rep = grad_check(
        [&](Graph& gr, std::span<const Tensor> t) {
          BoundParams b = bind_params(gr, ps, false);
          b["proposal_projector.l1.w"] = t[1];
          b["proposal_projector.l2.w"] = t[2];
          return sum(tanh(project(b, Projector::kProposal, t[0])));
        },
        in);
    CHECK(rep.max_rel_error < 1e-4);
  }
}

TEST_CASE("aggregate_patches examples") {
  Graph g;
  const TensorData x = random_tensor(1, "p", {8, 5});
  CHECK(aggregate_patches(g.constant(x), 1).data() == x);
  const std::vector<std::size_t> perm{2, 0, 3, 1, 7, 5, 4, 6};
  CHECK(aggregate_patches(gather_rows(g.constant(x), perm), 4).data() == aggregate_patches(g.constant(x), 4).data());
  const std::vector<std::size_t> same{1, 1, 1, 1};
  CHECK(aggregate_patches(gather_rows(g.constant(x), same), 4).data().values == row(x, 1));
  CHECK_THROWS_AS(aggregate_patches(g.constant(x), 3), ContractViolation);
}

namespace {

struct SceneFixture {
  RunConfig cfg;
  SyntheticScene scene;
  PlaneModel plane;
  SceneFixture() {
    cfg = RunConfig::desk();
    cfg.model = small_model();
    cfg.proposals.count = 12;
    scene = generate_synthetic_scene(17, cfg.synthetic);
    plane = fit_ground_plane(scene.cloud, cfg.ransac, 1);
  }
};

}  // namespace

TEST_CASE("forward_scene shapes and view symmetry under identity views") {
  SceneFixture fx;
  const SceneViewPair pair = make_view_pair(fx.scene.cloud, AugmentationConfig::identity(), 3);
  const SceneGeometry geo =
      build_scene_geometry(pair, fx.plane, fx.cfg.background_margin, fx.cfg.proposals, fx.cfg.patches, true, 4);
  const std::size_t n = geo.num_pairs();
  REQUIRE(n > 0);
  const ParamStore p = generic_params(fx.cfg.model, 7);
  Graph g;
  const BoundParams bp = bind_params(g, p, false);
  const EmbeddingSet e = forward_scene(bp, fx.cfg.model, pair, geo);
  CHECK(e.proposals.shape() == Shape{2 * n, fx.cfg.model.feature_dim});
  CHECK(e.patches.shape() == Shape{2 * n * 4, fx.cfg.model.feature_dim});
  CHECK(e.positional.shape() == Shape{2 * n * 4, fx.cfg.model.feature_dim});
  CHECK(e.proj_proposals.shape() == Shape{2 * n, fx.cfg.model.projection_dim});
  CHECK(e.proj_patches.shape() == Shape{2 * n, fx.cfg.model.projection_dim});
  const TensorData pr = e.proposals.data();
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < pr.cols(); ++j) CHECK(std::abs(pr.at(2 * k, j) - pr.at(2 * k + 1, j)) <= 1e-10);
  }
}

TEST_CASE("forward_scene rows follow the pair slot order") {
  SceneFixture fx;
  const SceneViewPair pair = make_view_pair(fx.scene.cloud, fx.cfg.augmentation, 5);
  SceneGeometry geo =
      build_scene_geometry(pair, fx.plane, fx.cfg.background_margin, fx.cfg.proposals, fx.cfg.patches, true, 6);
  const std::size_t n = geo.num_pairs();
  REQUIRE(n > 1);
  const ParamStore p = generic_params(fx.cfg.model, 8);
  Graph g;
  const BoundParams bp = bind_params(g, p, false);
  const EmbeddingSet a = forward_scene(bp, fx.cfg.model, pair, geo);
  std::reverse(geo.proposals.begin(), geo.proposals.end());
  std::reverse(geo.patches.begin(), geo.patches.end());
  const EmbeddingSet b = forward_scene(bp, fx.cfg.model, pair, geo);
  const TensorData pa = a.proj_proposals.data(), pb = b.proj_proposals.data();
  const TensorData ta = a.proj_patches.data(), tb = b.proj_patches.data();
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t v = 0; v < 2; ++v) {
      CHECK(row(pa, 2 * k + v) == row(pb, 2 * (n - 1 - k) + v));
      CHECK(row(ta, 2 * k + v) == row(tb, 2 * (n - 1 - k) + v));
    }
  }
  // Each view's embedding uses that view's own points.
  CHECK_FALSE(row(pa, 0) == row(pa, 1));
}

TEST_CASE("forward_scene rejects an empty geometry") {
  SceneFixture fx;
  const SceneViewPair pair = make_view_pair(fx.scene.cloud, fx.cfg.augmentation, 5);
  const ParamStore p = init_params(fx.cfg.model, 1);
  Graph g;
  const BoundParams bp = bind_params(g, p, false);
  CHECK_THROWS_AS(forward_scene(bp, fx.cfg.model, pair, SceneGeometry{}), ContractViolation);
}

TEST_CASE("every parameter receives gradient from the full objective") {
  SceneFixture fx;
  const ParamStore p = generic_params(fx.cfg.model, 9);
  const PreparedScene prepared = prepare_scene(fx.cfg, fx.scene.cloud, fx.plane, 11);
  const SceneResult r = run_scene(fx.cfg, p, prepared, 11, true);
  REQUIRE_FALSE(r.skipped);
  for (const auto& [name, grad] : r.grads) {
    INFO(name);
    CHECK(std::any_of(grad.values.begin(), grad.values.end(), [](double v) { return v != 0.0; }));
  }
  CHECK(r.grads.size() == p.size());

  RunConfig no_rec = fx.cfg;
  no_rec.loss.rec = 0.0;
  const SceneResult q = run_scene(no_rec, p, prepared, 11, true);
  for (const auto& [name, grad] : q.grads) {
    const bool rec_only = name.rfind("positional.", 0) == 0 || name.rfind("attention.", 0) == 0;
    const bool any = std::any_of(grad.values.begin(), grad.values.end(), [](double v) { return v != 0.0; });
    INFO(name);
    CHECK(any != rec_only);
  }
}
