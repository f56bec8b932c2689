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

#include "patchcontrast/grad_suite.hpp"

#include "patchcontrast/attention.hpp"
#include "patchcontrast/errors.hpp"
#include "patchcontrast/rng.hpp"
#include "patchcontrast/training.hpp"

namespace patchcontrast {

namespace {

constexpr double kToyPositionalGain = 3.0;

TensorData random_data(Shape shape, CounterRng& rng, double spread = 1.0) {
  TensorData d = TensorData::zeros(std::move(shape));
  for (double& v : d.values) v = spread * rng.normal();
  return d;
}

// Reduces an op output to a scalar through fixed random weights so that
// every output coordinate carries a distinct upstream gradient.
Tensor weighted_sum(Graph& g, const Tensor& y, std::uint64_t seed) {
  CounterRng rng(seed, "readout");
  TensorData w = TensorData::zeros(y.shape());
  for (double& v : w.values) v = rng.uniform(0.5, 1.5) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  return sum(mul(y, g.constant(std::move(w))));
}

}  // namespace

RunConfig toy_run_config() {
  RunConfig c = RunConfig::desk();
  c.model.point_hidden_dim = 4;
  c.model.point_feature_dim = 3;
  c.model.feature_dim = 4;
  c.model.projection_dim = 3;
  c.model.grid_height = 4;
  c.model.grid_width = 4;
  c.proposals.count = 2;
  // Views differ only by rigid and scale changes, so both keep every point.
  c.augmentation = AugmentationConfig::identity();
  c.augmentation.rot_prob = 1.0;
  c.augmentation.rot_range_deg = {-10.0, 10.0};
  c.augmentation.scale_range = {0.98, 1.02};
  return c;
}

SyntheticScene toy_scene(std::uint64_t seed) {
  // A jittered ground lattice and two raised plates, so the four patch
  // keypoints of a proposal are distinct points.
  CounterRng rng(seed, "toy_scene");
  SyntheticScene scene;
  scene.instance_class = {ObjectClass::kGround, ObjectClass::kBox, ObjectClass::kPost};
  scene.instance_center = {Vec3::Zero(), Vec3(-2.0, 0.0, 0.0), Vec3(2.0, 0.0, 0.0)};
  scene.instance_radius = {0.0, 0.7, 0.7};
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      const double x = -4.0 + 1.6 * i + rng.uniform(-0.3, 0.3);
      const double y = -4.0 + 1.6 * j + rng.uniform(-0.3, 0.3);
      scene.cloud.push_back({x, y, 0.01 * rng.normal(), rng.uniform(0.1, 0.6)}, scene.cloud.size());
      scene.instance.push_back(0);
    }
  }
  for (std::size_t k = 1; k <= 2; ++k) {
    const Vec3 c = scene.instance_center[k];
    for (int i = -2; i <= 2; ++i) {
      for (int j = -2; j <= 2; ++j) {
        scene.cloud.push_back({c.x() + 0.3 * i + rng.uniform(-0.05, 0.05), c.y() + 0.3 * j + rng.uniform(-0.05, 0.05),
                               -0.5 + 1.0 * static_cast<double>(k) + rng.uniform(-0.1, 0.1), rng.uniform(0.1, 0.6)},
                              scene.cloud.size());
        scene.instance.push_back(k);
      }
    }
  }
  return scene;
}

std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed, double h) {
  std::vector<GradSuiteEntry> out;
  CounterRng rng(seed, "grad_suite");
  const std::uint64_t rs = derive_seed(seed, "readout");
  auto check = [&](const std::string& name, std::vector<TensorData> inputs, auto fn) {
    ScalarFn f = [&](Graph& g, std::span<const Tensor> x) { return weighted_sum(g, fn(g, x), rs); };
    out.push_back({name, grad_check(f, inputs, h)});
  };
  auto check_scalar = [&](const std::string& name, std::vector<TensorData> inputs, ScalarFn f) {
    out.push_back({name, grad_check(f, inputs, h)});
  };

  check("add", {random_data({3, 4}, rng), random_data({3, 4}, rng)},
        [](Graph&, std::span<const Tensor> x) { return add(x[0], x[1]); });
  check("sub", {random_data({3, 4}, rng), random_data({3, 4}, rng)},
        [](Graph&, std::span<const Tensor> x) { return sub(x[0], x[1]); });
  check("mul", {random_data({3, 4}, rng), random_data({3, 4}, rng)},
        [](Graph&, std::span<const Tensor> x) { return mul(x[0], x[1]); });
  check("scale", {random_data({3, 4}, rng)}, [](Graph&, std::span<const Tensor> x) { return scale(x[0], -1.7); });
  check("affine", {random_data({3, 4}, rng)},
        [](Graph&, std::span<const Tensor> x) { return affine(x[0], 0.3, 2.0); });
  check("relu", {random_data({4, 5}, rng)}, [](Graph&, std::span<const Tensor> x) { return relu(x[0]); });
  check("tanh", {random_data({4, 5}, rng)}, [](Graph&, std::span<const Tensor> x) { return tanh(x[0]); });
  check("add_row", {random_data({4, 3}, rng), random_data({1, 3}, rng)},
        [](Graph&, std::span<const Tensor> x) { return add_row(x[0], x[1]); });
  check("mul_col", {random_data({4, 3}, rng), random_data({4, 1}, rng)},
        [](Graph&, std::span<const Tensor> x) { return mul_col(x[0], x[1]); });
  check("sum", {random_data({3, 4}, rng)}, [](Graph&, std::span<const Tensor> x) { return sum(x[0]); });
  check("mean", {random_data({3, 4}, rng)}, [](Graph&, std::span<const Tensor> x) { return mean(x[0]); });
  check("row_sum", {random_data({3, 4}, rng)}, [](Graph&, std::span<const Tensor> x) { return row_sum(x[0]); });
  check("row_dot", {random_data({3, 4}, rng), random_data({3, 4}, rng)},
        [](Graph&, std::span<const Tensor> x) { return row_dot(x[0], x[1]); });
  check("max_pool_rows", {random_data({5, 3}, rng)},
        [](Graph&, std::span<const Tensor> x) { return max_pool_rows(x[0]); });
  check("segment_max", {random_data({6, 3}, rng)}, [](Graph&, std::span<const Tensor> x) {
    const std::size_t seg[] = {2, 0, 2, 1, 0, 2};
    return segment_max(x[0], seg, 4);
  });
  check("group_sum_rows", {random_data({6, 2}, rng)},
        [](Graph&, std::span<const Tensor> x) { return group_sum_rows(x[0], 3); });
  check("matmul", {random_data({3, 4}, rng), random_data({4, 2}, rng)},
        [](Graph&, std::span<const Tensor> x) { return matmul(x[0], x[1]); });
  check("transpose", {random_data({3, 4}, rng)}, [](Graph&, std::span<const Tensor> x) { return transpose(x[0]); });
  check("reshape", {random_data({3, 4}, rng)},
        [](Graph&, std::span<const Tensor> x) { return reshape(x[0], {2, 6}); });
  check("concat_rows", {random_data({2, 3}, rng), random_data({3, 3}, rng)},
        [](Graph&, std::span<const Tensor> x) { return concat_rows(x); });
  check("concat_cols", {random_data({3, 2}, rng), random_data({3, 4}, rng)},
        [](Graph&, std::span<const Tensor> x) { return concat_cols(x[0], x[1]); });
  check("gather_rows", {random_data({4, 3}, rng)}, [](Graph&, std::span<const Tensor> x) {
    const std::size_t rows[] = {3, 0, 3, 1};
    return gather_rows(x[0], rows);
  });
  check("pick", {random_data({3, 4}, rng)}, [](Graph&, std::span<const Tensor> x) {
    const std::pair<std::size_t, std::size_t> at[] = {{0, 1}, {2, 3}, {0, 1}};
    return pick(x[0], at);
  });
  check("l2_normalize", {random_data({3, 4}, rng)},
        [](Graph&, std::span<const Tensor> x) { return l2_normalize(x[0]); });
  check("softmax_rows", {random_data({3, 4}, rng)},
        [](Graph&, std::span<const Tensor> x) { return softmax_rows(x[0]); });
  check("masked_logsumexp_rows", {random_data({3, 4}, rng)}, [](Graph&, std::span<const Tensor> x) {
    const unsigned char mask[] = {1, 0, 1, 1, 0, 1, 1, 1, 1, 1, 1, 0};
    return masked_logsumexp_rows(x[0], mask);
  });
  check("conv3x3", {random_data({4, 5, 2}, rng), random_data({18, 3}, rng), random_data({1, 3}, rng)},
        [](Graph&, std::span<const Tensor> x) { return conv3x3(x[0], x[1], x[2]); });
  {
    // Sparse grid: a third of the cells are empty.
    TensorData grid = random_data({4, 5, 2}, rng);
    for (std::size_t cell = 0; cell < 20; cell += 3) grid.values[cell * 2] = grid.values[cell * 2 + 1] = 0.0;
    check("conv3x3_sparse", {random_data({18, 3}, rng), random_data({1, 3}, rng)},
          [grid](Graph& g, std::span<const Tensor> x) { return conv3x3(g.constant(grid), x[0], x[1], true); });
  }
  {
    std::vector<GridPoint> at;
    for (int i = 0; i < 6; ++i) at.push_back({rng.uniform(-0.3, 3.3), rng.uniform(-0.3, 4.3)});
    check("bilinear_sample", {random_data({4, 5, 3}, rng)},
          [at](Graph&, std::span<const Tensor> x) { return bilinear_sample(x[0], at); });
  }

  check_scalar("cosine_similarity", {random_data({1, 8}, rng), random_data({1, 8}, rng)},
               [](Graph&, std::span<const Tensor> x) { return sum(row_dot(l2_normalize(x[0]), l2_normalize(x[1]))); });
  check_scalar("nt_xent", {random_data({4, 5}, rng)},
               [](Graph&, std::span<const Tensor> x) { return nt_xent(x[0], 0, 1, 0.5); });
  check_scalar("proposal_loss", {random_data({6, 5}, rng)},
               [](Graph&, std::span<const Tensor> x) { return proposal_loss(x[0], 0.5); });
  check_scalar("p2p_loss_mixed", {random_data({4, 5}, rng), random_data({4, 5}, rng)},
               [](Graph&, std::span<const Tensor> x) {
                 return proposal_to_patch_loss(x[0], x[1], 0.5, NegativePool::kMixed);
               });
  check_scalar("p2p_loss_cross", {random_data({4, 5}, rng), random_data({4, 5}, rng)},
               [](Graph&, std::span<const Tensor> x) {
                 return proposal_to_patch_loss(x[0], x[1], 0.5, NegativePool::kCross);
               });
  check_scalar("reconstruction_loss", {random_data({3, 5}, rng), random_data({3, 5}, rng)},
               [](Graph&, std::span<const Tensor> x) { return reconstruction_loss(x[0], x[1]); });
  {
    const std::size_t c = 5;
    std::vector<TensorData> inputs{random_data({8, c}, rng), random_data({8, c}, rng)};
    for (int i = 0; i < 4; ++i) inputs.push_back(random_data({c, c}, rng, 0.5));
    const std::size_t slots[] = {rng.below(4), rng.below(4)};
    check_scalar("masked_attention_rec", inputs, [slots](Graph&, std::span<const Tensor> x) {
      BoundParams p{{"attention.query", x[2]}, {"attention.key", x[3]}, {"attention.value", x[4]},
                    {"attention.output", x[5]}};
      const Tensor tokens = add(x[0], x[1]);
      const Tensor u_hat = masked_attention(p, tokens, x[1], slots, 4);
      const std::size_t rows[] = {slots[0], 4 + slots[1]};
      return reconstruction_loss(gather_rows(tokens, rows), u_hat);
    });
  }

  // Full objective on a toy scene, differentiated w.r.t. every parameter.
  {
    const RunConfig cfg = toy_run_config();
    const SyntheticScene scene = toy_scene(seed);
    ParamStore params = init_params(cfg.model, derive_seed(seed, "toy_params"));
    // Zero biases put relu inputs exactly on the kink wherever a patch
    // keypoint coincides with its proposal center.
    CounterRng bias_rng(seed, "toy_bias");
    for (auto& [name, t] : params) {
      if (name.ends_with(".b")) {
        for (double& v : t.values) v = bias_rng.uniform(-0.1, 0.1);
      }
      // Patch tokens of one proposal are nearly equal at initialization, which
      // leaves the attention scores flat and their gradients near zero.
      if (name.starts_with("positional.") && name.ends_with(".w")) {
        for (double& v : t.values) v *= kToyPositionalGain;
      }
    }
    // Start the patch branch from the proposal branch so positives are
    // already similar. A large objective would bury small gradients under
    // the rounding of f itself.
    for (const char* layer : {"encoder.l1", "encoder.l2", "projector.l1", "projector.l2"}) {
      for (const char* part : {".w", ".b"}) {
        params[std::string("patch_") + layer + part] = params[std::string("proposal_") + layer + part];
      }
    }
    PlaneModel plane;  // the toy ground is z = 0
    const std::uint64_t sseed = derive_seed(seed, "toy_sample");
    const PreparedScene prepared = prepare_scene(cfg, scene.cloud, plane, sseed);
    if (prepared.geometry.num_pairs() == 0) throw ContractViolation("toy scene produced no proposals");
    std::vector<std::string> names;
    std::vector<TensorData> inputs;
    for (const auto& [name, t] : params) {
      names.push_back(name);
      inputs.push_back(t);
    }
    check_scalar("objective_end_to_end", inputs, [&](Graph&, std::span<const Tensor> x) {
      BoundParams bound;
      for (std::size_t i = 0; i < names.size(); ++i) bound.emplace(names[i], x[i]);
      const EmbeddingSet emb = forward_scene(bound, cfg.model, prepared.pair, prepared.geometry);
      const Tensor l_p = proposal_loss(emb.proj_proposals, cfg.loss.temperature);
      const Tensor l_p2p =
          proposal_to_patch_loss(emb.proj_proposals, emb.proj_patches, cfg.loss.temperature, cfg.p2p_negative_pool);
      const Tensor l_rec = refinement_loss_batch(bound, emb, derive_seed(sseed, "mask"));
      return total_loss(l_p, l_p2p, l_rec, cfg.loss);
    });
  }
  return out;
}

}  // namespace patchcontrast
