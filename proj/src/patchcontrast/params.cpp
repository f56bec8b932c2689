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

#include "patchcontrast/params.hpp"

#include <cmath>

#include "patchcontrast/errors.hpp"
#include "patchcontrast/rng.hpp"

namespace patchcontrast {

void ModelConfig::validate() const {
  if (point_hidden_dim == 0 || point_feature_dim == 0 || feature_dim == 0 || projection_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (grid_height == 0 || grid_width == 0) throw ConfigError("model grid must be at least 1x1");
  if (num_patches != 0 && num_patches != 4) throw ConfigError("model.num_patches must be 0 or 4");
}

std::map<std::string, Shape> param_shapes(const ModelConfig& cfg) {
  const std::size_t c = cfg.feature_dim, z = cfg.projection_dim;
  std::map<std::string, Shape> s;
  auto layer = [&s](const std::string& prefix, std::size_t in, std::size_t out) {
    s[prefix + ".w"] = {in, out};
    s[prefix + ".b"] = {1, out};
  };
  layer("backbone.point.l1", 4, cfg.point_hidden_dim);
  layer("backbone.point.l2", cfg.point_hidden_dim, cfg.point_feature_dim);
  layer("backbone.conv", 9 * cfg.point_feature_dim, c);
  layer("proposal_encoder.l1", c + 3, c);
  layer("proposal_encoder.l2", c, c);
  layer("proposal_projector.l1", c, c);
  layer("proposal_projector.l2", c, z);
  if (cfg.num_patches > 0) {
    layer("patch_encoder.l1", c + 3, c);
    layer("patch_encoder.l2", c, c);
    layer("positional.l1", 3, c);
    layer("positional.l2", c, c);
    layer("patch_projector.l1", c, c);
    layer("patch_projector.l2", c, z);
    for (const char* m : {"attention.query", "attention.key", "attention.value", "attention.output"}) {
      s[m] = {c, c};
    }
  }
  return s;
}

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore out;
  for (const auto& [name, shape] : param_shapes(cfg)) {
    TensorData t = TensorData::zeros(shape);
    const bool bias = name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
    if (!bias) {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      CounterRng rng(seed, name);
      for (double& v : t.values) v = rng.uniform(-limit, limit);
    }
    out.emplace(name, std::move(t));
  }
  return out;
}

BoundParams bind_params(Graph& graph, const ParamStore& params, bool trainable) {
  BoundParams bound;
  for (const auto& [name, data] : params) {
    bound.emplace(name, trainable ? graph.variable(data) : graph.constant(data));
  }
  return bound;
}

const Tensor& param(const BoundParams& params, std::string_view name) {
  auto it = params.find(name);
  if (it == params.end()) throw ContractViolation("missing parameter '" + std::string(name) + "'");
  return it->second;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_row(matmul(x, weight), bias);
}

Tensor mlp2(const BoundParams& params, std::string_view prefix, const Tensor& x) {
  const std::string p(prefix);
  Tensor h = relu(linear(x, param(params, p + ".l1.w"), param(params, p + ".l1.b")));
  return linear(h, param(params, p + ".l2.w"), param(params, p + ".l2.b"));
}

}  // namespace patchcontrast
