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
#include <map>
#include <string>
#include <string_view>

#include "patchcontrast/pointcloud_io.hpp"
#include "patchcontrast/tensor.hpp"

namespace patchcontrast {

struct ModelConfig {
  std::size_t point_hidden_dim = 32;   // first per-point MLP layer
  std::size_t point_feature_dim = 16;  // features scattered onto the grid
  std::size_t feature_dim = 64;        // C
  std::size_t projection_dim = 32;     // z
  std::size_t grid_height = 64;
  std::size_t grid_width = 64;
  std::size_t num_patches = 4;         // 0 disables the patch branch

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Trainable weights keyed by name. Keys are stable across runs and double as
// checkpoint entry names.
using ParamStore = TensorMap;
using BoundParams = std::map<std::string, Tensor, std::less<>>;

// Glorot-uniform weights, zero biases, each tensor drawn from its own
// named stream of `seed`.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);
// Expected shape of every parameter.
std::map<std::string, Shape> param_shapes(const ModelConfig& cfg);

// Inserts every parameter into `graph`, as variables when trainable.
BoundParams bind_params(Graph& graph, const ParamStore& params, bool trainable);
const Tensor& param(const BoundParams& params, std::string_view name);

// x W + b
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
// Linear, relu, linear using "<prefix>.l1.{w,b}" and "<prefix>.l2.{w,b}".
Tensor mlp2(const BoundParams& params, std::string_view prefix, const Tensor& x);

}  // namespace patchcontrast
