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
#include <span>
#include <vector>

#include "patchcontrast/params.hpp"
#include "patchcontrast/pointcloud_io.hpp"
#include "patchcontrast/tensor.hpp"

namespace patchcontrast {

struct BevBounds {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
};

// xy bounding box of the cloud, widened to at least 1 m per axis when the
// cloud is degenerate along it.
BevBounds scene_bounds(const PointCloud& cloud);

// H x W x C grid over the xy plane. Row index follows y, column index x.
struct BevFeatureMap {
  Tensor grid;
  BevBounds bounds;
  std::size_t height = 1;
  std::size_t width = 1;

  double cell_width() const { return (bounds.x_max - bounds.x_min) / static_cast<double>(width); }
  double cell_height() const { return (bounds.y_max - bounds.y_min) / static_cast<double>(height); }
  // Continuous position relative to cell centers.
  GridPoint locate(double x, double y) const;
  // Cell containing (x, y), clamped into the grid. Returns row * width + col.
  std::size_t cell_of(double x, double y) const;
  std::array<double, 2> cell_center(std::size_t cell) const;
};

struct BackboneOutput {
  Tensor per_point;       // n x point_feature_dim
  Tensor scattered;       // H x W x point_feature_dim, before the convolution
  BevFeatureMap bev;      // F: H x W x feature_dim
  std::vector<std::size_t> point_cell;
};

// Per-point MLP on normalized coordinates, scatter-max into the grid, then a
// 3x3 convolution with relu.
BackboneOutput backbone_forward(const BoundParams& params, const ModelConfig& cfg, const PointCloud& cloud);

Tensor bilinear_sample(const BevFeatureMap& bev, std::span<const std::array<double, 2>> xy);

}  // namespace patchcontrast
