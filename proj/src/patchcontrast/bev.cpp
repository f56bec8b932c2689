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

#include "patchcontrast/bev.hpp"

#include <algorithm>
#include <cmath>

#include "patchcontrast/errors.hpp"

namespace patchcontrast {

BevBounds scene_bounds(const PointCloud& cloud) {
  if (cloud.empty()) return {};
  BevBounds b{cloud.points[0].x, cloud.points[0].x, cloud.points[0].y, cloud.points[0].y};
  for (const Point& p : cloud.points) {
    b.x_min = std::min(b.x_min, p.x);
    b.x_max = std::max(b.x_max, p.x);
    b.y_min = std::min(b.y_min, p.y);
    b.y_max = std::max(b.y_max, p.y);
  }
  auto widen = [](double& lo, double& hi) {
    if (hi - lo < 1.0) {
      const double mid = 0.5 * (lo + hi);
      lo = mid - 0.5;
      hi = mid + 0.5;
    }
  };
  widen(b.x_min, b.x_max);
  widen(b.y_min, b.y_max);
  return b;
}

GridPoint BevFeatureMap::locate(double x, double y) const {
  return {(y - bounds.y_min) / cell_height() - 0.5, (x - bounds.x_min) / cell_width() - 0.5};
}

std::size_t BevFeatureMap::cell_of(double x, double y) const {
  auto index = [](double v, std::size_t n) {
    const double f = std::floor(v);
    if (!(f > 0.0)) return std::size_t{0};
    return std::min(static_cast<std::size_t>(f), n - 1);
  };
  const std::size_t col = index((x - bounds.x_min) / cell_width(), width);
  const std::size_t row = index((y - bounds.y_min) / cell_height(), height);
  return row * width + col;
}

std::array<double, 2> BevFeatureMap::cell_center(std::size_t cell) const {
  const std::size_t row = cell / width, col = cell % width;
  return {bounds.x_min + (static_cast<double>(col) + 0.5) * cell_width(),
          bounds.y_min + (static_cast<double>(row) + 0.5) * cell_height()};
}

BackboneOutput backbone_forward(const BoundParams& params, const ModelConfig& cfg, const PointCloud& cloud) {
  if (cloud.empty()) throw ContractViolation("backbone_forward: empty cloud");
  Graph& g = param(params, "backbone.conv.w").graph();

  BackboneOutput out;
  out.bev.bounds = scene_bounds(cloud);
  out.bev.height = cfg.grid_height;
  out.bev.width = cfg.grid_width;

  double z_min = cloud.points[0].z, z_max = z_min;
  for (const Point& p : cloud.points) {
    z_min = std::min(z_min, p.z);
    z_max = std::max(z_max, p.z);
  }
  const double z_span = std::max(z_max - z_min, 1.0);
  const BevBounds& b = out.bev.bounds;

  const std::size_t n = cloud.size();
  TensorData inputs = TensorData::zeros({n, 4});
  out.point_cell.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = cloud.points[i];
    inputs.at(i, 0) = 2.0 * (p.x - b.x_min) / (b.x_max - b.x_min) - 1.0;
    inputs.at(i, 1) = 2.0 * (p.y - b.y_min) / (b.y_max - b.y_min) - 1.0;
    inputs.at(i, 2) = 2.0 * (p.z - z_min) / z_span - 1.0;
    inputs.at(i, 3) = p.intensity;
    out.point_cell[i] = out.bev.cell_of(p.x, p.y);
  }
  Tensor x = g.constant(std::move(inputs));
  out.per_point = relu(mlp2(params, "backbone.point", x));

  const std::size_t cells = cfg.grid_height * cfg.grid_width;
  Tensor flat = segment_max(out.per_point, out.point_cell, cells);
  out.scattered = reshape(flat, {cfg.grid_height, cfg.grid_width, cfg.point_feature_dim});
  // Relu features are >= 0, so an all-zero cell is empty or fully inactive;
  // neither passes gradient back through the scatter.
  out.bev.grid = relu(conv3x3(out.scattered, param(params, "backbone.conv.w"), param(params, "backbone.conv.b"),
                              /*skip_zero_cells=*/true));
  return out;
}

Tensor bilinear_sample(const BevFeatureMap& bev, std::span<const std::array<double, 2>> xy) {
  std::vector<GridPoint> at;
  at.reserve(xy.size());
  for (const auto& p : xy) at.push_back(bev.locate(p[0], p[1]));
  return bilinear_sample(bev.grid, at);
}

}  // namespace patchcontrast
