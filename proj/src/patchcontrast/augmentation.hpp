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
#include <limits>
#include <vector>

#include "patchcontrast/pointcloud_io.hpp"

namespace patchcontrast {

struct AugmentationConfig {
  double flip_prob = 0.5;
  std::array<double, 2> scale_range{0.95, 1.05};
  std::array<double, 2> rot_range_deg{-45.0, 45.0};
  double rot_prob = 0.5;
  double drop_frac_max = 0.20;
  std::array<double, 2> coord_noise_sigma_range{0.0, 0.015};
  std::array<double, 2> intensity_noise_sigma_range{0.0, 0.01};
  double cuboid_prob = 1.0;
  double cuboid_min_area_frac = 0.75;
  double patch_drop_max_frac = 0.20;
  double patch_drop_radius = 2.0;

  // Every step disabled: apply_transform becomes the identity.
  static AugmentationConfig identity();
  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Fully concrete transform. Re-applying it reproduces the output bit-exactly.
struct Transform {
  static constexpr int kNoFlip = -1;
  static constexpr std::size_t kMaxDropSpheres = 8;

  int flip_axis = kNoFlip;  // 0 negates x, 1 negates y
  double scale = 1.0;
  double rotation = 0.0;  // radians about +z

  double drop_frac = 0.0;
  std::uint64_t drop_seed = 0;

  double coord_sigma = 0.0;
  double intensity_sigma = 0.0;
  std::uint64_t noise_seed = 0;

  // Crop rectangle in fractions of the current xy bounding box.
  bool crop = false;
  double crop_width_frac = 1.0;
  double crop_height_frac = 1.0;
  double crop_x_offset = 0.0;  // position of the rectangle within the slack, [0, 1]
  double crop_y_offset = 0.0;

  // Scene-patch drop: removal budget and candidate sphere centers given as
  // fractional positions into the current point list.
  double patch_drop_frac = 0.0;
  double patch_drop_radius = 2.0;
  std::vector<double> patch_drop_centers;

  static Transform identity() { return {}; }
  // Flip, scale and rotation only.
  Point apply_geometric(const Point& p) const;
  Point invert_geometric(const Point& p) const;

  friend bool operator==(const Transform&, const Transform&) = default;
};

inline constexpr std::size_t kDropped = std::numeric_limits<std::size_t>::max();

// keep[i] is the view index of input point i, or kDropped.
using KeepMap = std::vector<std::size_t>;

struct TransformedCloud {
  PointCloud cloud;
  KeepMap keep;
};

struct SceneViewPair {
  PointCloud s0;
  PointCloud s1;
  PointCloud s2;
  Transform t1;
  Transform t2;
  KeepMap keep1;
  KeepMap keep2;

  const PointCloud& view(int id) const { return id == 1 ? s1 : s2; }
  const Transform& transform(int id) const { return id == 1 ? t1 : t2; }
  const KeepMap& keep(int id) const { return id == 1 ? keep1 : keep2; }
};

Transform sample_transform(const AugmentationConfig& cfg, std::uint64_t seed);

// Fixed order: flip, scale, rotate; point dropout; Gaussian noise on
// coordinates and intensity; cuboid crop; scene-patch drop.
TransformedCloud apply_transform(const PointCloud& cloud, const Transform& t);

SceneViewPair make_view_pair(const PointCloud& s0, const AugmentationConfig& cfg, std::uint64_t seed);

}  // namespace patchcontrast
