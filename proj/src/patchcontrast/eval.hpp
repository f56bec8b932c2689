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
#include <span>
#include <vector>

#include "patchcontrast/geometry.hpp"
#include "patchcontrast/pointcloud_io.hpp"
#include "patchcontrast/tensor.hpp"

namespace patchcontrast {

enum class ObjectClass : int { kGround = 0, kBox = 1, kPost = 2, kWall = 3 };
inline constexpr int kNumClasses = 4;

struct SyntheticSpec {
  std::size_t min_instances = 4;
  std::size_t max_instances = 8;
  double half_extent = 12.0;       // scene covers [-e, e]^2
  std::size_t ground_points = 1500;
  double surface_density = 60.0;   // object points per square meter
  double noise_sigma = 0.02;
  double max_tilt_deg = 3.0;
  double separation = 1.0;         // proposal radius the layout must respect

  void validate() const;
};

struct SyntheticScene {
  PointCloud cloud;
  std::vector<std::size_t> instance;     // per point, 0 = ground
  std::vector<ObjectClass> instance_class;  // per instance, [0] = ground
  std::vector<Vec3> instance_center;     // footprint centers, [0] unused
  std::vector<double> instance_radius;   // footprint radii, [0] unused
  Vec3 plane_normal{0.0, 0.0, 1.0};
  double plane_offset = 0.0;             // n . p + offset = 0 on the ground

  int point_class(std::size_t i) const { return static_cast<int>(instance_class[instance[i]]); }
  std::vector<int> point_classes() const;
};

SyntheticScene generate_synthetic_scene(std::uint64_t seed, const SyntheticSpec& spec);

struct KMeansResult {
  std::vector<std::size_t> assignments;
  TensorData centroids;                 // k x d
  std::vector<double> inertia_history;  // after each assignment step
  std::size_t iterations = 0;
  bool converged = false;

  double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }
};

// k-means++ seeding, then Lloyd iterations until assignments repeat or
// `max_iters` is reached. points: n x d.
KMeansResult kmeans(const TensorData& points, std::size_t k, std::uint64_t seed, std::size_t max_iters = 100);

double cluster_purity(std::span<const std::size_t> assignments, std::span<const int> labels);
// Mean purity after shuffling the labels, `trials` times.
double purity_permutation_baseline(std::span<const std::size_t> assignments, std::span<const int> labels,
                                   std::uint64_t seed, std::size_t trials = 20);

// Rows 2k and 2k + 1 are the two views of pair k. Fraction of view-1 rows
// whose cosine-nearest view-2 row is their own pair.
double cross_view_retrieval(const TensorData& proj_proposals);

}  // namespace patchcontrast
