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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "patchcontrast/augmentation.hpp"
#include "patchcontrast/pointcloud_io.hpp"

namespace patchcontrast {

using Vec3 = Eigen::Vector3d;

inline Vec3 xyz(const Point& p) { return {p.x, p.y, p.z}; }
std::vector<Vec3> positions(const PointCloud& cloud);

// Euclidean distance. Radius membership everywhere uses this exact formula.
inline double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Plane n . x = offset with |n| = 1 and n.z >= 0.
struct PlaneModel {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  std::vector<bool> inlier_mask;

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
};

struct RansacParams {
  int iterations = 100;
  double inlier_tol = 0.15;
};

PlaneModel fit_ground_plane(const PointCloud& cloud, const RansacParams& params, std::uint64_t seed);

// Points strictly more than `margin` above the plane.
std::vector<bool> foreground_mask(const PointCloud& cloud, const PlaneModel& plane, double margin);
PointCloud remove_background(const PointCloud& cloud, const PlaneModel& plane, double margin);

// Greedy farthest point sampling from `start`; ties go to the lowest index.
std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points, std::size_t count,
                                                 std::size_t start = 0);

// Indices (ascending) within `radius` of `center`. When more than k_max
// qualify, a seeded uniform subset of size k_max is returned that always
// contains the point nearest the center.
std::vector<std::size_t> ball_query(std::span<const Vec3> points, const Vec3& center, double radius,
                                    std::size_t k_max, std::uint64_t seed);
// Same, restricted to the listed candidate indices.
std::vector<std::size_t> ball_query(std::span<const Vec3> points, std::span<const std::size_t> candidates,
                                    const Vec3& center, double radius, std::size_t k_max, std::uint64_t seed);

struct Proposal {
  int view_id = 1;
  std::size_t query_index = 0;  // index into s0
  Vec3 center = Vec3::Zero();   // view coordinates
  std::vector<std::size_t> members;  // view point indices, ascending
  std::size_t pair_slot = 0;
};

struct ProposalPair {
  Proposal first;   // view 1
  Proposal second;  // view 2
  const Proposal& view(int id) const { return id == 1 ? first : second; }
};

struct ProposalParams {
  std::size_t count = 1024;
  double radius = 1.0;
  std::size_t max_points = 16;
};

std::vector<ProposalPair> extract_proposal_pairs(const SceneViewPair& pair, const PlaneModel& plane,
                                                 double background_margin, const ProposalParams& params,
                                                 std::uint64_t seed);

inline constexpr std::size_t kPatchesPerProposal = 4;

struct Patch {
  std::size_t pair_slot = 0;
  int view_id = 1;
  std::size_t slot = 0;
  std::size_t keypoint_index = 0;  // view point index
  Vec3 keypoint = Vec3::Zero();
  std::vector<std::size_t> members;
  Vec3 normalized_center = Vec3::Zero();  // keypoint - proposal center
};

struct PatchParams {
  double offset = 1.0 / 3.0;
  double radius = 1.0 / 3.0;
  std::size_t max_points = 8;
};

// Candidates (x0 + t, y0, z0), (x0 - t, y0, z0), (x0, y0 + t, z0), (x0, y0 - t, z0).
std::array<Vec3, kPatchesPerProposal> patch_candidate_centers(const Vec3& center, double offset);
// Nearest proposal member to each candidate (ties to the lowest index).
std::array<std::size_t, kPatchesPerProposal> select_patch_keypoints(const Proposal& proposal,
                                                                    std::span<const Vec3> view_points,
                                                                    double offset);
std::array<Patch, kPatchesPerProposal> extract_patches(const Proposal& proposal, std::span<const Vec3> view_points,
                                                       const PatchParams& params, std::uint64_t seed);

}  // namespace patchcontrast
