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

#include "patchcontrast/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "patchcontrast/errors.hpp"
#include "patchcontrast/rng.hpp"

namespace patchcontrast {

std::vector<Vec3> positions(const PointCloud& cloud) {
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const Point& p : cloud.points) out.push_back(xyz(p));
  return out;
}

namespace {

void canonicalize(PlaneModel& plane) {
  if (plane.normal.z() < 0.0) {
    plane.normal = -plane.normal;
    plane.offset = -plane.offset;
  }
}

std::size_t count_inliers(std::span<const Vec3> pts, const Vec3& n, double offset, double tol) {
  std::size_t count = 0;
  for (const Vec3& p : pts) count += std::abs(n.dot(p) - offset) <= tol;
  return count;
}

}  // namespace

PlaneModel fit_ground_plane(const PointCloud& cloud, const RansacParams& params, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (n < 3) throw FitError("plane fit needs at least 3 points, got " + std::to_string(n));
  const std::vector<Vec3> pts = positions(cloud);

  CounterRng rng(seed, "ransac");
  bool found = false;
  std::size_t best_count = 0;
  Vec3 best_normal = Vec3::UnitZ();
  double best_offset = 0.0;
  for (int it = 0; it < params.iterations; ++it) {
    const std::size_t i = rng.below(n);
    std::size_t j = rng.below(n - 1);
    if (j >= i) ++j;
    std::size_t k = rng.below(n - 2);
    for (std::size_t taken : {std::min(i, j), std::max(i, j)}) {
      if (k >= taken) ++k;
    }
    const Vec3 a = pts[j] - pts[i];
    const Vec3 b = pts[k] - pts[i];
    Vec3 normal = a.cross(b);
    const double norm = normal.norm();
    if (norm <= 1e-12 * a.norm() * b.norm() || norm == 0.0) continue;
    normal /= norm;
    const double offset = normal.dot(pts[i]);
    const std::size_t count = count_inliers(pts, normal, offset, params.inlier_tol);
    if (!found || count > best_count) {
      found = true;
      best_count = count;
      best_normal = normal;
      best_offset = offset;
    }
  }
  if (!found) throw FitError("all RANSAC samples were degenerate (collinear or duplicate points)");

  PlaneModel plane;
  plane.normal = best_normal;
  plane.offset = best_offset;

  // least-squares refit on the consensus set
  Vec3 centroid = Vec3::Zero();
  std::size_t m = 0;
  for (const Vec3& p : pts) {
    if (std::abs(best_normal.dot(p) - best_offset) <= params.inlier_tol) {
      centroid += p;
      ++m;
    }
  }
  if (m >= 3) {
    centroid /= static_cast<double>(m);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const Vec3& p : pts) {
      if (std::abs(best_normal.dot(p) - best_offset) <= params.inlier_tol) {
        const Vec3 d = p - centroid;
        cov += d * d.transpose();
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    Vec3 normal = solver.eigenvectors().col(0).normalized();
    if (normal.dot(best_normal) < 0.0) normal = -normal;
    plane.normal = normal;
    plane.offset = normal.dot(centroid);
  }
  canonicalize(plane);
  plane.inlier_mask.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    plane.inlier_mask[i] = std::abs(plane.signed_distance(pts[i])) <= params.inlier_tol;
  }
  return plane;
}

std::vector<bool> foreground_mask(const PointCloud& cloud, const PlaneModel& plane, double margin) {
  std::vector<bool> mask(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) mask[i] = plane.signed_distance(xyz(cloud.points[i])) > margin;
  return mask;
}

PointCloud remove_background(const PointCloud& cloud, const PlaneModel& plane, double margin) {
  const std::vector<bool> keep = foreground_mask(cloud, plane, margin);
  PointCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (keep[i]) out.push_back(cloud.points[i], cloud.source_indices[i]);
  }
  return out;
}

std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points, std::size_t count,
                                                 std::size_t start) {
  const std::size_t n = points.size();
  if (count > n) {
    throw ArgumentError("farthest_point_sampling: requested " + std::to_string(count) + " of " +
                        std::to_string(n) + " points");
  }
  if (count == 0) return {};
  if (start >= n) throw ArgumentError("farthest_point_sampling: start index out of range");

  std::vector<std::size_t> chosen{start};
  chosen.reserve(count);
  std::vector<unsigned char> taken(n, 0);
  taken[start] = 1;
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::size_t last = start;
  while (chosen.size() < count) {
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      min_d[i] = std::min(min_d[i], distance(points[i], points[last]));
      if (min_d[i] > best_d) {
        best_d = min_d[i];
        best = i;
      }
    }
    taken[best] = 1;
    chosen.push_back(best);
    last = best;
  }
  return chosen;
}

std::vector<std::size_t> ball_query(std::span<const Vec3> points, std::span<const std::size_t> candidates,
                                    const Vec3& center, double radius, std::size_t k_max, std::uint64_t seed) {
  if (!(radius > 0.0)) throw ArgumentError("ball_query: radius must be positive");
  std::vector<std::size_t> inside;
  std::size_t nearest = 0;
  double nearest_d = std::numeric_limits<double>::infinity();
  for (std::size_t idx : candidates) {
    const double d = distance(points[idx], center);
    if (d > radius) continue;
    inside.push_back(idx);
    if (d < nearest_d || (d == nearest_d && idx < nearest)) {
      nearest_d = d;
      nearest = idx;
    }
  }
  std::sort(inside.begin(), inside.end());
  if (inside.size() <= k_max) return inside;
  if (k_max == 0) return {};

  std::vector<std::size_t> rest;
  rest.reserve(inside.size() - 1);
  for (std::size_t idx : inside)
    if (idx != nearest) rest.push_back(idx);
  CounterRng rng(seed, "ball_query");
  const std::size_t extra = k_max - 1;
  for (std::size_t i = 0; i < extra; ++i) std::swap(rest[i], rest[i + rng.below(rest.size() - i)]);
  std::vector<std::size_t> out(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(extra));
  out.push_back(nearest);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> ball_query(std::span<const Vec3> points, const Vec3& center, double radius,
                                    std::size_t k_max, std::uint64_t seed) {
  std::vector<std::size_t> all(points.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return ball_query(points, all, center, radius, k_max, seed);
}

std::vector<ProposalPair> extract_proposal_pairs(const SceneViewPair& pair, const PlaneModel& plane,
                                                 double background_margin, const ProposalParams& params,
                                                 std::uint64_t seed) {
  const std::vector<bool> fg = foreground_mask(pair.s0, plane, background_margin);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pair.s0.size(); ++i) {
    if (fg[i] && pair.keep1[i] != kDropped && pair.keep2[i] != kDropped) candidates.push_back(i);
  }
  if (candidates.empty()) return {};

  std::vector<Vec3> cand_pts;
  cand_pts.reserve(candidates.size());
  for (std::size_t i : candidates) cand_pts.push_back(xyz(pair.s0.points[i]));
  const std::size_t count = std::min(params.count, candidates.size());
  CounterRng start_rng(seed, "fps_start");
  const auto order = farthest_point_sampling(cand_pts, count, start_rng.below(candidates.size()));

  const std::vector<Vec3> view1 = positions(pair.s1);
  const std::vector<Vec3> view2 = positions(pair.s2);

  std::vector<ProposalPair> out;
  out.reserve(order.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const std::size_t query = candidates[order[rank]];
    const std::uint64_t member_seed = derive_seed(seed, "proposal", rank);
    ProposalPair pp;
    for (int v : {1, 2}) {
      Proposal& prop = v == 1 ? pp.first : pp.second;
      prop.view_id = v;
      prop.query_index = query;
      prop.center = xyz(pair.transform(v).apply_geometric(pair.s0.points[query]));
      prop.members = ball_query(v == 1 ? view1 : view2, prop.center, params.radius, params.max_points, member_seed);
    }
    if (pp.first.members.empty() || pp.second.members.empty()) continue;
    pp.first.pair_slot = pp.second.pair_slot = out.size();
    out.push_back(std::move(pp));
  }
  return out;
}

std::array<Vec3, kPatchesPerProposal> patch_candidate_centers(const Vec3& c, double t) {
  return {Vec3(c.x() + t, c.y(), c.z()), Vec3(c.x() - t, c.y(), c.z()), Vec3(c.x(), c.y() + t, c.z()),
          Vec3(c.x(), c.y() - t, c.z())};
}

std::array<std::size_t, kPatchesPerProposal> select_patch_keypoints(const Proposal& proposal,
                                                                    std::span<const Vec3> view_points,
                                                                    double offset) {
  if (proposal.members.empty()) throw ContractViolation("select_patch_keypoints: empty proposal");
  std::array<std::size_t, kPatchesPerProposal> keys{};
  const auto candidates = patch_candidate_centers(proposal.center, offset);
  for (std::size_t j = 0; j < kPatchesPerProposal; ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t idx : proposal.members) {
      const double d = distance(view_points[idx], candidates[j]);
      if (d < best || (d == best && idx < keys[j])) {
        best = d;
        keys[j] = idx;
      }
    }
  }
  return keys;
}

std::array<Patch, kPatchesPerProposal> extract_patches(const Proposal& proposal, std::span<const Vec3> view_points,
                                                       const PatchParams& params, std::uint64_t seed) {
  const auto keys = select_patch_keypoints(proposal, view_points, params.offset);
  std::array<Patch, kPatchesPerProposal> patches;
  for (std::size_t j = 0; j < kPatchesPerProposal; ++j) {
    Patch& p = patches[j];
    p.pair_slot = proposal.pair_slot;
    p.view_id = proposal.view_id;
    p.slot = j;
    p.keypoint_index = keys[j];
    p.keypoint = view_points[keys[j]];
    p.members = ball_query(view_points, proposal.members, p.keypoint, params.radius, params.max_points,
                           derive_seed(seed, "patch", proposal.pair_slot * kPatchesPerProposal + j));
    p.normalized_center = p.keypoint - proposal.center;
  }
  return patches;
}

}  // namespace patchcontrast
