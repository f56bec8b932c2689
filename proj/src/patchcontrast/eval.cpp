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

#include "patchcontrast/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "patchcontrast/errors.hpp"
#include "patchcontrast/rng.hpp"

namespace patchcontrast {

void SyntheticSpec::validate() const {
  if (min_instances > max_instances) throw ConfigError("synthetic: min_instances exceeds max_instances");
  if (!(half_extent > 0.0)) throw ConfigError("synthetic: half_extent must be positive");
  if (!(surface_density > 0.0)) throw ConfigError("synthetic: surface_density must be positive");
  if (noise_sigma < 0.0) throw ConfigError("synthetic: noise_sigma must be nonnegative");
  if (max_tilt_deg < 0.0 || max_tilt_deg >= 45.0) throw ConfigError("synthetic: max_tilt_deg must be in [0, 45)");
  if (separation < 0.0) throw ConfigError("synthetic: separation must be nonnegative");
}

std::vector<int> SyntheticScene::point_classes() const {
  std::vector<int> out(instance.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = point_class(i);
  return out;
}

namespace {

struct Footprint {
  ObjectClass cls;
  double radius;
  // Box and wall: half sizes along the object's own axes.
  double half_x = 0.0, half_y = 0.0, height = 0.0, yaw = 0.0;
};

Footprint draw_footprint(CounterRng& rng) {
  Footprint f{};
  f.cls = static_cast<ObjectClass>(1 + rng.below(3));
  f.yaw = rng.uniform(0.0, std::numbers::pi);
  switch (f.cls) {
    case ObjectClass::kBox:
      f.half_x = rng.uniform(0.6, 1.1);
      f.half_y = rng.uniform(0.5, 0.9);
      f.height = rng.uniform(0.8, 1.6);
      break;
    case ObjectClass::kPost:
      f.half_x = f.half_y = rng.uniform(0.1, 0.2);
      f.height = rng.uniform(1.5, 3.0);
      break;
    default:
      f.half_x = rng.uniform(1.25, 2.0);
      f.half_y = 0.08;
      f.height = rng.uniform(1.5, 2.5);
      break;
  }
  f.radius = std::hypot(f.half_x, f.half_y);
  return f;
}

std::size_t count_for(double area, double density, CounterRng& rng) {
  const double expected = area * density;
  const auto whole = static_cast<std::size_t>(expected);
  return whole + (rng.uniform() < expected - static_cast<double>(whole) ? 1 : 0);
}

// Points in the object's local frame: x, y horizontal, z height above ground.
std::vector<Vec3> sample_surface(const Footprint& f, double density, CounterRng& rng) {
  std::vector<Vec3> pts;
  if (f.cls == ObjectClass::kPost) {
    const double area = 2.0 * std::numbers::pi * f.half_x * f.height;
    const std::size_t n = count_for(area, density, rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
      pts.emplace_back(f.half_x * std::cos(a), f.half_x * std::sin(a), rng.uniform(0.0, f.height));
    }
    return pts;
  }
  // Four vertical faces plus the top.
  const double hx = f.half_x, hy = f.half_y, h = f.height;
  const double side_x = 2.0 * hx * h, side_y = 2.0 * hy * h, top = 4.0 * hx * hy;
  for (int face = 0; face < 5; ++face) {
    const double area = face < 2 ? side_x : face < 4 ? side_y : top;
    const std::size_t n = count_for(area, density, rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = rng.uniform(-1.0, 1.0), v = rng.uniform();
      switch (face) {
        case 0: pts.emplace_back(u * hx, hy, v * h); break;
        case 1: pts.emplace_back(u * hx, -hy, v * h); break;
        case 2: pts.emplace_back(hx, u * hy, v * h); break;
        case 3: pts.emplace_back(-hx, u * hy, v * h); break;
        default: pts.emplace_back(u * hx, (2.0 * v - 1.0) * hy, h); break;
      }
    }
  }
  return pts;
}

}  // namespace

SyntheticScene generate_synthetic_scene(std::uint64_t seed, const SyntheticSpec& spec) {
  spec.validate();
  SyntheticScene scene;
  CounterRng plane_rng(seed, "synthetic_plane");
  const double tilt = plane_rng.uniform(0.0, spec.max_tilt_deg) * std::numbers::pi / 180.0;
  const double azimuth = plane_rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double height = plane_rng.uniform(-1.8, -1.5);  // sensor above ground
  scene.plane_normal = Vec3(std::sin(tilt) * std::cos(azimuth), std::sin(tilt) * std::sin(azimuth), std::cos(tilt));
  scene.plane_offset = -scene.plane_normal.z() * height;
  const Vec3 n = scene.plane_normal;
  auto ground_z = [&](double x, double y) { return height - (n.x() * x + n.y() * y) / n.z(); };

  CounterRng noise(seed, "synthetic_noise");
  CounterRng intensity(seed, "synthetic_intensity");
  const double e = spec.half_extent;
  scene.instance_class.push_back(ObjectClass::kGround);
  scene.instance_center.emplace_back(0.0, 0.0, 0.0);
  scene.instance_radius.push_back(0.0);

  CounterRng ground(seed, "synthetic_ground");
  for (std::size_t i = 0; i < spec.ground_points; ++i) {
    const double x = ground.uniform(-e, e), y = ground.uniform(-e, e);
    // Offset along the normal so the noise is orthogonal to the plane.
    const double d = spec.noise_sigma * noise.normal();
    const double z = ground_z(x, y);
    scene.cloud.push_back({x + d * n.x(), y + d * n.y(), z + d * n.z(), intensity.uniform(0.1, 0.6)},
                          scene.cloud.size());
    scene.instance.push_back(0);
  }

  CounterRng layout(seed, "synthetic_layout");
  const std::size_t wanted = spec.min_instances + layout.below(spec.max_instances - spec.min_instances + 1);
  constexpr int kAttempts = 200;
  for (std::size_t k = 0; k < wanted; ++k) {
    const Footprint f = draw_footprint(layout);
    const double margin = f.radius + spec.separation;
    if (margin >= e) continue;
    bool placed = false;
    Vec3 center;
    for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      center = Vec3(layout.uniform(-e + margin, e - margin), layout.uniform(-e + margin, e - margin), 0.0);
      placed = true;
      for (std::size_t j = 1; j < scene.instance_center.size(); ++j) {
        const double need = f.radius + scene.instance_radius[j] + 2.0 * spec.separation;
        if (distance(center, scene.instance_center[j]) < need) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) continue;
    const std::size_t id = scene.instance_class.size();
    scene.instance_class.push_back(f.cls);
    scene.instance_center.push_back(center);
    scene.instance_radius.push_back(f.radius);

    CounterRng surface(seed, "synthetic_surface", id);
    const double c = std::cos(f.yaw), s = std::sin(f.yaw);
    for (const Vec3& local : sample_surface(f, spec.surface_density, surface)) {
      const double x = center.x() + c * local.x() - s * local.y();
      const double y = center.y() + s * local.x() + c * local.y();
      const double z = ground_z(x, y) + local.z();
      scene.cloud.push_back({x + spec.noise_sigma * noise.normal(), y + spec.noise_sigma * noise.normal(),
                             z + spec.noise_sigma * noise.normal(),
                             intensity.uniform(0.1, 0.6)},
                            scene.cloud.size());
      scene.instance.push_back(id);
    }
  }
  return scene;
}

KMeansResult kmeans(const TensorData& points, std::size_t k, std::uint64_t seed, std::size_t max_iters) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  if (k == 0) throw ArgumentError("kmeans: k must be positive");
  if (k > n) throw ArgumentError("kmeans: k = " + std::to_string(k) + " exceeds the " + std::to_string(n) + " points");
  auto sq_dist = [&](std::size_t i, const double* c) {
    double s = 0.0;
    for (std::size_t t = 0; t < d; ++t) {
      const double diff = points.values[i * d + t] - c[t];
      s += diff * diff;
    }
    return s;
  };

  KMeansResult res;
  res.centroids = TensorData::zeros({k, d});
  auto set_centroid = [&](std::size_t c, std::size_t i) {
    std::copy_n(points.values.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                res.centroids.values.begin() + static_cast<std::ptrdiff_t>(c * d));
  };

  // k-means++
  CounterRng rng(seed, "kmeans_seed");
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.below(n);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (double v : nearest) total += v;
      if (total > 0.0) {
        const double target = rng.uniform() * total;
        double acc = 0.0;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (nearest[i] <= 0.0) continue;
          acc += nearest[i];
          pick = i;
          if (acc > target) break;
        }
      } else {
        // Every point coincides with a centroid; take the first unused index.
        pick = c;
      }
    }
    set_centroid(c, pick);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], sq_dist(i, &res.centroids.values[c * d]));
  }

  res.assignments.assign(n, k);
  std::vector<double> dist(n);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = sq_dist(i, &res.centroids.values[c * d]);
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      changed |= res.assignments[i] != best;
      res.assignments[i] = best;
      dist[i] = best_d;
      inertia += best_d;
    }
    res.inertia_history.push_back(inertia);
    res.iterations = iter + 1;
    if (!changed) {
      res.converged = true;
      break;
    }

    std::vector<std::size_t> counts(k, 0);
    std::vector<double> sums(k * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = res.assignments[i];
      ++counts[c];
      for (std::size_t t = 0; t < d; ++t) sums[c * d + t] += points.values[i * d + t];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t t = 0; t < d; ++t) {
        res.centroids.values[c * d + t] = sums[c * d + t] / static_cast<double>(counts[c]);
      }
    }
    for (std::size_t i = 0; i < n; ++i) dist[i] = sq_dist(i, &res.centroids.values[res.assignments[i] * d]);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      set_centroid(c, far);
      --counts[res.assignments[far]];
      res.assignments[far] = c;
      counts[c] = 1;
      dist[far] = 0.0;
    }
  }
  return res;
}

double cluster_purity(std::span<const std::size_t> assignments, std::span<const int> labels) {
  if (assignments.size() != labels.size()) throw ArgumentError("cluster_purity: length mismatch");
  if (assignments.empty()) return 0.0;
  std::map<std::size_t, std::map<int, std::size_t>> table;
  for (std::size_t i = 0; i < labels.size(); ++i) ++table[assignments[i]][labels[i]];
  std::size_t majority = 0;
  for (const auto& [cluster, counts] : table) {
    std::size_t best = 0;
    for (const auto& [label, count] : counts) best = std::max(best, count);
    majority += best;
  }
  return static_cast<double>(majority) / static_cast<double>(labels.size());
}

double purity_permutation_baseline(std::span<const std::size_t> assignments, std::span<const int> labels,
                                   std::uint64_t seed, std::size_t trials) {
  if (trials == 0) throw ArgumentError("permutation baseline needs at least one trial");
  std::vector<int> shuffled(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    CounterRng rng(seed, "purity_permutation", t);
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    total += cluster_purity(assignments, shuffled);
  }
  return total / static_cast<double>(trials);
}

double cross_view_retrieval(const TensorData& proj) {
  const std::size_t rows = proj.rows();
  if (rows < 2 || rows % 2 != 0) throw ContractViolation("cross_view_retrieval needs an even number of rows");
  const std::size_t d = proj.cols();
  const std::size_t pairs = rows / 2;
  std::vector<double> unit(proj.values);
  for (std::size_t r = 0; r < rows; ++r) {
    double norm = 0.0;
    for (std::size_t t = 0; t < d; ++t) norm += unit[r * d + t] * unit[r * d + t];
    norm = std::max(std::sqrt(norm), 1e-12);
    for (std::size_t t = 0; t < d; ++t) unit[r * d + t] /= norm;
  }
  std::size_t hits = 0;
  for (std::size_t a = 0; a < pairs; ++a) {
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < pairs; ++b) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) s += unit[2 * a * d + t] * unit[(2 * b + 1) * d + t];
      if (s > best_sim) {
        best_sim = s;
        best = b;
      }
    }
    hits += best == a;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs);
}

}  // namespace patchcontrast
