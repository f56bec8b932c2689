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

#include "patchcontrast/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "patchcontrast/errors.hpp"
#include "patchcontrast/rng.hpp"

namespace patchcontrast {

AugmentationConfig AugmentationConfig::identity() {
  AugmentationConfig c;
  c.flip_prob = 0.0;
  c.scale_range = {1.0, 1.0};
  c.rot_range_deg = {0.0, 0.0};
  c.rot_prob = 0.0;
  c.drop_frac_max = 0.0;
  c.coord_noise_sigma_range = {0.0, 0.0};
  c.intensity_noise_sigma_range = {0.0, 0.0};
  c.cuboid_prob = 0.0;
  c.cuboid_min_area_frac = 1.0;
  c.patch_drop_max_frac = 0.0;
  return c;
}

void AugmentationConfig::validate() const {
  auto prob = [](const char* name, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("augmentation.") + name + " must lie in [0, 1]");
  };
  auto range = [](const char* name, const std::array<double, 2>& r) {
    if (!(r[0] <= r[1])) throw ConfigError(std::string("augmentation.") + name + " must be ordered");
  };
  prob("flip_prob", flip_prob);
  prob("rot_prob", rot_prob);
  prob("drop_frac_max", drop_frac_max);
  prob("cuboid_prob", cuboid_prob);
  prob("cuboid_min_area_frac", cuboid_min_area_frac);
  prob("patch_drop_max_frac", patch_drop_max_frac);
  range("scale_range", scale_range);
  range("rot_range_deg", rot_range_deg);
  range("coord_noise_sigma_range", coord_noise_sigma_range);
  range("intensity_noise_sigma_range", intensity_noise_sigma_range);
  if (!(scale_range[0] > 0.0)) throw ConfigError("augmentation.scale_range must be positive");
  if (coord_noise_sigma_range[0] < 0.0 || intensity_noise_sigma_range[0] < 0.0) {
    throw ConfigError("augmentation noise sigmas must be nonnegative");
  }
  if (!(patch_drop_radius > 0.0)) throw ConfigError("augmentation.patch_drop_radius must be positive");
}

Point Transform::apply_geometric(const Point& p) const {
  Point q = p;
  if (flip_axis == 0) q.x = -q.x;
  if (flip_axis == 1) q.y = -q.y;
  if (scale != 1.0) {
    q.x *= scale;
    q.y *= scale;
    q.z *= scale;
  }
  if (rotation != 0.0) {
    const double c = std::cos(rotation), s = std::sin(rotation);
    const double x = c * q.x - s * q.y;
    const double y = s * q.x + c * q.y;
    q.x = x;
    q.y = y;
  }
  return q;
}

Point Transform::invert_geometric(const Point& p) const {
  Point q = p;
  if (rotation != 0.0) {
    const double c = std::cos(rotation), s = std::sin(rotation);
    const double x = c * q.x + s * q.y;
    const double y = -s * q.x + c * q.y;
    q.x = x;
    q.y = y;
  }
  if (scale != 1.0) {
    q.x /= scale;
    q.y /= scale;
    q.z /= scale;
  }
  if (flip_axis == 0) q.x = -q.x;
  if (flip_axis == 1) q.y = -q.y;
  return q;
}

Transform sample_transform(const AugmentationConfig& cfg, std::uint64_t seed) {
  Transform t;
  {
    CounterRng rng(seed, "flip");
    if (rng.bernoulli(cfg.flip_prob)) t.flip_axis = static_cast<int>(rng.below(2));
  }
  {
    CounterRng rng(seed, "scale");
    t.scale = rng.uniform(cfg.scale_range[0], cfg.scale_range[1]);
  }
  {
    CounterRng rng(seed, "rotate");
    if (rng.bernoulli(cfg.rot_prob)) {
      t.rotation = rng.uniform(cfg.rot_range_deg[0], cfg.rot_range_deg[1]) * std::numbers::pi / 180.0;
    }
  }
  {
    CounterRng rng(seed, "dropout");
    t.drop_frac = rng.uniform(0.0, cfg.drop_frac_max);
    t.drop_seed = derive_seed(seed, "dropout_draws");
  }
  {
    CounterRng rng(seed, "noise");
    t.coord_sigma = rng.uniform(cfg.coord_noise_sigma_range[0], cfg.coord_noise_sigma_range[1]);
    t.intensity_sigma = rng.uniform(cfg.intensity_noise_sigma_range[0], cfg.intensity_noise_sigma_range[1]);
    t.noise_seed = derive_seed(seed, "noise_draws");
  }
  {
    CounterRng rng(seed, "cuboid");
    t.crop = rng.bernoulli(cfg.cuboid_prob) && cfg.cuboid_min_area_frac < 1.0;
    if (t.crop) {
      const double area = rng.uniform(cfg.cuboid_min_area_frac, 1.0);
      t.crop_width_frac = rng.uniform(area, 1.0);
      t.crop_height_frac = area / t.crop_width_frac;
      t.crop_x_offset = rng.uniform();
      t.crop_y_offset = rng.uniform();
    }
  }
  {
    CounterRng rng(seed, "patch_drop");
    t.patch_drop_radius = cfg.patch_drop_radius;
    if (cfg.patch_drop_max_frac > 0.0) {
      t.patch_drop_frac = rng.uniform(0.0, cfg.patch_drop_max_frac);
      for (std::size_t i = 0; i < Transform::kMaxDropSpheres; ++i) t.patch_drop_centers.push_back(rng.uniform());
    }
  }
  return t;
}

namespace {

// Working state: current points plus the input index each descends from.
struct Working {
  std::vector<Point> points;
  std::vector<std::size_t> origin;

  void retain(const std::vector<unsigned char>& keep) {
    std::size_t w = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!keep[i]) continue;
      points[w] = points[i];
      origin[w] = origin[i];
      ++w;
    }
    points.resize(w);
    origin.resize(w);
  }
};

void drop_points(Working& s, const Transform& t) {
  const std::size_t n = s.points.size();
  const auto count = static_cast<std::size_t>(std::floor(t.drop_frac * static_cast<double>(n)));
  if (count == 0) return;
  // partial Fisher-Yates: the first `count` slots name the dropped points
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  CounterRng rng(t.drop_seed, "perm");
  for (std::size_t i = 0; i < count; ++i) std::swap(perm[i], perm[i + rng.below(n - i)]);
  std::vector<unsigned char> keep(n, 1);
  for (std::size_t i = 0; i < count; ++i) keep[perm[i]] = 0;
  s.retain(keep);
}

void add_noise(Working& s, const Transform& t) {
  if (t.coord_sigma == 0.0 && t.intensity_sigma == 0.0) return;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    CounterRng rng(t.noise_seed, "point", s.origin[i]);
    Point& p = s.points[i];
    const double nx = rng.normal(), ny = rng.normal(), nz = rng.normal(), ni = rng.normal();
    if (t.coord_sigma != 0.0) {
      p.x += t.coord_sigma * nx;
      p.y += t.coord_sigma * ny;
      p.z += t.coord_sigma * nz;
    }
    if (t.intensity_sigma != 0.0) p.intensity = std::clamp(p.intensity + t.intensity_sigma * ni, 0.0, 1.0);
  }
}

void crop_cuboid(Working& s, const Transform& t) {
  if (!t.crop || s.points.empty()) return;
  double xmin = s.points[0].x, xmax = xmin, ymin = s.points[0].y, ymax = ymin;
  for (const Point& p : s.points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double w = t.crop_width_frac * (xmax - xmin);
  const double h = t.crop_height_frac * (ymax - ymin);
  const double x0 = xmin + t.crop_x_offset * ((xmax - xmin) - w);
  const double y0 = ymin + t.crop_y_offset * ((ymax - ymin) - h);
  std::vector<unsigned char> keep(s.points.size());
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const Point& p = s.points[i];
    keep[i] = p.x >= x0 && p.x <= x0 + w && p.y >= y0 && p.y <= y0 + h;
  }
  s.retain(keep);
}

void drop_scene_patches(Working& s, const Transform& t) {
  const std::size_t n = s.points.size();
  if (n == 0 || t.patch_drop_frac <= 0.0) return;
  const auto budget = static_cast<std::size_t>(std::floor(t.patch_drop_frac * static_cast<double>(n)));
  const double r2 = t.patch_drop_radius * t.patch_drop_radius;
  std::vector<unsigned char> keep(n, 1);
  std::size_t removed = 0;
  for (double frac : t.patch_drop_centers) {
    const Point c = s.points[std::min(n - 1, static_cast<std::size_t>(frac * static_cast<double>(n)))];
    std::vector<std::size_t> inside;
    for (std::size_t i = 0; i < n; ++i) {
      if (!keep[i]) continue;
      const double dx = s.points[i].x - c.x, dy = s.points[i].y - c.y, dz = s.points[i].z - c.z;
      if (dx * dx + dy * dy + dz * dz <= r2) inside.push_back(i);
    }
    if (removed + inside.size() > budget) continue;
    for (std::size_t i : inside) keep[i] = 0;
    removed += inside.size();
  }
  s.retain(keep);
}

}  // namespace

TransformedCloud apply_transform(const PointCloud& cloud, const Transform& t) {
  Working s;
  s.points.reserve(cloud.size());
  s.origin.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    s.points.push_back(t.apply_geometric(cloud.points[i]));
    s.origin[i] = i;
  }
  drop_points(s, t);
  add_noise(s, t);
  crop_cuboid(s, t);
  drop_scene_patches(s, t);

  TransformedCloud out;
  out.keep.assign(cloud.size(), kDropped);
  out.cloud.points = std::move(s.points);
  out.cloud.source_indices.resize(s.origin.size());
  for (std::size_t v = 0; v < s.origin.size(); ++v) {
    out.keep[s.origin[v]] = v;
    out.cloud.source_indices[v] = cloud.source_indices[s.origin[v]];
  }
  return out;
}

SceneViewPair make_view_pair(const PointCloud& s0, const AugmentationConfig& cfg, std::uint64_t seed) {
  SceneViewPair pair;
  pair.s0 = s0;
  pair.t1 = sample_transform(cfg, derive_seed(seed, "view", 1));
  pair.t2 = sample_transform(cfg, derive_seed(seed, "view", 2));
  auto v1 = apply_transform(s0, pair.t1);
  auto v2 = apply_transform(s0, pair.t2);
  pair.s1 = std::move(v1.cloud);
  pair.keep1 = std::move(v1.keep);
  pair.s2 = std::move(v2.cloud);
  pair.keep2 = std::move(v2.keep);
  return pair;
}

}  // namespace patchcontrast
