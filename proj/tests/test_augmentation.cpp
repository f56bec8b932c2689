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


#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "patchcontrast/augmentation.hpp"
#include "patchcontrast/errors.hpp"
#include "test_support.hpp"

using namespace patchcontrast;

namespace {

void check_keep_map(const PointCloud& s0, const TransformedCloud& v) {
  REQUIRE(v.keep.size() == s0.size());
  std::set<std::size_t> seen;
  std::size_t retained = 0;
  for (std::size_t i = 0; i < v.keep.size(); ++i) {
    if (v.keep[i] == kDropped) continue;
    ++retained;
    CHECK(v.keep[i] < v.cloud.size());
    CHECK(seen.insert(v.keep[i]).second);
    CHECK(v.cloud.source_indices[v.keep[i]] == s0.source_indices[i]);
  }
  CHECK(retained == v.cloud.size());
}

}  // namespace

TEST_CASE("sample_transform is deterministic per seed") {
  const AugmentationConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) CHECK(sample_transform(cfg, seed) == sample_transform(cfg, seed));
}

TEST_CASE("changing the seed changes the transform") {
  const AugmentationConfig cfg;
  const Transform base = sample_transform(cfg, 1000);
  for (std::uint64_t seed = 0; seed < 100; ++seed) CHECK_FALSE(sample_transform(cfg, seed) == base);
}

TEST_CASE("flip probability over 10000 samples") {
  const AugmentationConfig cfg;
  std::size_t flips = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) flips += sample_transform(cfg, seed).flip_axis != Transform::kNoFlip;
  CHECK(std::abs(static_cast<double>(flips) / 10000.0 - 0.5) <= 0.02);
}

TEST_CASE("sampled values stay inside configured ranges") {
  const AugmentationConfig cfg;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const Transform t = sample_transform(cfg, seed);
    CHECK(t.scale >= 0.95);
    CHECK(t.scale <= 1.05);
    CHECK(std::abs(t.rotation) <= std::numbers::pi / 4.0 + 1e-15);
    CHECK(t.drop_frac <= 0.20);
    CHECK(t.coord_sigma <= 0.015);
    CHECK(t.intensity_sigma <= 0.01);
    CHECK(t.patch_drop_frac <= 0.20);
    if (t.crop) CHECK(t.crop_width_frac * t.crop_height_frac >= 0.75 - 1e-12);
  }
}

TEST_CASE("zero drop fraction never drops") {
  AugmentationConfig cfg = AugmentationConfig::identity();
  cfg.flip_prob = 0.5;
  cfg.rot_prob = 1.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Transform t = sample_transform(cfg, seed);
    CHECK(t.drop_frac == 0.0);
    const PointCloud c = pctest::random_cloud(seed, 200);
    CHECK(apply_transform(c, t).cloud.size() == c.size());
  }
}

TEST_CASE("identity transform leaves the cloud unchanged") {
  const PointCloud c = pctest::random_cloud(3, 300);
  const TransformedCloud v = apply_transform(c, Transform::identity());
  CHECK(v.cloud == c);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(v.keep[i] == i);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TransformedCloud w = apply_transform(c, sample_transform(AugmentationConfig::identity(), seed));
    CHECK(w.cloud == c);
    CHECK(w.keep == v.keep);
  }
}

TEST_CASE("pure rotation is an isometry of xy") {
  const PointCloud c = pctest::random_cloud(4, 500);
  for (double theta : {0.3, -0.7, std::numbers::pi / 4}) {
    Transform t;
    t.rotation = theta;
    const TransformedCloud v = apply_transform(c, t);
    REQUIRE(v.cloud.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      const Point& p = c.points[i];
      const Point& q = v.cloud.points[i];
      CHECK(std::abs(q.x - (std::cos(theta) * p.x - std::sin(theta) * p.y)) <= 1e-12);
      CHECK(std::abs(q.y - (std::sin(theta) * p.x + std::cos(theta) * p.y)) <= 1e-12);
      CHECK(q.z == p.z);
      CHECK(q.intensity == p.intensity);
      CHECK(std::abs(std::hypot(q.x, q.y) - std::hypot(p.x, p.y)) <= 1e-12);
    }
  }
}

TEST_CASE("pure 20 percent dropout removes exactly 200 of 1000") {
  const PointCloud c = pctest::random_cloud(5, 1000);
  Transform t;
  t.drop_frac = 0.2;
  t.drop_seed = 77;
  const TransformedCloud v = apply_transform(c, t);
  CHECK(v.cloud.size() == 800);
  check_keep_map(c, v);
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (v.keep[i] != kDropped) CHECK(v.cloud.points[v.keep[i]] == c.points[i]);
  }
}

TEST_CASE("geometric steps preserve point count") {
  const PointCloud c = pctest::random_cloud(6, 400);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Transform t = sample_transform(AugmentationConfig{}, seed);
    t.drop_frac = 0.0;
    t.crop = false;
    t.patch_drop_frac = 0.0;
    t.coord_sigma = 0.0;
    CHECK(apply_transform(c, t).cloud.size() == c.size());
  }
}

TEST_CASE("geometric inverse round-trips") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Transform t = sample_transform(AugmentationConfig{}, seed);
    const Point p{1.5, -2.25, 0.75, 0.3};
    const Point q = t.invert_geometric(t.apply_geometric(p));
    CHECK(std::abs(q.x - p.x) < 1e-12);
    CHECK(std::abs(q.y - p.y) < 1e-12);
    CHECK(std::abs(q.z - p.z) < 1e-12);
  }
}

TEST_CASE("make_view_pair with a disabled config copies the cloud") {
  const PointCloud c = pctest::random_cloud(7, 250);
  const SceneViewPair p = make_view_pair(c, AugmentationConfig::identity(), 11);
  CHECK(p.s1 == c);
  CHECK(p.s2 == c);
}

TEST_CASE("make_view_pair is deterministic") {
  const PointCloud c = pctest::random_cloud(8, 600);
  const SceneViewPair a = make_view_pair(c, AugmentationConfig{}, 5);
  const SceneViewPair b = make_view_pair(c, AugmentationConfig{}, 5);
  CHECK(a.s1 == b.s1);
  CHECK(a.s2 == b.s2);
  CHECK(a.keep1 == b.keep1);
  CHECK(a.keep2 == b.keep2);
  CHECK(a.t1 == b.t1);
  CHECK_FALSE(a.t1 == a.t2);
}

TEST_CASE("retained points map back to s0 within the noise draw") {
  // Gaussian tails put about 2e-4 of points past 4 sigma on some axis, so
  // the bound is pooled over every view rather than asserted per point.
  std::size_t within = 0, retained = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PointCloud c = pctest::random_cloud(seed, 800, 20.0, 3.0);
    const SceneViewPair pair = make_view_pair(c, AugmentationConfig{}, seed);
    for (int view : {1, 2}) {
      const Transform& t = pair.transform(view);
      const KeepMap& keep = pair.keep(view);
      check_keep_map(c, TransformedCloud{pair.view(view), keep});
      for (std::size_t i = 0; i < c.size(); ++i) {
        if (keep[i] == kDropped) continue;
        ++retained;
        const Point& q = pair.view(view).points[keep[i]];
        const Point g = t.apply_geometric(c.points[i]);
        // Exact replay of this point's noise draw.
        CounterRng rng(t.noise_seed, "point", i);
        const double nx = rng.normal(), ny = rng.normal(), nz = rng.normal();
        CHECK(std::abs(q.x - (g.x + t.coord_sigma * nx)) <= 1e-12);
        CHECK(std::abs(q.y - (g.y + t.coord_sigma * ny)) <= 1e-12);
        CHECK(std::abs(q.z - (g.z + t.coord_sigma * nz)) <= 1e-12);
        // Residual after the inverse geometric map, in units of sigma.
        const Point back = t.invert_geometric(q);
        const double bound = 4.0 * t.coord_sigma / t.scale + 1e-12;
        within += std::abs(back.x - c.points[i].x) <= bound && std::abs(back.y - c.points[i].y) <= bound &&
                  std::abs(back.z - c.points[i].z) <= bound;
      }
    }
  }
  CHECK(retained > 20000);
  CHECK(static_cast<double>(within) >= 0.999 * static_cast<double>(retained));
}

TEST_CASE("scene-patch drop honors its budget") {
  const PointCloud c = pctest::random_cloud(12, 2000, 10.0, 2.0);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Transform t;
    t.patch_drop_frac = 0.05 + 0.003 * static_cast<double>(seed);
    t.patch_drop_radius = 2.0;
    for (std::size_t k = 0; k < Transform::kMaxDropSpheres; ++k) {
      t.patch_drop_centers.push_back(CounterRng(seed, "centers", k).uniform());
    }
    const TransformedCloud v = apply_transform(c, t);
    const double removed = static_cast<double>(c.size() - v.cloud.size());
    CHECK(removed <= std::floor(t.patch_drop_frac * 2000.0));
  }
}

TEST_CASE("cuboid crop keeps the full z extent inside the rectangle") {
  const PointCloud c = pctest::random_cloud(13, 3000, 10.0, 4.0);
  Transform t;
  t.crop = true;
  t.crop_width_frac = 0.8;
  t.crop_height_frac = 0.95;
  t.crop_x_offset = 0.3;
  t.crop_y_offset = 0.9;
  const TransformedCloud v = apply_transform(c, t);
  double zmin = 1e9, zmax = -1e9;
  for (const Point& p : v.cloud.points) {
    zmin = std::min(zmin, p.z);
    zmax = std::max(zmax, p.z);
  }
  CHECK(zmin < 0.05);
  CHECK(zmax > 3.95);
  const double kept = static_cast<double>(v.cloud.size()) / 3000.0;
  CHECK(kept == doctest::Approx(0.8 * 0.95).epsilon(0.05));
}

TEST_CASE("config validation names the field") {
  AugmentationConfig cfg;
  cfg.flip_prob = 1.5;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("flip_prob") != std::string::npos);
  }
  AugmentationConfig r;
  r.scale_range = {1.1, 0.9};
  CHECK_THROWS_AS(r.validate(), ConfigError);
}
