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

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <map>

#include "patchcontrast/errors.hpp"
#include "patchcontrast/eval.hpp"
#include "patchcontrast/rng.hpp"
#include "test_support.hpp"

using namespace patchcontrast;

namespace {

TensorData two_blobs(std::uint64_t seed, std::size_t per_blob, std::vector<int>& labels) {
  CounterRng rng(seed, "blobs");
  TensorData pts = TensorData::zeros({2 * per_blob, 3});
  labels.assign(2 * per_blob, 0);
  for (std::size_t i = 0; i < 2 * per_blob; ++i) {
    const int b = i < per_blob ? 0 : 1;
    labels[i] = b;
    for (std::size_t j = 0; j < 3; ++j) pts.at(i, j) = (b == 0 ? -5.0 : 5.0) + 0.5 * rng.normal();
  }
  return pts;
}

}  // namespace

TEST_CASE("synthetic scenes are deterministic per seed") {
  SyntheticSpec spec;
  const SyntheticScene a = generate_synthetic_scene(11, spec);
  const SyntheticScene b = generate_synthetic_scene(11, spec);
  CHECK(a.cloud == b.cloud);
  CHECK(a.instance == b.instance);
  CHECK_FALSE(generate_synthetic_scene(12, spec).cloud == a.cloud);
}

TEST_CASE("zero instances gives a pure ground plane") {
  SyntheticSpec spec;
  spec.min_instances = spec.max_instances = 0;
  const SyntheticScene s = generate_synthetic_scene(3, spec);
  CHECK(s.cloud.size() == spec.ground_points);
  CHECK(s.instance_class.size() == 1);
  for (std::size_t id : s.instance) CHECK(id == 0);
}

TEST_CASE("ground points lie on the planted plane and objects stay separated") {
  SyntheticSpec spec;
  std::size_t instances = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SyntheticScene s = generate_synthetic_scene(seed, spec);
    CHECK(s.plane_normal.norm() == doctest::Approx(1.0));
    double worst = 0.0;
    std::map<std::size_t, std::vector<Vec3>> objects;
    for (std::size_t i = 0; i < s.cloud.size(); ++i) {
      const Vec3 p = xyz(s.cloud.points[i]);
      if (s.instance[i] == 0) worst = std::max(worst, std::abs(s.plane_normal.dot(p) + s.plane_offset));
      else objects[s.instance[i]].push_back(p);
    }
    CHECK(worst <= 5.0 * spec.noise_sigma);
    instances += objects.size();
    for (std::size_t a = 1; a < s.instance_center.size(); ++a) {
      for (std::size_t b = a + 1; b < s.instance_center.size(); ++b) {
        CHECK(distance(s.instance_center[a], s.instance_center[b]) >= 2.0 * spec.separation);
        // Closest horizontal gap between the two point sets.
        double gap = 1e9;
        for (const Vec3& p : objects[a]) {
          for (const Vec3& q : objects[b]) gap = std::min(gap, std::hypot(p.x() - q.x(), p.y() - q.y()));
        }
        CHECK(gap >= 2.0 * spec.separation - 10.0 * spec.noise_sigma);
      }
    }
  }
  CHECK(instances >= 400);
}

TEST_CASE("synthetic layout validation") {
  SyntheticSpec spec;
  spec.min_instances = 5;
  spec.max_instances = 2;
  CHECK_THROWS_AS(generate_synthetic_scene(0, spec), ConfigError);
}

TEST_CASE("kmeans with k = n") {
  const TensorData pts = pctest::random_tensor(1, "p", {7, 3});
  const KMeansResult r = kmeans(pts, 7, 4);
  CHECK(r.inertia() == 0.0);
  std::vector<std::size_t> a = r.assignments;
  std::sort(a.begin(), a.end());
  CHECK(std::unique(a.begin(), a.end()) == a.end());
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(r.centroids.at(r.assignments[i], j) == pts.at(i, j));
  }
}

TEST_CASE("kmeans recovers two well-separated blobs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<int> labels;
    const TensorData pts = two_blobs(seed, 50, labels);
    const KMeansResult r = kmeans(pts, 2, seed);
    CHECK(cluster_purity(r.assignments, labels) == 1.0);
    CHECK(r.assignments[0] != r.assignments[50]);
  }
}

TEST_CASE("kmeans inertia is non-increasing and the fixed point is stable") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TensorData pts = pctest::random_tensor(seed, "pts", {200, 4});
    const KMeansResult r = kmeans(pts, 8, seed, 200);
    REQUIRE_FALSE(r.inertia_history.empty());
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
      CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] + 1e-12);
    }
    CHECK(r.converged);
    // One more Lloyd assignment from the returned centroids changes nothing.
    for (std::size_t i = 0; i < 200; ++i) {
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t c = 0; c < 8; ++c) {
        double d = 0.0;
        for (std::size_t j = 0; j < 4; ++j) d += std::pow(pts.at(i, j) - r.centroids.at(c, j), 2);
        if (d < best_d) best_d = d, best = c;
      }
      CHECK(best == r.assignments[i]);
    }
    CHECK(kmeans(pts, 8, seed, 200).assignments == r.assignments);
  }
}

TEST_CASE("kmeans argument errors") {
  const TensorData pts = pctest::random_tensor(1, "p", {3, 2});
  CHECK_THROWS_AS(kmeans(pts, 4, 0), ArgumentError);
  CHECK_THROWS_AS(kmeans(pts, 0, 0), ArgumentError);
}

TEST_CASE("purity examples") {
  const std::vector<std::size_t> a{0, 0, 1, 1, 2};
  const std::vector<int> l{3, 3, 1, 1, 0};
  CHECK(cluster_purity(a, l) == 1.0);
  const std::vector<std::size_t> one(6, 0);
  const std::vector<int> balanced{0, 1, 0, 1, 0, 1};
  CHECK(cluster_purity(one, balanced) == 0.5);
  CHECK_THROWS_AS(cluster_purity(one, l), ArgumentError);
}

TEST_CASE("purity of random assignments sits at the permutation baseline") {
  CounterRng rng(5, "rand_assign");
  std::vector<std::size_t> a(4000);
  std::vector<int> l(4000);
  for (std::size_t i = 0; i < 4000; ++i) {
    a[i] = rng.below(8);
    l[i] = static_cast<int>(i % 4);
  }
  const double p = cluster_purity(a, l);
  const double base = purity_permutation_baseline(a, l, 3);
  CHECK(p >= 0.25);
  CHECK(std::abs(p - base) < 0.02);
  CHECK(base >= 0.25);
  CHECK(base <= 1.0);
}

TEST_CASE("retrieval examples") {
  // Pairs identical, pairs mutually orthogonal.
  TensorData e = TensorData::zeros({8, 4});
  for (std::size_t k = 0; k < 4; ++k) e.at(2 * k, k) = e.at(2 * k + 1, k) = 1.0;
  CHECK(cross_view_retrieval(e) == 1.0);
  CHECK_THROWS_AS(cross_view_retrieval(TensorData::zeros({3, 4})), ContractViolation);

  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const double acc = cross_view_retrieval(pctest::random_tensor(seed, "r", {200, 16}));
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    mean += acc / 50.0;
  }
  CHECK(std::abs(mean - 0.01) < 0.006);
}

TEST_CASE("retrieval is invariant to a global rotation") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TensorData e = pctest::random_tensor(seed, "e", {40, 3});
    // Make pairs close so accuracy is non-trivial.
    const TensorData noise = pctest::random_tensor(seed, "n", {40, 3}, -0.6, 0.6);
    for (std::size_t k = 0; k < 20; ++k) {
      for (std::size_t j = 0; j < 3; ++j) e.at(2 * k + 1, j) = e.at(2 * k, j) + noise.at(2 * k + 1, j);
    }
    const Eigen::Matrix3d r =
        Eigen::AngleAxisd(0.3 + seed, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
    TensorData rotated = e;
    for (std::size_t i = 0; i < 40; ++i) {
      const Eigen::Vector3d v = r * Eigen::Vector3d(e.at(i, 0), e.at(i, 1), e.at(i, 2));
      for (std::size_t j = 0; j < 3; ++j) rotated.at(i, j) = v[static_cast<Eigen::Index>(j)];
    }
    CHECK(cross_view_retrieval(rotated) == cross_view_retrieval(e));
  }
}
