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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "patchcontrast/pointcloud_io.hpp"
#include "patchcontrast/rng.hpp"
#include "patchcontrast/tensor.hpp"

namespace pctest {

namespace pc = patchcontrast;

inline pc::TensorData random_tensor(std::uint64_t seed, std::string_view name, pc::Shape shape, double lo = -1.0,
                                    double hi = 1.0) {
  pc::CounterRng rng(seed, name);
  std::vector<double> v(pc::shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return pc::TensorData(std::move(shape), std::move(v));
}

// Uniform points in [-extent, extent]^2 x [0, height].
inline pc::PointCloud random_cloud(std::uint64_t seed, std::size_t n, double extent = 10.0, double height = 2.0) {
  pc::CounterRng rng(seed, "test_cloud");
  std::vector<pc::Point> pts(n);
  for (auto& p : pts) {
    p.x = rng.uniform(-extent, extent);
    p.y = rng.uniform(-extent, extent);
    p.z = rng.uniform(0.0, height);
    p.intensity = rng.uniform();
  }
  return pc::PointCloud::from_points(std::move(pts));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("pctest_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(pc::mix64(reinterpret_cast<std::uintptr_t>(this))));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::string s;
  if (FILE* f = std::fopen(p.string().c_str(), "rb")) {
    char buf[65536];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
    std::fclose(f);
  }
  return s;
}

}  // namespace pctest
