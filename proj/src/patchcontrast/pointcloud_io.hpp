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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "patchcontrast/tensor.hpp"

namespace patchcontrast {

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

// Ordered points with stable identity. source_indices[i] names the point of
// the originally ingested cloud that points[i] descends from.
struct PointCloud {
  std::vector<Point> points;
  std::vector<std::size_t> source_indices;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  void push_back(const Point& p, std::size_t source) {
    points.push_back(p);
    source_indices.push_back(source);
  }
  static PointCloud from_points(std::vector<Point> pts);

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

using TensorMap = std::map<std::string, TensorData>;

inline constexpr std::uint32_t kTensorFormatVersion = 1;

// KITTI velodyne convention: little-endian float32 quadruplets
// (x, y, z, intensity). Intensity is clamped into [0, 1].
PointCloud read_cloud_bin(const std::filesystem::path& path);
void write_cloud_bin(const PointCloud& cloud, const std::filesystem::path& path);

// .pctn container: "PCTN", u32 version, u32 count, then per entry
// u32 name length, UTF-8 name, u32 rank, u32 dims, f64 row-major values.
// All integers and floats little-endian. Entries are written in key order.
void write_tensor(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap read_tensor(const std::filesystem::path& path);

std::string encode_tensor_map(const TensorMap& tensors);
TensorMap decode_tensor_map(const std::string& bytes);

}  // namespace patchcontrast
