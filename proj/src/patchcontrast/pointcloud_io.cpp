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

#include "patchcontrast/pointcloud_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "patchcontrast/errors.hpp"

namespace patchcontrast {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    if (bytes_.size() - pos_ < sizeof(T)) {
      throw FormatError("truncated tensor container at byte offset " + std::to_string(pos_));
    }
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("truncated tensor container at byte offset " + std::to_string(pos_));
    }
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

PointCloud PointCloud::from_points(std::vector<Point> pts) {
  PointCloud c;
  c.source_indices.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) c.source_indices[i] = i;
  c.points = std::move(pts);
  return c;
}

PointCloud read_cloud_bin(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() % 16 != 0) {
    throw FormatError(path.string() + ": truncated point record at byte offset " +
                      std::to_string(bytes.size() - bytes.size() % 16));
  }
  const std::size_t n = bytes.size() / 16;
  std::vector<Point> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    float f[4];
    std::memcpy(f, bytes.data() + i * 16, 16);
    for (float v : f) {
      if (!std::isfinite(v)) {
        throw FormatError(path.string() + ": non-finite value in point " + std::to_string(i));
      }
    }
    pts[i] = {f[0], f[1], f[2], std::clamp(static_cast<double>(f[3]), 0.0, 1.0)};
  }
  return PointCloud::from_points(std::move(pts));
}

void write_cloud_bin(const PointCloud& cloud, const std::filesystem::path& path) {
  std::string bytes;
  bytes.reserve(cloud.size() * 16);
  for (const Point& p : cloud.points) {
    put(bytes, static_cast<float>(p.x));
    put(bytes, static_cast<float>(p.y));
    put(bytes, static_cast<float>(p.z));
    put(bytes, static_cast<float>(p.intensity));
  }
  write_file(path, bytes);
}

std::string encode_tensor_map(const TensorMap& tensors) {
  std::string out = "PCTN";
  put<std::uint32_t>(out, kTensorFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (shape_size(t.shape) != t.values.size()) {
      throw DimensionError("tensor '" + name + "' has inconsistent shape " + shape_str(t.shape));
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : t.values) put<double>(out, v);
  }
  return out;
}

TensorMap decode_tensor_map(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(std::min<std::size_t>(4, bytes.size())) != "PCTN") throw FormatError("bad magic, not a .pctn container");
  const auto version = in.get<std::uint32_t>();
  if (version != kTensorFormatVersion) {
    throw FormatError("unsupported .pctn version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>();
  TensorMap out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = in.get<std::uint32_t>();
    std::string name = in.take(name_len);
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = in.get<std::uint32_t>();
    const std::size_t n = shape_size(shape);
    if ((bytes.size() - in.offset()) / 8 < n) {
      throw FormatError("truncated tensor container at byte offset " + std::to_string(in.offset()));
    }
    std::vector<double> values(n);
    for (auto& v : values) v = in.get<double>();
    out.insert_or_assign(std::move(name), TensorData(std::move(shape), std::move(values)));
  }
  if (!in.done()) throw FormatError("trailing bytes at offset " + std::to_string(in.offset()));
  return out;
}

void write_tensor(const std::filesystem::path& path, const TensorMap& tensors) {
  write_file(path, encode_tensor_map(tensors));
}

TensorMap read_tensor(const std::filesystem::path& path) {
  try {
    return decode_tensor_map(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace patchcontrast
