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


// Exercises the shared library through its C header only.

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "patchcontrast/patchcontrast.h"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path path;
  explicit Scratch(const std::string& tag)
      : path(fs::temp_directory_path() / ("pc_capi_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

pc_config* tiny_config() {
  pc_config* c = nullptr;
  const char* text =
      "profile: desk\n"
      "model:\n  point_hidden_dim: 8\n  point_feature_dim: 6\n  feature_dim: 8\n  projection_dim: 6\n"
      "  grid_height: 16\n  grid_width: 16\n"
      "proposals:\n  count: 24\n"
      "train:\n  steps: 4\n  batch_scenes: 2\n  checkpoint_every: 2\n"
      "synthetic:\n  ground_points: 400\n  surface_density: 25\n";
  REQUIRE(pc_config_parse(text, &c) == PC_OK);
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("status names and last error") {
  CHECK(std::string(pc_status_name(PC_OK)) == "ok");
  CHECK(std::string(pc_status_name(PC_ERR_CONFIG)) == "config");
  CHECK(std::string(pc_version()).size() > 0);
  pc_config* c = nullptr;
  CHECK(pc_config_parse("proposals:\n  cuont: 1\n", &c) == PC_ERR_CONFIG);
  CHECK(c == nullptr);
  CHECK(std::string(pc_last_error()).find("proposals.cuont") != std::string::npos);
  CHECK(pc_config_load("/nonexistent/run.yaml", &c) == PC_ERR_IO);
  CHECK(std::string(pc_last_error()).find("/nonexistent/run.yaml") != std::string::npos);
  CHECK(pc_config_parse(nullptr, &c) == PC_ERR_ARGUMENT);
}

TEST_CASE("config handles") {
  pc_config* desk = nullptr;
  pc_config* full = nullptr;
  REQUIRE(pc_config_profile("desk", &desk) == PC_OK);
  REQUIRE(pc_config_profile("full", &full) == PC_OK);
  CHECK(pc_config_hash(desk) != pc_config_hash(full));
  pc_config* again = nullptr;
  REQUIRE(pc_config_parse(pc_config_text(desk), &again) == PC_OK);
  CHECK(pc_config_hash(again) == pc_config_hash(desk));
  pc_config_free(again);
  pc_config_free(desk);
  pc_config_free(full);
  pc_config_free(nullptr);
}

TEST_CASE("synthetic scenes, clouds and tensor files") {
  Scratch a("gen_a"), b("gen_b");
  REQUIRE(pc_gen_synthetic(nullptr, 3, 7, a.path.c_str()) == PC_OK);
  REQUIRE(pc_gen_synthetic(nullptr, 3, 7, b.path.c_str()) == PC_OK);
  for (const char* name : {"scene_0000.bin", "scene_0002.bin", "scene_0001.labels.pctn"}) {
    REQUIRE(fs::exists(a.path / name));
    CHECK(slurp(a.path / name) == slurp(b.path / name));
  }

  pc_cloud* cloud = nullptr;
  REQUIRE(pc_cloud_read((a.path / "scene_0000.bin").c_str(), &cloud) == PC_OK);
  const size_t n = pc_cloud_size(cloud);
  CHECK(n > 0);
  std::vector<double> xyzi(4 * n);
  CHECK(pc_cloud_copy(cloud, xyzi.data(), xyzi.size()) == PC_OK);
  CHECK(pc_cloud_copy(cloud, xyzi.data(), 3) == PC_ERR_ARGUMENT);
  for (size_t i = 0; i < n; ++i) CHECK(xyzi[4 * i + 3] >= 0.0);
  pc_cloud_free(cloud);

  pc_tensors* t = nullptr;
  REQUIRE(pc_tensors_read((a.path / "scene_0000.labels.pctn").c_str(), &t) == PC_OK);
  REQUIRE(pc_tensors_count(t) == 2);
  CHECK(std::string(pc_tensors_name(t, 0)) == "class");
  size_t size = 0;
  pc_tensors_data(t, 0, &size);
  CHECK(size == n);
  CHECK(pc_tensors_rank(t, 0) >= 1);
  CHECK(pc_tensors_shape(t, 0)[0] == n);
  pc_tensors_free(t);

  CHECK(pc_cloud_read((a.path / "missing.bin").c_str(), &cloud) == PC_ERR_IO);
}

TEST_CASE("pretrain, embed and cluster") {
  Scratch dir("pipeline");
  const fs::path scenes = dir.path / "scenes";
  const fs::path run = dir.path / "run";
  pc_config* c = tiny_config();
  REQUIRE(pc_gen_synthetic(c, 3, 1, scenes.c_str()) == PC_OK);

  pc_pretrain_options opt{scenes.c_str(), run.c_str(), nullptr, 0};
  pc_pretrain_summary s{};
  REQUIRE(pc_pretrain(c, &opt, &s) == PC_OK);
  CHECK(s.scenes == 3);
  CHECK(s.last_step == 4);
  CHECK(s.steps_run == 4);
  CHECK(std::isfinite(s.final_total_loss));
  const fs::path ckpt = run / "checkpoints" / "ckpt_000004.pctn";
  REQUIRE(fs::exists(ckpt));

  const fs::path emb = dir.path / "emb.pctn";
  size_t embedded = 0;
  REQUIRE(pc_embed(c, ckpt.c_str(), scenes.c_str(), emb.c_str(), &embedded) == PC_OK);
  CHECK(embedded == 3);
  pc_tensors* t = nullptr;
  REQUIRE(pc_tensors_read(emb.c_str(), &t) == PC_OK);
  CHECK(pc_tensors_count(t) == 9);
  pc_tensors_free(t);

  pc_cluster_summary cs{};
  const fs::path clusters = dir.path / "clusters.pctn";
  REQUIRE(pc_cluster(emb.c_str(), 4, 0, 100, clusters.c_str(), &cs) == PC_OK);
  CHECK(cs.k == 4);
  CHECK(cs.rows > 4);
  CHECK(cs.has_labels == 1);
  CHECK(cs.purity >= 0.0);
  CHECK(cs.purity <= 1.0);
  CHECK(fs::exists(clusters.string() + ".txt"));

  pc_config* other = nullptr;
  REQUIRE(pc_config_profile("desk", &other) == PC_OK);
  CHECK(pc_embed(other, ckpt.c_str(), scenes.c_str(), emb.c_str(), &embedded) == PC_ERR_CHECKPOINT);
  pc_config_free(other);
  CHECK(pc_cluster(emb.c_str(), 100000, 0, 10, clusters.c_str(), &cs) == PC_ERR_ARGUMENT);
  pc_config_free(c);
}

TEST_CASE("gradient report") {
  pc_grad_report* r = nullptr;
  REQUIRE(pc_check_grads(0, &r) == PC_OK);
  REQUIRE(pc_grad_report_count(r) > 10);
  for (size_t i = 0; i < pc_grad_report_count(r); ++i) {
    INFO(pc_grad_report_name(r, i));
    CHECK(pc_grad_report_error(r, i) < 1e-4);
  }
  pc_grad_report_free(r);
}
