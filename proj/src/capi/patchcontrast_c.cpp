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


#include "patchcontrast/patchcontrast.h"

#include <spdlog/cfg/env.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <new>
#include <string>
#include <vector>

#include "patchcontrast/config.hpp"
#include "patchcontrast/embedding.hpp"
#include "patchcontrast/errors.hpp"
#include "patchcontrast/eval.hpp"
#include "patchcontrast/grad_suite.hpp"
#include "patchcontrast/pointcloud_io.hpp"
#include "patchcontrast/rng.hpp"
#include "patchcontrast/training.hpp"

namespace fs = std::filesystem;
namespace pc = patchcontrast;

struct pc_config {
  pc::RunConfig cfg;
  std::string text;
};

struct pc_cloud {
  pc::PointCloud cloud;
};

struct pc_tensors {
  std::vector<std::string> names;
  std::vector<pc::TensorData> data;
};

struct pc_grad_report {
  std::vector<pc::GradSuiteEntry> entries;
};

namespace {

thread_local std::string g_last_error;

pc_status fail(pc_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
pc_status guarded(F&& body) {
  try {
    body();
    return PC_OK;
  } catch (const pc::Error& e) {
    return fail(static_cast<pc_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(PC_ERR_INTERNAL, "out of memory");
  } catch (const fs::filesystem_error& e) {
    return fail(PC_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(PC_ERR_INTERNAL, e.what());
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw pc::ArgumentError(std::string(what) + " must not be null");
}

std::vector<fs::path> cloud_files(const fs::path& where) {
  if (!fs::exists(where)) throw pc::IoError("no such file or directory: " + where.string());
  if (!fs::is_directory(where)) return {where};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(where)) {
    if (e.is_regular_file() && e.path().extension() == ".bin") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw pc::IoError("no .bin clouds in " + where.string());
  return files;
}

fs::path labels_path(const fs::path& cloud) {
  return cloud.parent_path() / (cloud.stem().string() + ".labels.pctn");
}

}  // namespace

extern "C" {

const char* pc_version(void) { return "0.1.0"; }

const char* pc_last_error(void) { return g_last_error.c_str(); }

const char* pc_status_name(pc_status status) {
  switch (status) {
    case PC_OK: return "ok";
    case PC_ERR_DIMENSION: return "dimension";
    case PC_ERR_FORMAT: return "format";
    case PC_ERR_ARGUMENT: return "argument";
    case PC_ERR_CONTRACT: return "contract";
    case PC_ERR_FIT: return "fit";
    case PC_ERR_CONFIG: return "config";
    case PC_ERR_IO: return "io";
    case PC_ERR_NUMERIC: return "numeric";
    case PC_ERR_CHECKPOINT: return "checkpoint";
    case PC_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void pc_log_levels_from_env(void) { spdlog::cfg::load_env_levels(); }

// ---- configuration ---------------------------------------------------------

pc_status pc_config_load(const char* path, pc_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new pc_config{pc::load_run_config(path), {}};
  });
}

pc_status pc_config_parse(const char* text, pc_config** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = new pc_config{pc::parse_run_config(text), {}};
  });
}

pc_status pc_config_profile(const char* name, pc_config** out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    *out = new pc_config{pc::RunConfig::profile_named(name), {}};
  });
}

uint64_t pc_config_hash(const pc_config* config) { return config ? config->cfg.hash() : 0; }

const char* pc_config_text(pc_config* config) {
  if (config == nullptr) return nullptr;
  config->text = pc::to_yaml(config->cfg);
  return config->text.c_str();
}

void pc_config_free(pc_config* config) { delete config; }

// ---- point clouds and tensor files -----------------------------------------

pc_status pc_cloud_read(const char* path, pc_cloud** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new pc_cloud{pc::read_cloud_bin(path)};
  });
}

size_t pc_cloud_size(const pc_cloud* cloud) { return cloud ? cloud->cloud.size() : 0; }

pc_status pc_cloud_copy(const pc_cloud* cloud, double* xyzi, size_t capacity) {
  return guarded([&] {
    require(cloud, "cloud");
    require(xyzi, "xyzi");
    const auto& pts = cloud->cloud.points;
    if (capacity < 4 * pts.size()) {
      throw pc::ArgumentError("buffer holds " + std::to_string(capacity) + " values, need " +
                              std::to_string(4 * pts.size()));
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      xyzi[4 * i] = pts[i].x;
      xyzi[4 * i + 1] = pts[i].y;
      xyzi[4 * i + 2] = pts[i].z;
      xyzi[4 * i + 3] = pts[i].intensity;
    }
  });
}

void pc_cloud_free(pc_cloud* cloud) { delete cloud; }

pc_status pc_tensors_read(const char* path, pc_tensors** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto map = pc::read_tensor(path);
    auto* t = new pc_tensors;
    for (auto& [name, data] : map) {
      t->names.push_back(name);
      t->data.push_back(std::move(data));
    }
    *out = t;
  });
}

size_t pc_tensors_count(const pc_tensors* tensors) { return tensors ? tensors->names.size() : 0; }

const char* pc_tensors_name(const pc_tensors* tensors, size_t i) {
  if (tensors == nullptr || i >= tensors->names.size()) return nullptr;
  return tensors->names[i].c_str();
}

size_t pc_tensors_rank(const pc_tensors* tensors, size_t i) {
  if (tensors == nullptr || i >= tensors->data.size()) return 0;
  return tensors->data[i].shape.size();
}

const size_t* pc_tensors_shape(const pc_tensors* tensors, size_t i) {
  if (tensors == nullptr || i >= tensors->data.size()) return nullptr;
  return tensors->data[i].shape.data();
}

const double* pc_tensors_data(const pc_tensors* tensors, size_t i, size_t* size) {
  if (tensors == nullptr || i >= tensors->data.size()) return nullptr;
  if (size) *size = tensors->data[i].values.size();
  return tensors->data[i].values.data();
}

void pc_tensors_free(pc_tensors* tensors) { delete tensors; }

// ---- pipeline --------------------------------------------------------------

pc_status pc_pretrain(const pc_config* config, const pc_pretrain_options* options, pc_pretrain_summary* summary) {
  return guarded([&] {
    require(config, "config");
    const pc::RunConfig& cfg = config->cfg;
    const pc_pretrain_options none{};
    const pc_pretrain_options& o = options ? *options : none;

    const std::string scene_dir = o.scene_dir ? o.scene_dir : cfg.scene_dir;
    if (scene_dir.empty()) throw pc::ConfigError("data.scene_dir: no scene directory given");
    std::vector<pc::PointCloud> scenes;
    for (const auto& f : cloud_files(scene_dir)) scenes.push_back(pc::read_cloud_bin(f));
    spdlog::info("loaded {} scenes from {}", scenes.size(), scene_dir);

    pc::TrainOptions topts;
    topts.output_dir = o.output_dir ? o.output_dir : cfg.output_dir;
    if (o.resume_from) topts.resume_from = fs::path(o.resume_from);
    topts.stop_after = o.stop_after;
    const pc::TrainResult r = pc::train(cfg, scenes, topts);

    if (summary) {
      summary->scenes = scenes.size();
      summary->last_step = r.last_step;
      summary->steps_run = r.metrics.size();
      summary->scenes_skipped = r.scenes_skipped;
      summary->unusable_scenes = r.unusable_scenes;
      summary->final_total_loss = std::numeric_limits<double>::quiet_NaN();
      if (!r.metrics.empty() && r.metrics.back().losses) summary->final_total_loss = r.metrics.back().losses->total;
    }
  });
}

pc_status pc_embed(const pc_config* config, const char* checkpoint, const char* scenes, const char* out_path,
                   size_t* scenes_embedded) {
  return guarded([&] {
    require(config, "config");
    require(checkpoint, "checkpoint");
    require(scenes, "scenes");
    require(out_path, "out_path");
    const pc::RunConfig& cfg = config->cfg;
    const pc::Checkpoint ck = pc::load_checkpoint(checkpoint, cfg.hash(), &cfg.model);

    pc::TensorMap out;
    const auto files = cloud_files(scenes);
    for (const auto& f : files) {
      const pc::PointCloud cloud = pc::read_cloud_bin(f);
      std::vector<int> labels;
      if (fs::exists(labels_path(f))) {
        const auto lab = pc::read_tensor(labels_path(f));
        const auto it = lab.find("class");
        if (it == lab.end()) throw pc::FormatError(labels_path(f).string() + ": no \"class\" entry");
        if (it->second.size() != cloud.size()) {
          throw pc::DimensionError(labels_path(f).string() + ": " + std::to_string(it->second.size()) +
                                   " labels for " + std::to_string(cloud.size()) + " points");
        }
        for (double v : it->second.values) labels.push_back(static_cast<int>(v));
      }
      const pc::CellEmbeddings emb = pc::bev_cell_embeddings(cfg, ck.params, cloud, labels);
      const std::string stem = f.stem().string();
      out[stem + "/features"] = emb.features;
      out[stem + "/cells"] = pc::TensorData({emb.cells.size(), 1}, {emb.cells.begin(), emb.cells.end()});
      if (!emb.labels.empty()) {
        out[stem + "/labels"] = pc::TensorData({emb.labels.size(), 1}, {emb.labels.begin(), emb.labels.end()});
      }
    }
    pc::write_tensor(out_path, out);
    if (scenes_embedded) *scenes_embedded = files.size();
  });
}

pc_status pc_cluster(const char* embeddings, size_t k, uint64_t seed, size_t max_iters, const char* out_path,
                     pc_cluster_summary* summary) {
  return guarded([&] {
    require(embeddings, "embeddings");
    require(out_path, "out_path");
    const pc::TensorMap in = pc::read_tensor(embeddings);

    std::vector<double> rows;
    std::vector<int> labels;
    std::size_t cols = 0, n = 0;
    bool all_labeled = true;
    for (const auto& [name, t] : in) {
      const std::string suffix = "/features";
      if (name.size() < suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
      if (t.shape.size() != 2) throw pc::DimensionError(name + ": expected a matrix");
      if (n > 0 && t.cols() != cols) {
        throw pc::DimensionError(name + ": width " + std::to_string(t.cols()) + " differs from " +
                                 std::to_string(cols));
      }
      cols = t.cols();
      n += t.rows();
      rows.insert(rows.end(), t.values.begin(), t.values.end());
      const auto lab = in.find(name.substr(0, name.size() - suffix.size()) + "/labels");
      if (lab == in.end()) {
        all_labeled = false;
      } else {
        for (double v : lab->second.values) labels.push_back(static_cast<int>(v));
      }
    }
    if (n == 0) throw pc::FormatError(std::string(embeddings) + ": no */features entries");

    const pc::KMeansResult km = pc::kmeans(pc::TensorData({n, cols}, std::move(rows)), k, seed, max_iters);
    pc::TensorMap out;
    out["assignments"] = pc::TensorData({n, 1}, {km.assignments.begin(), km.assignments.end()});
    out["centroids"] = km.centroids;
    pc::write_tensor(out_path, out);

    const std::string txt = std::string(out_path) + ".txt";
    std::ofstream os(txt);
    if (!os) throw pc::IoError("cannot write " + txt);
    for (std::size_t a : km.assignments) os << a << '\n';
    if (!os) throw pc::IoError("cannot write " + txt);

    if (summary) {
      *summary = pc_cluster_summary{};
      summary->rows = n;
      summary->k = k;
      summary->iterations = km.iterations;
      summary->converged = km.converged ? 1 : 0;
      summary->inertia = km.inertia();
      if (all_labeled && labels.size() == n) {
        summary->has_labels = 1;
        summary->purity = pc::cluster_purity(km.assignments, labels);
        summary->purity_baseline =
            pc::purity_permutation_baseline(km.assignments, labels, pc::derive_seed(seed, "cluster_perm"));
      }
    }
  });
}

pc_status pc_check_grads(uint64_t seed, pc_grad_report** out) {
  return guarded([&] {
    require(out, "out");
    *out = new pc_grad_report{pc::run_grad_suite(seed)};
  });
}

size_t pc_grad_report_count(const pc_grad_report* report) { return report ? report->entries.size() : 0; }

const char* pc_grad_report_name(const pc_grad_report* report, size_t i) {
  if (report == nullptr || i >= report->entries.size()) return nullptr;
  return report->entries[i].name.c_str();
}

double pc_grad_report_error(const pc_grad_report* report, size_t i) {
  if (report == nullptr || i >= report->entries.size()) return std::numeric_limits<double>::quiet_NaN();
  return report->entries[i].report.max_rel_error;
}

void pc_grad_report_free(pc_grad_report* report) { delete report; }

pc_status pc_gen_synthetic(const pc_config* config, size_t count, uint64_t seed, const char* out_dir) {
  return guarded([&] {
    require(out_dir, "out_dir");
    const pc::SyntheticSpec spec = config ? config->cfg.synthetic : pc::RunConfig::desk().synthetic;
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < count; ++i) {
      const pc::SyntheticScene scene = pc::generate_synthetic_scene(pc::derive_seed(seed, "synthetic", i), spec);
      char stem[32];
      std::snprintf(stem, sizeof stem, "scene_%04zu", i);
      pc::write_cloud_bin(scene.cloud, fs::path(out_dir) / (std::string(stem) + ".bin"));
      const auto cls = scene.point_classes();
      const std::size_t n = scene.cloud.size();
      pc::TensorMap lab;
      lab["class"] = pc::TensorData({n, 1}, std::vector<double>(cls.begin(), cls.end()));
      lab["instance"] = pc::TensorData({n, 1}, std::vector<double>(scene.instance.begin(), scene.instance.end()));
      pc::write_tensor(fs::path(out_dir) / (std::string(stem) + ".labels.pctn"), lab);
    }
  });
}

}  // extern "C"
