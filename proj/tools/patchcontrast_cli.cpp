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


// Command-line front end. Links only the C interface.

#include <CLI11.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <string>

#include "patchcontrast/patchcontrast.h"

namespace {

constexpr double kGradTolerance = 1e-4;

// One line per failure so scripts can split on spaces after the prefix.
int report_error(const char* kind, int code, std::string message) {
  for (char& c : message) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::fprintf(stderr, "error kind=%s code=%d message=\"%s\"\n", kind, code, message.c_str());
  return code == 0 ? 1 : code;
}

int report_status(pc_status s) { return report_error(pc_status_name(s), s, pc_last_error()); }

struct ConfigHandle {
  pc_config* ptr = nullptr;
  ~ConfigHandle() { pc_config_free(ptr); }
};

pc_status open_config(const std::string& path, ConfigHandle& h) {
  if (path.empty()) return pc_config_profile("desk", &h.ptr);
  return pc_config_load(path.c_str(), &h.ptr);
}

}  // namespace

int main(int argc, char** argv) {
  pc_log_levels_from_env();

  CLI::App app{"Self-supervised point cloud pretraining"};
  app.set_version_flag("--version", std::string(pc_version()));
  app.require_subcommand(1);

  std::string config_path, scene_dir, out, resume, checkpoint, embeddings;
  std::size_t stop_after = 0, k = 20, iters = 100, count = 10;
  std::uint64_t seed = 0;

  auto* pretrain = app.add_subcommand("pretrain", "Train on a directory of .bin clouds");
  pretrain->add_option("--config", config_path, "Run configuration")->required();
  pretrain->add_option("--scenes", scene_dir, "Scene directory (overrides data.scene_dir)");
  pretrain->add_option("--out", out, "Output directory (overrides data.output_dir)");
  pretrain->add_option("--resume", resume, "Checkpoint to resume from");
  pretrain->add_option("--stop-after", stop_after, "Last step to run");

  auto* embed = app.add_subcommand("embed", "Export BEV cell embeddings");
  embed->add_option("--config", config_path, "Run configuration")->required();
  embed->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  embed->add_option("--scenes", scene_dir, "Cloud file or directory")->required();
  embed->add_option("--out", out, "Output tensor file")->required();

  auto* cluster = app.add_subcommand("cluster", "k-means over exported embeddings");
  cluster->add_option("--embeddings", embeddings, "Tensor file from embed")->required();
  cluster->add_option("--k", k, "Cluster count");
  cluster->add_option("--seed", seed, "Seed");
  cluster->add_option("--iters", iters, "Maximum Lloyd iterations");
  cluster->add_option("--out", out, "Output tensor file")->required();

  auto* grads = app.add_subcommand("check-grads", "Finite-difference gradient suite");
  grads->add_option("--seed", seed, "Seed");

  auto* gen = app.add_subcommand("gen-synthetic", "Write labeled synthetic scenes");
  gen->add_option("--count", count, "Number of scenes");
  gen->add_option("--seed", seed, "Seed");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--config", config_path, "Run configuration for the scene spec");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", 2, e.what());
  }

  ConfigHandle cfg;
  if (*pretrain) {
    if (pc_status s = open_config(config_path, cfg); s != PC_OK) return report_status(s);
    pc_pretrain_options o{};
    o.scene_dir = scene_dir.empty() ? nullptr : scene_dir.c_str();
    o.output_dir = out.empty() ? nullptr : out.c_str();
    o.resume_from = resume.empty() ? nullptr : resume.c_str();
    o.stop_after = stop_after;
    pc_pretrain_summary sum{};
    if (pc_status s = pc_pretrain(cfg.ptr, &o, &sum); s != PC_OK) return report_status(s);
    std::printf("scenes %zu steps_run %zu last_step %zu scenes_skipped %zu unusable_scenes %zu final_total %.6f\n",
                sum.scenes, sum.steps_run, sum.last_step, sum.scenes_skipped, sum.unusable_scenes,
                sum.final_total_loss);
    return 0;
  }
  if (*embed) {
    if (pc_status s = open_config(config_path, cfg); s != PC_OK) return report_status(s);
    std::size_t n = 0;
    if (pc_status s = pc_embed(cfg.ptr, checkpoint.c_str(), scene_dir.c_str(), out.c_str(), &n); s != PC_OK) {
      return report_status(s);
    }
    std::printf("embedded %zu scenes into %s\n", n, out.c_str());
    return 0;
  }
  if (*cluster) {
    pc_cluster_summary sum{};
    if (pc_status s = pc_cluster(embeddings.c_str(), k, seed, iters, out.c_str(), &sum); s != PC_OK) {
      return report_status(s);
    }
    std::printf("rows %zu k %zu iterations %zu converged %d inertia %.6f\n", sum.rows, sum.k, sum.iterations,
                sum.converged, sum.inertia);
    if (sum.has_labels) std::printf("purity %.4f baseline %.4f\n", sum.purity, sum.purity_baseline);
    return 0;
  }
  if (*grads) {
    pc_grad_report* rep = nullptr;
    if (pc_status s = pc_check_grads(seed, &rep); s != PC_OK) return report_status(s);
    std::size_t failed = 0;
    const std::size_t n = pc_grad_report_count(rep);
    for (std::size_t i = 0; i < n; ++i) {
      const double err = pc_grad_report_error(rep, i);
      const bool ok = std::isfinite(err) && err < kGradTolerance;
      failed += ok ? 0 : 1;
      std::printf("%-26s %.3e %s\n", pc_grad_report_name(rep, i), err, ok ? "ok" : "FAIL");
    }
    pc_grad_report_free(rep);
    if (failed > 0) {
      return report_error("gradcheck", 1, std::to_string(failed) + " of " + std::to_string(n) +
                                              " checks at or above " + std::to_string(kGradTolerance));
    }
    return 0;
  }
  if (*gen) {
    if (!config_path.empty()) {
      if (pc_status s = open_config(config_path, cfg); s != PC_OK) return report_status(s);
    }
    if (pc_status s = pc_gen_synthetic(cfg.ptr, count, seed, out.c_str()); s != PC_OK) return report_status(s);
    std::printf("wrote %zu scenes to %s\n", count, out.c_str());
    return 0;
  }
  return 0;
}
