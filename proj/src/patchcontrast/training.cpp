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

#include "patchcontrast/training.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <nlohmann/json.hpp>
#include <thread>

#include "patchcontrast/attention.hpp"
#include "patchcontrast/errors.hpp"
#include "patchcontrast/rng.hpp"

namespace patchcontrast {

Schedule Schedule::for_run(const TrainConfig& train) {
  Schedule s;
  s.max_lr = train.max_lr;
  s.total_steps = train.steps;
  s.warmup_steps = static_cast<std::size_t>(std::floor(train.warmup_fraction * static_cast<double>(train.steps)));
  return s;
}

void Schedule::validate() const {
  if (!(max_lr > 0.0)) throw ArgumentError("schedule: max_lr must be positive");
  if (warmup_steps >= total_steps) throw ArgumentError("schedule: warmup_steps must be below total_steps");
}

double lr_at(const Schedule& s, std::size_t step) {
  s.validate();
  if (step > s.total_steps) {
    throw ArgumentError("lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(s.total_steps) + "]");
  }
  if (step < s.warmup_steps) return s.max_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  const double progress =
      static_cast<double>(step - s.warmup_steps) / static_cast<double>(s.total_steps - s.warmup_steps);
  return s.max_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState OptimizerState::zeros_like(const ParamStore& params) {
  OptimizerState st;
  for (const auto& [name, t] : params) {
    st.first_moment.emplace(name, TensorData::zeros(t.shape));
    st.second_moment.emplace(name, TensorData::zeros(t.shape));
  }
  return st;
}

void adam_step(ParamStore& params, const TensorMap& grads, OptimizerState& st, double lr) {
  for (const auto& [name, p] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) throw ContractViolation("adam_step: no gradient for " + name);
    if (g->second.shape != p.shape) {
      throw DimensionError("adam_step: gradient of " + name + " has shape " + shape_str(g->second.shape) +
                           ", expected " + shape_str(p.shape));
    }
    for (double v : g->second.values) {
      if (!std::isfinite(v)) throw NumericError("adam_step: non-finite gradient in " + name);
    }
    if (st.first_moment[name].shape != p.shape || st.second_moment[name].shape != p.shape) {
      throw DimensionError("adam_step: moment buffers of " + name + " do not match");
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (auto& [name, p] : params) {
    const auto& g = grads.at(name).values;
    auto& m = st.first_moment[name].values;
    auto& v = st.second_moment[name].values;
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.values[i] -= lr * m_hat / (std::sqrt(v_hat) + st.eps);
    }
  }
}

// ---- checkpoints -----------------------------------------------------------

namespace {

constexpr const char* kParamPrefix = "param/";
constexpr const char* kFirstPrefix = "adam_m/";
constexpr const char* kSecondPrefix = "adam_v/";

TensorData split_u64(std::uint64_t v) {
  return TensorData({2}, {static_cast<double>(v >> 32), static_cast<double>(v & 0xffffffffULL)});
}

std::uint64_t join_u64(const TensorData& t, const std::string& name) {
  if (t.values.size() != 2) throw CheckpointError("checkpoint entry " + name + " is malformed");
  return (static_cast<std::uint64_t>(t.values[0]) << 32) | static_cast<std::uint64_t>(t.values[1]);
}

const TensorData& entry(const TensorMap& map, const std::string& name) {
  auto it = map.find(name);
  if (it == map.end()) throw CheckpointError("checkpoint is missing " + name);
  return it->second;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const OptimizerState& opt,
                     std::uint64_t step, std::uint64_t config_hash) {
  TensorMap out;
  for (const auto& [name, t] : params) out.emplace(kParamPrefix + name, t);
  for (const auto& [name, t] : opt.first_moment) out.emplace(kFirstPrefix + name, t);
  for (const auto& [name, t] : opt.second_moment) out.emplace(kSecondPrefix + name, t);
  out.emplace("manifest/step", split_u64(step));
  out.emplace("manifest/config_hash", split_u64(config_hash));
  out.emplace("manifest/adam_step", split_u64(opt.step));
  out.emplace("manifest/adam_hyper", TensorData({3}, {opt.beta1, opt.beta2, opt.eps}));
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  write_tensor(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_hash,
                           const ModelConfig* model) {
  const TensorMap in = read_tensor(path);
  Checkpoint ck;
  ck.step = join_u64(entry(in, "manifest/step"), "manifest/step");
  ck.config_hash = join_u64(entry(in, "manifest/config_hash"), "manifest/config_hash");
  if (expected_hash && *expected_hash != ck.config_hash) {
    throw CheckpointError("checkpoint " + path.string() + " was written by a different configuration (hash " +
                          std::to_string(ck.config_hash) + ", expected " + std::to_string(*expected_hash) + ")");
  }
  ck.optimizer.step = join_u64(entry(in, "manifest/adam_step"), "manifest/adam_step");
  const TensorData& hyper = entry(in, "manifest/adam_hyper");
  if (hyper.values.size() != 3) throw CheckpointError("checkpoint entry manifest/adam_hyper is malformed");
  ck.optimizer.beta1 = hyper.values[0];
  ck.optimizer.beta2 = hyper.values[1];
  ck.optimizer.eps = hyper.values[2];
  auto strip = [](const std::string& name, const std::string& prefix) -> std::optional<std::string> {
    if (name.rfind(prefix, 0) != 0) return std::nullopt;
    return name.substr(prefix.size());
  };
  for (const auto& [name, t] : in) {
    if (auto n = strip(name, kParamPrefix)) ck.params.emplace(*n, t);
    else if (auto n1 = strip(name, kFirstPrefix)) ck.optimizer.first_moment.emplace(*n1, t);
    else if (auto n2 = strip(name, kSecondPrefix)) ck.optimizer.second_moment.emplace(*n2, t);
  }
  for (const auto& [name, t] : ck.params) {
    for (const TensorMap* moments : {&ck.optimizer.first_moment, &ck.optimizer.second_moment}) {
      auto it = moments->find(name);
      if (it == moments->end()) throw CheckpointError("checkpoint has no optimizer moments for " + name);
      if (it->second.shape != t.shape) throw CheckpointError("checkpoint moment shape mismatch for " + name);
    }
  }
  if (model) {
    const auto shapes = param_shapes(*model);
    for (const auto& [name, shape] : shapes) {
      auto it = ck.params.find(name);
      if (it == ck.params.end()) throw CheckpointError("checkpoint is missing tensor " + name);
      if (it->second.shape != shape) {
        throw CheckpointError("checkpoint tensor " + name + " has shape " + shape_str(it->second.shape) +
                              ", model expects " + shape_str(shape));
      }
    }
    if (ck.params.size() != shapes.size()) throw CheckpointError("checkpoint holds tensors the model does not use");
  }
  return ck;
}

// ---- scene pipeline --------------------------------------------------------

PreparedScene prepare_scene(const RunConfig& cfg, const PointCloud& cloud, const PlaneModel& plane,
                            std::uint64_t seed) {
  PreparedScene s;
  s.pair = make_view_pair(cloud, cfg.augmentation, derive_seed(seed, "views"));
  s.geometry = build_scene_geometry(s.pair, plane, cfg.background_margin, cfg.proposals, cfg.patches,
                                    cfg.model.num_patches > 0, derive_seed(seed, "geometry"));
  return s;
}

SceneResult run_scene(const RunConfig& cfg, const ParamStore& params, const PreparedScene& scene,
                      std::uint64_t seed, bool with_grads) {
  SceneResult res;
  if (scene.geometry.num_pairs() == 0) {
    res.skipped = true;
    return res;
  }
  Graph g;
  const BoundParams bound = bind_params(g, params, with_grads);
  const EmbeddingSet emb = forward_scene(bound, cfg.model, scene.pair, scene.geometry);
  const Tensor l_p = proposal_loss(emb.proj_proposals, cfg.loss.temperature);
  Tensor l_p2p, l_rec;
  if (emb.has_patches() && cfg.loss.p2p != 0.0) {
    l_p2p = proposal_to_patch_loss(emb.proj_proposals, emb.proj_patches, cfg.loss.temperature,
                                   cfg.p2p_negative_pool);
  }
  if (emb.has_patches() && cfg.loss.rec != 0.0) {
    l_rec = refinement_loss_batch(bound, emb, derive_seed(seed, "mask"));
  }
  const Tensor total = total_loss(l_p, l_p2p, l_rec, cfg.loss);
  res.losses = {l_p.item(), l_p2p.valid() ? l_p2p.item() : 0.0, l_rec.valid() ? l_rec.item() : 0.0, total.item()};
  if (with_grads) {
    g.backward(total);
    for (const auto& [name, t] : bound) res.grads.emplace(name, t.grad_data());
  }
  return res;
}

// ---- training loop ---------------------------------------------------------

std::uint64_t sample_seed(std::uint64_t run_seed, std::size_t sample) { return derive_seed(run_seed, "sample", sample); }

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t step) {
  char name[32];
  std::snprintf(name, sizeof(name), "ckpt_%06zu.pctn", step);
  return dir / "checkpoints" / name;
}

std::string metrics_line(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["lr"] = m.lr;
  if (m.losses) {
    j["L_p"] = m.losses->proposal;
    j["L_p2p"] = m.losses->p2p;
    j["L_rec"] = m.losses->rec;
    j["total"] = m.losses->total;
  } else {
    j["L_p"] = j["L_p2p"] = j["L_rec"] = j["total"] = nullptr;
  }
  j["scenes_skipped"] = m.scenes_skipped;
  return j.dump();
}

namespace {

// Scene index of global sample i: one seeded permutation per epoch.
class BatchPlan {
 public:
  BatchPlan(std::uint64_t seed, std::size_t scenes) : seed_(seed), scenes_(scenes) {}

  std::size_t scene_of(std::size_t sample) {
    const std::size_t epoch = sample / scenes_;
    if (epoch != epoch_ || order_.empty()) {
      epoch_ = epoch;
      order_.resize(scenes_);
      for (std::size_t i = 0; i < scenes_; ++i) order_[i] = i;
      CounterRng rng(seed_, "epoch", epoch);
      for (std::size_t i = scenes_; i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
    }
    return order_[sample % scenes_];
  }

 private:
  std::uint64_t seed_;
  std::size_t scenes_;
  std::size_t epoch_ = 0;
  std::vector<std::size_t> order_;
};

void rewrite_metrics_prefix(const std::filesystem::path& path, std::size_t keep_through) {
  std::vector<std::string> kept;
  if (std::ifstream in(path); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("step")) throw FormatError("malformed metrics record in " + path.string());
      if (j["step"].get<std::size_t>() <= keep_through) kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : kept) out << l << '\n';
}

}  // namespace

TrainResult train(const RunConfig& cfg, std::span<const PointCloud> scenes, const TrainOptions& opt) {
  cfg.validate();
  if (scenes.empty()) throw ArgumentError("train: no scenes given");
  const std::uint64_t config_hash = cfg.hash();
  const Schedule schedule = Schedule::for_run(cfg.train);

  TrainResult res;
  std::size_t start_step = 0;
  if (opt.resume_from) {
    Checkpoint ck = load_checkpoint(*opt.resume_from, config_hash, &cfg.model);
    if (ck.step > cfg.train.steps) throw CheckpointError("checkpoint step is past the configured run length");
    res.params = std::move(ck.params);
    res.optimizer = std::move(ck.optimizer);
    start_step = ck.step;
    spdlog::info("resuming from {} at step {}", opt.resume_from->string(), start_step);
  } else {
    res.params = init_params(cfg.model, derive_seed(cfg.seed, "init"));
    res.optimizer = OptimizerState::zeros_like(res.params);
  }

  // Ground planes are fit once per scene on the untransformed cloud.
  std::vector<std::optional<PlaneModel>> planes(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    try {
      planes[i] = fit_ground_plane(scenes[i], cfg.ransac, derive_seed(cfg.seed, "ransac", i));
    } catch (const FitError& e) {
      ++res.unusable_scenes;
      spdlog::warn("scene {} has no ground plane: {}", i, e.what());
    }
  }

  std::ofstream metrics_out;
  if (!opt.output_dir.empty()) {
    std::filesystem::create_directories(opt.output_dir);
    const auto metrics_path = opt.output_dir / "metrics.jsonl";
    if (opt.resume_from) {
      rewrite_metrics_prefix(metrics_path, start_step);
      metrics_out.open(metrics_path, std::ios::app);
    } else {
      metrics_out.open(metrics_path, std::ios::trunc);
    }
    if (!metrics_out) throw IoError("cannot write " + metrics_path.string());
  }

  BatchPlan plan(cfg.seed, scenes.size());
  const std::size_t batch = cfg.train.batch_scenes;
  const std::size_t last = opt.stop_after == 0 ? cfg.train.steps : std::min(opt.stop_after, cfg.train.steps);
  res.last_step = start_step;
  for (std::size_t step = start_step + 1; step <= last; ++step) {
    std::vector<std::size_t> samples(batch), scene_ids(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      samples[b] = (step - 1) * batch + b;
      scene_ids[b] = plan.scene_of(samples[b]);
    }
    std::vector<SceneResult> results(batch);
    auto work = [&](std::size_t b) {
      const std::size_t s = scene_ids[b];
      if (!planes[s]) {
        results[b].skipped = true;
        return;
      }
      const std::uint64_t seed = sample_seed(cfg.seed, samples[b]);
      const PreparedScene prepared = prepare_scene(cfg, scenes[s], *planes[s], seed);
      results[b] = run_scene(cfg, res.params, prepared, seed, true);
    };
    const std::size_t workers = std::min(cfg.train.threads, batch);
    if (workers <= 1) {
      for (std::size_t b = 0; b < batch; ++b) work(b);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(workers);
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t b = w; b < batch; b += workers) work(b);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }

    StepMetrics m;
    m.step = step;
    m.lr = lr_at(schedule, step);
    std::size_t used = 0;
    SceneLosses mean_losses;
    TensorMap grads;
    for (std::size_t b = 0; b < batch; ++b) {
      const SceneResult& r = results[b];
      if (r.skipped) {
        ++m.scenes_skipped;
        continue;
      }
      ++used;
      mean_losses.proposal += r.losses.proposal;
      mean_losses.p2p += r.losses.p2p;
      mean_losses.rec += r.losses.rec;
      mean_losses.total += r.losses.total;
      for (const auto& [name, gd] : r.grads) {
        auto [it, inserted] = grads.try_emplace(name, gd);
        if (!inserted) {
          for (std::size_t i = 0; i < gd.values.size(); ++i) it->second.values[i] += gd.values[i];
        }
      }
    }
    if (used > 0) {
      const double inv = 1.0 / static_cast<double>(used);
      mean_losses.proposal *= inv;
      mean_losses.p2p *= inv;
      mean_losses.rec *= inv;
      mean_losses.total *= inv;
      for (auto& [name, gd] : grads) {
        for (double& v : gd.values) v *= inv;
      }
      m.losses = mean_losses;
      adam_step(res.params, grads, res.optimizer, m.lr);
    }
    res.scenes_skipped += m.scenes_skipped;
    res.last_step = step;
    if (metrics_out.is_open()) metrics_out << metrics_line(m) << '\n' << std::flush;
    if (m.losses) {
      spdlog::debug("step {} lr {:.6f} total {:.6f} skipped {}", step, m.lr, m.losses->total, m.scenes_skipped);
    }
    res.metrics.push_back(m);

    const bool periodic = cfg.train.checkpoint_every > 0 && step % cfg.train.checkpoint_every == 0;
    if (!opt.output_dir.empty() && (periodic || step == cfg.train.steps)) {
      res.final_checkpoint = checkpoint_path(opt.output_dir, step);
      save_checkpoint(res.final_checkpoint, res.params, res.optimizer, step, config_hash);
    }
  }
  return res;
}

}  // namespace patchcontrast
