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
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>

#include "patchcontrast/errors.hpp"
#include "patchcontrast/pointcloud_io.hpp"
#include "patchcontrast/training.hpp"
#include "test_support.hpp"

using namespace patchcontrast;

namespace {

RunConfig tiny_config() {
  RunConfig c = RunConfig::desk();
  c.model.point_hidden_dim = 8;
  c.model.point_feature_dim = 6;
  c.model.feature_dim = 8;
  c.model.projection_dim = 6;
  c.model.grid_height = c.model.grid_width = 16;
  c.proposals.count = 24;
  c.train.steps = 6;
  c.train.batch_scenes = 2;
  c.train.checkpoint_every = 3;
  c.synthetic.ground_points = 400;
  c.synthetic.surface_density = 25.0;
  return c;
}

std::vector<PointCloud> tiny_scenes(const RunConfig& c, std::size_t n) {
  std::vector<PointCloud> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_synthetic_scene(100 + i, c.synthetic).cloud);
  return out;
}

bool same_params(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second.shape != t.shape || it->second.values != t.values) return false;
  }
  return true;
}

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("learning rate schedule endpoints") {
  Schedule s{0.003, 300, 15};
  CHECK(lr_at(s, 0) == 0.0);
  CHECK(lr_at(s, 15) == doctest::Approx(0.003).epsilon(1e-15));
  CHECK(lr_at(s, 300) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::abs(lr_at(s, 300)) < 1e-12);
  const double mid = 15 + (300 - 15) / 2.0;
  CHECK(lr_at(s, static_cast<std::size_t>(mid)) == doctest::Approx(0.0015).epsilon(0.01));
  CHECK(lr_at(s, 7) == doctest::Approx(0.003 * 7.0 / 15.0));
  CHECK_THROWS_AS(lr_at(s, 301), ArgumentError);
  CHECK_THROWS_AS(lr_at(Schedule{0.0, 10, 1}, 1), ArgumentError);
}

TEST_CASE("learning rate schedule is continuous and bounded") {
  for (std::size_t total : {20u, 100u, 300u, 1000u}) {
    TrainConfig t;
    t.steps = total;
    const Schedule s = Schedule::for_run(t);
    CHECK(s.warmup_steps == static_cast<std::size_t>(std::floor(0.05 * total)));
    double prev = lr_at(s, 0);
    const double max_jump = s.max_lr / static_cast<double>(std::max<std::size_t>(s.warmup_steps, 1)) +
                            s.max_lr * std::numbers::pi / (2.0 * static_cast<double>(total - s.warmup_steps));
    for (std::size_t k = 1; k <= total; ++k) {
      const double lr = lr_at(s, k);
      CHECK(lr >= 0.0);
      CHECK(lr <= s.max_lr * (1 + 1e-15));
      CHECK(std::abs(lr - prev) <= max_jump + 1e-15);
      if (k > s.warmup_steps) CHECK(lr <= prev + 1e-15);
      prev = lr;
    }
  }
}

TEST_CASE("adam first step and zero gradients") {
  ParamStore p{{"w", TensorData({1}, {0.0})}};
  OptimizerState st = OptimizerState::zeros_like(p);
  adam_step(p, {{"w", TensorData({1}, {1.0})}}, st, 0.1);
  CHECK(p["w"].values[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(st.step == 1);

  ParamStore q{{"a", pctest::random_tensor(1, "a", {3, 4})}};
  const ParamStore before = q;
  OptimizerState sq = OptimizerState::zeros_like(q);
  for (int i = 0; i < 5; ++i) adam_step(q, {{"a", TensorData::zeros({3, 4})}}, sq, 0.1);
  CHECK(same_params(q, before));
}

TEST_CASE("adam rejects missing, misshapen, and non-finite gradients") {
  ParamStore p{{"layer.weight", TensorData::zeros({2, 2})}};
  OptimizerState st = OptimizerState::zeros_like(p);
  CHECK_THROWS_AS(adam_step(p, {}, st, 0.1), ContractViolation);
  CHECK_THROWS_AS(adam_step(p, {{"layer.weight", TensorData::zeros({4})}}, st, 0.1), DimensionError);
  TensorData bad = TensorData::zeros({2, 2});
  bad.values[3] = std::nan("");
  try {
    adam_step(p, {{"layer.weight", bad}}, st, 0.1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer.weight") != std::string::npos);
  }
  CHECK(st.step == 0);
}

TEST_CASE("checkpoint round trip and validation") {
  pctest::TempDir dir("train");
  const RunConfig c = tiny_config();
  ParamStore p = init_params(c.model, 5);
  OptimizerState st = OptimizerState::zeros_like(p);
  TensorMap g;
  for (const auto& [n, t] : p) g.emplace(n, pctest::random_tensor(9, n, t.shape));
  adam_step(p, g, st, 0.01);
  const auto path = dir / "ck.pctn";
  const std::uint64_t big = 0xfedcba9876543210ULL;
  save_checkpoint(path, p, st, 123456789012ULL, big);

  const Checkpoint ck = load_checkpoint(path, big, &c.model);
  CHECK(ck.step == 123456789012ULL);
  CHECK(ck.config_hash == big);
  CHECK(ck.optimizer.step == 1);
  CHECK(same_params(ck.params, p));
  CHECK(same_params(ck.optimizer.first_moment, st.first_moment));
  CHECK(same_params(ck.optimizer.second_moment, st.second_moment));

  CHECK_THROWS_AS(load_checkpoint(path, big + 1), CheckpointError);
  RunConfig other = c;
  other.model.feature_dim = 9;
  try {
    load_checkpoint(path, std::nullopt, &other.model);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("checkpoint tensor ") != std::string::npos);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.pctn"), IoError);
}

TEST_CASE("one scene, one step writes one metrics record") {
  pctest::TempDir dir("train");
  RunConfig c = tiny_config();
  c.train.steps = 1;
  c.train.batch_scenes = 1;
  const auto scenes = tiny_scenes(c, 1);
  TrainOptions opt;
  opt.output_dir = dir.path();
  const TrainResult r = train(c, scenes, opt);
  CHECK(r.last_step == 1);
  const auto lines = lines_of(dir / "metrics.jsonl");
  REQUIRE(lines.size() == 1);
  const auto j = nlohmann::json::parse(lines[0]);
  for (const char* k : {"step", "lr", "L_p", "L_p2p", "L_rec", "total", "scenes_skipped"}) CHECK(j.contains(k));
  CHECK(j["step"] == 1);
  CHECK(std::isfinite(j["total"].get<double>()));
  CHECK(std::filesystem::exists(checkpoint_path(dir.path(), 1)));
}

TEST_CASE("metrics line uses null for all-skipped steps") {
  StepMetrics m;
  m.step = 4;
  m.scenes_skipped = 2;
  const auto j = nlohmann::json::parse(metrics_line(m));
  CHECK(j["total"].is_null());
  CHECK(j["scenes_skipped"] == 2);
}

TEST_CASE("training is deterministic and resume is bit-exact") {
  const RunConfig c = tiny_config();
  const auto scenes = tiny_scenes(c, 3);
  pctest::TempDir a("train_a"), b("train_b");
  TrainOptions full;
  full.output_dir = a.path();
  const TrainResult r1 = train(c, scenes, full);
  const TrainResult r2 = train(c, scenes, {});
  CHECK(same_params(r1.params, r2.params));
  REQUIRE(r1.metrics.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(metrics_line(r1.metrics[i]) == metrics_line(r2.metrics[i]));

  TrainOptions first;
  first.output_dir = b.path();
  first.stop_after = 4;
  const TrainResult part = train(c, scenes, first);
  CHECK(part.last_step == 4);
  TrainOptions second;
  second.output_dir = b.path();
  second.resume_from = checkpoint_path(b.path(), 3);
  const TrainResult rest = train(c, scenes, second);
  CHECK(rest.last_step == 6);
  CHECK(same_params(rest.params, r1.params));
  CHECK(same_params(rest.optimizer.first_moment, r1.optimizer.first_moment));
  CHECK(lines_of(b / "metrics.jsonl") == lines_of(a / "metrics.jsonl"));
  CHECK(pctest::read_file(checkpoint_path(b.path(), 6)) == pctest::read_file(checkpoint_path(a.path(), 6)));
}

TEST_CASE("thread count does not change the result") {
  RunConfig c = tiny_config();
  c.train.steps = 3;
  const auto scenes = tiny_scenes(c, 2);
  const TrainResult one = train(c, scenes);
  c.train.threads = 2;
  const TrainResult two = train(c, scenes);
  CHECK(same_params(one.params, two.params));
}

TEST_CASE("resume rejects a checkpoint from another configuration") {
  pctest::TempDir dir("train");
  RunConfig c = tiny_config();
  c.train.steps = 3;
  const auto scenes = tiny_scenes(c, 1);
  TrainOptions opt;
  opt.output_dir = dir.path();
  train(c, scenes, opt);
  RunConfig other = c;
  other.loss.rec = 0.1;
  TrainOptions resume;
  resume.resume_from = checkpoint_path(dir.path(), 3);
  CHECK_THROWS_AS(train(other, scenes, resume), CheckpointError);
}

TEST_CASE("scenes without a ground plane are counted, not fatal") {
  RunConfig c = tiny_config();
  c.train.steps = 2;
  std::vector<PointCloud> scenes = tiny_scenes(c, 1);
  scenes.push_back(PointCloud{});
  scenes.back().push_back({0, 0, 0, 0}, 0);
  const TrainResult r = train(c, scenes);
  CHECK(r.unusable_scenes == 1);
  CHECK_THROWS_AS(train(c, std::vector<PointCloud>{}), ArgumentError);
}

TEST_CASE("run_scene gradients cover every parameter") {
  const RunConfig c = tiny_config();
  const auto scene = generate_synthetic_scene(3, c.synthetic);
  const PlaneModel plane = fit_ground_plane(scene.cloud, c.ransac, 1);
  const ParamStore p = init_params(c.model, 2);
  const PreparedScene prep = prepare_scene(c, scene.cloud, plane, 7);
  const SceneResult r = run_scene(c, p, prep, 7, true);
  REQUIRE_FALSE(r.skipped);
  CHECK(r.grads.size() == p.size());
  const double expected = r.losses.proposal + r.losses.p2p + 0.05 * r.losses.rec;
  CHECK(r.losses.total == doctest::Approx(expected).epsilon(1e-12));
  const SceneResult again = run_scene(c, p, prep, 7, false);
  CHECK(again.losses.total == r.losses.total);
  CHECK(again.grads.empty());
}
