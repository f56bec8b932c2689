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

#include "patchcontrast/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "patchcontrast/errors.hpp"
#include "patchcontrast/rng.hpp"

namespace patchcontrast {

RunConfig RunConfig::full() {
  RunConfig c;
  c.profile = "full";
  c.model.point_hidden_dim = 64;
  c.model.point_feature_dim = 64;
  c.model.feature_dim = 512;
  c.model.projection_dim = 128;
  c.model.grid_height = 188;
  c.model.grid_width = 188;
  c.proposals.count = 1024;
  c.eval.kmeans_k = 20;
  return c;
}

RunConfig RunConfig::desk() {
  RunConfig c;
  c.profile = "desk";
  c.model.feature_dim = 64;
  c.model.projection_dim = 32;
  c.model.grid_height = 64;
  c.model.grid_width = 64;
  c.proposals.count = 64;
  c.eval.kmeans_k = 8;
  return c;
}

RunConfig RunConfig::profile_named(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "full") return full();
  throw ConfigError("profile: unknown profile '" + name + "' (expected desk or full)");
}

void RunConfig::validate() const {
  model.validate();
  augmentation.validate();
  loss.validate();
  synthetic.validate();
  if (ransac.iterations <= 0) throw ConfigError("ground.ransac_iterations must be positive");
  if (!(ransac.inlier_tol > 0.0)) throw ConfigError("ground.inlier_tol must be positive");
  if (background_margin < 0.0) throw ConfigError("ground.background_margin must be nonnegative");
  if (proposals.count == 0) throw ConfigError("proposals.count must be positive");
  if (!(proposals.radius > 0.0)) throw ConfigError("proposals.radius must be positive");
  if (proposals.max_points == 0) throw ConfigError("proposals.max_points must be positive");
  if (!(patches.offset > 0.0)) throw ConfigError("patches.offset must be positive");
  if (!(patches.radius > 0.0)) throw ConfigError("patches.radius must be positive");
  if (patches.max_points == 0) throw ConfigError("patches.max_points must be positive");
  if (model.num_patches == 0 && (loss.p2p != 0.0 || loss.rec != 0.0)) {
    throw ConfigError("loss.p2p_weight and loss.rec_weight must be 0 when model.num_patches is 0");
  }
  if (train.steps == 0) throw ConfigError("train.steps must be positive");
  if (train.batch_scenes == 0) throw ConfigError("train.batch_scenes must be positive");
  if (!(train.max_lr > 0.0)) throw ConfigError("train.max_lr must be positive");
  if (train.warmup_fraction < 0.0 || train.warmup_fraction >= 1.0) {
    throw ConfigError("train.warmup_fraction must be in [0, 1)");
  }
  if (train.threads == 0) throw ConfigError("train.threads must be positive");
  if (eval.kmeans_k == 0) throw ConfigError("eval.kmeans_k must be positive");
}

const char* pool_name(NegativePool pool) { return pool == NegativePool::kMixed ? "mixed" : "cross"; }

namespace {

using Setter = std::function<void(const YAML::Node&, const std::string&)>;
using Section = std::map<std::string, Setter>;

template <typename T>
T scalar_as(const YAML::Node& node, const std::string& key) {
  if (!node.IsScalar()) throw ConfigError(key + ": expected a scalar");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(key + ": cannot parse '" + node.Scalar() + "'");
  }
}

template <typename T>
Setter set(T& field) {
  return [&field](const YAML::Node& n, const std::string& key) { field = scalar_as<T>(n, key); };
}

Setter set_size(std::size_t& field) {
  return [&field](const YAML::Node& n, const std::string& key) {
    const auto v = scalar_as<long long>(n, key);
    if (v < 0) throw ConfigError(key + ": must be nonnegative");
    field = static_cast<std::size_t>(v);
  };
}

Setter set_range(std::array<double, 2>& field) {
  return [&field](const YAML::Node& n, const std::string& key) {
    if (!n.IsSequence() || n.size() != 2) throw ConfigError(key + ": expected a two-element list");
    field = {scalar_as<double>(n[0], key), scalar_as<double>(n[1], key)};
  };
}

void apply_section(const YAML::Node& node, const std::string& prefix, const Section& section) {
  if (!node.IsMap()) throw ConfigError(prefix + ": expected a mapping");
  for (const auto& kv : node) {
    const std::string name = kv.first.as<std::string>();
    const std::string key = prefix.empty() ? name : prefix + "." + name;
    auto it = section.find(name);
    if (it == section.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(kv.second, key);
  }
}

void apply_all(const YAML::Node& root, RunConfig& c) {
  Section model{
      {"point_hidden_dim", set_size(c.model.point_hidden_dim)},
      {"point_feature_dim", set_size(c.model.point_feature_dim)},
      {"feature_dim", set_size(c.model.feature_dim)},
      {"projection_dim", set_size(c.model.projection_dim)},
      {"grid_height", set_size(c.model.grid_height)},
      {"grid_width", set_size(c.model.grid_width)},
      {"num_patches", set_size(c.model.num_patches)},
  };
  Section augmentation{
      {"flip_prob", set(c.augmentation.flip_prob)},
      {"scale_range", set_range(c.augmentation.scale_range)},
      {"rotation_deg", set_range(c.augmentation.rot_range_deg)},
      {"rotation_prob", set(c.augmentation.rot_prob)},
      {"point_drop_max", set(c.augmentation.drop_frac_max)},
      {"coord_noise_sigma", set_range(c.augmentation.coord_noise_sigma_range)},
      {"intensity_noise_sigma", set_range(c.augmentation.intensity_noise_sigma_range)},
      {"cuboid_prob", set(c.augmentation.cuboid_prob)},
      {"cuboid_min_area", set(c.augmentation.cuboid_min_area_frac)},
      {"patch_drop_max", set(c.augmentation.patch_drop_max_frac)},
      {"patch_drop_radius", set(c.augmentation.patch_drop_radius)},
  };
  Section ground{
      {"ransac_iterations", set(c.ransac.iterations)},
      {"inlier_tol", set(c.ransac.inlier_tol)},
      {"background_margin", set(c.background_margin)},
  };
  Section proposals{
      {"count", set_size(c.proposals.count)},
      {"radius", set(c.proposals.radius)},
      {"max_points", set_size(c.proposals.max_points)},
  };
  Section patches{
      {"offset", set(c.patches.offset)},
      {"radius", set(c.patches.radius)},
      {"max_points", set_size(c.patches.max_points)},
  };
  Section loss{
      {"proposal_weight", set(c.loss.proposal)},
      {"p2p_weight", set(c.loss.p2p)},
      {"rec_weight", set(c.loss.rec)},
      {"temperature", set(c.loss.temperature)},
      {"p2p_negative_pool",
       [&c](const YAML::Node& n, const std::string& key) {
         const auto v = scalar_as<std::string>(n, key);
         if (v == "mixed") c.p2p_negative_pool = NegativePool::kMixed;
         else if (v == "cross") c.p2p_negative_pool = NegativePool::kCross;
         else throw ConfigError(key + ": expected mixed or cross, got '" + v + "'");
       }},
  };
  Section train{
      {"steps", set_size(c.train.steps)},
      {"batch_scenes", set_size(c.train.batch_scenes)},
      {"max_lr", set(c.train.max_lr)},
      {"warmup_fraction", set(c.train.warmup_fraction)},
      {"checkpoint_every", set_size(c.train.checkpoint_every)},
      {"threads", set_size(c.train.threads)},
  };
  Section eval{
      {"kmeans_k", set_size(c.eval.kmeans_k)},
      {"kmeans_iters", set_size(c.eval.kmeans_iters)},
  };
  Section synthetic{
      {"min_instances", set_size(c.synthetic.min_instances)},
      {"max_instances", set_size(c.synthetic.max_instances)},
      {"half_extent", set(c.synthetic.half_extent)},
      {"ground_points", set_size(c.synthetic.ground_points)},
      {"surface_density", set(c.synthetic.surface_density)},
      {"noise_sigma", set(c.synthetic.noise_sigma)},
      {"max_tilt_deg", set(c.synthetic.max_tilt_deg)},
      {"separation", set(c.synthetic.separation)},
  };
  Section data{
      {"scene_dir", set(c.scene_dir)},
      {"output_dir", set(c.output_dir)},
  };
  auto nested = [](Section& s) {
    return [&s](const YAML::Node& n, const std::string& key) { apply_section(n, key, s); };
  };
  Section top{
      {"profile", [](const YAML::Node&, const std::string&) {}},  // consumed first
      {"seed", set(c.seed)},
      {"model", nested(model)},
      {"augmentation", nested(augmentation)},
      {"ground", nested(ground)},
      {"proposals", nested(proposals)},
      {"patches", nested(patches)},
      {"loss", nested(loss)},
      {"train", nested(train)},
      {"eval", nested(eval)},
      {"synthetic", nested(synthetic)},
      {"data", nested(data)},
  };
  apply_section(root, "", top);
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) throw ConfigError("config: top level must be a mapping");
  std::string profile = "desk";
  if (root["profile"]) profile = scalar_as<std::string>(root["profile"], "profile");
  RunConfig cfg = RunConfig::profile_named(profile);
  apply_all(root, cfg);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_yaml(const RunConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  auto range = [&out](const char* key, const std::array<double, 2>& r) {
    out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq << r[0] << r[1] << YAML::EndSeq;
  };
  out << YAML::BeginMap;
  out << YAML::Key << "profile" << YAML::Value << c.profile;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "point_hidden_dim" << YAML::Value << c.model.point_hidden_dim;
  out << YAML::Key << "point_feature_dim" << YAML::Value << c.model.point_feature_dim;
  out << YAML::Key << "feature_dim" << YAML::Value << c.model.feature_dim;
  out << YAML::Key << "projection_dim" << YAML::Value << c.model.projection_dim;
  out << YAML::Key << "grid_height" << YAML::Value << c.model.grid_height;
  out << YAML::Key << "grid_width" << YAML::Value << c.model.grid_width;
  out << YAML::Key << "num_patches" << YAML::Value << c.model.num_patches;
  out << YAML::EndMap;
  out << YAML::Key << "augmentation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "flip_prob" << YAML::Value << c.augmentation.flip_prob;
  range("scale_range", c.augmentation.scale_range);
  range("rotation_deg", c.augmentation.rot_range_deg);
  out << YAML::Key << "rotation_prob" << YAML::Value << c.augmentation.rot_prob;
  out << YAML::Key << "point_drop_max" << YAML::Value << c.augmentation.drop_frac_max;
  range("coord_noise_sigma", c.augmentation.coord_noise_sigma_range);
  range("intensity_noise_sigma", c.augmentation.intensity_noise_sigma_range);
  out << YAML::Key << "cuboid_prob" << YAML::Value << c.augmentation.cuboid_prob;
  out << YAML::Key << "cuboid_min_area" << YAML::Value << c.augmentation.cuboid_min_area_frac;
  out << YAML::Key << "patch_drop_max" << YAML::Value << c.augmentation.patch_drop_max_frac;
  out << YAML::Key << "patch_drop_radius" << YAML::Value << c.augmentation.patch_drop_radius;
  out << YAML::EndMap;
  out << YAML::Key << "ground" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "ransac_iterations" << YAML::Value << c.ransac.iterations;
  out << YAML::Key << "inlier_tol" << YAML::Value << c.ransac.inlier_tol;
  out << YAML::Key << "background_margin" << YAML::Value << c.background_margin;
  out << YAML::EndMap;
  out << YAML::Key << "proposals" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "count" << YAML::Value << c.proposals.count;
  out << YAML::Key << "radius" << YAML::Value << c.proposals.radius;
  out << YAML::Key << "max_points" << YAML::Value << c.proposals.max_points;
  out << YAML::EndMap;
  out << YAML::Key << "patches" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "offset" << YAML::Value << c.patches.offset;
  out << YAML::Key << "radius" << YAML::Value << c.patches.radius;
  out << YAML::Key << "max_points" << YAML::Value << c.patches.max_points;
  out << YAML::EndMap;
  out << YAML::Key << "loss" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "proposal_weight" << YAML::Value << c.loss.proposal;
  out << YAML::Key << "p2p_weight" << YAML::Value << c.loss.p2p;
  out << YAML::Key << "rec_weight" << YAML::Value << c.loss.rec;
  out << YAML::Key << "temperature" << YAML::Value << c.loss.temperature;
  out << YAML::Key << "p2p_negative_pool" << YAML::Value << pool_name(c.p2p_negative_pool);
  out << YAML::EndMap;
  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "steps" << YAML::Value << c.train.steps;
  out << YAML::Key << "batch_scenes" << YAML::Value << c.train.batch_scenes;
  out << YAML::Key << "max_lr" << YAML::Value << c.train.max_lr;
  out << YAML::Key << "warmup_fraction" << YAML::Value << c.train.warmup_fraction;
  out << YAML::Key << "checkpoint_every" << YAML::Value << c.train.checkpoint_every;
  out << YAML::Key << "threads" << YAML::Value << c.train.threads;
  out << YAML::EndMap;
  out << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kmeans_k" << YAML::Value << c.eval.kmeans_k;
  out << YAML::Key << "kmeans_iters" << YAML::Value << c.eval.kmeans_iters;
  out << YAML::EndMap;
  out << YAML::Key << "synthetic" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "min_instances" << YAML::Value << c.synthetic.min_instances;
  out << YAML::Key << "max_instances" << YAML::Value << c.synthetic.max_instances;
  out << YAML::Key << "half_extent" << YAML::Value << c.synthetic.half_extent;
  out << YAML::Key << "ground_points" << YAML::Value << c.synthetic.ground_points;
  out << YAML::Key << "surface_density" << YAML::Value << c.synthetic.surface_density;
  out << YAML::Key << "noise_sigma" << YAML::Value << c.synthetic.noise_sigma;
  out << YAML::Key << "max_tilt_deg" << YAML::Value << c.synthetic.max_tilt_deg;
  out << YAML::Key << "separation" << YAML::Value << c.synthetic.separation;
  out << YAML::EndMap;
  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "scene_dir" << YAML::Value << c.scene_dir;
  out << YAML::Key << "output_dir" << YAML::Value << c.output_dir;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::uint64_t RunConfig::hash() const {
  RunConfig copy = *this;
  copy.scene_dir.clear();
  copy.output_dir.clear();
  copy.train.threads = 1;  // results do not depend on the worker count
  return hash_name(to_yaml(copy));
}

}  // namespace patchcontrast
