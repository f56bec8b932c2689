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
#include <string>
#include <vector>

#include "patchcontrast/config.hpp"
#include "patchcontrast/eval.hpp"

namespace patchcontrast {

struct GradSuiteEntry {
  std::string name;
  GradCheckReport report;
};

// Finite-difference check of every differentiable op and of the full
// weighted objective on a two-proposal toy scene. Inputs are drawn from
// `seed`.
std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed, double h = 1e-5);

// Tiny widths for the end-to-end check.
RunConfig toy_run_config();
SyntheticScene toy_scene(std::uint64_t seed);

}  // namespace patchcontrast
