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
#include <span>
#include <utility>
#include <vector>

#include "patchcontrast/tensor.hpp"

namespace patchcontrast {

struct LossWeights {
  double proposal = 1.0;  // lambda_1
  double p2p = 1.0;       // lambda_2
  double rec = 0.05;      // lambda_3
  double temperature = 0.1;

  void validate() const;
};

// Negative pool of the proposal-to-patch loss.
//  kMixed: every row of [P; P~] except the anchor (4N' - 1 terms).
//  kCross: the opposing set without the duplicate of the anchor's partner
//          view (2N' - 1 terms, the positive included).
enum class NegativePool { kMixed, kCross };

struct ContrastiveTerm {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::vector<unsigned char> pool;  // one flag per row; must include positive
};

// -log(exp(s_ap / tau) / sum_{k in pool} exp(s_ak / tau)) per term with
// cosine similarities, as a T x 1 column.
Tensor contrastive_terms(const Tensor& embeddings, std::span<const ContrastiveTerm> terms, double temperature);

// NT-Xent for one positive pair (i, j) over all rows k != i.
Tensor nt_xent(const Tensor& embeddings, std::size_t i, std::size_t j, double temperature);

// Rows 2k and 2k + 1 are the two views of pair slot k.
Tensor proposal_loss(const Tensor& proj_proposals, double temperature);

Tensor proposal_to_patch_loss(const Tensor& proj_proposals, const Tensor& proj_patches, double temperature,
                              NegativePool pool = NegativePool::kMixed);

// Weighted sum; terms with zero weight may be left invalid.
Tensor total_loss(const Tensor& proposal, const Tensor& p2p, const Tensor& rec, const LossWeights& w);

}  // namespace patchcontrast
