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
#include <cstdint>
#include <span>
#include <vector>

#include "patchcontrast/encoders.hpp"
#include "patchcontrast/params.hpp"

namespace patchcontrast {

// Batched single-head masked attention over groups of m tokens.
// tokens, positional: (G * m) x C. For group g the query is the positional
// encoding of slot mask_slots[g]; keys and values come from the other m - 1
// tokens. Returns the reconstructions, G x C. The masked token's content is
// never read.
Tensor masked_attention(const BoundParams& params, const Tensor& tokens, const Tensor& positional,
                        std::span<const std::size_t> mask_slots, std::size_t m);

// One group: tokens, positional m x C -> 1 x C.
Tensor masked_attention_reconstruct(const BoundParams& params, const Tensor& tokens, const Tensor& positional,
                                    std::size_t mask_index);

// Mean over rows of 1 - cos(u, u_hat), norms guarded by eps.
Tensor reconstruction_loss(const Tensor& u, const Tensor& u_hat, double eps = 1e-12);

std::vector<std::size_t> sample_mask_slots(std::size_t groups, std::size_t m, std::uint64_t seed);

// Masks one seeded slot per proposal per view and averages the
// reconstruction loss over all 2N' proposals.
Tensor refinement_loss_batch(const BoundParams& params, const EmbeddingSet& embeddings, std::uint64_t seed);

}  // namespace patchcontrast
