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

#include "patchcontrast/attention.hpp"

#include <cmath>

#include "patchcontrast/errors.hpp"
#include "patchcontrast/rng.hpp"

namespace patchcontrast {

Tensor masked_attention(const BoundParams& params, const Tensor& tokens, const Tensor& positional,
                        std::span<const std::size_t> mask_slots, std::size_t m) {
  if (m < 2) throw ContractViolation("masked attention needs at least 2 tokens per group, got " + std::to_string(m));
  if (tokens.shape() != positional.shape()) {
    throw DimensionError("masked attention: tokens " + shape_str(tokens.shape()) + " vs positional " +
                         shape_str(positional.shape()));
  }
  const std::size_t groups = mask_slots.size();
  if (tokens.rows() != groups * m) throw DimensionError("masked attention: token rows do not match group count");
  const std::size_t c = tokens.cols();
  const std::size_t visible = m - 1;

  std::vector<std::size_t> query_rows(groups), key_rows, repeat;
  key_rows.reserve(groups * visible);
  repeat.reserve(groups * visible);
  for (std::size_t g = 0; g < groups; ++g) {
    if (mask_slots[g] >= m) throw ContractViolation("masked attention: mask index out of range");
    query_rows[g] = g * m + mask_slots[g];
    for (std::size_t j = 0; j < m; ++j) {
      if (j == mask_slots[g]) continue;
      key_rows.push_back(g * m + j);
      repeat.push_back(g);
    }
  }

  Tensor q = matmul(gather_rows(positional, query_rows), param(params, "attention.query"));
  Tensor visible_tokens = gather_rows(tokens, key_rows);
  Tensor k = matmul(visible_tokens, param(params, "attention.key"));
  Tensor v = matmul(visible_tokens, param(params, "attention.value"));

  Tensor scores = scale(row_dot(gather_rows(q, repeat), k), 1.0 / std::sqrt(static_cast<double>(c)));
  Tensor weights = softmax_rows(reshape(scores, {groups, visible}));
  Tensor mixed = group_sum_rows(mul_col(v, reshape(weights, {groups * visible, 1})), visible);
  return matmul(mixed, param(params, "attention.output"));
}

Tensor masked_attention_reconstruct(const BoundParams& params, const Tensor& tokens, const Tensor& positional,
                                    std::size_t mask_index) {
  const std::size_t slots[1] = {mask_index};
  return masked_attention(params, tokens, positional, slots, tokens.rows());
}

Tensor reconstruction_loss(const Tensor& u, const Tensor& u_hat, double eps) {
  Tensor cos = row_dot(l2_normalize(u, eps), l2_normalize(u_hat, eps));
  return affine(mean(cos), -1.0, 1.0);
}

std::vector<std::size_t> sample_mask_slots(std::size_t groups, std::size_t m, std::uint64_t seed) {
  CounterRng rng(seed, "mask_slot");
  std::vector<std::size_t> slots(groups);
  for (auto& s : slots) s = rng.below(m);
  return slots;
}

Tensor refinement_loss_batch(const BoundParams& params, const EmbeddingSet& emb, std::uint64_t seed) {
  if (!emb.has_patches()) throw ContractViolation("refinement loss requires patch embeddings");
  const std::size_t m = emb.num_patches;
  const std::size_t groups = 2 * emb.num_pairs;
  const auto slots = sample_mask_slots(groups, m, seed);
  Tensor tokens = add(emb.positional, emb.patches);
  Tensor u_hat = masked_attention(params, tokens, emb.positional, slots, m);
  std::vector<std::size_t> target_rows(groups);
  for (std::size_t g = 0; g < groups; ++g) target_rows[g] = g * m + slots[g];
  return reconstruction_loss(gather_rows(tokens, target_rows), u_hat);
}

}  // namespace patchcontrast
