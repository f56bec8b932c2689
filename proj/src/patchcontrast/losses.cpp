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

#include "patchcontrast/losses.hpp"

#include "patchcontrast/errors.hpp"

namespace patchcontrast {

void LossWeights::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("loss.temperature must be positive");
  if (proposal < 0.0 || p2p < 0.0 || rec < 0.0) throw ConfigError("loss weights must be nonnegative");
}

Tensor contrastive_terms(const Tensor& embeddings, std::span<const ContrastiveTerm> terms, double temperature) {
  const std::size_t rows = embeddings.rows();
  std::vector<std::size_t> anchors(terms.size());
  std::vector<unsigned char> mask;
  mask.reserve(terms.size() * rows);
  std::vector<std::pair<std::size_t, std::size_t>> positives(terms.size());
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const ContrastiveTerm& term = terms[t];
    if (term.pool.size() != rows || term.anchor >= rows || term.positive >= rows) {
      throw ContractViolation("contrastive term does not match the embedding rows");
    }
    if (!term.pool[term.positive]) throw ContractViolation("contrastive pool must contain the positive");
    anchors[t] = term.anchor;
    positives[t] = {t, term.positive};
    mask.insert(mask.end(), term.pool.begin(), term.pool.end());
  }
  Tensor z = l2_normalize(embeddings);
  Tensor logits = scale(matmul(gather_rows(z, anchors), transpose(z)), 1.0 / temperature);
  return sub(masked_logsumexp_rows(logits, mask), pick(logits, positives));
}

Tensor nt_xent(const Tensor& embeddings, std::size_t i, std::size_t j, double temperature) {
  const std::size_t rows = embeddings.rows();
  if (rows < 2) throw ContractViolation("nt_xent needs at least 2 rows");
  if (i == j) throw ContractViolation("nt_xent: anchor and positive must differ");
  ContrastiveTerm term{i, j, std::vector<unsigned char>(rows, 1)};
  term.pool[i] = 0;
  return sum(contrastive_terms(embeddings, std::span<const ContrastiveTerm>(&term, 1), temperature));
}

Tensor proposal_loss(const Tensor& proj, double temperature) {
  const std::size_t rows = proj.rows();
  if (rows < 2 || rows % 2 != 0) {
    throw ContractViolation("proposal loss needs an even number of rows, got " + std::to_string(rows));
  }
  std::vector<ContrastiveTerm> terms(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    terms[i].anchor = i;
    terms[i].positive = i ^ 1;
    terms[i].pool.assign(rows, 1);
    terms[i].pool[i] = 0;
  }
  // (1 / 2N') * sum over the 2N' directed terms
  return mean(contrastive_terms(proj, terms, temperature));
}

Tensor proposal_to_patch_loss(const Tensor& proj_p, const Tensor& proj_pt, double temperature, NegativePool pool) {
  if (proj_p.shape() != proj_pt.shape()) {
    throw ContractViolation("proposal-to-patch loss: shapes " + shape_str(proj_p.shape()) + " and " +
                            shape_str(proj_pt.shape()) + " differ");
  }
  const std::size_t n = proj_p.rows();  // 2N'
  if (n < 2 || n % 2 != 0) throw ContractViolation("proposal-to-patch loss needs an even number of rows");
  const Tensor parts[2] = {proj_p, proj_pt};
  Tensor all = concat_rows(parts);
  std::vector<ContrastiveTerm> terms;
  terms.reserve(2 * n);
  for (int side = 0; side < 2; ++side) {
    for (std::size_t k = 0; k < n; ++k) {
      ContrastiveTerm t;
      const std::size_t own = side == 0 ? 0 : n;
      const std::size_t other = side == 0 ? n : 0;
      t.anchor = own + k;
      t.positive = other + k;
      if (pool == NegativePool::kMixed) {
        t.pool.assign(2 * n, 1);
        t.pool[t.anchor] = 0;
      } else {
        t.pool.assign(2 * n, 0);
        for (std::size_t j = 0; j < n; ++j) t.pool[other + j] = j != (k ^ 1);
      }
      terms.push_back(std::move(t));
    }
  }
  // (1 / 4N') * sum over the 4N' directed terms
  return mean(contrastive_terms(all, terms, temperature));
}

Tensor total_loss(const Tensor& proposal, const Tensor& p2p, const Tensor& rec, const LossWeights& w) {
  Tensor total;
  auto accumulate = [&total](const Tensor& term, double weight, const char* name) {
    if (weight == 0.0) return;
    if (!term.valid()) throw ContractViolation(std::string("total_loss: missing ") + name + " term");
    Tensor scaled = weight == 1.0 ? term : scale(term, weight);
    total = total.valid() ? add(total, scaled) : scaled;
  };
  accumulate(proposal, w.proposal, "proposal");
  accumulate(p2p, w.p2p, "proposal-to-patch");
  accumulate(rec, w.rec, "reconstruction");
  if (!total.valid()) {
    if (!proposal.valid()) throw ContractViolation("total_loss: all weights are zero and no term given");
    total = scale(proposal, 0.0);
  }
  return total;
}

}  // namespace patchcontrast
