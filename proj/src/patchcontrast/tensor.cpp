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

#include "patchcontrast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "patchcontrast/errors.hpp"

namespace patchcontrast {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

std::size_t rows_of(const Shape& s) { return s.empty() ? 1 : s[0]; }

std::size_t cols_of(const Shape& s) {
  std::size_t c = 1;
  for (std::size_t i = 1; i < s.size(); ++i) c *= s[i];
  return c;
}

}  // namespace

TensorData::TensorData(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
}

TensorData TensorData::zeros(Shape s) {
  const std::size_t n = shape_size(s);
  return TensorData(std::move(s), std::vector<double>(n, 0.0));
}

std::size_t TensorData::rows() const { return rows_of(shape); }
std::size_t TensorData::cols() const { return cols_of(shape); }

// ---- Tensor --------------------------------------------------------------

const Shape& Tensor::shape() const { return graph_->shape(id_); }
std::span<const double> Tensor::values() const { return graph_->value(id_); }
std::span<const double> Tensor::grad() const { return graph_->grad(id_); }
bool Tensor::requires_grad() const { return graph_->requires_grad(id_); }
std::size_t Tensor::size() const { return graph_->value(id_).size(); }
std::size_t Tensor::rows() const { return rows_of(shape()); }
std::size_t Tensor::cols() const { return cols_of(shape()); }

double Tensor::item() const {
  if (size() != 1) throw ContractViolation("item() on tensor of shape " + shape_str(shape()));
  return values()[0];
}

TensorData Tensor::data() const {
  return TensorData(shape(), std::vector<double>(values().begin(), values().end()));
}

TensorData Tensor::grad_data() const {
  auto g = grad();
  if (g.empty()) return TensorData::zeros(shape());
  return TensorData(shape(), std::vector<double>(g.begin(), g.end()));
}

// ---- Graph ---------------------------------------------------------------

Tensor Graph::constant(TensorData data) {
  Node n;
  n.op = "constant";
  n.shape = std::move(data.shape);
  n.value = std::move(data.values);
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Graph::variable(TensorData data) {
  Tensor t = constant(std::move(data));
  nodes_.back().op = "variable";
  nodes_.back().requires_grad = true;
  return t;
}

Tensor Graph::record(const char* op, Shape shape, std::vector<double> value,
                     std::vector<std::size_t> inputs, BackwardFn backward) {
#ifndef NDEBUG
  for (double v : value) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
#endif
  Node n;
  n.op = op;
  n.shape = std::move(shape);
  n.value = std::move(value);
  for (std::size_t in : inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

double* Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad.data();
}

void Graph::backward(const Tensor& loss) {
  if (&loss.graph() != this) throw ContractViolation("backward: loss belongs to another graph");
  if (loss.size() != 1) {
    throw ContractViolation("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  for (Node& n : nodes_) n.grad.clear();
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && !n.grad.empty()) n.backward(*this, id);
  }
}

// ---- op helpers ----------------------------------------------------------

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.shape().size() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

Graph& same_graph(const Tensor& a, const Tensor& b) {
  if (&a.graph() != &b.graph()) throw ContractViolation("operands belong to different graphs");
  return a.graph();
}

template <class F>
Tensor unary(const char* op, const Tensor& x, F&& f, std::function<double(double, double)> dfdx) {
  Graph& g = x.graph();
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t xi = x.id();
  return g.record(op, x.shape(), std::move(out), {xi},
                  [xi, dfdx](Graph& gr, std::size_t self) {
                    double* gx = gr.grad_buffer(xi);
                    if (!gx) return;
                    const auto& go = gr.grad(self);
                    const auto& xv = gr.value(xi);
                    const auto& yv = gr.value(self);
                    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * dfdx(xv[i], yv[i]);
                  });
}

}  // namespace

// ---- elementwise ---------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  Graph& g = same_graph(a, b);
  require_same_shape("add", a, b);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return g.record("add", a.shape(), std::move(out), {ai, bi}, [ai, bi](Graph& gr, std::size_t self) {
    const auto& go = gr.grad(self);
    if (double* ga = gr.grad_buffer(ai)) for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    if (double* gb = gr.grad_buffer(bi)) for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Graph& g = same_graph(a, b);
  require_same_shape("sub", a, b);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return g.record("sub", a.shape(), std::move(out), {ai, bi}, [ai, bi](Graph& gr, std::size_t self) {
    const auto& go = gr.grad(self);
    if (double* ga = gr.grad_buffer(ai)) for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    if (double* gb = gr.grad_buffer(bi)) for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Graph& g = same_graph(a, b);
  require_same_shape("mul", a, b);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return g.record("mul", a.shape(), std::move(out), {ai, bi}, [ai, bi](Graph& gr, std::size_t self) {
    const auto& go = gr.grad(self);
    const auto& av = gr.value(ai);
    const auto& bv = gr.value(bi);
    if (double* ga = gr.grad_buffer(ai)) for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
    if (double* gb = gr.grad_buffer(bi)) for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
  });
}

Tensor scale(const Tensor& x, double s) { return affine(x, s, 0.0); }

Tensor affine(const Tensor& x, double s, double b) {
  return unary("affine", x, [s, b](double v) { return s * v + b; },
               [s](double, double) { return s; });
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

// ---- broadcasting --------------------------------------------------------

Tensor add_row(const Tensor& x, const Tensor& bias) {
  Graph& g = same_graph(x, bias);
  const std::size_t n = x.rows(), c = x.cols();
  if (bias.size() != c) {
    throw DimensionError("add_row: bias " + shape_str(bias.shape()) + " does not match rows of " +
                         shape_str(x.shape()));
  }
  auto xv = x.values();
  auto bv = bias.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = xv[r * c + j] + bv[j];
  const std::size_t xi = x.id(), bi = bias.id();
  return g.record("add_row", x.shape(), std::move(out), {xi, bi},
                  [xi, bi, n, c](Graph& gr, std::size_t self) {
                    const auto& go = gr.grad(self);
                    if (double* gx = gr.grad_buffer(xi))
                      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
                    if (double* gb = gr.grad_buffer(bi))
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t j = 0; j < c; ++j) gb[j] += go[r * c + j];
                  });
}

Tensor mul_col(const Tensor& x, const Tensor& w) {
  Graph& g = same_graph(x, w);
  const std::size_t n = x.rows(), c = x.cols();
  if (w.size() != n) {
    throw DimensionError("mul_col: weights " + shape_str(w.shape()) + " do not match " +
                         shape_str(x.shape()));
  }
  auto xv = x.values();
  auto wv = w.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = xv[r * c + j] * wv[r];
  const std::size_t xi = x.id(), wi = w.id();
  return g.record("mul_col", x.shape(), std::move(out), {xi, wi},
                  [xi, wi, n, c](Graph& gr, std::size_t self) {
                    const auto& go = gr.grad(self);
                    const auto& xv = gr.value(xi);
                    const auto& wv = gr.value(wi);
                    if (double* gx = gr.grad_buffer(xi))
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += go[r * c + j] * wv[r];
                    if (double* gw = gr.grad_buffer(wi))
                      for (std::size_t r = 0; r < n; ++r) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < c; ++j) s += go[r * c + j] * xv[r * c + j];
                        gw[r] += s;
                      }
                  });
}

// ---- reductions ----------------------------------------------------------

Tensor sum(const Tensor& x) {
  auto xv = x.values();
  double s = 0.0;
  for (double v : xv) s += v;
  const std::size_t xi = x.id();
  return x.graph().record("sum", {}, {s}, {xi}, [xi](Graph& gr, std::size_t self) {
    double* gx = gr.grad_buffer(xi);
    const double go = gr.grad(self)[0];
    for (std::size_t i = 0; i < gr.value(xi).size(); ++i) gx[i] += go;
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ContractViolation("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor row_sum(const Tensor& x) {
  const std::size_t n = x.rows(), c = x.cols();
  auto xv = x.values();
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r] += xv[r * c + j];
  const std::size_t xi = x.id();
  return x.graph().record("row_sum", {n, 1}, std::move(out), {xi}, [xi, n, c](Graph& gr, std::size_t self) {
    double* gx = gr.grad_buffer(xi);
    const auto& go = gr.grad(self);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += go[r];
  });
}

Tensor row_dot(const Tensor& a, const Tensor& b) {
  Graph& g = same_graph(a, b);
  require_same_shape("row_dot", a, b);
  const std::size_t n = a.rows(), c = a.cols();
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r] += av[r * c + j] * bv[r * c + j];
  const std::size_t ai = a.id(), bi = b.id();
  return g.record("row_dot", {n, 1}, std::move(out), {ai, bi}, [ai, bi, n, c](Graph& gr, std::size_t self) {
    const auto& go = gr.grad(self);
    const auto& av = gr.value(ai);
    const auto& bv = gr.value(bi);
    if (double* ga = gr.grad_buffer(ai))
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += go[r] * bv[r * c + j];
    if (double* gb = gr.grad_buffer(bi))
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j) gb[r * c + j] += go[r] * av[r * c + j];
  });
}

Tensor max_pool_rows(const Tensor& x) {
  std::vector<std::size_t> seg(x.rows(), 0);
  if (x.rows() == 0) throw ContractViolation("max_pool_rows over zero rows");
  return segment_max(x, seg, 1);
}

Tensor segment_max(const Tensor& x, std::span<const std::size_t> segment, std::size_t count) {
  const std::size_t n = x.rows(), c = x.cols();
  if (segment.size() != n) {
    throw DimensionError("segment_max: " + std::to_string(segment.size()) + " segment ids for " +
                         std::to_string(n) + " rows");
  }
  auto xv = x.values();
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> arg(count * c, kNone);
  std::vector<double> out(count * c, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t s = segment[r];
    if (s >= count) throw ArgumentError("segment_max: segment id out of range");
    for (std::size_t j = 0; j < c; ++j) {
      const double v = xv[r * c + j];
      std::size_t& a = arg[s * c + j];
      // strict comparison keeps the lowest index on ties
      if (a == kNone || v > out[s * c + j]) {
        a = r;
        out[s * c + j] = v;
      }
    }
  }
  const std::size_t xi = x.id();
  return x.graph().record("segment_max", {count, c}, std::move(out), {xi},
                          [xi, c, arg = std::move(arg)](Graph& gr, std::size_t self) {
                            double* gx = gr.grad_buffer(xi);
                            const auto& go = gr.grad(self);
                            for (std::size_t k = 0; k < arg.size(); ++k) {
                              if (arg[k] != kNone) gx[arg[k] * c + k % c] += go[k];
                            }
                          });
}

Tensor group_sum_rows(const Tensor& x, std::size_t group) {
  const std::size_t n = x.rows(), c = x.cols();
  if (group == 0 || n % group != 0) {
    throw DimensionError("group_sum_rows: " + std::to_string(n) + " rows not divisible by " +
                         std::to_string(group));
  }
  const std::size_t out_rows = n / group;
  auto xv = x.values();
  std::vector<double> out(out_rows * c, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) out[(r / group) * c + j] += xv[r * c + j];
  const std::size_t xi = x.id();
  return x.graph().record("group_sum_rows", {out_rows, c}, std::move(out), {xi},
                          [xi, n, c, group](Graph& gr, std::size_t self) {
                            double* gx = gr.grad_buffer(xi);
                            const auto& go = gr.grad(self);
                            for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += go[(r / group) * c + j];
                          });
}

// ---- structure -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Graph& g = same_graph(a, b);
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const double* av = a.values().data();
  const double* bv = b.values().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* __restrict brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const std::size_t ai = a.id(), bi = b.id();
  return g.record("matmul", {m, n}, std::move(out), {ai, bi}, [ai, bi, m, k, n](Graph& gr, std::size_t self) {
    const double* go = gr.grad(self).data();
    const double* av = gr.value(ai).data();
    const double* bv = gr.value(bi).data();
    if (double* ga = gr.grad_buffer(ai)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* __restrict grow = go + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* __restrict brow = bv + p * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga[i * k + p] += s;
        }
      }
    }
    if (double* gb = gr.grad_buffer(bi)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* __restrict grow = go + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          double* __restrict gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank2("transpose", x);
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) out[j * n + r] = xv[r * c + j];
  const std::size_t xi = x.id();
  return x.graph().record("transpose", {c, n}, std::move(out), {xi}, [xi, n, c](Graph& gr, std::size_t self) {
    double* gx = gr.grad_buffer(xi);
    const auto& go = gr.grad(self);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += go[j * n + r];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto xv = x.values();
  const std::size_t xi = x.id();
  return x.graph().record("reshape", std::move(shape), std::vector<double>(xv.begin(), xv.end()), {xi},
                          [xi](Graph& gr, std::size_t self) {
                            double* gx = gr.grad_buffer(xi);
                            const auto& go = gr.grad(self);
                            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
                          });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractViolation("concat_rows of zero tensors");
  Graph& g = parts[0].graph();
  const std::size_t c = parts[0].cols();
  std::size_t n = 0;
  std::vector<std::size_t> ids;
  std::vector<double> out;
  for (const Tensor& p : parts) {
    same_graph(parts[0], p);
    if (p.cols() != c) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    n += p.rows();
    ids.push_back(p.id());
    auto v = p.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return g.record("concat_rows", {n, c}, std::move(out), ids, [ids](Graph& gr, std::size_t self) {
    const auto& go = gr.grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t len = gr.value(id).size();
      if (double* gx = gr.grad_buffer(id))
        for (std::size_t i = 0; i < len; ++i) gx[i] += go[off + i];
      off += len;
    }
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  Graph& g = same_graph(a, b);
  const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols();
  if (b.rows() != n) {
    throw DimensionError("concat_cols: row mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t c = ca + cb;
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n * c);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(av.begin() + r * ca, ca, out.begin() + r * c);
    std::copy_n(bv.begin() + r * cb, cb, out.begin() + r * c + ca);
  }
  const std::size_t ai = a.id(), bi = b.id();
  return g.record("concat_cols", {n, c}, std::move(out), {ai, bi},
                  [ai, bi, n, ca, cb, c](Graph& gr, std::size_t self) {
                    const auto& go = gr.grad(self);
                    if (double* ga = gr.grad_buffer(ai))
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t j = 0; j < ca; ++j) ga[r * ca + j] += go[r * c + j];
                    if (double* gb = gr.grad_buffer(bi))
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t j = 0; j < cb; ++j) gb[r * cb + j] += go[r * c + ca + j];
                  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const std::size_t n = x.rows(), c = x.cols();
  auto xv = x.values();
  std::vector<double> out(rows.size() * c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw ArgumentError("gather_rows: row index out of range");
    std::copy_n(xv.begin() + rows[i] * c, c, out.begin() + i * c);
  }
  const std::size_t xi = x.id();
  Shape shape = x.shape();
  if (shape.empty()) shape = {1};
  shape[0] = rows.size();
  return x.graph().record("gather_rows", std::move(shape), std::move(out), {xi},
                          [xi, c, idx = std::vector<std::size_t>(rows.begin(), rows.end())](
                              Graph& gr, std::size_t self) {
                            double* gx = gr.grad_buffer(xi);
                            const auto& go = gr.grad(self);
                            for (std::size_t i = 0; i < idx.size(); ++i)
                              for (std::size_t j = 0; j < c; ++j) gx[idx[i] * c + j] += go[i * c + j];
                          });
}

Tensor pick(const Tensor& x, std::span<const std::pair<std::size_t, std::size_t>> at) {
  const std::size_t n = x.rows(), c = x.cols();
  auto xv = x.values();
  std::vector<double> out(at.size());
  std::vector<std::size_t> flat(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    if (at[i].first >= n || at[i].second >= c) throw ArgumentError("pick: index out of range");
    flat[i] = at[i].first * c + at[i].second;
    out[i] = xv[flat[i]];
  }
  const std::size_t xi = x.id();
  return x.graph().record("pick", {at.size(), 1}, std::move(out), {xi},
                          [xi, flat = std::move(flat)](Graph& gr, std::size_t self) {
                            double* gx = gr.grad_buffer(xi);
                            const auto& go = gr.grad(self);
                            for (std::size_t i = 0; i < flat.size(); ++i) gx[flat[i]] += go[i];
                          });
}

// ---- normalization -------------------------------------------------------

Tensor l2_normalize(const Tensor& x, double eps) {
  const std::size_t n = x.rows(), c = x.cols();
  auto xv = x.values();
  std::vector<double> out(xv.size());
  std::vector<double> denom(n);
  std::vector<unsigned char> clamped(n);
  for (std::size_t r = 0; r < n; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < c; ++j) ss += xv[r * c + j] * xv[r * c + j];
    const double norm = std::sqrt(ss);
    clamped[r] = norm < eps;
    denom[r] = clamped[r] ? eps : norm;
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = xv[r * c + j] / denom[r];
  }
  const std::size_t xi = x.id();
  return x.graph().record(
      "l2_normalize", x.shape(), std::move(out), {xi},
      [xi, n, c, denom = std::move(denom), clamped = std::move(clamped)](Graph& gr, std::size_t self) {
        double* gx = gr.grad_buffer(xi);
        const auto& go = gr.grad(self);
        const auto& y = gr.value(self);
        for (std::size_t r = 0; r < n; ++r) {
          if (clamped[r]) {
            for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += go[r * c + j] / denom[r];
            continue;
          }
          // d(x/|x|) = (g - y (y.g)) / |x|
          double yg = 0.0;
          for (std::size_t j = 0; j < c; ++j) yg += y[r * c + j] * go[r * c + j];
          for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += (go[r * c + j] - y[r * c + j] * yg) / denom[r];
        }
      });
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t n = x.rows(), c = x.cols();
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < n; ++r) {
    double mx = xv[r * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xv[r * c + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += out[r * c + j] = std::exp(xv[r * c + j] - mx);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] /= s;
  }
  const std::size_t xi = x.id();
  return x.graph().record("softmax_rows", x.shape(), std::move(out), {xi}, [xi, n, c](Graph& gr, std::size_t self) {
    double* gx = gr.grad_buffer(xi);
    const auto& go = gr.grad(self);
    const auto& y = gr.value(self);
    for (std::size_t r = 0; r < n; ++r) {
      double yg = 0.0;
      for (std::size_t j = 0; j < c; ++j) yg += y[r * c + j] * go[r * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += y[r * c + j] * (go[r * c + j] - yg);
    }
  });
}

Tensor masked_logsumexp_rows(const Tensor& x, std::span<const unsigned char> include) {
  const std::size_t n = x.rows(), c = x.cols();
  if (include.size() != n * c) throw DimensionError("masked_logsumexp_rows: mask size mismatch");
  auto xv = x.values();
  std::vector<double> out(n);
  std::vector<double> weights(n * c, 0.0);  // softmax over included entries
  for (std::size_t r = 0; r < n; ++r) {
    bool any = false;
    double mx = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (!include[r * c + j]) continue;
      mx = any ? std::max(mx, xv[r * c + j]) : xv[r * c + j];
      any = true;
    }
    if (!any) throw ContractViolation("masked_logsumexp_rows: row " + std::to_string(r) + " is fully masked");
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (include[r * c + j]) s += weights[r * c + j] = std::exp(xv[r * c + j] - mx);
    for (std::size_t j = 0; j < c; ++j) weights[r * c + j] /= s;
    out[r] = mx + std::log(s);
  }
  const std::size_t xi = x.id();
  return x.graph().record("masked_logsumexp_rows", {n, 1}, std::move(out), {xi},
                          [xi, n, c, weights = std::move(weights)](Graph& gr, std::size_t self) {
                            double* gx = gr.grad_buffer(xi);
                            const auto& go = gr.grad(self);
                            for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += go[r] * weights[r * c + j];
                          });
}

// ---- grid ops ------------------------------------------------------------

Tensor conv3x3(const Tensor& grid, const Tensor& weight, const Tensor& bias, bool skip_zero_cells) {
  Graph& g = same_graph(grid, weight);
  same_graph(grid, bias);
  if (grid.shape().size() != 3) throw DimensionError("conv3x3: grid must be HxWxC, got " + shape_str(grid.shape()));
  const std::size_t H = grid.shape()[0], W = grid.shape()[1], cin = grid.shape()[2];
  require_rank2("conv3x3", weight);
  if (weight.shape()[0] != 9 * cin) {
    throw DimensionError("conv3x3: weight " + shape_str(weight.shape()) + " incompatible with grid " +
                         shape_str(grid.shape()));
  }
  const std::size_t cout = weight.shape()[1];
  if (bias.size() != cout) throw DimensionError("conv3x3: bias " + shape_str(bias.shape()) + " vs " + std::to_string(cout));

  const double* x = grid.values().data();
  const double* w = weight.values().data();
  auto bv = bias.values();

  // cells that contribute
  std::vector<std::size_t> active;
  active.reserve(H * W);
  for (std::size_t cell = 0; cell < H * W; ++cell) {
    bool nonzero = !skip_zero_cells;
    for (std::size_t j = 0; j < cin && !nonzero; ++j) nonzero = x[cell * cin + j] != 0.0;
    if (nonzero) active.push_back(cell);
  }

  std::vector<double> out(H * W * cout);
  for (std::size_t cell = 0; cell < H * W; ++cell) std::copy(bv.begin(), bv.end(), out.begin() + cell * cout);
  // Scatter form: each input cell adds into its 3x3 output neighbourhood.
  // Output (r, c) reads input (r + dr, c + dc) through tap (dr, dc).
  for (std::size_t cell : active) {
    const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(cell / W), c = static_cast<std::ptrdiff_t>(cell % W);
    const double* xin = x + cell * cin;
    for (int dr = -1; dr <= 1; ++dr) {
      const std::ptrdiff_t orow = r - dr;
      if (orow < 0 || orow >= static_cast<std::ptrdiff_t>(H)) continue;
      for (int dc = -1; dc <= 1; ++dc) {
        const std::ptrdiff_t ocol = c - dc;
        if (ocol < 0 || ocol >= static_cast<std::ptrdiff_t>(W)) continue;
        const std::size_t tap = static_cast<std::size_t>((dr + 1) * 3 + (dc + 1));
        double* __restrict o = out.data() + (static_cast<std::size_t>(orow) * W + static_cast<std::size_t>(ocol)) * cout;
        const double* wt = w + tap * cin * cout;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double xv = xin[ci];
          if (xv == 0.0) continue;
          const double* __restrict wrow = wt + ci * cout;
          for (std::size_t co = 0; co < cout; ++co) o[co] += xv * wrow[co];
        }
      }
    }
  }

  const std::size_t gi = grid.id(), wi = weight.id(), bi = bias.id();
  return g.record(
      "conv3x3", {H, W, cout}, std::move(out), {gi, wi, bi},
      [gi, wi, bi, H, W, cin, cout, active = std::move(active)](Graph& gr, std::size_t self) {
        const double* go = gr.grad(self).data();
        const double* x = gr.value(gi).data();
        const double* w = gr.value(wi).data();
        double* gx = gr.grad_buffer(gi);
        double* gw = gr.grad_buffer(wi);
        if (double* gb = gr.grad_buffer(bi)) {
          for (std::size_t cell = 0; cell < H * W; ++cell)
            for (std::size_t co = 0; co < cout; ++co) gb[co] += go[cell * cout + co];
        }
        for (std::size_t cell : active) {
          const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(cell / W), c = static_cast<std::ptrdiff_t>(cell % W);
          const double* xin = x + cell * cin;
          for (int dr = -1; dr <= 1; ++dr) {
            const std::ptrdiff_t orow = r - dr;
            if (orow < 0 || orow >= static_cast<std::ptrdiff_t>(H)) continue;
            for (int dc = -1; dc <= 1; ++dc) {
              const std::ptrdiff_t ocol = c - dc;
              if (ocol < 0 || ocol >= static_cast<std::ptrdiff_t>(W)) continue;
              const std::size_t tap = static_cast<std::size_t>((dr + 1) * 3 + (dc + 1));
              const double* __restrict g =
                  go + (static_cast<std::size_t>(orow) * W + static_cast<std::size_t>(ocol)) * cout;
              const double* wt = w + tap * cin * cout;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                if (gx) {
                  const double* __restrict wrow = wt + ci * cout;
                  double s = 0.0;
                  for (std::size_t co = 0; co < cout; ++co) s += wrow[co] * g[co];
                  gx[cell * cin + ci] += s;
                }
                if (gw) {
                  const double xv = xin[ci];
                  if (xv == 0.0) continue;
                  double* __restrict gwrow = gw + (tap * cin + ci) * cout;
                  for (std::size_t co = 0; co < cout; ++co) gwrow[co] += xv * g[co];
                }
              }
            }
          }
        }
      });
}

namespace {

struct BilinearTap {
  std::size_t cell[4];
  double weight[4];
};

BilinearTap bilinear_taps(GridPoint p, std::size_t H, std::size_t W) {
  const double r = std::clamp(p.row, 0.0, static_cast<double>(H - 1));
  const double c = std::clamp(p.col, 0.0, static_cast<double>(W - 1));
  const std::size_t r0 = std::min(static_cast<std::size_t>(std::floor(r)), H - 1);
  const std::size_t c0 = std::min(static_cast<std::size_t>(std::floor(c)), W - 1);
  const std::size_t r1 = std::min(r0 + 1, H - 1);
  const std::size_t c1 = std::min(c0 + 1, W - 1);
  const double fr = r - static_cast<double>(r0);
  const double fc = c - static_cast<double>(c0);
  return {{r0 * W + c0, r0 * W + c1, r1 * W + c0, r1 * W + c1},
          {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc}};
}

}  // namespace

Tensor bilinear_sample(const Tensor& grid, std::span<const GridPoint> at) {
  if (grid.shape().size() != 3) throw DimensionError("bilinear_sample: grid must be HxWxC, got " + shape_str(grid.shape()));
  const std::size_t H = grid.shape()[0], W = grid.shape()[1], C = grid.shape()[2];
  if (H == 0 || W == 0) throw DimensionError("bilinear_sample: empty grid");
  const double* x = grid.values().data();
  std::vector<BilinearTap> taps(at.size());
  std::vector<double> out(at.size() * C, 0.0);
  for (std::size_t i = 0; i < at.size(); ++i) {
    taps[i] = bilinear_taps(at[i], H, W);
    for (int t = 0; t < 4; ++t) {
      const double wt = taps[i].weight[t];
      if (wt == 0.0) continue;
      const double* cellv = x + taps[i].cell[t] * C;
      for (std::size_t j = 0; j < C; ++j) out[i * C + j] += wt * cellv[j];
    }
  }
  const std::size_t gi = grid.id();
  return grid.graph().record("bilinear_sample", {at.size(), C}, std::move(out), {gi},
                             [gi, C, taps = std::move(taps)](Graph& gr, std::size_t self) {
                               double* gx = gr.grad_buffer(gi);
                               const auto& go = gr.grad(self);
                               for (std::size_t i = 0; i < taps.size(); ++i)
                                 for (int t = 0; t < 4; ++t) {
                                   const double wt = taps[i].weight[t];
                                   if (wt == 0.0) continue;
                                   double* cellg = gx + taps[i].cell[t] * C;
                                   for (std::size_t j = 0; j < C; ++j) cellg[j] += wt * go[i * C + j];
                                 }
                             });
}

// ---- gradient checking ---------------------------------------------------

GradCheckReport grad_check(const ScalarFn& f, std::span<const TensorData> inputs, double h) {
  std::vector<TensorData> analytic;
  double value = 0.0;
  {
    Graph g;
    std::vector<Tensor> leaves;
    for (const TensorData& in : inputs) leaves.push_back(g.variable(in));
    Tensor out = f(g, leaves);
    g.backward(out);
    value = out.item();
    for (const Tensor& leaf : leaves) analytic.push_back(leaf.grad_data());
  }
  auto evaluate = [&](std::size_t which, std::size_t index, double delta) {
    Graph g;
    std::vector<Tensor> leaves;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      TensorData d = inputs[i];
      if (i == which) d.values[index] += delta;
      leaves.push_back(g.constant(std::move(d)));
    }
    return f(g, leaves).item();
  };
  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double numeric = (evaluate(i, k, h) - evaluate(i, k, -h)) / (2.0 * h);
      const double a = analytic[i].values[k];
      const double err = std::abs(a - numeric) / std::max(std::abs(a), 1e-8);
      if (err > report.max_rel_error || (i == 0 && k == 0)) {
        report = {err, i, k, a, numeric, value};
      }
    }
  }
  return report;
}

double grad_check(const std::function<Tensor(Graph&, const Tensor&)>& f, const TensorData& x, double h) {
  ScalarFn wrapped = [&f](Graph& g, std::span<const Tensor> xs) { return f(g, xs[0]); };
  return grad_check(wrapped, std::span<const TensorData>(&x, 1), h).max_rel_error;
}

}  // namespace patchcontrast
