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

// Minimal reverse-mode differentiation engine. A Graph is a dynamic tape:
// every op appends a node holding its forward value and a closure that
// accumulates input gradients. Tensor is a lightweight handle into a Graph.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace patchcontrast {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Host-side values detached from any graph: parameters, file contents,
// oracle inputs.
struct TensorData {
  Shape shape;
  std::vector<double> values;

  TensorData() = default;
  TensorData(Shape s, std::vector<double> v);
  static TensorData zeros(Shape s);
  static TensorData scalar(double v) { return TensorData({}, {v}); }

  std::size_t size() const { return values.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  friend bool operator==(const TensorData&, const TensorData&) = default;
};

class Graph;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }

  const Shape& shape() const;
  std::span<const double> values() const;
  // Empty until backward() reached this node.
  std::span<const double> grad() const;
  bool requires_grad() const;

  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;
  double item() const;
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }
  TensorData data() const;
  TensorData grad_data() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Tensor constant(TensorData data);
  Tensor variable(TensorData data);

  // Populates grad of every node that the loss depends on. Visits nodes
  // once each in reverse recording order.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }

  // Op authoring. `backward` is dropped when no input requires grad.
  Tensor record(const char* op, Shape shape, std::vector<double> value,
                std::vector<std::size_t> inputs, BackwardFn backward);

  const Shape& shape(std::size_t id) const { return nodes_[id].shape; }
  const std::vector<double>& value(std::size_t id) const { return nodes_[id].value; }
  const std::vector<double>& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const char* op(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  // Zero-initialized on first access; nullptr when the node needs no grad.
  double* grad_buffer(std::size_t id);

 private:
  struct Node {
    const char* op = "";
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Continuous grid position in cell units: (0,0) is the center of cell
// (row 0, col 0).
struct GridPoint {
  double row = 0.0;
  double col = 0.0;
};

// ---- elementwise ---------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
// s * x + b
Tensor affine(const Tensor& x, double s, double b);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);

// ---- broadcasting (row-wise patterns only) -------------------------------
// x: n x c, bias: c values (any shape).
Tensor add_row(const Tensor& x, const Tensor& bias);
// x: n x c, w: n x 1. Row r of x scaled by w[r].
Tensor mul_col(const Tensor& x, const Tensor& w);

// ---- reductions ----------------------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// n x c -> n x 1
Tensor row_sum(const Tensor& x);
// n x c, n x c -> n x 1
Tensor row_dot(const Tensor& a, const Tensor& b);
// Column-wise max over rows, n x c -> 1 x c. Gradient goes to the argmax
// row; ties resolve to the lowest row index.
Tensor max_pool_rows(const Tensor& x);
// Max over rows sharing a segment id, n x c -> count x c. Empty segments
// produce zeros. Same argmax rule as max_pool_rows.
Tensor segment_max(const Tensor& x, std::span<const std::size_t> segment, std::size_t count);
// Sums consecutive blocks of `group` rows: n x c -> (n / group) x c.
Tensor group_sum_rows(const Tensor& x, std::size_t group);

// ---- structure -----------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// Selects elements (row, col) into a k x 1 column.
Tensor pick(const Tensor& x, std::span<const std::pair<std::size_t, std::size_t>> at);

// ---- normalization -------------------------------------------------------
// Each row divided by max(||row||, eps).
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);
// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& x);
// log(sum_j mask[r, j] * exp(x[r, j])) per row, n x m -> n x 1. Every row
// must include at least one entry.
Tensor masked_logsumexp_rows(const Tensor& x, std::span<const unsigned char> include);

// ---- grid ops ------------------------------------------------------------
// 3x3 same-padded convolution. grid: H x W x Cin, weight: (9 * Cin) x Cout
// with tap-major rows (tap = (dr + 1) * 3 + (dc + 1)), bias: Cout values.
// With skip_zero_cells, all-zero input cells are treated as constant
// (no contribution, no input gradient). Only valid when such cells carry
// no upstream gradient, e.g. empty cells of a scatter.
Tensor conv3x3(const Tensor& grid, const Tensor& weight, const Tensor& bias,
               bool skip_zero_cells = false);
// Bilinear interpolation between cell centers, positions clamped to the
// grid. grid: H x W x C -> n x C.
Tensor bilinear_sample(const Tensor& grid, std::span<const GridPoint> at);

// ---- gradient checking ---------------------------------------------------
using ScalarFn = std::function<Tensor(Graph&, std::span<const Tensor>)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t input = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double value = 0.0;  // f at the unperturbed inputs
};

// Compares reverse-mode gradients against central differences:
// max over coordinates of |analytic - numeric| / max(|analytic|, 1e-8).
GradCheckReport grad_check(const ScalarFn& f, std::span<const TensorData> inputs, double h = 1e-5);
double grad_check(const std::function<Tensor(Graph&, const Tensor&)>& f, const TensorData& x,
                  double h = 1e-5);

}  // namespace patchcontrast
