/*
 * Copyright 2026 The cdstl authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CDSTL_TENSOR_HPP
#define CDSTL_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cdstl {

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// Every op's backward is itself written in terms of these ops, so gradients
// can be recorded as graph nodes (grad_of with create_graph=true) and
// differentiated again. That is what lets the gradient-matching and
// trajectory-matching losses backpropagate through gradient computations
// into synthetic pixels.

using Shape = std::vector<int64_t>;

int64_t numel_of(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl;
struct Node;

// Thread-local graph recording switch.
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

struct GradModeGuard {
  explicit GradModeGuard(bool on);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double v);
  static Tensor from(Shape s, std::vector<double> v);
  static Tensor scalar(double v);
  static Tensor leaf(Shape s, std::vector<double> v, bool requires_grad);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  int64_t dim(int i) const;
  int64_t numel() const;
  double item() const;  // value of a 1-element tensor
  double at(int64_t flat_index) const;

  std::vector<double>& raw();  // leaf-only mutation (optimizer steps, clamping)
  const std::vector<double>& raw() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool v);

  Tensor grad() const;  // leaf gradient accumulator; undefined if never set
  void zero_grad();

  // Reverse pass from a scalar; accumulates into every reachable leaf's grad.
  // Repeated calls without zero_grad accumulate.
  void backward() const;

  Tensor detach() const;                        // constant copy, no graph
  Tensor clone_leaf(bool requires_grad) const;  // fresh leaf with copied data

  bool all_finite() const;

  std::shared_ptr<TensorImpl> impl_;
};

// Gradients of a scalar root w.r.t. arbitrary graph tensors. Does not touch
// leaf .grad accumulators. With create_graph=true the returned tensors are
// themselves recorded so they can be differentiated again. Tensors the root
// does not depend on get zero gradients.
std::vector<Tensor> grad_of(const Tensor& root, const std::vector<Tensor>& wrt,
                            bool create_graph);

// ---- elementwise (NumPy-style right-aligned broadcasting) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor div(const Tensor& a, double b);
Tensor div(double a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor pow_scalar(const Tensor& a, double p);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// ---- reductions / shape ----
Tensor sum(const Tensor& a);                                       // 0-dim
Tensor sum_axes(const Tensor& a, std::vector<int> axes, bool keepdim);
Tensor mean(const Tensor& a);                                      // 0-dim
Tensor mean_axes(const Tensor& a, std::vector<int> axes, bool keepdim);
Tensor reshape(const Tensor& a, Shape s);
Tensor broadcast_to(const Tensor& a, const Shape& s);
Tensor sum_to(const Tensor& a, const Shape& s);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n]
Tensor transpose2d(const Tensor& a);

// ---- indexing / layout ----
Tensor gather_rows(const Tensor& a, std::vector<int64_t> idx);   // axis 0
Tensor scatter_rows_add(const Tensor& g, std::vector<int64_t> idx, int64_t rows);
Tensor select_columns(const Tensor& a, std::vector<int64_t> idx);  // [B,K]->[B]
Tensor scatter_columns(const Tensor& g, std::vector<int64_t> idx, int64_t cols);
Tensor concat0(const std::vector<Tensor>& parts);                // 1-D concat
Tensor slice0(const Tensor& a, int64_t begin, int64_t len);      // 1-D slice
Tensor pad0(const Tensor& a, int64_t begin, int64_t total);      // 1-D zero-pad

// ---- convolution plumbing ----
struct ConvGeom {
  int64_t batch = 0, channels = 0, in_h = 0, in_w = 0;
  int kh = 0, kw = 0, stride = 1, pad = 0;
  int64_t out_h() const { return (in_h + 2 * pad - kh) / stride + 1; }
  int64_t out_w() const { return (in_w + 2 * pad - kw) / stride + 1; }
};

// im2col: [B,C,H,W] -> [C*kh*kw, B*OH*OW]; col2im is its exact adjoint.
Tensor im2col(const Tensor& x, const ConvGeom& g);
Tensor col2im(const Tensor& cols, const ConvGeom& g);
// [C, B*L] <-> [B,C,H,W] permutation pair (L = H*W)
Tensor cols_to_nchw(const Tensor& y, int64_t batch, int64_t channels, int64_t h, int64_t w);
Tensor nchw_to_cols(const Tensor& x);

Tensor avg_pool2(const Tensor& x);    // [B,C,H,W] -> [B,C,H/2,W/2]
Tensor avg_unpool2(const Tensor& x);  // adjoint of avg_pool2

// ---- composite layers ----
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
// w layout [Cin, Cout*k*k]; output [B,Cout,stride*(h-1)+k-2*pad, ...]
Tensor conv_transpose2(const Tensor& x, const Tensor& w, const Tensor& b, int k,
                       int stride, int pad);
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma,
                  const Tensor& beta, double eps);

// ---- losses / reductions over batches ----
// Row maxima as a constant (detached) [B,1] tensor, for softmax shifting.
Tensor row_max_detached(const Tensor& logits);
// Mean cross-entropy with max-shifted log-softmax. Labels must be in [0,K).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
Tensor log_softmax(const Tensor& logits);

Tensor dot(const Tensor& a, const Tensor& b);  // sum(a*b), any matching shape
Tensor sq_norm(const Tensor& a);               // sum(a*a)
Tensor norm(const Tensor& a);                  // sqrt(sum(a*a))

// argmax over axis 1 of [B,K] values (plain data helper, no graph)
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace cdstl

#endif  // CDSTL_TENSOR_HPP
