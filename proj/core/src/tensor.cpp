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

#include "cdstl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cdstl/errors.hpp"

namespace cdstl {

int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

GradModeGuard::GradModeGuard(bool on) : prev_(g_grad_enabled) { g_grad_enabled = on; }
GradModeGuard::~GradModeGuard() { g_grad_enabled = prev_; }

// Backward fn: given the output cotangent and which inputs need gradients,
// return per-input cotangents (undefined Tensor for inputs not needed).
using BackFn = std::function<std::vector<Tensor>(const Tensor&, const std::vector<char>&)>;

struct Node {
  std::vector<Tensor> inputs;
  BackFn fn;
  const char* name = "";
  TensorImpl* out = nullptr;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
  std::shared_ptr<TensorImpl> grad;
};

// ---- Tensor basics ---------------------------------------------------------

static std::shared_ptr<TensorImpl> make_impl(Shape s, std::vector<double> v) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(s);
  impl->data = std::move(v);
  return impl;
}

Tensor Tensor::zeros(Shape s) {
  auto n = numel_of(s);
  Tensor t;
  t.impl_ = make_impl(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
  return t;
}

Tensor Tensor::full(Shape s, double v) {
  auto n = numel_of(s);
  Tensor t;
  t.impl_ = make_impl(std::move(s), std::vector<double>(static_cast<size_t>(n), v));
  return t;
}

Tensor Tensor::from(Shape s, std::vector<double> v) {
  if (numel_of(s) != static_cast<int64_t>(v.size()))
    throw usage_error("Tensor::from: shape " + shape_str(s) + " does not match " +
                      std::to_string(v.size()) + " values");
  Tensor t;
  t.impl_ = make_impl(std::move(s), std::move(v));
  return t;
}

Tensor Tensor::scalar(double v) { return from({}, {v}); }

Tensor Tensor::leaf(Shape s, std::vector<double> v, bool requires_grad) {
  Tensor t = from(std::move(s), std::move(v));
  t.impl_->requires_grad = requires_grad;
  return t;
}

const Shape& Tensor::shape() const {
  if (!impl_) throw usage_error("shape() on undefined tensor");
  return impl_->shape;
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

int64_t Tensor::dim(int i) const { return shape().at(static_cast<size_t>(i)); }

int64_t Tensor::numel() const { return numel_of(shape()); }

double Tensor::item() const {
  if (numel() != 1) throw usage_error("item() requires a 1-element tensor");
  return impl_->data[0];
}

double Tensor::at(int64_t flat_index) const { return impl_->data.at(static_cast<size_t>(flat_index)); }

std::vector<double>& Tensor::raw() {
  if (!impl_) throw usage_error("raw() on undefined tensor");
  return impl_->data;
}

const std::vector<double>& Tensor::raw() const {
  if (!impl_) throw usage_error("raw() on undefined tensor");
  return impl_->data;
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
  if (!impl_) throw usage_error("set_requires_grad on undefined tensor");
  if (v && impl_->grad_fn)
    throw usage_error("set_requires_grad: only leaf tensors may be toggled");
  impl_->requires_grad = v;
  return *this;
}

Tensor Tensor::grad() const {
  Tensor g;
  if (impl_) g.impl_ = impl_->grad;
  return g;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.reset();
}

Tensor Tensor::detach() const {
  if (!impl_) return Tensor();
  Tensor t;
  t.impl_ = make_impl(impl_->shape, impl_->data);
  return t;
}

Tensor Tensor::clone_leaf(bool requires_grad) const {
  Tensor t = detach();
  t.impl_->requires_grad = requires_grad;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : impl_->data)
    if (!std::isfinite(v)) return false;
  return true;
}

// ---- graph construction ----------------------------------------------------

static Tensor make_result(Shape shape, std::vector<double> data,
                          std::vector<Tensor> inputs, BackFn fn, const char* name) {
  Tensor out;
  out.impl_ = make_impl(std::move(shape), std::move(data));
  if (g_grad_enabled) {
    bool needs = false;
    for (const auto& t : inputs)
      if (t.defined() && t.requires_grad()) {
        needs = true;
        break;
      }
    if (needs) {
      auto node = std::make_shared<Node>();
      node->inputs = std::move(inputs);
      node->fn = std::move(fn);
      node->name = name;
      node->out = out.impl_.get();
      out.impl_->grad_fn = std::move(node);
      out.impl_->requires_grad = true;
    }
  }
  return out;
}

// ---- backward engine -------------------------------------------------------

namespace {

void topo_collect(TensorImpl* root, std::vector<Node*>& order) {
  // Iterative post-order over grad_fn edges; inputs appear before their node.
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    size_t next_child;
  };
  std::vector<Frame> stack;
  if (!root->grad_fn) return;
  if (!visited.insert(root->grad_fn.get()).second) return;
  stack.push_back({root->grad_fn.get(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_child < f.node->inputs.size()) {
      const Tensor& in = f.node->inputs[f.next_child++];
      if (in.defined() && in.impl_->grad_fn) {
        Node* child = in.impl_->grad_fn.get();
        if (visited.insert(child).second) stack.push_back({child, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
}

std::unordered_map<TensorImpl*, Tensor> run_backward(const Tensor& root,
                                                     bool create_graph,
                                                     bool accumulate_leaves) {
  if (!root.defined() || root.numel() != 1)
    throw usage_error("backward requires a scalar (1-element) tensor");

  std::unordered_map<TensorImpl*, Tensor> cot;
  cot[root.impl_.get()] = Tensor::full(root.shape(), 1.0);

  std::vector<Node*> order;
  topo_collect(root.impl_.get(), order);

  {
    GradModeGuard gm(create_graph);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      auto found = cot.find(node->out);
      if (found == cot.end()) continue;
      Tensor g = found->second;

      std::vector<char> need(node->inputs.size(), 0);
      for (size_t i = 0; i < node->inputs.size(); ++i)
        need[i] = node->inputs[i].defined() && node->inputs[i].requires_grad();

      std::vector<Tensor> grads = node->fn(g, need);
      for (size_t i = 0; i < node->inputs.size(); ++i) {
        if (!need[i] || !grads[i].defined()) continue;
        TensorImpl* target = node->inputs[i].impl_.get();
        auto slot = cot.find(target);
        if (slot == cot.end())
          cot.emplace(target, grads[i]);
        else
          slot->second = add(slot->second, grads[i]);
      }
    }
  }

  if (accumulate_leaves) {
    for (auto& [impl, g] : cot) {
      if (!impl->requires_grad || impl->grad_fn) continue;
      if (!impl->grad)
        impl->grad = make_impl(impl->shape,
                               std::vector<double>(impl->data.size(), 0.0));
      auto& acc = impl->grad->data;
      const auto& gd = g.raw();
      for (size_t i = 0; i < acc.size(); ++i) acc[i] += gd[i];
    }
  }
  return cot;
}

}  // namespace

void Tensor::backward() const { run_backward(*this, /*create_graph=*/false, true); }

std::vector<Tensor> grad_of(const Tensor& root, const std::vector<Tensor>& wrt,
                            bool create_graph) {
  auto cot = run_backward(root, create_graph, /*accumulate_leaves=*/false);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& t : wrt) {
    auto it = cot.find(t.impl_.get());
    if (it != cot.end())
      out.push_back(it->second);
    else
      out.push_back(Tensor::zeros(t.shape()));
  }
  return out;
}

// ---- broadcasting helpers --------------------------------------------------

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t ra = a.size(), rb = b.size(), r = std::max(ra, rb);
  Shape out(r);
  for (size_t i = 0; i < r; ++i) {
    int64_t da = i < r - ra ? 1 : a[i - (r - ra)];
    int64_t db = i < r - rb ? 1 : b[i - (r - rb)];
    if (da != db && da != 1 && db != 1)
      throw usage_error("broadcast mismatch: " + shape_str(a) + " vs " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

// Strides of `in` viewed in the (right-aligned) broadcast frame of `out`;
// broadcast dimensions get stride 0.
std::vector<int64_t> bcast_strides(const Shape& in, const Shape& out) {
  auto st = strides_of(in);
  std::vector<int64_t> r(out.size(), 0);
  size_t off = out.size() - in.size();
  for (size_t i = 0; i < in.size(); ++i) r[off + i] = in[i] == 1 ? 0 : st[i];
  return r;
}

template <class F>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, F f,
                          std::vector<Tensor> inputs, BackFn bfn, const char* name) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) {
    const auto& da = a.raw();
    const auto& db = b.raw();
    std::vector<double> out(da.size());
    for (size_t i = 0; i < da.size(); ++i) out[i] = f(da[i], db[i]);
    return make_result(sa, std::move(out), std::move(inputs), std::move(bfn), name);
  }
  Shape so = broadcast_shape(sa, sb);
  auto stra = bcast_strides(sa, so);
  auto strb = bcast_strides(sb, so);
  int64_t n = numel_of(so);
  std::vector<double> out(static_cast<size_t>(n));
  const auto& da = a.raw();
  const auto& db = b.raw();
  size_t r = so.size();
  std::vector<int64_t> idx(r, 0);
  int64_t offa = 0, offb = 0;
  for (int64_t lin = 0; lin < n; ++lin) {
    out[static_cast<size_t>(lin)] = f(da[static_cast<size_t>(offa)], db[static_cast<size_t>(offb)]);
    // odometer increment
    for (size_t d = r; d-- > 0;) {
      idx[d]++;
      offa += stra[d];
      offb += strb[d];
      if (idx[d] < so[d]) break;
      offa -= stra[d] * so[d];
      offb -= strb[d] * so[d];
      idx[d] = 0;
    }
  }
  return make_result(std::move(so), std::move(out), std::move(inputs), std::move(bfn), name);
}

template <class F>
Tensor unary_elementwise(const Tensor& a, F f, std::vector<Tensor> inputs, BackFn bfn,
                         const char* name) {
  const auto& da = a.raw();
  std::vector<double> out(da.size());
  for (size_t i = 0; i < da.size(); ++i) out[i] = f(da[i]);
  return make_result(a.shape(), std::move(out), std::move(inputs), std::move(bfn), name);
}

}  // namespace

// ---- elementwise ops -------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, [](double x, double y) { return x + y; }, {a, b},
      [a, b](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(2);
        if (need[0]) r[0] = sum_to(g, a.shape());
        if (need[1]) r[1] = sum_to(g, b.shape());
        return r;
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, [](double x, double y) { return x - y; }, {a, b},
      [a, b](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(2);
        if (need[0]) r[0] = sum_to(g, a.shape());
        if (need[1]) r[1] = sum_to(neg(g), b.shape());
        return r;
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, [](double x, double y) { return x * y; }, {a, b},
      [a, b](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(2);
        if (need[0]) r[0] = sum_to(mul(g, b), a.shape());
        if (need[1]) r[1] = sum_to(mul(g, a), b.shape());
        return r;
      },
      "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, [](double x, double y) { return x / y; }, {a, b},
      [a, b](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(2);
        if (need[0]) r[0] = sum_to(div(g, b), a.shape());
        if (need[1]) r[1] = sum_to(neg(div(mul(g, a), mul(b, b))), b.shape());
        return r;
      },
      "div");
}

Tensor add(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor sub(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
Tensor sub(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
Tensor mul(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
Tensor div(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }
Tensor div(double a, const Tensor& b) { return div(Tensor::scalar(a), b); }

Tensor neg(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return -x; }, {a},
      [](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = neg(g);
        return r;
      },
      "neg");
}

Tensor exp(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return std::exp(x); }, {a},
      [a](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = mul(g, exp(a));
        return r;
      },
      "exp");
}

Tensor log(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return std::log(x); }, {a},
      [a](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = div(g, a);
        return r;
      },
      "log");
}

Tensor sqrt(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return std::sqrt(x); }, {a},
      [a](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = div(mul(g, 0.5), sqrt(a));
        return r;
      },
      "sqrt");
}

Tensor pow_scalar(const Tensor& a, double p) {
  return unary_elementwise(
      a, [p](double x) { return std::pow(x, p); }, {a},
      [a, p](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = mul(g, mul(pow_scalar(a, p - 1.0), p));
        return r;
      },
      "pow");
}

Tensor relu(const Tensor& a) {
  // Subgradient at 0 is 0; the mask is a constant of the backward.
  std::vector<double> mask(a.raw().size());
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = a.raw()[i] > 0.0 ? 1.0 : 0.0;
  Tensor mask_t = Tensor::from(a.shape(), std::move(mask));
  return unary_elementwise(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, {a},
      [mask_t](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = mul(g, mask_t);
        return r;
      },
      "relu");
}

Tensor sigmoid(const Tensor& a) {
  auto stable = [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
  };
  return unary_elementwise(
      a, stable, {a},
      [a](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) {
          Tensor y = sigmoid(a);
          r[0] = mul(g, mul(y, sub(1.0, y)));
        }
        return r;
      },
      "sigmoid");
}

// ---- reductions / shape ----------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.raw()) s += v;
  return make_result(
      {}, {s}, {a},
      [a](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = broadcast_to(reshape(g, Shape(a.rank(), 1)), a.shape());
        return r;
      },
      "sum");
}

Tensor sum_axes(const Tensor& a, std::vector<int> axes, bool keepdim) {
  const Shape& s = a.shape();
  std::vector<char> reduce(s.size(), 0);
  for (int ax : axes) {
    if (ax < 0 || ax >= static_cast<int>(s.size())) throw usage_error("sum_axes: axis out of range");
    reduce[static_cast<size_t>(ax)] = 1;
  }
  Shape keep_shape(s.size());
  Shape out_shape;
  for (size_t i = 0; i < s.size(); ++i) {
    keep_shape[i] = reduce[i] ? 1 : s[i];
    if (!reduce[i]) out_shape.push_back(s[i]);
    else if (keepdim) out_shape.push_back(1);
  }

  int64_t n = a.numel();
  std::vector<double> out(static_cast<size_t>(numel_of(keep_shape)), 0.0);
  auto keep_st = strides_of(keep_shape);
  std::vector<int64_t> idx(s.size(), 0);
  int64_t off_out = 0;
  for (int64_t lin = 0; lin < n; ++lin) {
    out[static_cast<size_t>(off_out)] += a.raw()[static_cast<size_t>(lin)];
    for (size_t d = s.size(); d-- > 0;) {
      idx[d]++;
      if (!reduce[d]) off_out += keep_st[d];
      if (idx[d] < s[d]) break;
      if (!reduce[d]) off_out -= keep_st[d] * s[d];
      idx[d] = 0;
    }
  }

  Shape keep_copy = keep_shape;
  return make_result(
      out_shape, std::move(out), {a},
      [a, keep_copy](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = broadcast_to(reshape(g, keep_copy), a.shape());
        return r;
      },
      "sum_axes");
}

Tensor mean(const Tensor& a) { return mul(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean_axes(const Tensor& a, std::vector<int> axes, bool keepdim) {
  int64_t count = 1;
  for (int ax : axes) count *= a.dim(ax);
  return mul(sum_axes(a, std::move(axes), keepdim), 1.0 / static_cast<double>(count));
}

Tensor reshape(const Tensor& a, Shape s) {
  if (numel_of(s) != a.numel())
    throw usage_error("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(s));
  Shape orig = a.shape();
  return make_result(
      std::move(s), a.raw(), {a},
      [orig](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = reshape(g, orig);
        return r;
      },
      "reshape");
}

Tensor broadcast_to(const Tensor& a, const Shape& s) {
  const Shape& sa = a.shape();
  if (sa == s) return add(a, 0.0);  // still records a node for uniform handling
  Shape check = broadcast_shape(sa, s);
  if (check != s)
    throw usage_error("broadcast_to: " + shape_str(sa) + " -> " + shape_str(s));
  auto stra = bcast_strides(sa, s);
  int64_t n = numel_of(s);
  std::vector<double> out(static_cast<size_t>(n));
  const auto& da = a.raw();
  std::vector<int64_t> idx(s.size(), 0);
  int64_t off = 0;
  for (int64_t lin = 0; lin < n; ++lin) {
    out[static_cast<size_t>(lin)] = da[static_cast<size_t>(off)];
    for (size_t d = s.size(); d-- > 0;) {
      idx[d]++;
      off += stra[d];
      if (idx[d] < s[d]) break;
      off -= stra[d] * s[d];
      idx[d] = 0;
    }
  }
  Shape orig = sa;
  return make_result(
      s, std::move(out), {a},
      [orig](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = sum_to(g, orig);
        return r;
      },
      "broadcast_to");
}

Tensor sum_to(const Tensor& a, const Shape& target) {
  if (a.shape() == target) return a;
  size_t r = a.shape().size(), rt = target.size();
  if (rt > r) throw usage_error("sum_to: target rank exceeds input rank");
  std::vector<int> axes;
  for (size_t i = 0; i < r; ++i) {
    if (i < r - rt)
      axes.push_back(static_cast<int>(i));
    else if (target[i - (r - rt)] == 1 && a.shape()[i] != 1)
      axes.push_back(static_cast<int>(i));
  }
  Tensor s = axes.empty() ? a : sum_axes(a, axes, /*keepdim=*/true);
  return reshape(s, target);
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw usage_error("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  const auto& da = a.raw();
  const auto& db = b.raw();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      double av = da[static_cast<size_t>(i * k + p)];
      if (av == 0.0) continue;
      const double* brow = &db[static_cast<size_t>(p * n)];
      double* orow = &out[static_cast<size_t>(i * n)];
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return make_result(
      {m, n}, std::move(out), {a, b},
      [a, b](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(2);
        if (need[0]) r[0] = matmul(g, transpose2d(b));
        if (need[1]) r[1] = matmul(transpose2d(a), g);
        return r;
      },
      "matmul");
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2) throw usage_error("transpose2d requires rank 2");
  int64_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n));
  const auto& da = a.raw();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out[static_cast<size_t>(j * m + i)] = da[static_cast<size_t>(i * n + j)];
  return make_result(
      {n, m}, std::move(out), {a},
      [](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = transpose2d(g);
        return r;
      },
      "transpose");
}

// ---- indexing --------------------------------------------------------------

static int64_t row_size_below(const Shape& s) {
  int64_t r = 1;
  for (size_t i = 1; i < s.size(); ++i) r *= s[i];
  return r;
}

Tensor gather_rows(const Tensor& a, std::vector<int64_t> idx) {
  if (a.rank() < 1) throw usage_error("gather_rows requires rank >= 1");
  int64_t rows = a.dim(0), rs = row_size_below(a.shape());
  for (auto i : idx)
    if (i < 0 || i >= rows) throw usage_error("gather_rows: index out of range");
  Shape out_shape = a.shape();
  out_shape[0] = static_cast<int64_t>(idx.size());
  std::vector<double> out(static_cast<size_t>(out_shape[0] * rs));
  const auto& da = a.raw();
  for (size_t r = 0; r < idx.size(); ++r)
    std::memcpy(&out[r * static_cast<size_t>(rs)], &da[static_cast<size_t>(idx[r] * rs)],
                static_cast<size_t>(rs) * sizeof(double));
  auto idx_copy = idx;
  return make_result(
      std::move(out_shape), std::move(out), {a},
      [idx_copy, rows](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = scatter_rows_add(g, idx_copy, rows);
        return r;
      },
      "gather_rows");
}

Tensor scatter_rows_add(const Tensor& g, std::vector<int64_t> idx, int64_t rows) {
  if (g.rank() < 1 || g.dim(0) != static_cast<int64_t>(idx.size()))
    throw usage_error("scatter_rows_add: row/index mismatch");
  int64_t rs = row_size_below(g.shape());
  Shape out_shape = g.shape();
  out_shape[0] = rows;
  std::vector<double> out(static_cast<size_t>(rows * rs), 0.0);
  const auto& dg = g.raw();
  for (size_t r = 0; r < idx.size(); ++r) {
    double* dst = &out[static_cast<size_t>(idx[r] * rs)];
    const double* src = &dg[r * static_cast<size_t>(rs)];
    for (int64_t j = 0; j < rs; ++j) dst[j] += src[j];
  }
  auto idx_copy = idx;
  return make_result(
      std::move(out_shape), std::move(out), {g},
      [idx_copy](const Tensor& gg, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = gather_rows(gg, idx_copy);
        return r;
      },
      "scatter_rows_add");
}

Tensor select_columns(const Tensor& a, std::vector<int64_t> idx) {
  if (a.rank() != 2 || a.dim(0) != static_cast<int64_t>(idx.size()))
    throw usage_error("select_columns: needs [B,K] and B indices");
  int64_t cols = a.dim(1);
  for (auto i : idx)
    if (i < 0 || i >= cols) throw usage_error("select_columns: index out of range");
  std::vector<double> out(idx.size());
  for (size_t r = 0; r < idx.size(); ++r)
    out[r] = a.raw()[r * static_cast<size_t>(cols) + static_cast<size_t>(idx[r])];
  auto idx_copy = idx;
  return make_result(
      {static_cast<int64_t>(idx.size())}, std::move(out), {a},
      [idx_copy, cols](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = scatter_columns(g, idx_copy, cols);
        return r;
      },
      "select_columns");
}

Tensor scatter_columns(const Tensor& g, std::vector<int64_t> idx, int64_t cols) {
  if (g.rank() != 1 || g.dim(0) != static_cast<int64_t>(idx.size()))
    throw usage_error("scatter_columns: needs [B] and B indices");
  int64_t b = g.dim(0);
  std::vector<double> out(static_cast<size_t>(b * cols), 0.0);
  for (int64_t r = 0; r < b; ++r)
    out[static_cast<size_t>(r * cols + idx[static_cast<size_t>(r)])] = g.raw()[static_cast<size_t>(r)];
  auto idx_copy = idx;
  return make_result(
      {b, cols}, std::move(out), {g},
      [idx_copy](const Tensor& gg, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = select_columns(gg, idx_copy);
        return r;
      },
      "scatter_columns");
}

Tensor concat0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw usage_error("concat0: empty input");
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 1) throw usage_error("concat0 requires rank-1 parts");
    total += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total));
  std::vector<int64_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(static_cast<int64_t>(out.size()));
    out.insert(out.end(), p.raw().begin(), p.raw().end());
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  auto sizes = std::vector<int64_t>();
  for (const auto& p : parts) sizes.push_back(p.dim(0));
  return make_result(
      {total}, std::move(out), std::move(inputs),
      [offsets, sizes](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(offsets.size());
        for (size_t i = 0; i < offsets.size(); ++i)
          if (need[i]) r[i] = slice0(g, offsets[i], sizes[i]);
        return r;
      },
      "concat0");
}

Tensor slice0(const Tensor& a, int64_t begin, int64_t len) {
  if (a.rank() != 1 || begin < 0 || begin + len > a.dim(0))
    throw usage_error("slice0: out of range");
  std::vector<double> out(a.raw().begin() + begin, a.raw().begin() + begin + len);
  int64_t total = a.dim(0);
  return make_result(
      {len}, std::move(out), {a},
      [begin, total](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = pad0(g, begin, total);
        return r;
      },
      "slice0");
}

Tensor pad0(const Tensor& a, int64_t begin, int64_t total) {
  if (a.rank() != 1 || begin < 0 || begin + a.dim(0) > total)
    throw usage_error("pad0: out of range");
  std::vector<double> out(static_cast<size_t>(total), 0.0);
  std::copy(a.raw().begin(), a.raw().end(), out.begin() + begin);
  int64_t len = a.dim(0);
  return make_result(
      {total}, std::move(out), {a},
      [begin, len](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = slice0(g, begin, len);
        return r;
      },
      "pad0");
}

// ---- convolution plumbing ---------------------------------------------------

Tensor im2col(const Tensor& x, const ConvGeom& geom) {
  if (x.rank() != 4) throw usage_error("im2col requires [B,C,H,W]");
  int64_t B = geom.batch, C = geom.channels, H = geom.in_h, W = geom.in_w;
  if (x.dim(0) != B || x.dim(1) != C || x.dim(2) != H || x.dim(3) != W)
    throw usage_error("im2col: geometry mismatch with input " + shape_str(x.shape()));
  int64_t oh = geom.out_h(), ow = geom.out_w(), L = oh * ow;
  int64_t rows = C * geom.kh * geom.kw;
  std::vector<double> out(static_cast<size_t>(rows * B * L), 0.0);
  const auto& dx = x.raw();
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t c = 0; c < C; ++c) {
      const double* plane = &dx[static_cast<size_t>(((b * C) + c) * H * W)];
      for (int ky = 0; ky < geom.kh; ++ky) {
        for (int kx = 0; kx < geom.kw; ++kx) {
          int64_t row = (c * geom.kh + ky) * geom.kw + kx;
          double* orow = &out[static_cast<size_t>(row * B * L + b * L)];
          for (int64_t oy = 0; oy < oh; ++oy) {
            int64_t iy = oy * geom.stride - geom.pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (int64_t ox = 0; ox < ow; ++ox) {
              int64_t ix = ox * geom.stride - geom.pad + kx;
              if (ix < 0 || ix >= W) continue;
              orow[oy * ow + ox] = plane[iy * W + ix];
            }
          }
        }
      }
    }
  }
  ConvGeom g = geom;
  return make_result(
      {rows, B * L}, std::move(out), {x},
      [g](const Tensor& grad, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = col2im(grad, g);
        return r;
      },
      "im2col");
}

Tensor col2im(const Tensor& cols, const ConvGeom& geom) {
  int64_t B = geom.batch, C = geom.channels, H = geom.in_h, W = geom.in_w;
  int64_t oh = geom.out_h(), ow = geom.out_w(), L = oh * ow;
  int64_t rows = C * geom.kh * geom.kw;
  if (cols.rank() != 2 || cols.dim(0) != rows || cols.dim(1) != B * L)
    throw usage_error("col2im: shape mismatch " + shape_str(cols.shape()));
  std::vector<double> out(static_cast<size_t>(B * C * H * W), 0.0);
  const auto& dc = cols.raw();
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t c = 0; c < C; ++c) {
      double* plane = &out[static_cast<size_t>(((b * C) + c) * H * W)];
      for (int ky = 0; ky < geom.kh; ++ky) {
        for (int kx = 0; kx < geom.kw; ++kx) {
          int64_t row = (c * geom.kh + ky) * geom.kw + kx;
          const double* crow = &dc[static_cast<size_t>(row * B * L + b * L)];
          for (int64_t oy = 0; oy < oh; ++oy) {
            int64_t iy = oy * geom.stride - geom.pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (int64_t ox = 0; ox < ow; ++ox) {
              int64_t ix = ox * geom.stride - geom.pad + kx;
              if (ix < 0 || ix >= W) continue;
              plane[iy * W + ix] += crow[oy * ow + ox];
            }
          }
        }
      }
    }
  }
  ConvGeom g = geom;
  return make_result(
      {B, C, H, W}, std::move(out), {cols},
      [g](const Tensor& grad, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = im2col(grad, g);
        return r;
      },
      "col2im");
}

Tensor cols_to_nchw(const Tensor& y, int64_t batch, int64_t channels, int64_t h, int64_t w) {
  int64_t L = h * w;
  if (y.rank() != 2 || y.dim(0) != channels || y.dim(1) != batch * L)
    throw usage_error("cols_to_nchw: shape mismatch " + shape_str(y.shape()));
  std::vector<double> out(static_cast<size_t>(batch * channels * L));
  const auto& dy = y.raw();
  for (int64_t c = 0; c < channels; ++c)
    for (int64_t b = 0; b < batch; ++b)
      std::memcpy(&out[static_cast<size_t>((b * channels + c) * L)],
                  &dy[static_cast<size_t>(c * batch * L + b * L)],
                  static_cast<size_t>(L) * sizeof(double));
  return make_result(
      {batch, channels, h, w}, std::move(out), {y},
      [](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = nchw_to_cols(g);
        return r;
      },
      "cols_to_nchw");
}

Tensor nchw_to_cols(const Tensor& x) {
  if (x.rank() != 4) throw usage_error("nchw_to_cols requires [B,C,H,W]");
  int64_t B = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3), L = h * w;
  std::vector<double> out(static_cast<size_t>(B * C * L));
  const auto& dx = x.raw();
  for (int64_t c = 0; c < C; ++c)
    for (int64_t b = 0; b < B; ++b)
      std::memcpy(&out[static_cast<size_t>(c * B * L + b * L)],
                  &dx[static_cast<size_t>((b * C + c) * L)],
                  static_cast<size_t>(L) * sizeof(double));
  return make_result(
      {C, B * L}, std::move(out), {x},
      [B, C, h, w](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = cols_to_nchw(g, B, C, h, w);
        return r;
      },
      "nchw_to_cols");
}

Tensor avg_pool2(const Tensor& x) {
  if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
    throw usage_error("avg_pool2 requires [B,C,2h,2w], got " + shape_str(x.shape()));
  int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t oh = H / 2, ow = W / 2;
  std::vector<double> out(static_cast<size_t>(B * C * oh * ow));
  const auto& dx = x.raw();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const double* in = &dx[static_cast<size_t>(bc * H * W)];
    double* o = &out[static_cast<size_t>(bc * oh * ow)];
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t z = 0; z < ow; ++z)
        o[y * ow + z] = 0.25 * (in[(2 * y) * W + 2 * z] + in[(2 * y) * W + 2 * z + 1] +
                                in[(2 * y + 1) * W + 2 * z] + in[(2 * y + 1) * W + 2 * z + 1]);
  }
  return make_result(
      {B, C, oh, ow}, std::move(out), {x},
      [](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = avg_unpool2(g);
        return r;
      },
      "avg_pool2");
}

Tensor avg_unpool2(const Tensor& x) {
  if (x.rank() != 4) throw usage_error("avg_unpool2 requires [B,C,h,w]");
  int64_t B = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
  int64_t H = h * 2, W = w * 2;
  std::vector<double> out(static_cast<size_t>(B * C * H * W));
  const auto& dx = x.raw();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const double* in = &dx[static_cast<size_t>(bc * h * w)];
    double* o = &out[static_cast<size_t>(bc * H * W)];
    for (int64_t y = 0; y < h; ++y)
      for (int64_t z = 0; z < w; ++z) {
        double v = 0.25 * in[y * w + z];
        o[(2 * y) * W + 2 * z] = v;
        o[(2 * y) * W + 2 * z + 1] = v;
        o[(2 * y + 1) * W + 2 * z] = v;
        o[(2 * y + 1) * W + 2 * z + 1] = v;
      }
  }
  return make_result(
      {B, C, H, W}, std::move(out), {x},
      [](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
        std::vector<Tensor> r(1);
        if (need[0]) r[0] = avg_pool2(g);
        return r;
      },
      "avg_unpool2");
}

// ---- composite layers ------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4)
    throw usage_error("conv2d: expected [B,C,H,W] and [Cout,Cin,kh,kw]");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3),
             static_cast<int>(w.dim(2)), static_cast<int>(w.dim(3)), stride, pad};
  int64_t cout = w.dim(0);
  Tensor cols = im2col(x, g);
  Tensor wm = reshape(w, {cout, w.dim(1) * w.dim(2) * w.dim(3)});
  Tensor y = cols_to_nchw(matmul(wm, cols), g.batch, cout, g.out_h(), g.out_w());
  if (b.defined()) y = add(y, reshape(b, {1, cout, 1, 1}));
  return y;
}

Tensor conv_transpose2(const Tensor& x, const Tensor& w, const Tensor& b, int k,
                       int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 2)
    throw usage_error("conv_transpose2: expected [B,Cin,h,w] and [Cin,Cout*k*k]");
  int64_t cin = x.dim(1);
  if (w.dim(0) != cin) throw usage_error("conv_transpose2: channel mismatch");
  int64_t cout = w.dim(1) / (static_cast<int64_t>(k) * k);
  int64_t h = x.dim(2), wd = x.dim(3);
  int64_t H = static_cast<int64_t>(stride) * (h - 1) + k - 2 * pad;
  int64_t W = static_cast<int64_t>(stride) * (wd - 1) + k - 2 * pad;
  ConvGeom g{x.dim(0), cout, H, W, k, k, stride, pad};
  if (g.out_h() != h || g.out_w() != wd)
    throw usage_error("conv_transpose2: geometry does not invert");
  Tensor xc = nchw_to_cols(x);                       // [Cin, B*h*w]
  Tensor cols = matmul(transpose2d(w), xc);          // [Cout*k*k, B*h*w]
  Tensor y = col2im(cols, g);                        // [B,Cout,H,W]
  if (b.defined()) y = add(y, reshape(b, {1, cout, 1, 1}));
  return y;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  if (b.defined()) y = add(y, reshape(b, {1, w.dim(1)}));
  return y;
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.rank() != 4) throw usage_error("group_norm requires [B,C,H,W]");
  int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (C % groups != 0) throw usage_error("group_norm: channels not divisible by groups");
  int64_t per = (C / groups) * H * W;
  Tensor xg = reshape(x, {B, groups, per});
  Tensor mu = mean_axes(xg, {2}, true);
  Tensor xc = sub(xg, mu);
  Tensor var = mean_axes(mul(xc, xc), {2}, true);
  Tensor inv = pow_scalar(add(var, eps), -0.5);
  Tensor y = reshape(mul(xc, inv), {B, C, H, W});
  return add(mul(y, reshape(gamma, {1, C, 1, 1})), reshape(beta, {1, C, 1, 1}));
}

// ---- losses ----------------------------------------------------------------

Tensor row_max_detached(const Tensor& logits) {
  if (logits.rank() != 2) throw usage_error("row_max_detached requires [B,K]");
  int64_t B = logits.dim(0), K = logits.dim(1);
  std::vector<double> out(static_cast<size_t>(B));
  for (int64_t i = 0; i < B; ++i) {
    double m = logits.raw()[static_cast<size_t>(i * K)];
    for (int64_t j = 1; j < K; ++j)
      m = std::max(m, logits.raw()[static_cast<size_t>(i * K + j)]);
    out[static_cast<size_t>(i)] = m;
  }
  return Tensor::from({B, 1}, std::move(out));
}

Tensor log_softmax(const Tensor& logits) {
  Tensor shift = row_max_detached(logits);
  Tensor z = sub(logits, shift);
  Tensor lse = log(sum_axes(exp(z), {1}, true));
  return sub(z, lse);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw usage_error("cross_entropy requires [B,K] logits");
  int64_t B = logits.dim(0), K = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != B)
    throw usage_error("cross_entropy: batch/label count mismatch");
  std::vector<int64_t> idx(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= K)
      throw validation_error("cross_entropy: label " + std::to_string(labels[i]) +
                             " out of range [0," + std::to_string(K) + ")");
    idx[i] = labels[i];
  }
  Tensor logp = log_softmax(logits);
  return neg(mean(select_columns(logp, idx)));
}

Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

Tensor sq_norm(const Tensor& a) { return sum(mul(a, a)); }

Tensor norm(const Tensor& a) { return sqrt(sq_norm(a)); }

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw usage_error("argmax_rows requires [B,K]");
  int64_t B = logits.dim(0), K = logits.dim(1);
  std::vector<int> out(static_cast<size_t>(B));
  for (int64_t i = 0; i < B; ++i) {
    int best = 0;
    double bv = logits.raw()[static_cast<size_t>(i * K)];
    for (int64_t j = 1; j < K; ++j) {
      double v = logits.raw()[static_cast<size_t>(i * K + j)];
      if (v > bv) {
        bv = v;
        best = static_cast<int>(j);
      }
    }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

}  // namespace cdstl
