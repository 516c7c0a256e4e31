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

#include "cdstl/model.hpp"

#include <algorithm>
#include <cmath>

#include "cdstl/binio.hpp"
#include "cdstl/errors.hpp"
#include "cdstl/hash.hpp"

namespace cdstl {

namespace {

constexpr int kConvSChannels = 32;
constexpr int kConvDeepChannels = 64;
constexpr int kGroups = 8;
constexpr int kMlpHidden = 128;
constexpr double kGnEps = 1e-5;

Tensor kaiming_uniform(Shape shape, int64_t fan_in, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  int64_t n = numel_of(shape);
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = (rng.next_double() * 2.0 - 1.0) * limit;
  return Tensor::leaf(std::move(shape), std::move(v), true);
}

Tensor zeros_leaf(Shape shape) {
  return Tensor::leaf(std::move(shape),
                      std::vector<double>(static_cast<size_t>(numel_of(shape)), 0.0), true);
}

Tensor ones_leaf(Shape shape) {
  return Tensor::leaf(std::move(shape),
                      std::vector<double>(static_cast<size_t>(numel_of(shape)), 1.0), true);
}

void check_divisible(Arch arch, int64_t in_h, int64_t in_w) {
  int div = arch == Arch::ConvNetDeep ? 8 : 4;
  if (arch == Arch::MLP || arch == Arch::LinearProbe) return;
  if (in_h % div != 0 || in_w % div != 0 || in_h < div || in_w < div)
    throw config_error(std::string(arch_name(arch)) + " requires input sides divisible by " +
                       std::to_string(div));
}

}  // namespace

const char* arch_name(Arch a) {
  switch (a) {
    case Arch::ConvNetS: return "convnet_s";
    case Arch::ConvNetDeep: return "convnet_deep";
    case Arch::MLP: return "mlp";
    case Arch::LinearProbe: return "linear_probe";
  }
  return "unknown";
}

Arch arch_from_name(const std::string& name) {
  if (name == "convnet_s") return Arch::ConvNetS;
  if (name == "convnet_deep") return Arch::ConvNetDeep;
  if (name == "mlp") return Arch::MLP;
  if (name == "linear_probe") return Arch::LinearProbe;
  throw config_error("unknown architecture: " + name);
}

std::vector<Tensor> Model::param_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

std::vector<Shape> Model::param_shapes() const {
  std::vector<Shape> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t.shape());
  return out;
}

Model make_model(Arch arch, int64_t in_c, int64_t in_h, int64_t in_w, int64_t classes,
                 Rng& rng) {
  check_divisible(arch, in_h, in_w);
  Model m;
  m.arch = arch;
  auto put = [&m](const std::string& name, Tensor t) { m.params.emplace_back(name, std::move(t)); };

  switch (arch) {
    case Arch::ConvNetS: {
      int64_t ch = kConvSChannels;
      int64_t feat = ch * (in_h / 4) * (in_w / 4);
      put("conv1.weight", kaiming_uniform({ch, in_c, 3, 3}, in_c * 9, rng));
      put("conv1.bias", zeros_leaf({ch}));
      put("gn1.gamma", ones_leaf({ch}));
      put("gn1.beta", zeros_leaf({ch}));
      put("conv2.weight", kaiming_uniform({ch, ch, 3, 3}, ch * 9, rng));
      put("conv2.bias", zeros_leaf({ch}));
      put("gn2.gamma", ones_leaf({ch}));
      put("gn2.beta", zeros_leaf({ch}));
      put("head.weight", kaiming_uniform({feat, classes}, feat, rng));
      put("head.bias", zeros_leaf({classes}));
      break;
    }
    case Arch::ConvNetDeep: {
      int64_t ch = kConvDeepChannels;
      int64_t feat = ch * (in_h / 8) * (in_w / 8);
      int64_t cin = in_c;
      for (int blk = 1; blk <= 3; ++blk) {
        std::string p = "conv" + std::to_string(blk);
        put(p + ".weight", kaiming_uniform({ch, cin, 3, 3}, cin * 9, rng));
        put(p + ".bias", zeros_leaf({ch}));
        put("gn" + std::to_string(blk) + ".gamma", ones_leaf({ch}));
        put("gn" + std::to_string(blk) + ".beta", zeros_leaf({ch}));
        cin = ch;
      }
      put("head.weight", kaiming_uniform({feat, classes}, feat, rng));
      put("head.bias", zeros_leaf({classes}));
      break;
    }
    case Arch::MLP: {
      int64_t feat = in_c * in_h * in_w;
      put("fc1.weight", kaiming_uniform({feat, kMlpHidden}, feat, rng));
      put("fc1.bias", zeros_leaf({kMlpHidden}));
      put("fc2.weight", kaiming_uniform({kMlpHidden, kMlpHidden}, kMlpHidden, rng));
      put("fc2.bias", zeros_leaf({kMlpHidden}));
      put("head.weight", kaiming_uniform({kMlpHidden, classes}, kMlpHidden, rng));
      put("head.bias", zeros_leaf({classes}));
      break;
    }
    case Arch::LinearProbe: {
      int64_t feat = in_c * in_h * in_w;
      put("head.weight", kaiming_uniform({feat, classes}, feat, rng));
      put("head.bias", zeros_leaf({classes}));
      break;
    }
  }
  return m;
}

namespace {

void expect(bool ok, const std::string& layer, const std::string& detail) {
  if (!ok) throw dimension_error(layer + ": " + detail);
}

struct ForwardResult {
  Tensor logits;
  Tensor embedding;
};

// One shared layer walk for logits and embeddings. `p` is the parameter
// list in schema order.
ForwardResult run_net(Arch arch, const std::vector<Tensor>& p, const Tensor& batch,
                      bool want_embedding) {
  expect(batch.rank() == 4, "input", "expected [B,C,H,W], got " + shape_str(batch.shape()));
  int64_t B = batch.dim(0), C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);

  ForwardResult out;
  switch (arch) {
    case Arch::ConvNetS:
    case Arch::ConvNetDeep: {
      int blocks = arch == Arch::ConvNetS ? 2 : 3;
      Tensor x = batch;
      int64_t h = H, w = W;
      for (int blk = 0; blk < blocks; ++blk) {
        const Tensor& cw = p[static_cast<size_t>(blk * 4 + 0)];
        const Tensor& cb = p[static_cast<size_t>(blk * 4 + 1)];
        const Tensor& gg = p[static_cast<size_t>(blk * 4 + 2)];
        const Tensor& gb = p[static_cast<size_t>(blk * 4 + 3)];
        std::string layer = "conv" + std::to_string(blk + 1);
        expect(x.dim(1) == cw.dim(1),
               layer, "expected " + std::to_string(cw.dim(1)) + " input channels, got " +
                          std::to_string(x.dim(1)));
        x = conv2d(x, cw, cb, 1, 1);
        x = group_norm(x, kGroups, gg, gb, kGnEps);
        x = relu(x);
        expect(h % 2 == 0 && w % 2 == 0, "pool" + std::to_string(blk + 1),
               "spatial dims must be even, got " + shape_str(x.shape()));
        x = avg_pool2(x);
        h /= 2;
        w /= 2;
      }
      const Tensor& hw = p[p.size() - 2];
      const Tensor& hb = p[p.size() - 1];
      int64_t feat = x.dim(1) * h * w;
      expect(feat == hw.dim(0), "head",
             "expected " + std::to_string(hw.dim(0)) + " features, got " + std::to_string(feat));
      Tensor emb = reshape(x, {B, feat});
      out.embedding = want_embedding ? emb : Tensor();
      out.logits = dense(emb, hw, hb);
      break;
    }
    case Arch::MLP: {
      const Tensor& w1 = p[0];
      expect(C * H * W == w1.dim(0), "fc1",
             "expected " + std::to_string(w1.dim(0)) + " inputs, got " +
                 std::to_string(C * H * W));
      Tensor x = reshape(batch, {B, C * H * W});
      x = relu(dense(x, p[0], p[1]));
      x = relu(dense(x, p[2], p[3]));
      out.embedding = want_embedding ? x : Tensor();
      out.logits = dense(x, p[4], p[5]);
      break;
    }
    case Arch::LinearProbe: {
      const Tensor& w1 = p[0];
      expect(C * H * W == w1.dim(0), "head",
             "expected " + std::to_string(w1.dim(0)) + " inputs, got " +
                 std::to_string(C * H * W));
      Tensor x = reshape(batch, {B, C * H * W});
      out.embedding = want_embedding ? x : Tensor();
      out.logits = dense(x, p[0], p[1]);
      break;
    }
  }
  return out;
}

}  // namespace

Tensor forward(const Model& m, const Tensor& batch) {
  return run_net(m.arch, m.param_tensors(), batch, false).logits;
}

Tensor forward_with(const Model& m, const std::vector<Tensor>& params, const Tensor& batch) {
  if (params.size() != m.params.size())
    throw usage_error("forward_with: parameter count mismatch");
  return run_net(m.arch, params, batch, false).logits;
}

Tensor embed(const Model& m, const Tensor& batch) {
  return run_net(m.arch, m.param_tensors(), batch, true).embedding;
}

int64_t num_classes(const Model& m) {
  return m.params.back().second.dim(0);  // head.bias [K]
}

Tensor flatten_params(const Model& m) {
  std::vector<double> flat;
  for (const auto& [name, t] : m.params) flat.insert(flat.end(), t.raw().begin(), t.raw().end());
  int64_t n = static_cast<int64_t>(flat.size());
  return Tensor::from({n}, std::move(flat));
}

void unflatten_params(Model& m, const Tensor& flat) {
  if (flat.rank() != 1 || flat.numel() != param_count(m))
    throw usage_error("unflatten_params: length mismatch");
  int64_t off = 0;
  for (auto& [name, t] : m.params) {
    std::copy(flat.raw().begin() + off, flat.raw().begin() + off + t.numel(),
              t.raw().begin());
    off += t.numel();
  }
}

int64_t param_count(const Model& m) {
  int64_t n = 0;
  for (const auto& [name, t] : m.params) n += t.numel();
  return n;
}

Tensor flatten_tensor_list(const std::vector<Tensor>& tensors) {
  std::vector<Tensor> flat_parts;
  flat_parts.reserve(tensors.size());
  for (const auto& t : tensors) flat_parts.push_back(reshape(t, {t.numel()}));
  return concat0(flat_parts);
}

std::vector<Tensor> split_flat(const Tensor& flat, const std::vector<Shape>& shapes,
                               bool requires_grad) {
  std::vector<Tensor> out;
  int64_t off = 0;
  for (const auto& s : shapes) {
    int64_t n = numel_of(s);
    std::vector<double> v(flat.raw().begin() + off, flat.raw().begin() + off + n);
    out.push_back(Tensor::leaf(s, std::move(v), requires_grad));
    off += n;
  }
  if (off != flat.numel()) throw usage_error("split_flat: length mismatch");
  return out;
}

void zero_grads(Model& m) {
  for (auto& [name, t] : m.params) t.zero_grad();
}

void sgd_step(Model& m, double lr) {
  for (auto& [name, t] : m.params) {
    Tensor g = t.grad();
    if (!g.defined())
      throw usage_error("sgd_step: parameter " + name + " has no gradient");
    auto& data = t.raw();
    const auto& gd = g.raw();
    for (size_t i = 0; i < data.size(); ++i) data[i] -= lr * gd[i];
  }
}

uint64_t model_param_hash(const Model& m) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : m.params) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(t.raw().data(), t.raw().size() * sizeof(double), h);
  }
  return h;
}

void save_model(const Model& m, const std::string& path) {
  ByteWriter w;
  w.str("NNC1");
  w.u8(static_cast<uint8_t>(m.arch));
  w.u64le(static_cast<uint64_t>(m.params.size()));
  for (const auto& [name, t] : m.params) {
    w.u16le(static_cast<uint16_t>(name.size()));
    w.str(name);
    w.u8(static_cast<uint8_t>(t.rank()));
    for (auto d : t.shape()) w.u32le(static_cast<uint32_t>(d));
    for (double v : t.raw()) w.f64le(v);
  }
  write_file_atomic(path, w.data());
}

Model load_model_any(const std::string& path) {
  auto bytes = read_file_bytes(path);
  ByteReader r(bytes, "checkpoint " + path);
  if (r.str(4) != "NNC1") throw format_error("checkpoint " + path + ": bad magic at offset 0");
  uint8_t arch_id = r.u8();
  Model m;
  m.arch = static_cast<Arch>(arch_id);
  uint64_t count = r.u64le();
  for (uint64_t i = 0; i < count; ++i) {
    uint16_t name_len = r.u16le();
    std::string name = r.str(name_len);
    uint8_t rank = r.u8();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int64_t>(r.u32le());
    int64_t n = numel_of(shape);
    std::vector<double> data(static_cast<size_t>(n));
    for (auto& v : data) v = r.f64le();
    m.params.emplace_back(name, Tensor::leaf(std::move(shape), std::move(data), true));
  }
  if (r.remaining() != 0)
    throw format_error("checkpoint " + path + ": trailing bytes at offset " +
                       std::to_string(r.offset()));
  return m;
}

Model load_model(const std::string& path) {
  Model m = load_model_any(path);
  if (static_cast<uint8_t>(m.arch) > 3)
    throw format_error("checkpoint " + path + ": unknown architecture id " +
                       std::to_string(static_cast<int>(m.arch)));
  return m;
}

double train_epochs(Model& m, const Tensor& images, const std::vector<int>& labels,
                    int epochs, int64_t batch, double lr, Rng& rng) {
  int64_t n = images.dim(0);
  if (n == 0) throw usage_error("train_epochs: empty dataset");
  double last_epoch_loss = 0.0;
  for (int e = 0; e < epochs; ++e) {
    auto order = rng.permutation(n);
    double loss_sum = 0.0;
    int64_t batches = 0;
    for (int64_t start = 0; start < n; start += batch) {
      int64_t len = std::min(batch, n - start);
      std::vector<int64_t> idx(order.begin() + start, order.begin() + start + len);
      std::vector<int> y(static_cast<size_t>(len));
      for (int64_t i = 0; i < len; ++i) y[static_cast<size_t>(i)] = labels[static_cast<size_t>(idx[static_cast<size_t>(i)])];
      Tensor x = gather_rows(images, idx);
      Tensor loss = cross_entropy(forward(m, x), y);
      zero_grads(m);
      loss.backward();
      sgd_step(m, lr);
      loss_sum += loss.item();
      ++batches;
    }
    last_epoch_loss = loss_sum / static_cast<double>(batches);
  }
  return last_epoch_loss;
}

void train_steps(Model& m, const Tensor& images, const std::vector<int>& labels,
                 int steps, int64_t batch, double lr, Rng& rng,
                 const std::function<void(int)>& after_step) {
  int64_t n = images.dim(0);
  int64_t take = std::min(batch, n);
  for (int s = 1; s <= steps; ++s) {
    auto idx = rng.sample_without_replacement(n, take);
    std::vector<int> y(static_cast<size_t>(take));
    for (int64_t i = 0; i < take; ++i) y[static_cast<size_t>(i)] = labels[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    Tensor x = gather_rows(images, idx);
    Tensor loss = cross_entropy(forward(m, x), y);
    zero_grads(m);
    loss.backward();
    sgd_step(m, lr);
    if (after_step) after_step(s);
  }
}

double accuracy(const Model& m, const Tensor& images, const std::vector<int>& labels) {
  NoGradGuard ng;
  int64_t n = images.dim(0);
  int64_t correct = 0;
  constexpr int64_t kChunk = 128;
  for (int64_t start = 0; start < n; start += kChunk) {
    int64_t len = std::min(kChunk, n - start);
    std::vector<int64_t> idx(static_cast<size_t>(len));
    for (int64_t i = 0; i < len; ++i) idx[static_cast<size_t>(i)] = start + i;
    Tensor logits = forward(m, gather_rows(images, idx));
    auto pred = argmax_rows(logits);
    for (int64_t i = 0; i < len; ++i)
      if (pred[static_cast<size_t>(i)] == labels[static_cast<size_t>(start + i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace cdstl
