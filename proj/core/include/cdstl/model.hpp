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

#ifndef CDSTL_MODEL_HPP
#define CDSTL_MODEL_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cdstl/rng.hpp"
#include "cdstl/tensor.hpp"

namespace cdstl {

// Classifier architectures. ConvNetS is the distillation backbone
// (2 x conv3x3(32)/group-norm/relu/avg-pool2 + dense); ConvNetDeep, MLP and
// LinearProbe serve as the unseen evaluation architectures.
enum class Arch : uint8_t {
  ConvNetS = 0,
  ConvNetDeep = 1,
  MLP = 2,
  LinearProbe = 3,
};

const char* arch_name(Arch a);
Arch arch_from_name(const std::string& name);

struct Model {
  Arch arch = Arch::ConvNetS;
  // Deterministic, stable parameter order; names follow the layer walk.
  std::vector<std::pair<std::string, Tensor>> params;

  std::vector<Tensor> param_tensors() const;
  std::vector<Shape> param_shapes() const;
};

// Kaiming-uniform (fan-in) initialization; group-norm scales start at 1,
// biases at 0. Geometry: in_h and in_w must be multiples of 4 (ConvNetS)
// or 8 (ConvNetDeep).
Model make_model(Arch arch, int64_t in_c, int64_t in_h, int64_t in_w, int64_t classes,
                 Rng& rng);

// Batch [B,C,H,W] -> logits [B,K]. Shape mismatches raise dimension_error
// naming the offending layer. The graph is recorded whenever any input
// (parameters or batch) requires gradients.
Tensor forward(const Model& m, const Tensor& batch);

// Same forward pass but through an explicit parameter list (used when the
// parameters are themselves intermediate graph tensors, e.g. unrolled
// student steps in trajectory matching).
Tensor forward_with(const Model& m, const std::vector<Tensor>& params,
                    const Tensor& batch);

// Penultimate activations (the features right before the final dense layer).
// For LinearProbe this is the flattened input itself.
Tensor embed(const Model& m, const Tensor& batch);

int64_t num_classes(const Model& m);

// Canonical flat parameter view [P] (plain copy, not recorded).
Tensor flatten_params(const Model& m);
void unflatten_params(Model& m, const Tensor& flat);
int64_t param_count(const Model& m);

// Differentiable flatten of a parameter list (for trajectory distances).
Tensor flatten_tensor_list(const std::vector<Tensor>& tensors);
// Split a flat constant vector back into leaf tensors of the given shapes.
std::vector<Tensor> split_flat(const Tensor& flat, const std::vector<Shape>& shapes,
                               bool requires_grad);

void zero_grads(Model& m);

// theta <- theta - lr * grad, elementwise; gradients are left untouched.
// Missing gradients raise usage_error.
void sgd_step(Model& m, double lr);

uint64_t model_param_hash(const Model& m);

// NNC1 checkpoint format: magic "NNC1", architecture id (u8), tensor count
// (u64 LE), then per tensor: name length (u16 LE), name, rank (u8),
// dims (u32 LE each), float64 LE payload.
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);
// Loader that accepts extended architecture ids (the decoder checkpoint
// reuses the NNC1 container with id 4).
Model load_model_any(const std::string& path);

// Epoch-based SGD training with seeded shuffling; returns the mean
// cross-entropy of the final epoch.
double train_epochs(Model& m, const Tensor& images, const std::vector<int>& labels,
                    int epochs, int64_t batch, double lr, Rng& rng);

// Step-based SGD training with random batches; hook runs after every step
// (step index starting at 1).
void train_steps(Model& m, const Tensor& images, const std::vector<int>& labels,
                 int steps, int64_t batch, double lr, Rng& rng,
                 const std::function<void(int)>& after_step = {});

// Top-1 accuracy of the model on a labeled batch (no graph recorded).
double accuracy(const Model& m, const Tensor& images, const std::vector<int>& labels);

}  // namespace cdstl

#endif  // CDSTL_MODEL_HPP
