/*
 * Copyright 2026 The fuleak Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fuleak/tensor.hpp"

namespace fuleak {

enum class ModelKind { kMlp, kConvNetS };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

struct InputShape {
  Index channels = 1;
  Index height = 28;
  Index width = 28;

  Index size() const { return channels * height * width; }
  bool operator==(const InputShape&) const = default;
};

// mlp: three hidden ReLU layers of `width` units (1024 in the reference
// architecture), input layer sized to the flattened image.
// convnet-s: conv3x3(C->w) relu, conv3x3(w->2w) relu, maxpool2,
// conv3x3(2w->2w) relu, maxpool2, linear -> num_classes.
struct ModelSpec {
  ModelKind kind = ModelKind::kConvNetS;
  InputShape input;
  Index num_classes = 10;
  Index width = 16;

  bool operator==(const ModelSpec&) const = default;
};

struct LayerRecord {
  std::string name;
  Shape shape;
  Index offset = 0;
  Index fan_in = 0;
  bool is_bias = false;
};

std::vector<LayerRecord> layer_layout(const ModelSpec& spec);
Index parameter_count(const ModelSpec& spec);

// Flattened model parameters plus the spec needed to interpret them.
struct ParamVector {
  Tensor values;
  ModelSpec spec;

  Index size() const { return values.numel(); }
};

// Kaiming-uniform (fan-in, ReLU gain) weights, zero biases.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);
ParamVector make_params(const ModelSpec& spec, Tensor values);
std::vector<Tensor> unflatten(const ParamVector& params);
ParamVector flatten(const ModelSpec& spec, std::span<const Tensor> layers);

// Logits [batch x num_classes] for x [batch x C x H x W]. `theta` is the flat
// parameter vector and may be tracked; so may x.
Tensor forward(const ModelSpec& spec, const Tensor& theta, const Tensor& x);
inline Tensor forward(const ParamVector& params, const Tensor& x) {
  return forward(params.spec, params.values, x);
}

// Mean softmax cross-entropy with max-subtraction.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

struct LossGrads {
  Tensor loss;
  Tensor params;  // dL/dtheta, flat
  Tensor input;   // dL/dx when requested
};

struct GradRequest {
  bool input = false;
  // Record the gradient computation on the active tape so it can be
  // differentiated again. theta and x are watched if they are not tracked.
  bool create_graph = false;
};

LossGrads loss_grads(const ModelSpec& spec, const Tensor& theta, const Tensor& x,
                     std::span<const int> labels, GradRequest request = {});

std::vector<int> predict(const ParamVector& params, const Tensor& x);

// FLCK checkpoint: "FLCK", u32 version, u32 kind, u32 C, u32 H, u32 W,
// u32 num_classes, u32 width, u64 count, count x f64; all little-endian.
void save_checkpoint(const std::filesystem::path& path, const ParamVector& params);
ParamVector load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const ParamVector& params);
ParamVector decode_checkpoint(std::span<const std::uint8_t> bytes);

namespace nn {

// Layer primitives on channel-major activations [C x N x H x W].
Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor maxpool2x2(const Tensor& x);
Tensor to_channel_major(const Tensor& x);  // [N,C,H,W] -> [C,N,H,W]
Tensor to_rows(const Tensor& x);           // [C,N,H,W] -> [N, C*H*W]
// x [N x F] * W^T + b for W [O x F].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

}  // namespace nn

}  // namespace fuleak
