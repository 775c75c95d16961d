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

#include "fuleak/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <tuple>

namespace fuleak {

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kMlp ? "mlp" : "convnet-s";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "mlp") return ModelKind::kMlp;
  if (name == "convnet-s") return ModelKind::kConvNetS;
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

std::vector<LayerRecord> layer_layout(const ModelSpec& spec) {
  std::vector<LayerRecord> layers;
  Index offset = 0;
  auto push = [&](std::string name, Shape shape, Index fan_in, bool is_bias) {
    const Index n = numel_of(shape);
    layers.push_back({std::move(name), std::move(shape), offset, fan_in, is_bias});
    offset += n;
  };
  const Index k = spec.num_classes;
  const Index w = spec.width;
  if (spec.kind == ModelKind::kMlp) {
    const Index d = spec.input.size();
    push("fc1.weight", {w, d}, d, false);
    push("fc1.bias", {w}, d, true);
    push("fc2.weight", {w, w}, w, false);
    push("fc2.bias", {w}, w, true);
    push("fc3.weight", {w, w}, w, false);
    push("fc3.bias", {w}, w, true);
    push("out.weight", {k, w}, w, false);
    push("out.bias", {k}, w, true);
  } else {
    const Index c = spec.input.channels;
    const Index features = 2 * w * (spec.input.height / 4) * (spec.input.width / 4);
    push("conv1.weight", {w, c * 9}, c * 9, false);
    push("conv1.bias", {w}, c * 9, true);
    push("conv2.weight", {2 * w, w * 9}, w * 9, false);
    push("conv2.bias", {2 * w}, w * 9, true);
    push("conv3.weight", {2 * w, 2 * w * 9}, 2 * w * 9, false);
    push("conv3.bias", {2 * w}, 2 * w * 9, true);
    push("fc.weight", {k, features}, features, false);
    push("fc.bias", {k}, features, true);
  }
  return layers;
}

Index parameter_count(const ModelSpec& spec) {
  const auto layers = layer_layout(spec);
  return layers.back().offset + numel_of(layers.back().shape);
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> values(static_cast<std::size_t>(parameter_count(spec)), 0.0);
  for (const LayerRecord& layer : layer_layout(spec)) {
    if (layer.is_bias) continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const Index n = numel_of(layer.shape);
    for (Index i = 0; i < n; ++i) values[static_cast<std::size_t>(layer.offset + i)] = dist(rng);
  }
  return {Tensor::vector(std::move(values)), spec};
}

ParamVector make_params(const ModelSpec& spec, Tensor values) {
  if (values.numel() != parameter_count(spec)) {
    throw ShapeError("parameter vector of length " + std::to_string(values.numel()) +
                     " does not match model with " + std::to_string(parameter_count(spec)) +
                     " parameters");
  }
  if (values.rank() != 1) values = reshape(values, {values.numel()});
  return {std::move(values), spec};
}

std::vector<Tensor> unflatten(const ParamVector& params) {
  std::vector<Tensor> out;
  for (const LayerRecord& layer : layer_layout(params.spec)) {
    out.push_back(slice(params.values, layer.offset, layer.shape));
  }
  return out;
}

ParamVector flatten(const ModelSpec& spec, std::span<const Tensor> layers) {
  const auto layout = layer_layout(spec);
  if (layers.size() != layout.size()) throw ShapeError("flatten: wrong number of layers");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(parameter_count(spec)));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].numel() != numel_of(layout[i].shape)) {
      throw ShapeError("flatten: layer " + layout[i].name + " has wrong size");
    }
    auto v = layers[i].values();
    values.insert(values.end(), v.begin(), v.end());
  }
  return make_params(spec, Tensor::vector(std::move(values)));
}

namespace nn {

namespace {

using MapKey = std::tuple<int, Index, Index, Index, Index>;

IndexMap cached_map(const MapKey& key, const std::function<IndexMap()>& build) {
  static std::mutex mu;
  static std::map<MapKey, IndexMap> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  IndexMap map = build();
  cache.emplace(key, map);
  return map;
}

IndexMap im2col_map(Index c, Index n, Index h, Index w) {
  return cached_map({0, c, n, h, w}, [=] {
    const Index cols = n * h * w;
    auto index = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(c * 9 * cols));
    for (Index ch = 0; ch < c; ++ch) {
      for (Index ky = 0; ky < 3; ++ky) {
        for (Index kx = 0; kx < 3; ++kx) {
          const Index row = ch * 9 + ky * 3 + kx;
          Index* dst = index->data() + row * cols;
          for (Index b = 0; b < n; ++b) {
            for (Index y = 0; y < h; ++y) {
              const Index yy = y + ky - 1;
              for (Index x = 0; x < w; ++x) {
                const Index xx = x + kx - 1;
                const bool inside = yy >= 0 && yy < h && xx >= 0 && xx < w;
                *dst++ = inside ? ((ch * n + b) * h + yy) * w + xx : -1;
              }
            }
          }
        }
      }
    }
    return IndexMap{std::move(index), c * n * h * w, false};
  });
}

// x is [a, b, inner]; out is [b, a, inner].
IndexMap swap_leading_map(Index a, Index b, Index inner) {
  return cached_map({1, a, b, inner, 0}, [=] {
    auto index = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(a * b * inner));
    Index* dst = index->data();
    for (Index j = 0; j < b; ++j) {
      for (Index i = 0; i < a; ++i) {
        for (Index p = 0; p < inner; ++p) *dst++ = (i * b + j) * inner + p;
      }
    }
    return IndexMap{std::move(index), a * b * inner, true};
  });
}

Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0); }

}  // namespace

Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 4) throw ShapeError("conv3x3 expects [C,N,H,W], got " + to_string(x.shape()));
  const Index c = x.dim(0), n = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index out_c = bias.numel();
  if (weight.numel() != out_c * c * 9) {
    throw ShapeError("conv3x3 weight size mismatch for input " + to_string(x.shape()));
  }
  const Index cols = n * h * w;
  Tensor patches = gather(x, im2col_map(c, n, h, w), {c * 9, cols});
  Tensor y = matmul(reshape(weight, {out_c, c * 9}), patches);
  y = add(y, matmul(reshape(bias, {out_c, 1}), ones({1, cols})));
  return reshape(y, {out_c, n, h, w});
}

Tensor maxpool2x2(const Tensor& x) {
  const Index c = x.dim(0), n = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = h / 2, ow = w / 2;
  auto index = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(c * n * oh * ow));
  auto v = x.values();
  Index* dst = index->data();
  for (Index plane = 0; plane < c * n; ++plane) {
    const Index base = plane * h * w;
    for (Index y = 0; y < oh; ++y) {
      for (Index xx = 0; xx < ow; ++xx) {
        Index best = base + (2 * y) * w + 2 * xx;
        for (Index dy = 0; dy < 2; ++dy) {
          for (Index dx = 0; dx < 2; ++dx) {
            const Index at = base + (2 * y + dy) * w + 2 * xx + dx;
            if (v[static_cast<std::size_t>(at)] > v[static_cast<std::size_t>(best)]) best = at;
          }
        }
        *dst++ = best;
      }
    }
  }
  return gather(x, IndexMap{std::move(index), x.numel(), true}, {c, n, oh, ow});
}

Tensor to_channel_major(const Tensor& x) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (n == 1 || c == 1) return reshape(x, {c, n, h, w});
  return gather(x, swap_leading_map(n, c, h * w), {c, n, h, w});
}

Tensor to_rows(const Tensor& x) {
  const Index c = x.dim(0), n = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (n == 1 || c == 1) return reshape(x, {n, c * h * w});
  return reshape(gather(x, swap_leading_map(c, n, h * w), {n, c, h, w}), {n, c * h * w});
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const Index n = x.dim(0);
  const Index out = bias.numel();
  Tensor y = matmul(x, reshape(weight, {out, x.dim(1)}), false, true);
  return add(y, matmul(ones({n, 1}), reshape(bias, {1, out})));
}

}  // namespace nn

Tensor forward(const ModelSpec& spec, const Tensor& theta, const Tensor& x) {
  if (theta.numel() != parameter_count(spec)) {
    throw ShapeError("forward: parameter vector has " + std::to_string(theta.numel()) +
                     " entries, model needs " + std::to_string(parameter_count(spec)));
  }
  const InputShape& in = spec.input;
  if (x.rank() != 4 || x.dim(1) != in.channels || x.dim(2) != in.height || x.dim(3) != in.width) {
    throw ShapeError("forward: input " + to_string(x.shape()) + " does not match model input [N x " +
                     std::to_string(in.channels) + "x" + std::to_string(in.height) + "x" +
                     std::to_string(in.width) + "]");
  }
  const auto layout = layer_layout(spec);
  std::vector<Tensor> p;
  p.reserve(layout.size());
  for (const LayerRecord& layer : layout) p.push_back(slice(theta, layer.offset, layer.shape));

  const Index n = x.dim(0);
  if (spec.kind == ModelKind::kMlp) {
    Tensor h = reshape(x, {n, in.size()});
    h = relu(nn::linear(h, p[0], p[1]));
    h = relu(nn::linear(h, p[2], p[3]));
    h = relu(nn::linear(h, p[4], p[5]));
    return nn::linear(h, p[6], p[7]);
  }
  Tensor h = nn::to_channel_major(x);
  h = relu(nn::conv3x3(h, p[0], p[1]));
  h = relu(nn::conv3x3(h, p[2], p[3]));
  h = nn::maxpool2x2(h);
  h = relu(nn::conv3x3(h, p[4], p[5]));
  h = nn::maxpool2x2(h);
  return nn::linear(nn::to_rows(h), p[6], p[7]);
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy expects [batch x classes] logits");
  const Index b = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(labels.size()) != b) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(b));
  }
  auto v = logits.values();
  std::vector<double> shift(static_cast<std::size_t>(b * k));
  auto picks = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(b));
  for (Index i = 0; i < b; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " outside [0," +
                              std::to_string(k) + ")");
    }
    double m = v[static_cast<std::size_t>(i * k)];
    for (Index j = 1; j < k; ++j) m = std::max(m, v[static_cast<std::size_t>(i * k + j)]);
    for (Index j = 0; j < k; ++j) shift[static_cast<std::size_t>(i * k + j)] = m;
    (*picks)[static_cast<std::size_t>(i)] = i * k + y;
  }
  Tensor z = sub(logits, Tensor({b, k}, std::move(shift)));
  Tensor lse = log(matmul(exp(z), Tensor::full({k, 1}, 1.0)));
  Tensor picked = gather(z, IndexMap{std::move(picks), b * k, true}, {b, 1});
  return affine(sum(sub(lse, picked)), 1.0 / static_cast<double>(b));
}

LossGrads loss_grads(const ModelSpec& spec, const Tensor& theta, const Tensor& x,
                     std::span<const int> labels, GradRequest request) {
  auto run = [&](Tape& tape) {
    Tensor th = theta.tracked() ? theta : tape.watch(theta);
    Tensor in = x;
    if (request.input && !x.tracked()) in = tape.watch(x);
    LossGrads out;
    out.loss = cross_entropy(forward(spec, th, in), labels);
    if (request.input) {
      std::array<Tensor, 2> wrt{th, in};
      auto g = grad(out.loss, wrt, request.create_graph);
      out.params = std::move(g[0]);
      out.input = std::move(g[1]);
    } else {
      out.params = grad(out.loss, th, request.create_graph);
    }
    return out;
  };
  if (request.create_graph) {
    Tape* tape = Tape::active();
    if (tape == nullptr) throw std::logic_error("loss_grads(create_graph) needs an active tape");
    return run(*tape);
  }
  Tape tape;
  LossGrads out = run(tape);
  out.loss = out.loss.detach();
  out.params = out.params.detach();
  if (out.input.defined()) out.input = out.input.detach();
  return out;
}

std::vector<int> predict(const ParamVector& params, const Tensor& x) {
  Tensor logits = forward(params, x.detach());
  const Index b = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(b));
  auto v = logits.values();
  for (Index i = 0; i < b; ++i) {
    Index best = 0;
    for (Index j = 1; j < k; ++j) {
      if (v[static_cast<std::size_t>(i * k + j)] > v[static_cast<std::size_t>(i * k + best)]) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  std::uint64_t take(int width) {
    if (pos + static_cast<std::size_t>(width) > bytes.size()) {
      throw std::runtime_error("checkpoint truncated");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= std::uint64_t{bytes[pos + static_cast<std::size_t>(i)]} << (8 * i);
    pos += static_cast<std::size_t>(width);
    return v;
  }
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamVector& params) {
  std::vector<std::uint8_t> out{'F', 'L', 'C', 'K'};
  put_u32(out, kCheckpointVersion);
  put_u32(out, params.spec.kind == ModelKind::kMlp ? 0u : 1u);
  put_u32(out, static_cast<std::uint32_t>(params.spec.input.channels));
  put_u32(out, static_cast<std::uint32_t>(params.spec.input.height));
  put_u32(out, static_cast<std::uint32_t>(params.spec.input.width));
  put_u32(out, static_cast<std::uint32_t>(params.spec.num_classes));
  put_u32(out, static_cast<std::uint32_t>(params.spec.width));
  put_u64(out, static_cast<std::uint64_t>(params.size()));
  for (double v : params.values.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

ParamVector decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 'F' || bytes[1] != 'L' || bytes[2] != 'C' || bytes[3] != 'K') {
    throw std::runtime_error("checkpoint: bad magic");
  }
  Reader r{bytes, 4};
  const auto version = static_cast<std::uint32_t>(r.take(4));
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  ModelSpec spec;
  const auto kind = r.take(4);
  if (kind > 1) throw std::runtime_error("checkpoint: unknown model kind");
  spec.kind = kind == 0 ? ModelKind::kMlp : ModelKind::kConvNetS;
  spec.input.channels = static_cast<Index>(r.take(4));
  spec.input.height = static_cast<Index>(r.take(4));
  spec.input.width = static_cast<Index>(r.take(4));
  spec.num_classes = static_cast<Index>(r.take(4));
  spec.width = static_cast<Index>(r.take(4));
  const auto count = r.take(8);
  if (count != static_cast<std::uint64_t>(parameter_count(spec))) {
    throw std::runtime_error("checkpoint: parameter count does not match model spec");
  }
  if (bytes.size() - r.pos != count * 8) throw std::runtime_error("checkpoint truncated");
  std::vector<double> values(count);
  for (auto& v : values) v = std::bit_cast<double>(r.take(8));
  return make_params(spec, Tensor::vector(std::move(values)));
}

void save_checkpoint(const std::filesystem::path& path, const ParamVector& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ParamVector load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace fuleak
