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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fuleak/model.hpp"
#include "fuleak/tensor.hpp"

namespace fuleak {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Images [N x C x H x W] with pixels in [0,1] and integer labels.
struct Dataset {
  std::string name;
  Tensor images;
  std::vector<int> labels;
  Index num_classes = 10;

  Index size() const { return static_cast<Index>(labels.size()); }
  InputShape shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }

  // Stacks the selected samples into [k x C x H x W].
  Tensor gather_images(std::span<const Index> idx) const;
  std::vector<int> gather_labels(std::span<const Index> idx) const;
};

// One client's shard. `indices` is the full local set D_c; `unlearn` and
// `retain` split it once mark_unlearn has run.
struct ClientDataset {
  int client_id = 0;
  std::shared_ptr<const Dataset> base;
  std::vector<Index> indices;
  std::vector<Index> unlearn;
  std::vector<Index> retain;

  Index size() const { return static_cast<Index>(indices.size()); }
};

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                  std::span<const std::uint8_t> label_bytes);

Dataset load_cifar10(std::span<const std::filesystem::path> batches);
Dataset parse_cifar10(std::span<const std::uint8_t> bytes);

// Class k is a clipped Gaussian (std 0.2) around a fixed mean image
// 0.5 + sep * d_k, d_k uniform in [-0.5, 0.5] per pixel.
Dataset synth_blobs(int num_classes, Index per_class, InputShape shape, double sep,
                    std::uint64_t seed);

// Shuffled, near-equal disjoint shards; the first N mod K shards get one
// extra sample.
std::vector<ClientDataset> partition(std::shared_ptr<const Dataset> ds, int num_clients,
                                     std::uint64_t seed);

// Moves k uniformly chosen samples of the client into the unlearn set.
ClientDataset mark_unlearn(const ClientDataset& cd, Index k, std::uint64_t seed);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace fuleak
