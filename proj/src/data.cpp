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

#include "fuleak/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

namespace fuleak {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

}  // namespace

Tensor Dataset::gather_images(std::span<const Index> idx) const {
  const InputShape s = shape();
  const Index per = s.size();
  std::vector<double> out(static_cast<std::size_t>(per * static_cast<Index>(idx.size())));
  auto src = images.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= size()) throw std::out_of_range("sample index out of range");
    std::copy_n(src.begin() + idx[i] * per, per, out.begin() + static_cast<Index>(i) * per);
  }
  return Tensor({static_cast<Index>(idx.size()), s.channels, s.height, s.width}, std::move(out));
}

std::vector<int> Dataset::gather_labels(std::span<const Index> idx) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(labels.at(static_cast<std::size_t>(i)));
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dataset parse_idx(std::span<const std::uint8_t> ib, std::span<const std::uint8_t> lb) {
  if (ib.size() < 16) throw FormatError("idx images: truncated header");
  if (lb.size() < 8) throw FormatError("idx labels: truncated header");
  if (read_be32(ib, 0) != 0x00000803) throw FormatError("idx images: bad magic");
  if (read_be32(lb, 0) != 0x00000801) throw FormatError("idx labels: bad magic");
  const std::uint64_t n = read_be32(ib, 4);
  const std::uint64_t rows = read_be32(ib, 8);
  const std::uint64_t cols = read_be32(ib, 12);
  const std::uint64_t nl = read_be32(lb, 4);
  if (n != nl) throw FormatError("idx: image and label counts differ");
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) {
    throw FormatError("idx images: implausible dimensions");
  }
  if (ib.size() - 16 != n * rows * cols) throw FormatError("idx images: truncated or oversized payload");
  if (lb.size() - 8 != n) throw FormatError("idx labels: truncated or oversized payload");

  Dataset ds;
  ds.name = "idx";
  std::vector<double> px(n * rows * cols);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = ib[16 + i] / 255.0;
  ds.images = Tensor({static_cast<Index>(n), 1, static_cast<Index>(rows), static_cast<Index>(cols)},
                     std::move(px));
  ds.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = lb[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = std::max(10, max_label + 1);
  return ds;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto ib = read_file(images);
  const auto lb = read_file(labels);
  Dataset ds = parse_idx(ib, lb);
  ds.name = images.filename().string();
  return ds;
}

Dataset parse_cifar10(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kRecord = 3073;
  if (bytes.empty() || bytes.size() % kRecord != 0) {
    throw FormatError("cifar10: file length is not a multiple of 3073");
  }
  const std::size_t n = bytes.size() / kRecord;
  Dataset ds;
  ds.name = "cifar10";
  std::vector<double> px(n * 3072);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kRecord;
    if (rec[0] > 9) throw FormatError("cifar10: label out of range");
    ds.labels[i] = rec[0];
    for (std::size_t p = 0; p < 3072; ++p) px[i * 3072 + p] = rec[1 + p] / 255.0;
  }
  ds.images = Tensor({static_cast<Index>(n), 3, 32, 32}, std::move(px));
  return ds;
}

Dataset load_cifar10(std::span<const std::filesystem::path> batches) {
  std::vector<std::uint8_t> all;
  for (const auto& p : batches) {
    const auto b = read_file(p);
    if (b.size() % 3073 != 0) throw FormatError("cifar10: " + p.string() + " is truncated");
    all.insert(all.end(), b.begin(), b.end());
  }
  return parse_cifar10(all);
}

Dataset synth_blobs(int num_classes, Index per_class, InputShape shape, double sep,
                    std::uint64_t seed) {
  if (num_classes < 1 || per_class < 0) throw std::invalid_argument("synth_blobs: bad sizes");
  std::mt19937_64 rng(seed);
  const Index d = shape.size();
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  std::vector<std::vector<double>> means(static_cast<std::size_t>(num_classes));
  for (auto& m : means) {
    m.resize(static_cast<std::size_t>(d));
    for (auto& v : m) v = 0.5 + sep * unit(rng);
  }
  std::normal_distribution<double> noise(0.0, 0.2);
  const Index n = per_class * num_classes;
  std::vector<double> px(static_cast<std::size_t>(n * d));
  Dataset ds;
  ds.name = "synth";
  ds.num_classes = num_classes;
  ds.labels.resize(static_cast<std::size_t>(n));
  // Interleave classes so any prefix is balanced.
  for (Index i = 0; i < n; ++i) {
    const int k = static_cast<int>(i % num_classes);
    ds.labels[static_cast<std::size_t>(i)] = k;
    for (Index p = 0; p < d; ++p) {
      const double v = means[static_cast<std::size_t>(k)][static_cast<std::size_t>(p)] + noise(rng);
      px[static_cast<std::size_t>(i * d + p)] = std::clamp(v, 0.0, 1.0);
    }
  }
  ds.images = Tensor({n, shape.channels, shape.height, shape.width}, std::move(px));
  return ds;
}

std::vector<ClientDataset> partition(std::shared_ptr<const Dataset> ds, int num_clients,
                                     std::uint64_t seed) {
  const Index n = ds->size();
  if (num_clients < 1 || num_clients > n) {
    throw std::invalid_argument("partition: need 1 <= num_clients <= dataset size");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const Index base = n / num_clients, extra = n % num_clients;
  std::vector<ClientDataset> out(static_cast<std::size_t>(num_clients));
  Index at = 0;
  for (int c = 0; c < num_clients; ++c) {
    const Index len = base + (c < extra ? 1 : 0);
    auto& cd = out[static_cast<std::size_t>(c)];
    cd.client_id = c;
    cd.base = ds;
    cd.indices.assign(order.begin() + at, order.begin() + at + len);
    cd.retain = cd.indices;
    at += len;
  }
  return out;
}

ClientDataset mark_unlearn(const ClientDataset& cd, Index k, std::uint64_t seed) {
  if (k < 0 || k > cd.size()) {
    throw std::invalid_argument("mark_unlearn: k=" + std::to_string(k) + " exceeds client size " +
                                std::to_string(cd.size()));
  }
  std::vector<Index> pos(cd.indices.size());
  std::iota(pos.begin(), pos.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::vector<char> chosen(cd.indices.size(), 0);
  ClientDataset out = cd;
  out.unlearn.clear();
  out.retain.clear();
  for (Index i = 0; i < k; ++i) {
    chosen[static_cast<std::size_t>(pos[static_cast<std::size_t>(i)])] = 1;
    out.unlearn.push_back(cd.indices[static_cast<std::size_t>(pos[static_cast<std::size_t>(i)])]);
  }
  for (std::size_t i = 0; i < cd.indices.size(); ++i) {
    if (!chosen[i]) out.retain.push_back(cd.indices[i]);
  }
  return out;
}

}  // namespace fuleak
