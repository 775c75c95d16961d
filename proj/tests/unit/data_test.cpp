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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "fuleak/data.hpp"

namespace fuleak {
namespace {

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

std::vector<std::uint8_t> idx_images(std::uint32_t magic, std::vector<std::uint8_t> pixels) {
  std::vector<std::uint8_t> b;
  for (auto v : {magic, 2u, 2u, 2u}) {
    auto w = be32(v);
    b.insert(b.end(), w.begin(), w.end());
  }
  b.insert(b.end(), pixels.begin(), pixels.end());
  return b;
}

std::vector<std::uint8_t> idx_labels(std::vector<std::uint8_t> labels) {
  std::vector<std::uint8_t> b = be32(0x801);
  auto n = be32(static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), n.begin(), n.end());
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

TEST(Idx, TinySyntheticFile) {
  const Dataset d = parse_idx(idx_images(0x803, {0, 255, 0, 255, 255, 0, 255, 0}), idx_labels({3, 9}));
  ASSERT_EQ(d.size(), 2);
  EXPECT_EQ(d.images.shape(), (Shape{2, 1, 2, 2}));
  EXPECT_EQ(d.images.to_vector(), (std::vector<double>{0, 1, 0, 1, 1, 0, 1, 0}));
  EXPECT_EQ(d.labels, (std::vector<int>{3, 9}));
}

TEST(Idx, BadMagic) {
  try {
    parse_idx(idx_images(0x802, std::vector<std::uint8_t>(8)), idx_labels({0, 0}));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
}

TEST(Idx, CountMismatch) {
  EXPECT_THROW(parse_idx(idx_images(0x803, std::vector<std::uint8_t>(8)), idx_labels({1})),
               FormatError);
}

// data/mnist holds the 8,000/2,000 split built by tools/fetch_mnist.py; the
// official 60,000-image file is checked instead when it is dropped in.
TEST(Idx, MnistFiles) {
  const std::filesystem::path dir = FULEAK_MNIST_DIR;
  if (!std::filesystem::exists(dir / "train-images-idx3-ubyte")) GTEST_SKIP() << "no MNIST";
  const Dataset d = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  if (d.size() == 60000) {
    EXPECT_EQ(d.labels.front(), 5);
  } else {
    EXPECT_EQ(d.images.shape(), (Shape{8000, 1, 28, 28}));
    EXPECT_EQ(d.labels.front(), 2);
  }
  const auto [lo, hi] = std::minmax_element(d.images.values().begin(), d.images.values().end());
  EXPECT_GE(*lo, 0.0);
  EXPECT_LE(*hi, 1.0);
}

TEST(Cifar, SingleRecord) {
  std::vector<std::uint8_t> rec(3073, 128);
  rec[0] = 7;
  const Dataset d = parse_cifar10(rec);
  ASSERT_EQ(d.size(), 1);
  EXPECT_EQ(d.labels[0], 7);
  EXPECT_EQ(d.images.shape(), (Shape{1, 3, 32, 32}));
  for (double v : d.images.values()) EXPECT_DOUBLE_EQ(v, 128.0 / 255.0);
}

TEST(Cifar, Truncated) {
  EXPECT_THROW(parse_cifar10(std::vector<std::uint8_t>(3000, 0)), FormatError);
}

TEST(Synth, DeterministicAndDegenerate) {
  const Dataset a = synth_blobs(3, 5, {1, 4, 4}, 0.0, 11), b = synth_blobs(3, 5, {1, 4, 4}, 0.0, 11);
  EXPECT_EQ(a.images.to_vector(), b.images.to_vector());
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.size(), 15);
  for (double v : a.images.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Synth, NearestCentroidSeparable) {
  const Dataset d = synth_blobs(2, 200, {1, 8, 8}, 0.5, 3);
  const Index p = 64;
  std::vector<double> mean(2 * p, 0.0);
  for (Index i = 0; i < d.size(); ++i) {
    for (Index j = 0; j < p; ++j) mean[d.labels[i] * p + j] += d.images[i * p + j] / 200.0;
  }
  int right = 0;
  for (Index i = 0; i < d.size(); ++i) {
    double dist[2] = {0, 0};
    for (int c = 0; c < 2; ++c) {
      for (Index j = 0; j < p; ++j) dist[c] += std::pow(d.images[i * p + j] - mean[c * p + j], 2);
    }
    right += (dist[1] < dist[0] ? 1 : 0) == d.labels[i];
  }
  EXPECT_GT(right / static_cast<double>(d.size()), 0.95);
}

std::shared_ptr<const Dataset> blobs(Index n) {
  auto d = std::make_shared<Dataset>(synth_blobs(1, n, {1, 2, 2}, 0.0, 1));
  return d;
}

TEST(Partition, EvenShards) {
  const auto parts = partition(blobs(100), 10, 4);
  for (const auto& p : parts) EXPECT_EQ(p.size(), 10);
}

TEST(Partition, RemainderRuleAndDisjoint) {
  const auto parts = partition(blobs(101), 10, 4);
  std::multiset<Index> sizes;
  std::set<Index> seen;
  for (const auto& p : parts) {
    sizes.insert(p.size());
    seen.insert(p.indices.begin(), p.indices.end());
  }
  EXPECT_EQ(sizes.count(11), 1u);
  EXPECT_EQ(sizes.count(10), 9u);
  EXPECT_EQ(seen.size(), 101u);
}

TEST(Partition, Deterministic) {
  const auto a = partition(blobs(50), 3, 9), b = partition(blobs(50), 3, 9);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(a[i].indices, b[i].indices);
}

TEST(MarkUnlearn, Boundaries) {
  const auto parts = partition(blobs(20), 2, 1);
  EXPECT_TRUE(mark_unlearn(parts[0], 0, 5).unlearn.empty());
  const ClientDataset all = mark_unlearn(parts[0], parts[0].size(), 5);
  EXPECT_TRUE(all.retain.empty());
  const ClientDataset a = mark_unlearn(parts[0], 1, 5), b = mark_unlearn(parts[0], 1, 5);
  ASSERT_EQ(a.unlearn.size(), 1u);
  EXPECT_EQ(a.unlearn, b.unlearn);
}

TEST(MarkUnlearn, SplitsLocalSet) {
  const auto parts = partition(blobs(30), 1, 2);
  const ClientDataset c = mark_unlearn(parts[0], 4, 3);
  std::vector<Index> u = c.unlearn, r = c.retain, all = c.indices;
  std::vector<Index> both;
  std::sort(u.begin(), u.end());
  std::sort(r.begin(), r.end());
  std::set_intersection(u.begin(), u.end(), r.begin(), r.end(), std::back_inserter(both));
  EXPECT_TRUE(both.empty());
  u.insert(u.end(), r.begin(), r.end());
  std::sort(u.begin(), u.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(u, all);
}

}  // namespace
}  // namespace fuleak
