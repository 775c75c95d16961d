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
#include <random>

#include "fuleak/metrics.hpp"

namespace fuleak {
namespace {

Tensor random(Shape s, std::uint64_t seed, double lo = 0, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(numel_of(s)));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(s), std::move(v));
}

TEST(Tv, Examples) {
  EXPECT_EQ(tv(Tensor::full({1, 4, 4}, 0.2)).item(), 0.0);
  EXPECT_EQ(tv(Tensor({1, 2, 2}, {0, 1, 0, 1})).item(), 2.0);
}

TEST(Psnr, Examples) {
  const Tensor a = Tensor::full({1, 4, 4}, 0.5);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_NEAR(psnr(Tensor::full({1, 4, 4}, 0.6), a), 20.0, 1e-9);
  EXPECT_NEAR(psnr(Tensor::full({1, 4, 4}, 1.0), a), 6.0206, 1e-4);
  EXPECT_THROW(psnr(a, Tensor::full({1, 4, 5}, 0.5)), ShapeError);
}

TEST(Ssim, IdentityAndConstants) {
  const Tensor a = random({1, 16, 16}, 2);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ssim(Tensor::zeros({1, 12, 12}), Tensor::full({1, 12, 12}, 1.0)), 1e-4 / (1 + 1e-4), 1e-12);
}

TEST(Ssim, SmallImageFallsBack) {
  const SsimResult r = ssim_ex(random({1, 6, 6}, 1), random({1, 6, 6}, 2));
  EXPECT_TRUE(r.global_fallback);
  EXPECT_GE(r.value, -1.0);
  EXPECT_LE(r.value, 1.0);
}

TEST(Ssim, SkimageReference) {
  // scikit-image structural_similarity(gaussian_weights=True, sigma=1.5,
  // use_sample_covariance=False, data_range=1) on (i*37 + j*101) % 256 / 255
  // against (7i^2 + 13j + ij) % 251 / 250.
  std::vector<double> a, b;
  for (int i = 0; i < 28; ++i) {
    for (int j = 0; j < 28; ++j) {
      a.push_back(((i * 37 + j * 101) % 256) / 255.0);
      b.push_back(((i * i * 7 + j * 13 + i * j) % 251) / 250.0);
    }
  }
  EXPECT_NEAR(ssim(Tensor({1, 28, 28}, a), Tensor({1, 28, 28}, b)), 0.017784890891906505, 1e-6);
}

TEST(Assign, BruteForceAndPermutation) {
  const Tensor rec = random({3, 1, 12, 12}, 3), tru = random({3, 1, 12, 12}, 4);
  auto img = [](const Tensor& t, int i) { return slice(t, i * 144, {1, 12, 12}); };
  std::vector<int> p = {0, 1, 2}, best_p;
  double best = -1e9;
  do {
    double s = 0;
    for (int i = 0; i < 3; ++i) s += ssim(img(rec, p[i]), img(tru, i));
    if (s > best) best = s, best_p = p;
  } while (std::next_permutation(p.begin(), p.end()));
  const MetricsRecord r = assign_batch(rec, tru);
  EXPECT_EQ(r.assignment, best_p);
  EXPECT_NEAR(r.mean.ssim * 3, best, 1e-12);
  EXPECT_THROW(assign_batch(rec, random({2, 1, 12, 12}, 5)), ShapeError);
}

TEST(Defense, NoiseIdentityDeterminismAndSpread) {
  const Tensor s = random({100000}, 6), c = random({100000}, 7);
  EXPECT_EQ(defend_noise(c, s, 0.0, 1).to_vector(), c.to_vector());
  const Tensor a = defend_noise(c, s, 1e-3, 9), b = defend_noise(c, s, 1e-3, 9);
  EXPECT_EQ(a.to_vector(), b.to_vector());
  double m = 0, q = 0;
  for (Index i = 0; i < a.numel(); ++i) {
    const double d = a[i] - c[i];
    m += d;
    q += d * d;
  }
  m /= 1e5;
  const double sd = std::sqrt(q / 1e5 - m * m);
  EXPECT_NEAR(sd, 1e-3, 2e-5);
}

TEST(Defense, Prune) {
  const Tensor s = Tensor::vector({1.0, 1.0});
  const Tensor c = Tensor::vector({1.5, 1.01});
  EXPECT_EQ(defend_prune(c, s, 0.0).to_vector(), c.to_vector());
  const Tensor p = defend_prune(c, s, 0.1);
  EXPECT_EQ(p[0], 1.5);
  EXPECT_EQ(p[1], 1.0);
}

TEST(Defense, PruneGaussianFraction) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> u(200000);
  for (auto& v : u) v = n(rng);
  const Tensor s = Tensor::zeros({200000});
  const Tensor p = defend_prune(Tensor::vector(u), s, 1.0);
  Index zero = 0;
  for (double v : p.values()) zero += v == 0.0;
  EXPECT_NEAR(static_cast<double>(zero) / 200000.0, 0.6827, 0.01);
}

TEST(Pnm, RoundTripQuantizes) {
  const auto dir = std::filesystem::temp_directory_path() / "fuleak_pnm_test";
  std::filesystem::create_directories(dir);
  const Tensor g = random({1, 5, 7}, 8), c = random({3, 4, 4}, 9);
  write_pnm(dir / "g.pgm", g);
  write_pnm(dir / "c.ppm", c);
  const Tensor g2 = read_pnm(dir / "g.pgm"), c2 = read_pnm(dir / "c.ppm");
  EXPECT_EQ(g2.shape(), g.shape());
  EXPECT_EQ(c2.shape(), c.shape());
  for (Index i = 0; i < g.numel(); ++i) EXPECT_NEAR(g2[i], g[i], 0.5 / 255 + 1e-12);
  for (Index i = 0; i < c.numel(); ++i) EXPECT_NEAR(c2[i], c[i], 0.5 / 255 + 1e-12);
  std::filesystem::remove_all(dir);
}

TEST(FormatDouble, RoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(INFINITY), "inf");
}

}  // namespace
}  // namespace fuleak
