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
#include <string>
#include <vector>

#include "fuleak/tensor.hpp"

namespace fuleak {

// Anisotropic total variation summed over every leading index of x
// [..., H, W]. Differentiable; subgradient 0 at kinks.
Tensor tv(const Tensor& x);

double mse(const Tensor& a, const Tensor& b);
// 10 log10(1 / mse); +inf when the images are identical.
double psnr(const Tensor& a, const Tensor& b);

struct SsimResult {
  double value = 0.0;
  bool global_fallback = false;  // image smaller than the 11x11 window
};

// Mean SSIM over valid 11x11 Gaussian (sigma 1.5) windows and channels for
// images [C x H x W] (or [H x W]) with dynamic range 1.
SsimResult ssim_ex(const Tensor& a, const Tensor& b);
inline double ssim(const Tensor& a, const Tensor& b) { return ssim_ex(a, b).value; }

struct ImageScore {
  double ssim = 0.0;
  double psnr = 0.0;
  double mse = 0.0;
};

struct MetricsRecord {
  std::vector<ImageScore> per_image;  // in truth order
  std::vector<int> assignment;        // truth i <- recon assignment[i]
  ImageScore mean;
};

// Pairs reconstructions [k x C x H x W] with ground truth to maximize total
// SSIM. Exhaustive up to k = 8, greedy beyond.
MetricsRecord assign_batch(const Tensor& recons, const Tensor& truths);

// theta_c + N(0, sigma^2) per entry.
Tensor defend_noise(const Tensor& theta_c, const Tensor& theta_s, double sigma,
                    std::uint64_t seed);
// Zeroes update components u = theta_c - theta_s with |u_i| < tau.
Tensor defend_prune(const Tensor& theta_c, const Tensor& theta_s, double tau);

// Pixels clamped to [0,1] and scaled to 0..255.
Tensor clamp01(const Tensor& x);
// P5 for one channel, P6 for three; x is [C x H x W].
void write_pnm(const std::filesystem::path& path, const Tensor& x);
Tensor read_pnm(const std::filesystem::path& path);

// 17 significant digits; infinities as "inf"/"-inf".
std::string format_double(double v);

void write_metrics_csv(const std::filesystem::path& path, const MetricsRecord& rec);

}  // namespace fuleak
