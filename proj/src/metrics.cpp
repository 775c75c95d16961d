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

#include "fuleak/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>

#include "fuleak/data.hpp"

namespace fuleak {

namespace {

struct TvMaps {
  IndexMap down_a, down_b, right_a, right_b;
  Index down_n = 0, right_n = 0;
};

TvMaps tv_maps(Index planes, Index h, Index w) {
  static std::mutex mu;
  static std::map<std::tuple<Index, Index, Index>, TvMaps> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(planes, h, w);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto da = std::make_shared<std::vector<Index>>();
  auto db = std::make_shared<std::vector<Index>>();
  auto ra = std::make_shared<std::vector<Index>>();
  auto rb = std::make_shared<std::vector<Index>>();
  for (Index p = 0; p < planes; ++p) {
    for (Index i = 0; i < h; ++i) {
      for (Index j = 0; j < w; ++j) {
        const Index at = (p * h + i) * w + j;
        if (i + 1 < h) {
          da->push_back(at + w);
          db->push_back(at);
        }
        if (j + 1 < w) {
          ra->push_back(at + 1);
          rb->push_back(at);
        }
      }
    }
  }
  const Index n = planes * h * w;
  TvMaps m;
  m.down_n = static_cast<Index>(da->size());
  m.right_n = static_cast<Index>(ra->size());
  m.down_a = {std::move(da), n, true};
  m.down_b = {std::move(db), n, true};
  m.right_a = {std::move(ra), n, true};
  m.right_b = {std::move(rb), n, true};
  cache.emplace(key, m);
  return m;
}

// Normalized 11-tap Gaussian, sigma 1.5.
const std::array<double, 11>& gauss11() {
  static const std::array<double, 11> g = [] {
    std::array<double, 11> k{};
    double s = 0.0;
    for (int i = 0; i < 11; ++i) {
      k[static_cast<std::size_t>(i)] = std::exp(-((i - 5) * (i - 5)) / (2.0 * 1.5 * 1.5));
      s += k[static_cast<std::size_t>(i)];
    }
    for (auto& v : k) v /= s;
    return k;
  }();
  return g;
}

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

double ssim_formula(double mx, double my, double vx, double vy, double cxy) {
  return ((2 * mx * my + kC1) * (2 * cxy + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
}

}  // namespace

Tensor tv(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("tv expects [..., H, W]");
  const Index h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  const Index planes = x.numel() / (h * w);
  const TvMaps m = tv_maps(planes, h, w);
  Tensor total = Tensor::scalar(0.0);
  if (m.down_n > 0) {
    total = add(total, sum(abs(sub(gather(x, m.down_a, {m.down_n}), gather(x, m.down_b, {m.down_n})))));
  }
  if (m.right_n > 0) {
    total = add(total,
                sum(abs(sub(gather(x, m.right_a, {m.right_n}), gather(x, m.right_b, {m.right_n})))));
  }
  return total;
}

double mse(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw ShapeError("mse: shape mismatch");
  auto x = a.values(), y = b.values();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

double psnr(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("psnr: shape mismatch");
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

SsimResult ssim_ex(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("ssim: shape mismatch");
  if (a.rank() < 2) throw ShapeError("ssim expects [C x H x W] or [H x W]");
  const Index h = a.dim(a.rank() - 2), w = a.dim(a.rank() - 1);
  const Index planes = a.numel() / (h * w);
  auto x = a.values(), y = b.values();
  SsimResult out;
  if (h < 11 || w < 11) {
    out.global_fallback = true;
    double acc = 0.0;
    const double n = static_cast<double>(h * w);
    for (Index p = 0; p < planes; ++p) {
      double mx = 0, my = 0;
      for (Index i = 0; i < h * w; ++i) {
        mx += x[static_cast<std::size_t>(p * h * w + i)];
        my += y[static_cast<std::size_t>(p * h * w + i)];
      }
      mx /= n;
      my /= n;
      double vx = 0, vy = 0, cxy = 0;
      for (Index i = 0; i < h * w; ++i) {
        const double dx = x[static_cast<std::size_t>(p * h * w + i)] - mx;
        const double dy = y[static_cast<std::size_t>(p * h * w + i)] - my;
        vx += dx * dx;
        vy += dy * dy;
        cxy += dx * dy;
      }
      acc += ssim_formula(mx, my, vx / n, vy / n, cxy / n);
    }
    out.value = acc / static_cast<double>(planes);
    return out;
  }
  const auto& g = gauss11();
  const Index oh = h - 10, ow = w - 10;
  double acc = 0.0;
  for (Index p = 0; p < planes; ++p) {
    const double* px = x.data() + p * h * w;
    const double* py = y.data() + p * h * w;
    for (Index i = 0; i < oh; ++i) {
      for (Index j = 0; j < ow; ++j) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (Index u = 0; u < 11; ++u) {
          for (Index v = 0; v < 11; ++v) {
            const double wt = g[static_cast<std::size_t>(u)] * g[static_cast<std::size_t>(v)];
            const double xv = px[(i + u) * w + j + v];
            const double yv = py[(i + u) * w + j + v];
            mx += wt * xv;
            my += wt * yv;
            sxx += wt * xv * xv;
            syy += wt * yv * yv;
            sxy += wt * xv * yv;
          }
        }
        acc += ssim_formula(mx, my, sxx - mx * mx, syy - my * my, sxy - mx * my);
      }
    }
  }
  out.value = acc / static_cast<double>(planes * oh * ow);
  return out;
}

MetricsRecord assign_batch(const Tensor& recons, const Tensor& truths) {
  if (recons.shape() != truths.shape() || recons.rank() != 4) {
    throw ShapeError("assign_batch: reconstructions " + to_string(recons.shape()) +
                     " and truths " + to_string(truths.shape()) + " must match as [k,C,H,W]");
  }
  const Index k = recons.dim(0);
  const Index per = recons.numel() / std::max<Index>(k, 1);
  const Shape img{recons.dim(1), recons.dim(2), recons.dim(3)};
  auto image = [&](const Tensor& t, Index i) { return slice(t, i * per, img); };
  std::vector<std::vector<double>> score(static_cast<std::size_t>(k),
                                         std::vector<double>(static_cast<std::size_t>(k)));
  for (Index t = 0; t < k; ++t) {
    for (Index r = 0; r < k; ++r) {
      score[static_cast<std::size_t>(t)][static_cast<std::size_t>(r)] =
          ssim(image(recons, r), image(truths, t));
    }
  }
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  if (k <= 8) {
    double best_total = -std::numeric_limits<double>::infinity();
    do {
      double total = 0.0;
      for (Index t = 0; t < k; ++t) {
        total += score[static_cast<std::size_t>(t)][static_cast<std::size_t>(perm[static_cast<std::size_t>(t)])];
      }
      if (total > best_total) {
        best_total = total;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    std::vector<char> used(static_cast<std::size_t>(k), 0);
    for (Index t = 0; t < k; ++t) {
      int pick = -1;
      for (Index r = 0; r < k; ++r) {
        if (used[static_cast<std::size_t>(r)]) continue;
        if (pick < 0 || score[static_cast<std::size_t>(t)][static_cast<std::size_t>(r)] >
                            score[static_cast<std::size_t>(t)][static_cast<std::size_t>(pick)]) {
          pick = static_cast<int>(r);
        }
      }
      used[static_cast<std::size_t>(pick)] = 1;
      best[static_cast<std::size_t>(t)] = pick;
    }
  }
  MetricsRecord rec;
  rec.assignment = best;
  for (Index t = 0; t < k; ++t) {
    const Tensor r = image(recons, best[static_cast<std::size_t>(t)]);
    const Tensor g = image(truths, t);
    ImageScore s{score[static_cast<std::size_t>(t)][static_cast<std::size_t>(best[static_cast<std::size_t>(t)])],
                 psnr(r, g), mse(r, g)};
    rec.per_image.push_back(s);
    rec.mean.ssim += s.ssim / static_cast<double>(k);
    rec.mean.psnr += s.psnr / static_cast<double>(k);
    rec.mean.mse += s.mse / static_cast<double>(k);
  }
  return rec;
}

Tensor defend_noise(const Tensor& theta_c, const Tensor& theta_s, double sigma,
                    std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("noise sigma must be >= 0");
  if (theta_c.numel() != theta_s.numel()) throw ShapeError("defend_noise: size mismatch");
  if (sigma == 0.0) return theta_c.detach();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  std::vector<double> out(theta_c.values().begin(), theta_c.values().end());
  for (auto& v : out) v += n(rng);
  return Tensor(theta_c.shape(), std::move(out));
}

Tensor defend_prune(const Tensor& theta_c, const Tensor& theta_s, double tau) {
  if (tau < 0.0) throw std::invalid_argument("prune tau must be >= 0");
  if (theta_c.numel() != theta_s.numel()) throw ShapeError("defend_prune: size mismatch");
  auto c = theta_c.values(), s = theta_s.values();
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double u = c[i] - s[i];
    out[i] = std::abs(u) < tau ? s[i] : c[i];
  }
  return Tensor(theta_c.shape(), std::move(out));
}

Tensor clamp01(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
  return Tensor(x.shape(), std::move(out));
}

void write_pnm(const std::filesystem::path& path, const Tensor& x) {
  if (x.rank() != 3 || (x.dim(0) != 1 && x.dim(0) != 3)) {
    throw ShapeError("write_pnm expects [1|3 x H x W], got " + to_string(x.shape()));
  }
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  auto v = x.values();
  for (Index i = 0; i < h * w; ++i) {
    for (Index ch = 0; ch < c; ++ch) {
      const double p = std::clamp(v[static_cast<std::size_t>(ch * h * w + i)], 0.0, 1.0);
      out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(255.0 * p))));
    }
  }
}

Tensor read_pnm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  auto number = [&]() {
    const std::string t = token();
    long v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size() || v <= 0 || v > 65535) {
      throw FormatError("pnm: bad header in " + path.string());
    }
    return static_cast<Index>(v);
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P6") throw FormatError("pnm: bad magic in " + path.string());
  const Index c = magic == "P5" ? 1 : 3;
  const Index w = number(), h = number(), maxval = number();
  if (maxval != 255) throw FormatError("pnm: only maxval 255 is supported");
  ++pos;
  if (bytes.size() < pos || bytes.size() - pos != static_cast<std::size_t>(c * h * w)) {
    throw FormatError("pnm: truncated payload in " + path.string());
  }
  std::vector<double> out(static_cast<std::size_t>(c * h * w));
  for (Index i = 0; i < h * w; ++i) {
    for (Index ch = 0; ch < c; ++ch) {
      out[static_cast<std::size_t>(ch * h * w + i)] = bytes[pos + static_cast<std::size_t>(i * c + ch)] / 255.0;
    }
  }
  return Tensor({c, h, w}, std::move(out));
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsRecord& rec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "target_id,ssim,psnr,mse\n";
  for (std::size_t i = 0; i < rec.per_image.size(); ++i) {
    const auto& s = rec.per_image[i];
    out << i << "," << format_double(s.ssim) << "," << format_double(s.psnr) << ","
        << format_double(s.mse) << "\n";
  }
}

}  // namespace fuleak
