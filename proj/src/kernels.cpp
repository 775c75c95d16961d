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

#include "fuleak/kernels.hpp"

#include <Eigen/Core>

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fuleak::kernels {

namespace {

inline double apply(BinaryOp op, double x, double y) {
  switch (op) {
    case BinaryOp::kAdd: return x + y;
    case BinaryOp::kSub: return x - y;
    case BinaryOp::kMul: return x * y;
    case BinaryOp::kDiv: return x / y;
  }
  return 0.0;
}

inline double apply(UnaryOp op, double x) {
  switch (op) {
    case UnaryOp::kExp: return std::exp(x);
    case UnaryOp::kLog: return std::log(x);
    case UnaryOp::kSqrt: return std::sqrt(x);
  }
  return 0.0;
}

template <BinaryOp Op>
void binary_loop(const double* a, Index sa, const double* b, Index sb,
                 double* out, Index n) {
#pragma omp parallel for if (n >= kParallelMin) schedule(static)
  for (Index i = 0; i < n; ++i) out[i] = apply(Op, a[i * sa], b[i * sb]);
}

}  // namespace

void gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, const double* a,
          const double* b, double* c) {
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const Matrix>;
  Eigen::Map<Matrix> out(c, m, n);
  if (k == 0) {
    out.setZero();
    return;
  }
  // Eigen peels unaligned heads, so the summation order follows the buffer
  // addresses. Copying into its own aligned storage pins the order down.
  const Matrix am = trans_a ? Matrix(ConstMap(a, k, m).transpose())
                            : Matrix(ConstMap(a, m, k));
  const Matrix bm = trans_b ? Matrix(ConstMap(b, n, k).transpose())
                            : Matrix(ConstMap(b, k, n));
  Matrix prod(m, n);
  prod.noalias() = am * bm;
  out = prod;
}

void binary(BinaryOp op, std::span<const double> a, std::span<const double> b,
            std::span<double> out) {
  const Index n = static_cast<Index>(out.size());
  const Index sa = a.size() == 1 ? 0 : 1;
  const Index sb = b.size() == 1 ? 0 : 1;
  switch (op) {
    case BinaryOp::kAdd: binary_loop<BinaryOp::kAdd>(a.data(), sa, b.data(), sb, out.data(), n); break;
    case BinaryOp::kSub: binary_loop<BinaryOp::kSub>(a.data(), sa, b.data(), sb, out.data(), n); break;
    case BinaryOp::kMul: binary_loop<BinaryOp::kMul>(a.data(), sa, b.data(), sb, out.data(), n); break;
    case BinaryOp::kDiv: binary_loop<BinaryOp::kDiv>(a.data(), sa, b.data(), sb, out.data(), n); break;
  }
}

void unary(UnaryOp op, std::span<const double> a, std::span<double> out) {
  const Index n = static_cast<Index>(out.size());
  const double* src = a.data();
  double* dst = out.data();
#pragma omp parallel for if (n >= kParallelMin) schedule(static)
  for (Index i = 0; i < n; ++i) dst[i] = apply(op, src[i]);
}

void scale(std::span<const double> a, double alpha, double shift,
           std::span<double> out) {
  const Index n = static_cast<Index>(out.size());
  const double* src = a.data();
  double* dst = out.data();
#pragma omp parallel for if (n >= kParallelMin) schedule(static)
  for (Index i = 0; i < n; ++i) dst[i] = alpha * src[i] + shift;
}

void gather(std::span<const double> src, std::span<const Index> index,
            std::span<double> out) {
  const Index n = static_cast<Index>(out.size());
  const double* s = src.data();
  const Index* idx = index.data();
  double* dst = out.data();
#pragma omp parallel for if (n >= kParallelMin) schedule(static)
  for (Index i = 0; i < n; ++i) dst[i] = idx[i] < 0 ? 0.0 : s[idx[i]];
}

void scatter_add(std::span<const double> src, std::span<const Index> index,
                 std::span<double> out, bool injective) {
  const Index n = static_cast<Index>(src.size());
  const double* s = src.data();
  const Index* idx = index.data();
  double* dst = out.data();
  if (injective) {
#pragma omp parallel for if (n >= kParallelMin) schedule(static)
    for (Index i = 0; i < n; ++i) {
      if (idx[i] >= 0) dst[idx[i]] += s[i];
    }
    return;
  }
  for (Index i = 0; i < n; ++i) {
    if (idx[i] >= 0) dst[idx[i]] += s[i];
  }
}

double sum(std::span<const double> a) {
  double acc = 0.0;
  for (double v : a) acc += v;
  return acc;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace reference {

void gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, const double* a,
          const double* b, double* c) {
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      double acc = 0.0;
      for (Index p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] = acc;
    }
  }
}

void binary(BinaryOp op, std::span<const double> a, std::span<const double> b,
            std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.size() == 1 ? a[0] : a[i];
    const double y = b.size() == 1 ? b[0] : b[i];
    out[i] = apply(op, x, y);
  }
}

void unary(UnaryOp op, std::span<const double> a, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(op, a[i]);
}

void gather(std::span<const double> src, std::span<const Index> index,
            std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = index[i] < 0 ? 0.0 : src[static_cast<std::size_t>(index[i])];
  }
}

void scatter_add(std::span<const double> src, std::span<const Index> index,
                 std::span<double> out) {
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (index[i] >= 0) out[static_cast<std::size_t>(index[i])] += src[i];
  }
}

}  // namespace reference

}  // namespace fuleak::kernels
