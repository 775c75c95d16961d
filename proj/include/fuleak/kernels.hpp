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
#include <span>

// Flat numeric kernels behind the tensor engine. Every kernel has two
// implementations with identical signatures: the default one (OpenMP loops,
// Eigen's blocked product for gemm) and a serial reference in `kernels::reference` that the unit
// tests and the benchmark compare against.

namespace fuleak::kernels {

using Index = std::int64_t;

enum class BinaryOp { kAdd, kSub, kMul, kDiv };
enum class UnaryOp { kExp, kLog, kSqrt };

// Loops shorter than this stay serial.
inline constexpr Index kParallelMin = Index{1} << 15;

// c[m x n] = op(a) * op(b); op(a) is m x k, op(b) is k x n, row-major.
void gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, const double* a,
          const double* b, double* c);

// out[i] = a[i] op b[i]. A length-1 operand broadcasts.
void binary(BinaryOp op, std::span<const double> a, std::span<const double> b,
            std::span<double> out);
void unary(UnaryOp op, std::span<const double> a, std::span<double> out);
void scale(std::span<const double> a, double alpha, double shift,
           std::span<double> out);

// out[i] = index[i] < 0 ? 0 : src[index[i]]
void gather(std::span<const double> src, std::span<const Index> index,
            std::span<double> out);
// out[index[i]] += src[i] for index[i] >= 0. `injective` promises no two
// entries share a destination, which allows the parallel path.
void scatter_add(std::span<const double> src, std::span<const Index> index,
                 std::span<double> out, bool injective);

// Serial left-to-right sum; kept serial so results do not depend on the
// thread count.
double sum(std::span<const double> a);
double dot(std::span<const double> a, std::span<const double> b);

bool openmp_enabled();
int max_threads();

namespace reference {

void gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, const double* a,
          const double* b, double* c);
void binary(BinaryOp op, std::span<const double> a, std::span<const double> b,
            std::span<double> out);
void unary(UnaryOp op, std::span<const double> a, std::span<double> out);
void gather(std::span<const double> src, std::span<const Index> index,
            std::span<double> out);
void scatter_add(std::span<const double> src, std::span<const Index> index,
                 std::span<double> out);

}  // namespace reference

}  // namespace fuleak::kernels
