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

#include "fuleak/theory.hpp"

namespace fuleak {

// Each op and composite against central differences, plus exact nested
// derivatives of polynomials.
std::vector<CheckLine> autodiff_checks(std::uint64_t seed);

// Per probe: gia-on-coupled norm, the draun-joint norm and their ratio.
std::vector<CheckLine> stationarity_checks(int probes, std::uint64_t seed);

// Converged gia-on-coupled runs against the reconstruction error bound, plus
// the vacuous zero-retain-gradient case.
std::vector<CheckLine> bound_checks(int runs, std::uint64_t seed);

// Shared dummies give g1 == 0 exactly, separated dummies do not, and the
// collapse gradient grows at most linearly in the separation.
std::vector<CheckLine> collapse_checks(std::uint64_t seed);

bool all_pass(std::span<const CheckLine> lines);
std::string format_check(const CheckLine& line);
// name,value,threshold,pass,note
void write_check_csv(const std::filesystem::path& path, std::span<const CheckLine> lines);

}  // namespace fuleak
