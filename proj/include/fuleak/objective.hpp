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

#include <functional>
#include <memory>
#include <span>

#include "fuleak/data.hpp"
#include "fuleak/model.hpp"

namespace fuleak {

// Scalar training loss over a batch of dataset indices. Implementations must
// build the value from tensor ops so it records on the active tape.
using BatchLoss = std::function<Tensor(const Tensor& theta, std::span<const Index> batch)>;

// Mean cross-entropy of the model on the selected samples.
BatchLoss model_loss(const ModelSpec& spec, std::shared_ptr<const Dataset> data);

// Detached d loss / d theta.
Tensor batch_grad(const BatchLoss& loss, const Tensor& theta, std::span<const Index> batch);

}  // namespace fuleak
