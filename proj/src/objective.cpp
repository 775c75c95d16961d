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

#include "fuleak/objective.hpp"

namespace fuleak {

BatchLoss model_loss(const ModelSpec& spec, std::shared_ptr<const Dataset> data) {
  if (data->shape() != spec.input) {
    throw ShapeError("model input does not match dataset sample shape");
  }
  return [spec, data](const Tensor& theta, std::span<const Index> batch) {
    const auto labels = data->gather_labels(batch);
    return cross_entropy(forward(spec, theta, data->gather_images(batch)), labels);
  };
}

Tensor batch_grad(const BatchLoss& loss, const Tensor& theta, std::span<const Index> batch) {
  Tape tape;
  Tensor th = tape.watch(theta);
  return grad(loss(th, batch), th).detach();
}

}  // namespace fuleak
