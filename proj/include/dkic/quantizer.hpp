// Copyright (c) the DKIC Project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DKIC_QUANTIZER_HPP_
#define DKIC_QUANTIZER_HPP_

#include <random>
#include <vector>

#include "dkic/autograd.hpp"

namespace dkic {

enum class QuantMode { kTrainNoise, kInferRound };

// Mean-centered quantization. kInferRound returns round(y - mu) + mu with
// round-half-away-from-zero; kTrainNoise returns y + u, u ~ U(-1/2, 1/2)
// drawn from `rng` (rate proxy; the distortion path uses quantize_ste).
Tensor quantize(const Tensor& y, const Tensor& mu, QuantMode mode,
                std::mt19937_64* rng = nullptr);

// Integer residual symbols round(y - mu) and their exact inverse.
std::vector<int32_t> extract_symbols(const Tensor& y, const Tensor& mu);
Tensor dequantize_symbols(const std::vector<int32_t>& symbols,
                          const Tensor& mu);

// Autograd counterparts used by the trainer.
Var quantize_ste(const Var& y, const Var& mu);    // round-through distortion path
Var add_uniform_noise(const Var& y, const Tensor& noise);
Tensor draw_uniform_noise(const std::vector<int>& shape, std::mt19937_64& rng);

}  // namespace dkic

#endif  // DKIC_QUANTIZER_HPP_
