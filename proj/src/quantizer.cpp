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

#include "dkic/quantizer.hpp"

#include <cmath>

#include "dkic/error.hpp"

namespace dkic {

Tensor quantize(const Tensor& y, const Tensor& mu, QuantMode mode,
                std::mt19937_64* rng) {
  if (!y.same_shape(mu)) throw data_error("quantize: shape mismatch");
  Tensor out = y;
  if (mode == QuantMode::kInferRound) {
    for (int64_t i = 0; i < out.numel(); ++i)
      out[i] = std::round(y[i] - mu[i]) + mu[i];
  } else {
    if (!rng) throw data_error("quantize: train mode needs an rng");
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (auto& v : out.data) v += dist(*rng);
  }
  return out;
}

std::vector<int32_t> extract_symbols(const Tensor& y, const Tensor& mu) {
  if (!y.same_shape(mu)) throw data_error("extract_symbols: shape mismatch");
  std::vector<int32_t> out(static_cast<size_t>(y.numel()));
  for (int64_t i = 0; i < y.numel(); ++i)
    out[static_cast<size_t>(i)] = static_cast<int32_t>(std::round(y[i] - mu[i]));
  return out;
}

Tensor dequantize_symbols(const std::vector<int32_t>& symbols,
                          const Tensor& mu) {
  if (static_cast<int64_t>(symbols.size()) != mu.numel())
    throw data_error("dequantize_symbols: size mismatch");
  Tensor out = mu;
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<double>(symbols[static_cast<size_t>(i)]) + mu[i];
  return out;
}

Var quantize_ste(const Var& y, const Var& mu) {
  return add(ste_round(sub(y, mu)), mu);
}

Var add_uniform_noise(const Var& y, const Tensor& noise) {
  return add_const(y, noise);
}

Tensor draw_uniform_noise(const std::vector<int>& shape,
                          std::mt19937_64& rng) {
  Tensor t(shape);
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

}  // namespace dkic
