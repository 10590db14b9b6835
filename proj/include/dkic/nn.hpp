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

#ifndef DKIC_NN_HPP_
#define DKIC_NN_HPP_

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dkic/autograd.hpp"

namespace dkic {

// Flat name -> parameter map; names are the stable checkpoint keys.
using NamedParams = std::vector<std::pair<std::string, Var>>;

void add_param(NamedParams& dst, const std::string& name, const Var& v);
const Var* find_param(const NamedParams& p, const std::string& name);

// Deterministic parameter initializer. One instance is threaded through
// model construction so layer order fixes the draw sequence.
class Initializer {
 public:
  explicit Initializer(uint64_t seed) : rng_(seed) {}
  Tensor uniform(std::vector<int> shape, double bound);
  Tensor zeros(std::vector<int> shape) { return Tensor::zeros(std::move(shape)); }

 private:
  std::mt19937_64 rng_;
};

struct Conv2dLayer {
  Var w, b;
  int stride = 1, pad = 0, groups = 1;

  Conv2dLayer() = default;
  Conv2dLayer(Initializer& init, int cin, int cout, int k, int stride,
              int pad, int groups = 1, bool zero_init = false);
  Var forward(const Var& x) const { return conv2d(x, w, b, stride, pad, groups); }
  void register_params(NamedParams& dst, const std::string& prefix) const;
};

struct ConvT2dLayer {
  Var w, b;
  int stride = 1, pad = 0, out_pad = 0;

  ConvT2dLayer() = default;
  ConvT2dLayer(Initializer& init, int cin, int cout, int k, int stride,
               int pad, int out_pad);
  Var forward(const Var& x) const {
    return conv_transpose2d(x, w, b, stride, pad, out_pad);
  }
  void register_params(NamedParams& dst, const std::string& prefix) const;
};

struct LayerNormLayer {
  Var gamma, beta;

  LayerNormLayer() = default;
  explicit LayerNormLayer(int channels);
  Var forward(const Var& x) const {
    return layer_norm_channels(x, gamma, beta);
  }
  void register_params(NamedParams& dst, const std::string& prefix) const;
};

}  // namespace dkic

#endif  // DKIC_NN_HPP_
