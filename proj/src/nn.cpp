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

#include "dkic/nn.hpp"

#include <cmath>

#include "dkic/error.hpp"

namespace dkic {

void add_param(NamedParams& dst, const std::string& name, const Var& v) {
  dst.emplace_back(name, v);
}

const Var* find_param(const NamedParams& p, const std::string& name) {
  for (const auto& [n, v] : p)
    if (n == name) return &v;
  return nullptr;
}

Tensor Initializer::uniform(std::vector<int> shape, double bound) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data) v = dist(rng_);
  return t;
}

Conv2dLayer::Conv2dLayer(Initializer& init, int cin, int cout, int k,
                         int stride_, int pad_, int groups_, bool zero_init)
    : stride(stride_), pad(pad_), groups(groups_) {
  if (cin % groups != 0 || cout % groups != 0)
    throw data_error("conv layer: channels not divisible by groups");
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin / groups) * k * k);
  w = make_leaf(zero_init ? Tensor::zeros({cout, cin / groups, k, k})
                          : init.uniform({cout, cin / groups, k, k}, bound),
                true);
  b = make_leaf(zero_init ? Tensor::zeros({cout})
                          : init.uniform({cout}, bound),
                true);
}

void Conv2dLayer::register_params(NamedParams& dst,
                                  const std::string& prefix) const {
  add_param(dst, prefix + ".weight", w);
  add_param(dst, prefix + ".bias", b);
}

ConvT2dLayer::ConvT2dLayer(Initializer& init, int cin, int cout, int k,
                           int stride_, int pad_, int out_pad_)
    : stride(stride_), pad(pad_), out_pad(out_pad_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cout) * k * k);
  w = make_leaf(init.uniform({cin, cout, k, k}, bound), true);
  b = make_leaf(init.uniform({cout}, bound), true);
}

void ConvT2dLayer::register_params(NamedParams& dst,
                                   const std::string& prefix) const {
  add_param(dst, prefix + ".weight", w);
  add_param(dst, prefix + ".bias", b);
}

LayerNormLayer::LayerNormLayer(int channels) {
  gamma = make_leaf(Tensor::full({channels}, 1.0), true);
  beta = make_leaf(Tensor::zeros({channels}), true);
}

void LayerNormLayer::register_params(NamedParams& dst,
                                     const std::string& prefix) const {
  add_param(dst, prefix + ".gamma", gamma);
  add_param(dst, prefix + ".beta", beta);
}

}  // namespace dkic
