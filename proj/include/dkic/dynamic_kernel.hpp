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

#ifndef DKIC_DYNAMIC_KERNEL_HPP_
#define DKIC_DYNAMIC_KERNEL_HPP_

#include <utility>
#include <vector>

#include "dkic/nn.hpp"

namespace dkic {

// Grouped deformable aggregation: each channel group samples a k x k
// neighborhood at learned fractional offsets and mixes the samples with
// softmax-normalized per-group scalars shared across the group's channels.
struct DynamicKernelConfig {
  int channels = 0;
  int groups = 1;
  int kernel_side = 3;       // odd; sampling points per group = side^2
  double offset_clamp = 8.0; // max |dy|,|dx| in feature pixels
  // Out-of-bounds samples read zero (the only supported padding mode).

  int points() const { return kernel_side * kernel_side; }
  void validate() const;

  // Largest group count <= channels/16 that divides channels.
  static int default_groups(int channels);
};

// Interpolates each channel plane of `feature` ({C,H,W}) at a fractional
// (y, x); positions outside the grid contribute zero.
std::vector<double> bilinear_sample(const Tensor& feature, double y, double x);

// Offsets {N, G*K*2, H, W} laid out (g, k, dy|dx); modulations {N, G*K, H, W}.
// Softmax over the K points of each group at every location.
Var deform_aggregate(const Var& feature, const Var& offsets,
                     const Var& modulations, const DynamicKernelConfig& cfg);

// Offset/modulation generators: a depthwise k x k conv followed by a
// pointwise projection per branch. The pointwise layers start at zero so
// the operator begins as a uniform box aggregation.
struct OffsetModGenerator {
  Conv2dLayer dw_offset, pw_offset;
  Conv2dLayer dw_mod, pw_mod;

  OffsetModGenerator() = default;
  OffsetModGenerator(Initializer& init, const DynamicKernelConfig& cfg);
  void register_params(NamedParams& dst, const std::string& prefix) const;
};

std::pair<Var, Var> generate_offsets_modulations(const Var& feature,
                                                 const OffsetModGenerator& gen,
                                                 const DynamicKernelConfig& cfg);

// Group-shared value projection (block-diagonal 1x1) and the full-width
// output projection around the deformable aggregation.
struct LdcnWeights {
  Conv2dLayer value_proj;  // groups = cfg.groups
  Conv2dLayer out_proj;

  LdcnWeights() = default;
  LdcnWeights(Initializer& init, const DynamicKernelConfig& cfg);
  void register_params(NamedParams& dst, const std::string& prefix) const;
};

Var ldcn_forward(const Var& feature, const Var& offsets, const Var& modulations,
                 const LdcnWeights& weights, const DynamicKernelConfig& cfg);

// Complete operator: generators + projections.
struct LdcnLayer {
  DynamicKernelConfig cfg;
  OffsetModGenerator gen;
  LdcnWeights weights;

  LdcnLayer() = default;
  LdcnLayer(Initializer& init, const DynamicKernelConfig& cfg);
  Var forward(const Var& x) const;
  void register_params(NamedParams& dst, const std::string& prefix) const;
};

}  // namespace dkic

#endif  // DKIC_DYNAMIC_KERNEL_HPP_
