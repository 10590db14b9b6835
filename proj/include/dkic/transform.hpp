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

#ifndef DKIC_TRANSFORM_HPP_
#define DKIC_TRANSFORM_HPP_

#include <array>
#include <string>
#include <vector>

#include "dkic/dynamic_kernel.hpp"

namespace dkic {

// Analysis runs four stride-2 stages (16x spatial reduction); synthesis
// mirrors them. base_width[3] is the latent width.
struct TransformConfig {
  std::array<int, 4> base_width{128, 160, 192, 320};
  int latent_channels = 320;
  int drbg_per_stage = 2;
  double rbb_bottleneck_ratio = 0.5;
  int mlp_ratio = 2;
  int kernel_side = 3;
  double offset_clamp = 8.0;
  std::string scale_preset = "full";

  void validate() const;
  static TransformConfig full_preset();
  static TransformConfig toy_preset();
};

// Pointwise expand -> GELU -> pointwise contract.
struct MlpBlock {
  Conv2dLayer fc1, fc2;

  MlpBlock() = default;
  MlpBlock(Initializer& init, int channels, int ratio);
  Var forward(const Var& x) const;
  void register_params(NamedParams& dst, const std::string& prefix) const;
};

// x += LN(LDCN(x)); x += LN(MLP(x)). Post-norm residual arrangement.
struct DynamicResidualBlock {
  LdcnLayer ldcn;
  LayerNormLayer norm1;
  MlpBlock mlp;
  LayerNormLayer norm2;

  DynamicResidualBlock() = default;
  DynamicResidualBlock(Initializer& init, const DynamicKernelConfig& cfg,
                       int mlp_ratio);
  Var forward(const Var& x) const;
  void register_params(NamedParams& dst, const std::string& prefix) const;
};

// 1x1 reduce -> 3x3 -> 1x1 expand with GELUs between, plus skip.
struct ResidualBottleneckBlock {
  Conv2dLayer reduce, conv, expand;

  ResidualBottleneckBlock() = default;
  ResidualBottleneckBlock(Initializer& init, int channels, double ratio);
  Var forward(const Var& x) const;
  void register_params(NamedParams& dst, const std::string& prefix) const;
};

struct DynamicResidualBlockGroup {
  DynamicResidualBlock drb;
  ResidualBottleneckBlock rbb;

  DynamicResidualBlockGroup() = default;
  DynamicResidualBlockGroup(Initializer& init, const DynamicKernelConfig& cfg,
                            int mlp_ratio, double rbb_ratio);
  Var forward(const Var& x) const;
  void register_params(NamedParams& dst, const std::string& prefix) const;
};

class AnalysisTransform {
 public:
  AnalysisTransform() = default;
  AnalysisTransform(Initializer& init, const TransformConfig& cfg);
  // x {N,3,H,W} with H,W divisible by 16 -> y {N,latent,H/16,W/16}
  Var forward(const Var& x) const;
  void register_params(NamedParams& dst, const std::string& prefix) const;
  const TransformConfig& config() const { return cfg_; }
  // First DRB of the first stage; the one the offset visualizer reports on.
  const DynamicResidualBlock& probe_block() const;
  // Feature map entering the probe block (half resolution).
  Var probe_input(const Var& x) const;

 private:
  TransformConfig cfg_;
  std::vector<Conv2dLayer> down_;
  std::vector<std::vector<DynamicResidualBlockGroup>> stages_;
};

class SynthesisTransform {
 public:
  SynthesisTransform() = default;
  SynthesisTransform(Initializer& init, const TransformConfig& cfg);
  // yhat {N,latent,h,w} -> xhat {N,3,16h,16w} (unclamped; clamp at eval)
  Var forward(const Var& y) const;
  void register_params(NamedParams& dst, const std::string& prefix) const;

 private:
  TransformConfig cfg_;
  std::vector<ConvT2dLayer> up_;
  std::vector<std::vector<DynamicResidualBlockGroup>> stages_;
};

Tensor clamp01(const Tensor& x);

}  // namespace dkic

#endif  // DKIC_TRANSFORM_HPP_
