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

#include "dkic/transform.hpp"

#include <algorithm>

#include "dkic/error.hpp"

namespace dkic {

void TransformConfig::validate() const {
  for (int w : base_width)
    if (w <= 0) throw data_error("transform: non-positive stage width");
  if (latent_channels <= 0) throw data_error("transform: bad latent width");
  if (base_width[3] != latent_channels)
    throw data_error("transform: base_width[3] must equal latent_channels");
  if (drbg_per_stage <= 0 || mlp_ratio <= 0)
    throw data_error("transform: bad block counts");
  if (rbb_bottleneck_ratio <= 0 || rbb_bottleneck_ratio > 1)
    throw data_error("transform: bad bottleneck ratio");
}

TransformConfig TransformConfig::full_preset() {
  TransformConfig cfg;
  cfg.base_width = {128, 160, 192, 320};
  cfg.latent_channels = 320;
  cfg.drbg_per_stage = 2;
  cfg.scale_preset = "full";
  return cfg;
}

TransformConfig TransformConfig::toy_preset() {
  TransformConfig cfg;
  cfg.base_width = {16, 16, 24, 40};
  cfg.latent_channels = 40;
  cfg.drbg_per_stage = 1;
  cfg.offset_clamp = 2.0;  // scaled with the toy feature resolution
  cfg.scale_preset = "toy";
  return cfg;
}

MlpBlock::MlpBlock(Initializer& init, int channels, int ratio)
    : fc1(init, channels, channels * ratio, 1, 1, 0),
      fc2(init, channels * ratio, channels, 1, 1, 0) {}

Var MlpBlock::forward(const Var& x) const {
  return fc2.forward(gelu(fc1.forward(x)));
}

void MlpBlock::register_params(NamedParams& dst,
                               const std::string& prefix) const {
  fc1.register_params(dst, prefix + ".fc1");
  fc2.register_params(dst, prefix + ".fc2");
}

DynamicResidualBlock::DynamicResidualBlock(Initializer& init,
                                           const DynamicKernelConfig& cfg,
                                           int mlp_ratio)
    : ldcn(init, cfg),
      norm1(cfg.channels),
      mlp(init, cfg.channels, mlp_ratio),
      norm2(cfg.channels) {}

Var DynamicResidualBlock::forward(const Var& x) const {
  Var h = add(x, norm1.forward(ldcn.forward(x)));
  return add(h, norm2.forward(mlp.forward(h)));
}

void DynamicResidualBlock::register_params(NamedParams& dst,
                                           const std::string& prefix) const {
  ldcn.register_params(dst, prefix + ".ldcn");
  norm1.register_params(dst, prefix + ".norm1");
  mlp.register_params(dst, prefix + ".mlp");
  norm2.register_params(dst, prefix + ".norm2");
}

ResidualBottleneckBlock::ResidualBottleneckBlock(Initializer& init,
                                                 int channels, double ratio) {
  const int mid = std::max(1, static_cast<int>(channels * ratio));
  reduce = Conv2dLayer(init, channels, mid, 1, 1, 0);
  conv = Conv2dLayer(init, mid, mid, 3, 1, 1);
  expand = Conv2dLayer(init, mid, channels, 1, 1, 0);
}

Var ResidualBottleneckBlock::forward(const Var& x) const {
  Var h = gelu(reduce.forward(x));
  h = gelu(conv.forward(h));
  return add(x, expand.forward(h));
}

void ResidualBottleneckBlock::register_params(NamedParams& dst,
                                              const std::string& prefix) const {
  reduce.register_params(dst, prefix + ".reduce");
  conv.register_params(dst, prefix + ".conv");
  expand.register_params(dst, prefix + ".expand");
}

DynamicResidualBlockGroup::DynamicResidualBlockGroup(
    Initializer& init, const DynamicKernelConfig& cfg, int mlp_ratio,
    double rbb_ratio)
    : drb(init, cfg, mlp_ratio), rbb(init, cfg.channels, rbb_ratio) {}

Var DynamicResidualBlockGroup::forward(const Var& x) const {
  return rbb.forward(drb.forward(x));
}

void DynamicResidualBlockGroup::register_params(
    NamedParams& dst, const std::string& prefix) const {
  drb.register_params(dst, prefix + ".drb");
  rbb.register_params(dst, prefix + ".rbb");
}

namespace {

DynamicKernelConfig kernel_cfg_for(const TransformConfig& cfg, int channels) {
  DynamicKernelConfig kc;
  kc.channels = channels;
  kc.groups = DynamicKernelConfig::default_groups(channels);
  kc.kernel_side = cfg.kernel_side;
  kc.offset_clamp = cfg.offset_clamp;
  return kc;
}

}  // namespace

AnalysisTransform::AnalysisTransform(Initializer& init,
                                     const TransformConfig& cfg)
    : cfg_(cfg) {
  cfg_.validate();
  int in_ch = 3;
  for (int s = 0; s < 4; ++s) {
    const int out_ch = cfg.base_width[static_cast<size_t>(s)];
    down_.emplace_back(init, in_ch, out_ch, 5, 2, 2);
    std::vector<DynamicResidualBlockGroup> blocks;
    if (s < 3)
      for (int i = 0; i < cfg.drbg_per_stage; ++i)
        blocks.emplace_back(init, kernel_cfg_for(cfg, out_ch), cfg.mlp_ratio,
                            cfg.rbb_bottleneck_ratio);
    stages_.push_back(std::move(blocks));
    in_ch = out_ch;
  }
}

Var AnalysisTransform::forward(const Var& x) const {
  if (x->value.ndim() != 4 || x->value.dim(1) != 3)
    throw data_error("analysis: expected Nx3xHxW input");
  if (x->value.dim(2) % 16 != 0 || x->value.dim(3) % 16 != 0)
    throw data_error("unpadded input");
  Var h = x;
  for (size_t s = 0; s < down_.size(); ++s) {
    h = down_[s].forward(h);
    for (const auto& blk : stages_[s]) h = blk.forward(h);
  }
  return h;
}

const DynamicResidualBlock& AnalysisTransform::probe_block() const {
  if (stages_.empty() || stages_[0].empty())
    throw data_error("analysis: no probe block");
  return stages_[0][0].drb;
}

Var AnalysisTransform::probe_input(const Var& x) const {
  if (x->value.ndim() != 4 || x->value.dim(1) != 3)
    throw data_error("analysis: expected Nx3xHxW input");
  return down_[0].forward(x);
}

void AnalysisTransform::register_params(NamedParams& dst,
                                        const std::string& prefix) const {
  for (size_t s = 0; s < down_.size(); ++s) {
    down_[s].register_params(dst, prefix + ".down" + std::to_string(s));
    for (size_t i = 0; i < stages_[s].size(); ++i)
      stages_[s][i].register_params(dst, prefix + ".stage" +
                                             std::to_string(s) + ".drbg" +
                                             std::to_string(i));
  }
}

SynthesisTransform::SynthesisTransform(Initializer& init,
                                       const TransformConfig& cfg)
    : cfg_(cfg) {
  cfg_.validate();
  // Mirror of the analysis stack: latent -> w2 -> w1 -> w0 -> 3.
  const int w0 = cfg.base_width[0], w1 = cfg.base_width[1],
            w2 = cfg.base_width[2];
  const int widths_in[4] = {cfg.latent_channels, w2, w1, w0};
  const int widths_out[4] = {w2, w1, w0, 3};
  for (int s = 0; s < 4; ++s) {
    up_.emplace_back(init, widths_in[s], widths_out[s], 5, 2, 2, 1);
    std::vector<DynamicResidualBlockGroup> blocks;
    if (s < 3)
      for (int i = 0; i < cfg.drbg_per_stage; ++i)
        blocks.emplace_back(init, kernel_cfg_for(cfg, widths_out[s]),
                            cfg.mlp_ratio, cfg.rbb_bottleneck_ratio);
    stages_.push_back(std::move(blocks));
  }
}

Var SynthesisTransform::forward(const Var& y) const {
  if (y->value.ndim() != 4 || y->value.dim(1) != cfg_.latent_channels)
    throw data_error("synthesis: latent channel mismatch");
  Var h = y;
  for (size_t s = 0; s < up_.size(); ++s) {
    h = up_[s].forward(h);
    for (const auto& blk : stages_[s]) h = blk.forward(h);
  }
  return h;
}

void SynthesisTransform::register_params(NamedParams& dst,
                                         const std::string& prefix) const {
  for (size_t s = 0; s < up_.size(); ++s) {
    up_[s].register_params(dst, prefix + ".up" + std::to_string(s));
    for (size_t i = 0; i < stages_[s].size(); ++i)
      stages_[s][i].register_params(dst, prefix + ".stage" +
                                             std::to_string(s) + ".drbg" +
                                             std::to_string(i));
  }
}

Tensor clamp01(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace dkic
