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

#ifndef DKIC_ENTROPY_MODEL_HPP_
#define DKIC_ENTROPY_MODEL_HPP_

#include <string>
#include <utility>
#include <vector>

#include "dkic/range_coder.hpp"
#include "dkic/transform.hpp"

namespace dkic {

constexpr double kSigmaMin = 0.11;
constexpr double kLikelihoodFloor = 1e-9;
constexpr double kTailMass = 1e-9;

// Ordered slice/stage plan. Latent channels are split into N groups coded
// in order; each group is further split into 1, 2 or 4 spatial stages.
// One (group, stage) pair is one autoregressive step.
struct CodingSchedule {
  std::vector<int> group_sizes;
  std::vector<int> stage_counts;
  struct Step {
    int group;  // 0-based
    int stage;  // 0-based within the group
  };
  std::vector<Step> steps;

  static CodingSchedule build(const std::vector<int>& group_sizes,
                              const std::vector<int>& stage_counts);
  int num_groups() const { return static_cast<int>(group_sizes.size()); }
  int num_steps() const { return static_cast<int>(steps.size()); }
  int total_channels() const;
  std::vector<int> group_offsets() const;  // channel offset per group
};

// Spatial partition masks ({h,w}, entries 0/1). 1 <= stage_index <= K.
// K=2 is the checkerboard split; K=4 walks the 2x2 phases in the order
// (0,0),(1,1),(0,1),(1,0).
Tensor stage_mask(int stage_index, int stage_count, int height, int width);

// Union of stage masks 1..j (exclusive of j when inclusive=false).
Tensor visible_mask(int stage_index, int stage_count, int height, int width);

// Per-element readable set when coding `step`: channels of earlier groups
// everywhere, plus earlier-stage positions of the step's own group.
// Returns {total_channels, h, w} with entries 0/1.
Tensor conditioning_set(const CodingSchedule& s, int step, int height,
                        int width);

struct GaussianParams {
  Tensor mu;
  Tensor sigma;
};

// Per-element probability of the quantized Gaussian bin, floored at
// kLikelihoodFloor for rate computation.
Tensor likelihood(const Tensor& v, const GaussianParams& p);
Var likelihood_var(const Var& v, const Var& mu, const Var& sigma);

// Non-parametric per-channel density for the side information. A short
// chain of softplus-positive affine maps and tanh gates ending in a
// sigmoid, so the CDF is strictly monotone with limits 0 and 1.
class FactorizedPrior {
 public:
  FactorizedPrior() = default;
  FactorizedPrior(Initializer& init, int channels);

  int channels() const { return channels_; }
  // Scalar CDF for one channel (table building and rate accounting).
  double cdf(int channel, double x) const;
  double bin_prob(int channel, int32_t v) const;
  // Integer-bin table covering all but <= kTailMass mass per side.
  CdfTable cdf_table(int channel) const;
  // Likelihood of (typically noisy) values under the integer-bin density.
  Var likelihood_var(const Var& z) const;

  void register_params(NamedParams& dst, const std::string& prefix) const;

 private:
  Var logits(const Var& x) const;
  double logits_scalar(int channel, double x) const;

  int channels_ = 0;
  static constexpr int kFilters = 3;  // hidden width per link
  std::vector<Var> matrices_;  // raw; softplus-reparameterized on use
  std::vector<Var> biases_;
  std::vector<Var> factors_;   // gate strengths; tanh-reparameterized
};

// Two stride-2 stages mapping the latent to the side information.
class HyperAnalysis {
 public:
  HyperAnalysis() = default;
  HyperAnalysis(Initializer& init, int latent_channels, int hyper_channels);
  Var forward(const Var& y) const;
  void register_params(NamedParams& dst, const std::string& prefix) const;

 private:
  int latent_ = 0;
  Conv2dLayer stem_, down1_, down2_;
};

// Two upsampling stages with a dynamic residual block between them; yields
// the global context at latent resolution with 2x latent channels.
class HyperSynthesis {
 public:
  HyperSynthesis() = default;
  HyperSynthesis(Initializer& init, int latent_channels, int hyper_channels,
                 int kernel_side, double offset_clamp, int mlp_ratio);
  Var forward(const Var& z_hat) const;
  void register_params(NamedParams& dst, const std::string& prefix) const;

 private:
  ConvT2dLayer up1_, up2_;
  DynamicResidualBlock drb_;
};

struct EntropyModelConfig {
  int latent_channels = 320;
  int hyper_channels = 192;
  std::vector<int> group_sizes{16, 16, 32, 64, 192};
  std::vector<int> stage_counts{4, 4, 2, 2, 2};
  int kernel_side = 3;
  double offset_clamp = 8.0;
  int mlp_ratio = 2;
  // Forces cc and sc to their learned null features at every step; used by
  // the no-context ablation.
  bool ablate_contexts = false;

  void validate() const;
};

// The coarse-to-fine conditional model: global context from the hyper
// path, channel context over decoded groups, spatial context over decoded
// stages, fused by per-group parameter heads.
class EntropyModel {
 public:
  EntropyModel() = default;
  EntropyModel(Initializer& init, const EntropyModelConfig& cfg);

  const EntropyModelConfig& config() const { return cfg_; }
  const CodingSchedule& schedule() const { return schedule_; }
  const FactorizedPrior& prior() const { return prior_; }

  Var hyper_analysis(const Var& y) const;
  Var hyper_synthesis(const Var& z_hat) const;

  // Channel context from fully decoded groups 0..i-1 (zero-filled to the
  // full latent width); the learned null feature when i == 0.
  Var channel_context(const std::vector<Var>& decoded_groups, int group) const;
  // Spatial context of the current group's decoded stages < j. The partial
  // buffer must be zero outside those stages.
  Var spatial_context(const Var& group_partial, int group, int stage,
                      int height, int width) const;
  // (mu, sigma) fields for one group given the three contexts.
  std::pair<Var, Var> entropy_parameters(const Var& gc, const Var& cc,
                                         const Var& sc, int group) const;
  // Convenience: contexts + parameters for one schedule step, driven from
  // per-group coding buffers (decoder-identical state).
  std::pair<Var, Var> params_for_step(const Var& gc,
                                      const std::vector<Var>& group_buffers,
                                      int step) const;

  void register_params(NamedParams& dst, const std::string& prefix) const;

 private:
  Var null_feature(const Var& param, int n, int h, int w) const;

  EntropyModelConfig cfg_;
  CodingSchedule schedule_;
  FactorizedPrior prior_;
  HyperAnalysis ha_;
  HyperSynthesis hs_;
  // channel context net
  Conv2dLayer cc1_, cc2_;
  Var null_cc_;
  // per-group spatial context nets
  std::vector<Conv2dLayer> sp1_, sp2_;
  std::vector<Var> null_sc_;
  // per-group parameter heads
  std::vector<Conv2dLayer> ep1_, ep2_, ep3_;
};

}  // namespace dkic

#endif  // DKIC_ENTROPY_MODEL_HPP_
