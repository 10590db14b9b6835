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

#include "dkic/entropy_model.hpp"

#include <cmath>

#include "dkic/error.hpp"

namespace dkic {

// ---------------------------------------------------------------------------
// schedule & masks
// ---------------------------------------------------------------------------

CodingSchedule CodingSchedule::build(const std::vector<int>& group_sizes,
                                     const std::vector<int>& stage_counts) {
  if (group_sizes.size() != stage_counts.size() || group_sizes.empty())
    throw data_error("schedule: group/stage list length mismatch");
  CodingSchedule s;
  s.group_sizes = group_sizes;
  s.stage_counts = stage_counts;
  for (size_t i = 0; i < group_sizes.size(); ++i) {
    if (group_sizes[i] <= 0) throw data_error("schedule: non-positive group");
    const int k = stage_counts[i];
    if (k != 1 && k != 2 && k != 4)
      throw data_error("schedule: unsupported stage count");
    for (int j = 0; j < k; ++j)
      s.steps.push_back({static_cast<int>(i), j});
  }
  return s;
}

int CodingSchedule::total_channels() const {
  int c = 0;
  for (int g : group_sizes) c += g;
  return c;
}

std::vector<int> CodingSchedule::group_offsets() const {
  std::vector<int> off(group_sizes.size());
  int c = 0;
  for (size_t i = 0; i < group_sizes.size(); ++i) {
    off[i] = c;
    c += group_sizes[i];
  }
  return off;
}

Tensor stage_mask(int stage_index, int stage_count, int height, int width) {
  if (stage_count != 1 && stage_count != 2 && stage_count != 4)
    throw data_error("stage_mask: unsupported stage count");
  if (stage_index < 1 || stage_index > stage_count)
    throw data_error("stage_mask: stage index out of range");
  Tensor m({height, width});
  for (int h = 0; h < height; ++h)
    for (int w = 0; w < width; ++w) {
      bool on = false;
      if (stage_count == 1) {
        on = true;
      } else if (stage_count == 2) {
        on = ((h + w) % 2 == 0) == (stage_index == 1);
      } else {
        // 2x2 phases, diagonal pair first.
        static constexpr int kPhase[4][2] = {{0, 0}, {1, 1}, {0, 1}, {1, 0}};
        on = (h % 2 == kPhase[stage_index - 1][0]) &&
             (w % 2 == kPhase[stage_index - 1][1]);
      }
      m.data[static_cast<size_t>(h) * width + w] = on ? 1.0 : 0.0;
    }
  return m;
}

Tensor visible_mask(int stage_index, int stage_count, int height, int width) {
  Tensor m({height, width});
  for (int j = 1; j < stage_index; ++j) {
    Tensor s = stage_mask(j, stage_count, height, width);
    for (int64_t i = 0; i < m.numel(); ++i) m[i] += s[i];
  }
  return m;
}

Tensor conditioning_set(const CodingSchedule& s, int step, int height,
                        int width) {
  if (step < 0 || step >= s.num_steps())
    throw data_error("conditioning_set: step out of range");
  const auto off = s.group_offsets();
  const int C = s.total_channels();
  Tensor out({C, height, width});
  const auto& st = s.steps[static_cast<size_t>(step)];
  for (int g = 0; g < s.num_groups(); ++g) {
    if (g > st.group) continue;
    Tensor m = (g < st.group)
                   ? Tensor::full({height, width}, 1.0)
                   : visible_mask(st.stage + 1,
                                  s.stage_counts[static_cast<size_t>(g)],
                                  height, width);
    for (int c = 0; c < s.group_sizes[static_cast<size_t>(g)]; ++c)
      for (int h = 0; h < height; ++h)
        for (int w = 0; w < width; ++w)
          out.data[(static_cast<size_t>(off[static_cast<size_t>(g)] + c) *
                        height +
                    h) *
                       width +
                   w] = m.data[static_cast<size_t>(h) * width + w];
  }
  return out;
}

// ---------------------------------------------------------------------------
// likelihoods
// ---------------------------------------------------------------------------

Tensor likelihood(const Tensor& v, const GaussianParams& p) {
  if (!v.same_shape(p.mu) || !v.same_shape(p.sigma))
    throw data_error("likelihood: shape mismatch");
  Tensor out = v;
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = std::max(gaussian_bin_prob(v[i], p.mu[i], p.sigma[i]),
                      kLikelihoodFloor);
  return out;
}

Var likelihood_var(const Var& v, const Var& mu, const Var& sigma) {
  return lower_bound(gaussian_bin_likelihood(v, mu, sigma), kLikelihoodFloor);
}

// ---------------------------------------------------------------------------
// factorized prior
// ---------------------------------------------------------------------------

FactorizedPrior::FactorizedPrior(Initializer& init, int channels)
    : channels_(channels) {
  // Link widths 1 -> 3 -> 3 -> 3 -> 1.
  const int widths[5] = {1, kFilters, kFilters, kFilters, 1};
  const double scale = std::pow(10.0, 1.0 / 4.0);
  for (int k = 0; k < 4; ++k) {
    const int win = widths[k], wout = widths[k + 1];
    const double mat_init =
        std::log(std::expm1(1.0 / scale / static_cast<double>(wout)));
    matrices_.push_back(make_leaf(
        Tensor::full({channels * wout, win, 1, 1}, mat_init), true));
    biases_.push_back(make_leaf(init.uniform({channels * wout}, 0.5), true));
    if (k < 3)
      factors_.push_back(make_leaf(Tensor::zeros({channels * wout}), true));
  }
}

Var FactorizedPrior::logits(const Var& x) const {
  if (x->value.ndim() != 4 || x->value.dim(1) != channels_)
    throw data_error("factorized prior: channel mismatch");
  Var h = x;
  for (int k = 0; k < 4; ++k) {
    Var w = softplus_op(matrices_[static_cast<size_t>(k)]);
    h = conv2d(h, w, biases_[static_cast<size_t>(k)], 1, 0, channels_);
    if (k < 3) {
      Var a = tanh_op(factors_[static_cast<size_t>(k)]);
      h = add(h, mul_channel(tanh_op(h), a));
    }
  }
  return h;
}

double FactorizedPrior::logits_scalar(int channel, double x) const {
  if (channel < 0 || channel >= channels_)
    throw data_error("factorized prior: channel out of range");
  double h[kFilters] = {x, 0, 0};
  int width = 1;
  for (int k = 0; k < 4; ++k) {
    const Tensor& m = matrices_[static_cast<size_t>(k)]->value;
    const Tensor& b = biases_[static_cast<size_t>(k)]->value;
    const int wout = (k == 3) ? 1 : kFilters;
    double nxt[kFilters] = {0, 0, 0};
    for (int o = 0; o < wout; ++o) {
      double acc = b.data[static_cast<size_t>(channel * wout + o)];
      for (int i = 0; i < width; ++i) {
        double raw =
            m.data[static_cast<size_t>((channel * wout + o) * width + i)];
        double sp = raw > 30.0 ? raw : std::log1p(std::exp(raw));
        acc += sp * h[i];
      }
      nxt[o] = acc;
    }
    if (k < 3) {
      const Tensor& f = factors_[static_cast<size_t>(k)]->value;
      for (int o = 0; o < wout; ++o)
        nxt[o] += std::tanh(f.data[static_cast<size_t>(channel * wout + o)]) *
                  std::tanh(nxt[o]);
    }
    for (int o = 0; o < kFilters; ++o) h[o] = nxt[o];
    width = wout;
  }
  return h[0];
}

double FactorizedPrior::cdf(int channel, double x) const {
  return 1.0 / (1.0 + std::exp(-logits_scalar(channel, x)));
}

double FactorizedPrior::bin_prob(int channel, int32_t v) const {
  return cdf(channel, v + 0.5) - cdf(channel, v - 0.5);
}

CdfTable FactorizedPrior::cdf_table(int channel) const {
  constexpr int32_t kLimit = 1 << 14;
  // Median by bisection (the CDF is strictly monotone).
  int32_t lo = -kLimit, hi = kLimit;
  while (lo < hi) {
    const int32_t mid = lo + (hi - lo) / 2;
    if (cdf(channel, mid) < 0.5)
      lo = mid + 1;
    else
      hi = mid;
  }
  int32_t vmin = lo, vmax = lo;
  while (vmin > -kLimit && cdf(channel, vmin - 0.5) > kTailMass) --vmin;
  while (vmax < kLimit && 1.0 - cdf(channel, vmax + 0.5) > kTailMass) ++vmax;
  std::vector<double> pmf(static_cast<size_t>(vmax - vmin + 1));
  for (int32_t v = vmin; v <= vmax; ++v)
    pmf[static_cast<size_t>(v - vmin)] = bin_prob(channel, v);
  pmf.front() += cdf(channel, vmin - 0.5);
  pmf.back() += 1.0 - cdf(channel, vmax + 0.5);
  return quantize_pmf(pmf, vmin);
}

Var FactorizedPrior::likelihood_var(const Var& z) const {
  Var lo = logits(add_scalar(z, -0.5));
  Var hi = logits(add_scalar(z, 0.5));
  // Evaluate both sigmoids on the side away from saturation.
  Tensor sign = lo->value;
  for (int64_t i = 0; i < sign.numel(); ++i)
    sign[i] = (lo->value[i] + hi->value[i]) > 0 ? -1.0 : 1.0;
  Var p = abs_op(sub(sigmoid_op(mul_const(hi, sign)),
                     sigmoid_op(mul_const(lo, sign))));
  return lower_bound(p, kLikelihoodFloor);
}

void FactorizedPrior::register_params(NamedParams& dst,
                                      const std::string& prefix) const {
  for (size_t k = 0; k < matrices_.size(); ++k) {
    add_param(dst, prefix + ".matrix" + std::to_string(k), matrices_[k]);
    add_param(dst, prefix + ".bias" + std::to_string(k), biases_[k]);
    if (k < factors_.size())
      add_param(dst, prefix + ".factor" + std::to_string(k), factors_[k]);
  }
}

// ---------------------------------------------------------------------------
// hyper path
// ---------------------------------------------------------------------------

HyperAnalysis::HyperAnalysis(Initializer& init, int latent_channels,
                             int hyper_channels)
    : latent_(latent_channels),
      stem_(init, latent_channels, hyper_channels, 3, 1, 1),
      down1_(init, hyper_channels, hyper_channels, 5, 2, 2),
      down2_(init, hyper_channels, hyper_channels, 5, 2, 2) {}

Var HyperAnalysis::forward(const Var& y) const {
  if (y->value.ndim() != 4 || y->value.dim(1) != latent_)
    throw data_error("hyper analysis: latent channel mismatch");
  Var h = gelu(stem_.forward(y));
  h = gelu(down1_.forward(h));
  return down2_.forward(h);
}

void HyperAnalysis::register_params(NamedParams& dst,
                                    const std::string& prefix) const {
  stem_.register_params(dst, prefix + ".stem");
  down1_.register_params(dst, prefix + ".down1");
  down2_.register_params(dst, prefix + ".down2");
}

HyperSynthesis::HyperSynthesis(Initializer& init, int latent_channels,
                               int hyper_channels, int kernel_side,
                               double offset_clamp, int mlp_ratio) {
  up1_ = ConvT2dLayer(init, hyper_channels, latent_channels, 5, 2, 2, 1);
  DynamicKernelConfig kc;
  kc.channels = latent_channels;
  kc.groups = DynamicKernelConfig::default_groups(latent_channels);
  kc.kernel_side = kernel_side;
  kc.offset_clamp = offset_clamp;
  drb_ = DynamicResidualBlock(init, kc, mlp_ratio);
  up2_ = ConvT2dLayer(init, latent_channels, 2 * latent_channels, 5, 2, 2, 1);
}

Var HyperSynthesis::forward(const Var& z_hat) const {
  Var h = gelu(up1_.forward(z_hat));
  h = drb_.forward(h);
  return up2_.forward(h);
}

void HyperSynthesis::register_params(NamedParams& dst,
                                     const std::string& prefix) const {
  up1_.register_params(dst, prefix + ".up1");
  drb_.register_params(dst, prefix + ".drb");
  up2_.register_params(dst, prefix + ".up2");
}

// ---------------------------------------------------------------------------
// entropy model
// ---------------------------------------------------------------------------

void EntropyModelConfig::validate() const {
  if (latent_channels <= 0 || hyper_channels <= 0)
    throw data_error("entropy model: bad channel counts");
  CodingSchedule s = CodingSchedule::build(group_sizes, stage_counts);
  if (s.total_channels() != latent_channels)
    throw data_error("entropy model: schedule channels != latent channels");
}

EntropyModel::EntropyModel(Initializer& init, const EntropyModelConfig& cfg)
    : cfg_(cfg) {
  cfg_.validate();
  schedule_ = CodingSchedule::build(cfg.group_sizes, cfg.stage_counts);
  prior_ = FactorizedPrior(init, cfg.hyper_channels);
  ha_ = HyperAnalysis(init, cfg.latent_channels, cfg.hyper_channels);
  hs_ = HyperSynthesis(init, cfg.latent_channels, cfg.hyper_channels,
                       cfg.kernel_side, cfg.offset_clamp, cfg.mlp_ratio);
  const int lat = cfg.latent_channels;
  cc1_ = Conv2dLayer(init, lat, lat, 3, 1, 1);
  cc2_ = Conv2dLayer(init, lat, lat, 3, 1, 1);
  null_cc_ = make_leaf(init.uniform({lat}, 0.1), true);
  for (int g = 0; g < schedule_.num_groups(); ++g) {
    const int gs = schedule_.group_sizes[static_cast<size_t>(g)];
    sp1_.emplace_back(init, gs, lat, 5, 1, 2);
    sp2_.emplace_back(init, lat, lat, 1, 1, 0);
    null_sc_.push_back(make_leaf(init.uniform({lat}, 0.1), true));
    // gc (2*lat) + cc (lat) + sc (lat) -> mu, sigma for the group
    ep1_.emplace_back(init, 4 * lat, 2 * lat, 1, 1, 0);
    ep2_.emplace_back(init, 2 * lat, lat, 1, 1, 0);
    ep3_.emplace_back(init, lat, 2 * gs, 1, 1, 0);
  }
}

Var EntropyModel::hyper_analysis(const Var& y) const { return ha_.forward(y); }

Var EntropyModel::hyper_synthesis(const Var& z_hat) const {
  return hs_.forward(z_hat);
}

Var EntropyModel::null_feature(const Var& param, int n, int h, int w) const {
  Var zeros = constant(Tensor::zeros({n, cfg_.latent_channels, h, w}));
  return add_channel_bias(zeros, param);
}

Var EntropyModel::channel_context(const std::vector<Var>& decoded_groups,
                                  int group) const {
  if (group < 0 || group >= schedule_.num_groups())
    throw data_error("channel context: group out of range");
  if (static_cast<int>(decoded_groups.size()) < group)
    throw data_error("channel context: slice/schedule mismatch");
  int n = 1, h = 1, w = 1;
  if (!decoded_groups.empty() && decoded_groups[0]) {
    n = decoded_groups[0]->value.dim(0);
    h = decoded_groups[0]->value.dim(2);
    w = decoded_groups[0]->value.dim(3);
  }
  if (cfg_.ablate_contexts || group == 0)
    return null_feature(null_cc_, n, h, w);
  // Zero-fill undecoded groups to the full latent width; only buffers of
  // groups < `group` are ever read.
  std::vector<Var> parts;
  for (int g = 0; g < schedule_.num_groups(); ++g) {
    const int gs = schedule_.group_sizes[static_cast<size_t>(g)];
    if (g < group) {
      const auto& buf = decoded_groups[static_cast<size_t>(g)];
      if (buf->value.dim(1) != gs || buf->value.dim(2) != h ||
          buf->value.dim(3) != w)
        throw data_error("channel context: slice/schedule mismatch");
      parts.push_back(buf);
    } else {
      parts.push_back(constant(Tensor::zeros({n, gs, h, w})));
    }
  }
  Var x = concat_channels(parts);
  return cc2_.forward(gelu(cc1_.forward(x)));
}

Var EntropyModel::spatial_context(const Var& group_partial, int group,
                                  int stage, int height, int width) const {
  if (group < 0 || group >= schedule_.num_groups())
    throw data_error("spatial context: group out of range");
  const int K = schedule_.stage_counts[static_cast<size_t>(group)];
  if (stage < 0 || stage >= K)
    throw data_error("spatial context: stage out of range");
  int n = group_partial ? group_partial->value.dim(0) : 1;
  if (cfg_.ablate_contexts || stage == 0)
    return null_feature(null_sc_[static_cast<size_t>(group)], n, height,
                        width);
  const auto& v = group_partial->value;
  if (v.ndim() != 4 ||
      v.dim(1) != schedule_.group_sizes[static_cast<size_t>(group)] ||
      v.dim(2) != height || v.dim(3) != width)
    throw data_error("spatial context: buffer shape mismatch");
  Tensor vis = visible_mask(stage + 1, K, height, width);
  // The precondition says positions of stages >= j are zero; violations
  // would leak future values, so they are rejected rather than masked away.
  for (int b = 0; b < v.dim(0); ++b)
    for (int c = 0; c < v.dim(1); ++c)
      for (int h = 0; h < height; ++h)
        for (int w = 0; w < width; ++w)
          if (vis.data[static_cast<size_t>(h) * width + w] == 0.0 &&
              v.at4(b, c, h, w) != 0.0)
            throw data_error("spatial context: mask violation");
  // Masking stays in the graph so causality is structural, not assumed.
  Var x = mul_mask_hw(group_partial, vis);
  const auto& c1 = sp1_[static_cast<size_t>(group)];
  const auto& c2 = sp2_[static_cast<size_t>(group)];
  return c2.forward(gelu(c1.forward(x)));
}

std::pair<Var, Var> EntropyModel::entropy_parameters(const Var& gc,
                                                     const Var& cc,
                                                     const Var& sc,
                                                     int group) const {
  if (group < 0 || group >= schedule_.num_groups())
    throw data_error("entropy parameters: group out of range");
  const int lat = cfg_.latent_channels;
  if (gc->value.dim(1) != 2 * lat || cc->value.dim(1) != lat ||
      sc->value.dim(1) != lat)
    throw data_error("entropy parameters: context width mismatch");
  Var x = concat_channels({gc, cc, sc});
  x = gelu(ep1_[static_cast<size_t>(group)].forward(x));
  x = gelu(ep2_[static_cast<size_t>(group)].forward(x));
  x = ep3_[static_cast<size_t>(group)].forward(x);
  const int gs = schedule_.group_sizes[static_cast<size_t>(group)];
  Var mu = slice_channels(x, 0, gs);
  Var sigma = add_scalar(softplus_op(slice_channels(x, gs, 2 * gs)),
                         kSigmaMin);
  return {mu, sigma};
}

std::pair<Var, Var> EntropyModel::params_for_step(
    const Var& gc, const std::vector<Var>& group_buffers, int step) const {
  if (step < 0 || step >= schedule_.num_steps())
    throw data_error("params_for_step: step out of range");
  const auto& st = schedule_.steps[static_cast<size_t>(step)];
  const int h = gc->value.dim(2), w = gc->value.dim(3);
  Var cc = channel_context(group_buffers, st.group);
  Var sc = spatial_context(group_buffers[static_cast<size_t>(st.group)],
                           st.group, st.stage, h, w);
  return entropy_parameters(gc, cc, sc, st.group);
}

void EntropyModel::register_params(NamedParams& dst,
                                   const std::string& prefix) const {
  prior_.register_params(dst, prefix + ".prior");
  ha_.register_params(dst, prefix + ".ha");
  hs_.register_params(dst, prefix + ".hs");
  cc1_.register_params(dst, prefix + ".cc1");
  cc2_.register_params(dst, prefix + ".cc2");
  add_param(dst, prefix + ".null_cc", null_cc_);
  for (size_t g = 0; g < sp1_.size(); ++g) {
    const std::string gp = prefix + ".g" + std::to_string(g);
    sp1_[g].register_params(dst, gp + ".sp1");
    sp2_[g].register_params(dst, gp + ".sp2");
    add_param(dst, gp + ".null_sc", null_sc_[g]);
    ep1_[g].register_params(dst, gp + ".ep1");
    ep2_[g].register_params(dst, gp + ".ep2");
    ep3_[g].register_params(dst, gp + ".ep3");
  }
}

}  // namespace dkic
