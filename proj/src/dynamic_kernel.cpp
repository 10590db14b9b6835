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

#include "dkic/dynamic_kernel.hpp"

#include <cmath>

#include "dkic/error.hpp"

namespace dkic {

void DynamicKernelConfig::validate() const {
  if (channels <= 0 || groups <= 0 || channels % groups != 0)
    throw data_error("dynamic kernel: channels not divisible by groups");
  if (kernel_side <= 0 || kernel_side % 2 == 0)
    throw data_error("dynamic kernel: kernel side must be odd positive");
  if (offset_clamp < 0) throw data_error("dynamic kernel: negative clamp");
}

int DynamicKernelConfig::default_groups(int channels) {
  int g = channels / 16;
  while (g > 1 && channels % g != 0) --g;
  return g < 1 ? 1 : g;
}

std::vector<double> bilinear_sample(const Tensor& feature, double y, double x) {
  if (feature.ndim() != 3) throw data_error("bilinear_sample: expected CHW");
  if (!std::isfinite(y) || !std::isfinite(x))
    throw data_error("invalid sampling location");
  const int C = feature.dim(0), H = feature.dim(1), W = feature.dim(2);
  std::vector<double> out(static_cast<size_t>(C), 0.0);
  if (y <= -1.0 || y >= H || x <= -1.0 || x >= W) return out;
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double ly = y - y0, lx = x - x0;
  const double w00 = (1 - ly) * (1 - lx), w01 = (1 - ly) * lx;
  const double w10 = ly * (1 - lx), w11 = ly * lx;
  for (int c = 0; c < C; ++c) {
    const double* p = feature.data.data() + static_cast<int64_t>(c) * H * W;
    double v = 0;
    if (y0 >= 0 && x0 >= 0) v += w00 * p[y0 * W + x0];
    if (y0 >= 0 && x0 + 1 < W) v += w01 * p[y0 * W + x0 + 1];
    if (y0 + 1 < H && x0 >= 0) v += w10 * p[(y0 + 1) * W + x0];
    if (y0 + 1 < H && x0 + 1 < W) v += w11 * p[(y0 + 1) * W + x0 + 1];
    out[static_cast<size_t>(c)] = v;
  }
  return out;
}

namespace {

struct Corner {
  int y0, x0;
  double ly, lx;
  bool in00, in01, in10, in11;
};

inline Corner corner_of(double y, double x, int H, int W) {
  Corner c;
  c.y0 = static_cast<int>(std::floor(y));
  c.x0 = static_cast<int>(std::floor(x));
  c.ly = y - c.y0;
  c.lx = x - c.x0;
  c.in00 = c.y0 >= 0 && c.y0 < H && c.x0 >= 0 && c.x0 < W;
  c.in01 = c.y0 >= 0 && c.y0 < H && c.x0 + 1 >= 0 && c.x0 + 1 < W;
  c.in10 = c.y0 + 1 >= 0 && c.y0 + 1 < H && c.x0 >= 0 && c.x0 < W;
  c.in11 = c.y0 + 1 >= 0 && c.y0 + 1 < H && c.x0 + 1 >= 0 && c.x0 + 1 < W;
  return c;
}

}  // namespace

Var deform_aggregate(const Var& feature, const Var& offsets,
                     const Var& modulations, const DynamicKernelConfig& cfg) {
  cfg.validate();
  const Tensor& fv = feature->value;
  if (fv.ndim() != 4 || fv.dim(1) != cfg.channels)
    throw data_error("config/feature mismatch");
  const int N = fv.dim(0), C = fv.dim(1), H = fv.dim(2), W = fv.dim(3);
  const int G = cfg.groups, K = cfg.points(), ks = cfg.kernel_side;
  const int cg = C / G;
  const Tensor& ov = offsets->value;
  const Tensor& mv = modulations->value;
  if (ov.ndim() != 4 || ov.dim(0) != N || ov.dim(1) != 2 * G * K ||
      ov.dim(2) != H || ov.dim(3) != W || mv.ndim() != 4 ||
      mv.dim(0) != N || mv.dim(1) != G * K || mv.dim(2) != H ||
      mv.dim(3) != W)
    throw data_error("malformed modulation/offset field");
  if (!ov.all_finite() || !mv.all_finite())
    throw data_error("malformed modulation/offset field");
  for (int64_t i = 0; i < ov.numel(); ++i)
    if (std::fabs(ov[i]) > cfg.offset_clamp + 1e-9)
      throw data_error("malformed modulation/offset field");
  // Softmax invariant: the K weights of each (location, group) sum to one.
  for (int n = 0; n < N; ++n)
    for (int g = 0; g < G; ++g)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          double s = 0;
          for (int k = 0; k < K; ++k) s += mv.at4(n, g * K + k, h, w);
          if (std::fabs(s - 1.0) > 1e-6)
            throw data_error("malformed modulation/offset field");
        }

  const int half = (ks - 1) / 2;
  Tensor out({N, C, H, W});
  for (int n = 0; n < N; ++n)
    for (int g = 0; g < G; ++g)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          for (int k = 0; k < K; ++k) {
            const double m = mv.at4(n, g * K + k, h, w);
            const double sy = h + (k / ks - half) +
                              ov.at4(n, (g * K + k) * 2, h, w);
            const double sx = w + (k % ks - half) +
                              ov.at4(n, (g * K + k) * 2 + 1, h, w);
            if (sy <= -1.0 || sy >= H || sx <= -1.0 || sx >= W) continue;
            const Corner cr = corner_of(sy, sx, H, W);
            const double w00 = (1 - cr.ly) * (1 - cr.lx);
            const double w01 = (1 - cr.ly) * cr.lx;
            const double w10 = cr.ly * (1 - cr.lx);
            const double w11 = cr.ly * cr.lx;
            for (int c = g * cg; c < (g + 1) * cg; ++c) {
              double v = 0;
              if (cr.in00) v += w00 * fv.at4(n, c, cr.y0, cr.x0);
              if (cr.in01) v += w01 * fv.at4(n, c, cr.y0, cr.x0 + 1);
              if (cr.in10) v += w10 * fv.at4(n, c, cr.y0 + 1, cr.x0);
              if (cr.in11) v += w11 * fv.at4(n, c, cr.y0 + 1, cr.x0 + 1);
              out.at4(n, c, h, w) += m * v;
            }
          }

  const int ksc = ks;
  return make_op(
      std::move(out), {feature, offsets, modulations},
      [N, C, H, W, G, K, ksc, cg, half](Node& nd) {
        Node* pf = nd.parents[0].get();
        Node* po = nd.parents[1].get();
        Node* pm = nd.parents[2].get();
        const Tensor& fv = pf->value;
        const Tensor& ov = po->value;
        const Tensor& mv = pm->value;
        for (int n = 0; n < N; ++n)
          for (int g = 0; g < G; ++g)
            for (int h = 0; h < H; ++h)
              for (int w = 0; w < W; ++w)
                for (int k = 0; k < K; ++k) {
                  const double m = mv.at4(n, g * K + k, h, w);
                  const double sy = h + (k / ksc - half) +
                                    ov.at4(n, (g * K + k) * 2, h, w);
                  const double sx = w + (k % ksc - half) +
                                    ov.at4(n, (g * K + k) * 2 + 1, h, w);
                  if (sy <= -1.0 || sy >= H || sx <= -1.0 || sx >= W)
                    continue;
                  const Corner cr = corner_of(sy, sx, H, W);
                  const double w00 = (1 - cr.ly) * (1 - cr.lx);
                  const double w01 = (1 - cr.ly) * cr.lx;
                  const double w10 = cr.ly * (1 - cr.lx);
                  const double w11 = cr.ly * cr.lx;
                  double dm = 0, dsy = 0, dsx = 0;
                  for (int c = g * cg; c < (g + 1) * cg; ++c) {
                    const double go = nd.grad.at4(n, c, h, w);
                    double v00 = cr.in00 ? fv.at4(n, c, cr.y0, cr.x0) : 0;
                    double v01 = cr.in01 ? fv.at4(n, c, cr.y0, cr.x0 + 1) : 0;
                    double v10 = cr.in10 ? fv.at4(n, c, cr.y0 + 1, cr.x0) : 0;
                    double v11 =
                        cr.in11 ? fv.at4(n, c, cr.y0 + 1, cr.x0 + 1) : 0;
                    const double val =
                        w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11;
                    dm += go * val;
                    if (po->requires_grad) {
                      dsy += go * m *
                             ((v10 - v00) * (1 - cr.lx) + (v11 - v01) * cr.lx);
                      dsx += go * m *
                             ((v01 - v00) * (1 - cr.ly) + (v11 - v10) * cr.ly);
                    }
                    if (pf->requires_grad) {
                      const double gm = go * m;
                      if (cr.in00)
                        pf->grad.at4(n, c, cr.y0, cr.x0) += gm * w00;
                      if (cr.in01)
                        pf->grad.at4(n, c, cr.y0, cr.x0 + 1) += gm * w01;
                      if (cr.in10)
                        pf->grad.at4(n, c, cr.y0 + 1, cr.x0) += gm * w10;
                      if (cr.in11)
                        pf->grad.at4(n, c, cr.y0 + 1, cr.x0 + 1) += gm * w11;
                    }
                  }
                  if (pm->requires_grad)
                    pm->grad.at4(n, g * K + k, h, w) += dm;
                  if (po->requires_grad) {
                    po->grad.at4(n, (g * K + k) * 2, h, w) += dsy;
                    po->grad.at4(n, (g * K + k) * 2 + 1, h, w) += dsx;
                  }
                }
      });
}

OffsetModGenerator::OffsetModGenerator(Initializer& init,
                                       const DynamicKernelConfig& cfg) {
  const int C = cfg.channels, K = cfg.points(), ks = cfg.kernel_side;
  const int pad = (ks - 1) / 2;
  dw_offset = Conv2dLayer(init, C, C, ks, 1, pad, C);
  pw_offset = Conv2dLayer(init, C, 2 * cfg.groups * K, 1, 1, 0, 1,
                          /*zero_init=*/true);
  dw_mod = Conv2dLayer(init, C, C, ks, 1, pad, C);
  pw_mod = Conv2dLayer(init, C, cfg.groups * K, 1, 1, 0, 1,
                       /*zero_init=*/true);
}

void OffsetModGenerator::register_params(NamedParams& dst,
                                         const std::string& prefix) const {
  dw_offset.register_params(dst, prefix + ".dw_offset");
  pw_offset.register_params(dst, prefix + ".pw_offset");
  dw_mod.register_params(dst, prefix + ".dw_mod");
  pw_mod.register_params(dst, prefix + ".pw_mod");
}

std::pair<Var, Var> generate_offsets_modulations(
    const Var& feature, const OffsetModGenerator& gen,
    const DynamicKernelConfig& cfg) {
  cfg.validate();
  if (feature->value.ndim() != 4 || feature->value.dim(1) != cfg.channels)
    throw data_error("config/feature mismatch");
  Var off = clamp_sym(gen.pw_offset.forward(gen.dw_offset.forward(feature)),
                      cfg.offset_clamp);
  Var logits = gen.pw_mod.forward(gen.dw_mod.forward(feature));
  Var mod = softmax_blocks(logits, cfg.points());
  return {off, mod};
}

LdcnWeights::LdcnWeights(Initializer& init, const DynamicKernelConfig& cfg) {
  value_proj = Conv2dLayer(init, cfg.channels, cfg.channels, 1, 1, 0,
                           cfg.groups);
  out_proj = Conv2dLayer(init, cfg.channels, cfg.channels, 1, 1, 0, 1);
}

void LdcnWeights::register_params(NamedParams& dst,
                                  const std::string& prefix) const {
  value_proj.register_params(dst, prefix + ".value_proj");
  out_proj.register_params(dst, prefix + ".out_proj");
}

Var ldcn_forward(const Var& feature, const Var& offsets, const Var& modulations,
                 const LdcnWeights& weights, const DynamicKernelConfig& cfg) {
  Var v = weights.value_proj.forward(feature);
  Var agg = deform_aggregate(v, offsets, modulations, cfg);
  return weights.out_proj.forward(agg);
}

LdcnLayer::LdcnLayer(Initializer& init, const DynamicKernelConfig& config)
    : cfg(config), gen(init, config), weights(init, config) {
  cfg.validate();
}

Var LdcnLayer::forward(const Var& x) const {
  auto [off, mod] = generate_offsets_modulations(x, gen, cfg);
  return ldcn_forward(x, off, mod, weights, cfg);
}

void LdcnLayer::register_params(NamedParams& dst,
                                const std::string& prefix) const {
  gen.register_params(dst, prefix + ".gen");
  weights.register_params(dst, prefix + ".weights");
}

}  // namespace dkic
