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

#include <Eigen/Core>

#include "dkic/autograd.hpp"
#include "dkic/error.hpp"

namespace dkic {

namespace {

using MatRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

// Gathers k x k patches of `src` ({C, Hs, Ws}, contiguous) at every grid
// position (gh, gw) of a Hg x Wg grid, sampling src[c, gh*s-p+ky, gw*s-p+kx]
// with zero padding. Output col is {C*k*k, Hg*Wg} row-major.
void im2col(const double* src, int C, int Hs, int Ws, int Hg, int Wg, int k,
            int stride, int pad, double* col) {
  const int64_t grid = static_cast<int64_t>(Hg) * Wg;
  for (int c = 0; c < C; ++c) {
    const double* plane = src + static_cast<int64_t>(c) * Hs * Ws;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + ((static_cast<int64_t>(c) * k + ky) * k + kx) * grid;
        for (int gh = 0; gh < Hg; ++gh) {
          const int sy = gh * stride - pad + ky;
          const bool row_ok = sy >= 0 && sy < Hs;
          for (int gw = 0; gw < Wg; ++gw) {
            const int sx = gw * stride - pad + kx;
            row[static_cast<int64_t>(gh) * Wg + gw] =
                (row_ok && sx >= 0 && sx < Ws)
                    ? plane[static_cast<int64_t>(sy) * Ws + sx]
                    : 0.0;
          }
        }
      }
  }
}

// Adjoint of im2col: scatter-adds col entries back into dst {C, Hd, Wd}.
void col2im_add(const double* col, int C, int Hd, int Wd, int Hg, int Wg,
                int k, int stride, int pad, double* dst) {
  const int64_t grid = static_cast<int64_t>(Hg) * Wg;
  for (int c = 0; c < C; ++c) {
    double* plane = dst + static_cast<int64_t>(c) * Hd * Wd;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row =
            col + ((static_cast<int64_t>(c) * k + ky) * k + kx) * grid;
        for (int gh = 0; gh < Hg; ++gh) {
          const int dy = gh * stride - pad + ky;
          if (dy < 0 || dy >= Hd) continue;
          for (int gw = 0; gw < Wg; ++gw) {
            const int dx = gw * stride - pad + kx;
            if (dx < 0 || dx >= Wd) continue;
            plane[static_cast<int64_t>(dy) * Wd + dx] +=
                row[static_cast<int64_t>(gh) * Wg + gw];
          }
        }
      }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad,
           int groups) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  if (xv.ndim() != 4 || wv.ndim() != 4)
    throw data_error("conv2d: expected 4-D tensors");
  const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int Cout = wv.dim(0), k = wv.dim(2);
  if (wv.dim(2) != wv.dim(3)) throw data_error("conv2d: non-square kernel");
  if (groups <= 0 || Cin % groups != 0 || Cout % groups != 0 ||
      wv.dim(1) != Cin / groups)
    throw data_error("conv2d: config/feature mismatch");
  if (b && b->value.dim(0) != Cout)
    throw data_error("conv2d: bias shape mismatch");
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw data_error("conv2d: empty output");
  const int Cing = Cin / groups, Coutg = Cout / groups;
  const int64_t cols = static_cast<int64_t>(Ho) * Wo;
  const int64_t krows = static_cast<int64_t>(Cing) * k * k;

  Tensor out({N, Cout, Ho, Wo});
  std::vector<double> colbuf(static_cast<size_t>(krows * cols));
  for (int n = 0; n < N; ++n)
    for (int g = 0; g < groups; ++g) {
      im2col(xv.data.data() +
                 (static_cast<int64_t>(n) * Cin + g * Cing) * H * W,
             Cing, H, W, Ho, Wo, k, stride, pad, colbuf.data());
      CMapRM wm(wv.data.data() + static_cast<int64_t>(g) * Coutg * krows,
                Coutg, krows);
      CMapRM cm(colbuf.data(), krows, cols);
      MapRM om(out.data.data() +
                   (static_cast<int64_t>(n) * Cout + g * Coutg) * cols,
               Coutg, cols);
      om.noalias() = wm * cm;
    }
  if (b)
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < Cout; ++c) {
        double bias = b->value[c];
        double* p = out.data.data() +
                    (static_cast<int64_t>(n) * Cout + c) * cols;
        for (int64_t i = 0; i < cols; ++i) p[i] += bias;
      }

  std::vector<Var> parents = b ? std::vector<Var>{x, w, b}
                               : std::vector<Var>{x, w};
  const bool has_bias = static_cast<bool>(b);
  return make_op(
      std::move(out), std::move(parents),
      [N, Cin, H, W, Cout, k, stride, pad, groups, Cing, Coutg, cols, krows,
       has_bias](Node& nd) {
        Node* px = nd.parents[0].get();
        Node* pw = nd.parents[1].get();
        Node* pb = has_bias ? nd.parents[2].get() : nullptr;
        const int Ho = nd.value.dim(2), Wo = nd.value.dim(3);
        std::vector<double> colbuf(static_cast<size_t>(krows * cols));
        std::vector<double> dcolbuf(static_cast<size_t>(krows * cols));
        for (int n = 0; n < N; ++n)
          for (int g = 0; g < groups; ++g) {
            CMapRM dy(nd.grad.data.data() +
                          (static_cast<int64_t>(n) * Cout + g * Coutg) * cols,
                      Coutg, cols);
            if (pw->requires_grad) {
              im2col(px->value.data.data() +
                         (static_cast<int64_t>(n) * Cin + g * Cing) * H * W,
                     Cing, H, W, Ho, Wo, k, stride, pad, colbuf.data());
              CMapRM cm(colbuf.data(), krows, cols);
              MapRM dwm(pw->grad.data.data() +
                            static_cast<int64_t>(g) * Coutg * krows,
                        Coutg, krows);
              dwm.noalias() += dy * cm.transpose();
            }
            if (px->requires_grad) {
              CMapRM wm(pw->value.data.data() +
                            static_cast<int64_t>(g) * Coutg * krows,
                        Coutg, krows);
              MapRM dcm(dcolbuf.data(), krows, cols);
              dcm.noalias() = wm.transpose() * dy;
              col2im_add(dcolbuf.data(), Cing, H, W, Ho, Wo, k, stride, pad,
                         px->grad.data.data() +
                             (static_cast<int64_t>(n) * Cin + g * Cing) * H *
                                 W);
            }
          }
        if (pb && pb->requires_grad)
          for (int n = 0; n < N; ++n)
            for (int c = 0; c < Cout; ++c) {
              const double* p = nd.grad.data.data() +
                                (static_cast<int64_t>(n) * Cout + c) * cols;
              double s = 0;
              for (int64_t i = 0; i < cols; ++i) s += p[i];
              pb->grad[c] += s;
            }
      });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride,
                     int pad, int out_pad) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  if (xv.ndim() != 4 || wv.ndim() != 4)
    throw data_error("conv_transpose2d: expected 4-D tensors");
  const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  if (wv.dim(0) != Cin) throw data_error("conv_transpose2d: weight mismatch");
  const int Cout = wv.dim(1), k = wv.dim(2);
  if (wv.dim(2) != wv.dim(3))
    throw data_error("conv_transpose2d: non-square kernel");
  if (b && b->value.dim(0) != Cout)
    throw data_error("conv_transpose2d: bias shape mismatch");
  const int Ho = (H - 1) * stride - 2 * pad + k + out_pad;
  const int Wo = (W - 1) * stride - 2 * pad + k + out_pad;
  if (Ho <= 0 || Wo <= 0) throw data_error("conv_transpose2d: empty output");
  const int64_t grid = static_cast<int64_t>(H) * W;
  const int64_t krows = static_cast<int64_t>(Cout) * k * k;

  Tensor out({N, Cout, Ho, Wo});
  std::vector<double> colbuf(static_cast<size_t>(krows * grid));
  CMapRM wm(wv.data.data(), Cin, krows);
  for (int n = 0; n < N; ++n) {
    CMapRM xm(xv.data.data() + static_cast<int64_t>(n) * Cin * grid, Cin,
              grid);
    MapRM cm(colbuf.data(), krows, grid);
    cm.noalias() = wm.transpose() * xm;
    col2im_add(colbuf.data(), Cout, Ho, Wo, H, W, k, stride, pad,
               out.data.data() + static_cast<int64_t>(n) * Cout * Ho * Wo);
  }
  if (b)
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < Cout; ++c) {
        double bias = b->value[c];
        double* p = out.data.data() +
                    (static_cast<int64_t>(n) * Cout + c) * Ho * Wo;
        for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i)
          p[i] += bias;
      }

  std::vector<Var> parents = b ? std::vector<Var>{x, w, b}
                               : std::vector<Var>{x, w};
  const bool has_bias = static_cast<bool>(b);
  return make_op(
      std::move(out), std::move(parents),
      [N, Cin, H, W, Cout, k, stride, pad, grid, krows, has_bias](Node& nd) {
        Node* px = nd.parents[0].get();
        Node* pw = nd.parents[1].get();
        Node* pb = has_bias ? nd.parents[2].get() : nullptr;
        const int Ho = nd.value.dim(2), Wo = nd.value.dim(3);
        std::vector<double> dcolbuf(static_cast<size_t>(krows * grid));
        for (int n = 0; n < N; ++n) {
          // dcol gathers dY patches on the input grid.
          im2col(nd.grad.data.data() + static_cast<int64_t>(n) * Cout * Ho * Wo,
                 Cout, Ho, Wo, H, W, k, stride, pad, dcolbuf.data());
          CMapRM dcm(dcolbuf.data(), krows, grid);
          if (px->requires_grad) {
            CMapRM wm(pw->value.data.data(), Cin, krows);
            MapRM dxm(px->grad.data.data() +
                          static_cast<int64_t>(n) * Cin * grid,
                      Cin, grid);
            dxm.noalias() += wm * dcm;
          }
          if (pw->requires_grad) {
            CMapRM xm(px->value.data.data() +
                          static_cast<int64_t>(n) * Cin * grid,
                      Cin, grid);
            MapRM dwm(pw->grad.data.data(), Cin, krows);
            dwm.noalias() += xm * dcm.transpose();
          }
        }
        if (pb && pb->requires_grad)
          for (int n = 0; n < N; ++n)
            for (int c = 0; c < Cout; ++c) {
              const double* p =
                  nd.grad.data.data() +
                  (static_cast<int64_t>(n) * Cout + c) * Ho * Wo;
              double s = 0;
              for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i)
                s += p[i];
              pb->grad[c] += s;
            }
      });
}

}  // namespace dkic
