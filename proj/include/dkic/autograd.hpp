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

#ifndef DKIC_AUTOGRAD_HPP_
#define DKIC_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dkic/tensor.hpp"

namespace dkic {

// Reverse-mode autodiff over Tensor. A Var owns its value and, when the graph
// is live, edges to its parents plus a pull-style backward function.
class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated lazily by ensure_grad()
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.shape != value.shape) grad = Tensor::zeros(value.shape);
  }
};

Var make_leaf(Tensor value, bool requires_grad);
Var constant(Tensor value);
Var scalar_const(double v);

// Builds an op node. If no parent requires grad (or NoGradGuard is active)
// the edges and backward_fn are dropped so eval-mode forwards stay cheap.
Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backward_fn);

// Seeds d(root)/d(root) = 1 and runs the tape. root must be scalar unless
// seed is supplied.
void backward(const Var& root);
void backward(const Var& root, const Tensor& seed);

bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var gelu(const Var& a);
Var tanh_op(const Var& a);
Var sigmoid_op(const Var& a);
Var softplus_op(const Var& a);
Var abs_op(const Var& a);
Var square(const Var& a);
Var neg_log2(const Var& a);
// Hard clamp to [-c, c]; zero gradient outside.
Var clamp_sym(const Var& a, double c);
// max(a, bound) with the one-sided gradient gate: below the bound only
// gradients that push the value up are let through.
Var lower_bound(const Var& a, double bound);
// Round-half-away-from-zero forward, identity backward.
Var ste_round(const Var& a);
Var detach(const Var& a);

// ---- elementwise against constants ----
Var add_const(const Var& a, const Tensor& t);   // same shape
Var mul_const(const Var& a, const Tensor& t);   // same shape
Var mul_mask_hw(const Var& a, const Tensor& mask);  // mask {H,W} over N,C

// ---- broadcasts over channels (param shape {C}) ----
Var add_channel_bias(const Var& x, const Var& b);
Var mul_channel(const Var& x, const Var& s);

// ---- reductions ----
Var sum_all(const Var& a);   // -> {1}
Var mean_all(const Var& a);  // -> {1}

// ---- structure ----
Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(const Var& x, int c0, int c1);

// ---- conv family ----
// x {N,Cin,H,W}, w {Cout,Cin/groups,kh,kw}, b {Cout} or nullptr.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad,
           int groups = 1);
// x {N,Cin,H,W}, w {Cin,Cout,kh,kw}, b {Cout} or nullptr. groups = 1 only.
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride,
                     int pad, int out_pad);

// LayerNorm over the channel dimension at each (n,h,w). gamma/beta {C}.
Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta,
                        double eps = 1e-5);

// Softmax over consecutive channel blocks of size `block` at each location.
Var softmax_blocks(const Var& x, int block);

// P(v - 1/2 < X <= v + 1/2) for X ~ N(mu, sigma^2), elementwise.
// All three arguments share one shape.
Var gaussian_bin_likelihood(const Var& v, const Var& mu, const Var& sigma);

// ---- plain-tensor helpers shared with eval paths ----
double gaussian_cdf(double x);       // standard normal CDF, erfc-based tails
double gaussian_bin_prob(double v, double mu, double sigma);

}  // namespace dkic

#endif  // DKIC_AUTOGRAD_HPP_
