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

#include "dkic/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "dkic/error.hpp"

namespace dkic {

namespace {
thread_local bool g_grad_enabled = true;

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw data_error(std::string(op) + ": shape mismatch " +
                     shape_str(a->value.shape) + " vs " +
                     shape_str(b->value.shape));
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var make_leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad && g_grad_enabled;
  return n;
}

Var constant(Tensor value) { return make_leaf(std::move(value), false); }

Var scalar_const(double v) { return constant(Tensor({1}, {v})); }

Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool need = false;
  if (g_grad_enabled)
    for (const auto& p : parents)
      if (p->requires_grad) need = true;
  n->requires_grad = need;
  if (need) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void backward(const Var& root, const Tensor& seed) {
  if (!root->requires_grad) return;
  if (!seed.same_shape(root->value))
    throw data_error("backward: seed shape mismatch");
  // Iterative topological order over the reachable grad-requiring subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad = seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      for (auto& p : n->parents)
        if (p->requires_grad) p->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

void backward(const Var& root) {
  if (root->value.numel() != 1)
    throw data_error("backward: root must be scalar");
  backward(root, Tensor(root->value.shape, {1.0}));
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    for (int k = 0; k < 2; ++k) {
      Node* p = n.parents[k].get();
      if (!p->requires_grad) continue;
      for (int64_t i = 0; i < n.grad.numel(); ++i) p->grad[i] += n.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    Node* pa = n.parents[0].get();
    Node* pb = n.parents[1].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      if (pa->requires_grad) pa->grad[i] += n.grad[i];
      if (pb->requires_grad) pb->grad[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    Node* pa = n.parents[0].get();
    Node* pb = n.parents[1].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      if (pa->requires_grad) pa->grad[i] += n.grad[i] * pb->value[i];
      if (pb->requires_grad) pb->grad[i] += n.grad[i] * pa->value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a->value;
  for (auto& v : out.data) v *= s;
  return make_op(std::move(out), {a}, [s](Node& n) {
    Node* p = n.parents[0].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i) p->grad[i] += n.grad[i] * s;
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a->value;
  for (auto& v : out.data) v += s;
  return make_op(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i) p->grad[i] += n.grad[i];
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

double gaussian_cdf(double x) {
  return 0.5 * std::erfc(-x * kInvSqrt2);
}

Var gelu(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = v * gaussian_cdf(v);
  return make_op(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      double x = p->value[i];
      double d = gaussian_cdf(x) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      p->grad[i] += n.grad[i] * d;
    }
  });
}

Var tanh_op(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = std::tanh(v);
  return make_op(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      double t = n.value[i];
      p->grad[i] += n.grad[i] * (1.0 - t * t);
    }
  });
}

Var sigmoid_op(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return make_op(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      double s = n.value[i];
      p->grad[i] += n.grad[i] * s * (1.0 - s);
    }
  });
}

Var softplus_op(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data)
    v = v > 30.0 ? v : std::log1p(std::exp(v));
  return make_op(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      double x = p->value[i];
      p->grad[i] += n.grad[i] / (1.0 + std::exp(-x));
    }
  });
}

Var abs_op(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = std::fabs(v);
  return make_op(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      p->grad[i] += n.grad[i] * (p->value[i] < 0 ? -1.0 : 1.0);
  });
}

Var square(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v *= v;
  return make_op(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      p->grad[i] += n.grad[i] * 2.0 * p->value[i];
  });
}

Var neg_log2(const Var& a) {
  constexpr double kInvLn2 = 1.4426950408889634074;
  Tensor out = a->value;
  for (auto& v : out.data) v = -std::log2(v);
  return make_op(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      p->grad[i] += n.grad[i] * (-kInvLn2 / p->value[i]);
  });
}

Var clamp_sym(const Var& a, double c) {
  Tensor out = a->value;
  for (auto& v : out.data) v = std::clamp(v, -c, c);
  return make_op(std::move(out), {a}, [c](Node& n) {
    Node* p = n.parents[0].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      if (std::fabs(p->value[i]) <= c) p->grad[i] += n.grad[i];
  });
}

Var lower_bound(const Var& a, double bound) {
  Tensor out = a->value;
  for (auto& v : out.data) v = std::max(v, bound);
  return make_op(std::move(out), {a}, [bound](Node& n) {
    Node* p = n.parents[0].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      // Below the bound, only let gradients through that want to raise the
      // value; this keeps the rate term trainable in the clipped tail.
      if (p->value[i] >= bound || n.grad[i] < 0) p->grad[i] += n.grad[i];
    }
  });
}

Var ste_round(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = std::round(v);
  return make_op(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i) p->grad[i] += n.grad[i];
  });
}

Var detach(const Var& a) { return constant(a->value); }

Var add_const(const Var& a, const Tensor& t) {
  if (!a->value.same_shape(t)) throw data_error("add_const: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += t[i];
  return make_op(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i) p->grad[i] += n.grad[i];
  });
}

Var mul_const(const Var& a, const Tensor& t) {
  if (!a->value.same_shape(t)) throw data_error("mul_const: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= t[i];
  return make_op(std::move(out), {a}, [t](Node& n) {
    Node* p = n.parents[0].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      p->grad[i] += n.grad[i] * t[i];
  });
}

Var mul_mask_hw(const Var& a, const Tensor& mask) {
  if (a->value.ndim() != 4 || mask.ndim() != 2 ||
      mask.dim(0) != a->value.dim(2) || mask.dim(1) != a->value.dim(3))
    throw data_error("mul_mask_hw: mask/feature mismatch");
  const int N = a->value.dim(0), C = a->value.dim(1), H = a->value.dim(2),
            W = a->value.dim(3);
  Tensor out = a->value;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          out.at4(n, c, h, w) *= mask.data[static_cast<size_t>(h) * W + w];
  return make_op(std::move(out), {a}, [mask, N, C, H, W](Node& n) {
    Node* p = n.parents[0].get();
    for (int b = 0; b < N; ++b)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w)
            p->grad.at4(b, c, h, w) +=
                n.grad.at4(b, c, h, w) *
                mask.data[static_cast<size_t>(h) * W + w];
  });
}

Var add_channel_bias(const Var& x, const Var& b) {
  if (x->value.ndim() != 4 || b->value.ndim() != 1 ||
      b->value.dim(0) != x->value.dim(1))
    throw data_error("add_channel_bias: shape mismatch");
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
            W = x->value.dim(3);
  Tensor out = x->value;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      double bias = b->value[c];
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) out.at4(n, c, h, w) += bias;
    }
  return make_op(std::move(out), {x, b}, [N, C, H, W](Node& n) {
    Node* px = n.parents[0].get();
    Node* pb = n.parents[1].get();
    for (int b = 0; b < N; ++b)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            double g = n.grad.at4(b, c, h, w);
            if (px->requires_grad) px->grad.at4(b, c, h, w) += g;
            if (pb->requires_grad) pb->grad[c] += g;
          }
  });
}

Var mul_channel(const Var& x, const Var& s) {
  if (x->value.ndim() != 4 || s->value.ndim() != 1 ||
      s->value.dim(0) != x->value.dim(1))
    throw data_error("mul_channel: shape mismatch");
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
            W = x->value.dim(3);
  Tensor out = x->value;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      double sc = s->value[c];
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) out.at4(n, c, h, w) *= sc;
    }
  return make_op(std::move(out), {x, s}, [N, C, H, W](Node& n) {
    Node* px = n.parents[0].get();
    Node* ps = n.parents[1].get();
    for (int b = 0; b < N; ++b)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            double g = n.grad.at4(b, c, h, w);
            if (px->requires_grad)
              px->grad.at4(b, c, h, w) += g * ps->value[c];
            if (ps->requires_grad)
              ps->grad[c] += g * px->value.at4(b, c, h, w);
          }
  });
}

Var sum_all(const Var& a) {
  double s = 0;
  for (double v : a->value.data) s += v;
  return make_op(Tensor({1}, {s}), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    double g = n.grad[0];
    for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += g;
  });
}

Var mean_all(const Var& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a->value.numel()));
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw data_error("concat_channels: empty input");
  const int N = xs[0]->value.dim(0), H = xs[0]->value.dim(2),
            W = xs[0]->value.dim(3);
  int C = 0;
  for (const auto& x : xs) {
    if (x->value.ndim() != 4 || x->value.dim(0) != N ||
        x->value.dim(2) != H || x->value.dim(3) != W)
      throw data_error("concat_channels: shape mismatch");
    C += x->value.dim(1);
  }
  Tensor out({N, C, H, W});
  int coff = 0;
  for (const auto& x : xs) {
    const int Ci = x->value.dim(1);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < Ci; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w)
            out.at4(n, coff + c, h, w) = x->value.at4(n, c, h, w);
    coff += Ci;
  }
  return make_op(std::move(out), xs, [N, H, W](Node& n) {
    int coff = 0;
    for (auto& par : n.parents) {
      Node* p = par.get();
      const int Ci = p->value.dim(1);
      if (p->requires_grad)
        for (int b = 0; b < N; ++b)
          for (int c = 0; c < Ci; ++c)
            for (int h = 0; h < H; ++h)
              for (int w = 0; w < W; ++w)
                p->grad.at4(b, c, h, w) += n.grad.at4(b, coff + c, h, w);
      coff += Ci;
    }
  });
}

Var slice_channels(const Var& x, int c0, int c1) {
  if (x->value.ndim() != 4 || c0 < 0 || c1 > x->value.dim(1) || c0 >= c1)
    throw data_error("slice_channels: bad range");
  const int N = x->value.dim(0), H = x->value.dim(2), W = x->value.dim(3);
  Tensor out({N, c1 - c0, H, W});
  for (int n = 0; n < N; ++n)
    for (int c = c0; c < c1; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          out.at4(n, c - c0, h, w) = x->value.at4(n, c, h, w);
  return make_op(std::move(out), {x}, [c0, c1, N, H, W](Node& n) {
    Node* p = n.parents[0].get();
    for (int b = 0; b < N; ++b)
      for (int c = c0; c < c1; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w)
            p->grad.at4(b, c, h, w) += n.grad.at4(b, c - c0, h, w);
  });
}

// ---------------------------------------------------------------------------
// layer norm over channels
// ---------------------------------------------------------------------------

Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta,
                        double eps) {
  if (x->value.ndim() != 4) throw data_error("layer_norm: expected NCHW");
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
            W = x->value.dim(3);
  if (gamma->value.dim(0) != C || beta->value.dim(0) != C)
    throw data_error("layer_norm: affine shape mismatch");
  Tensor out({N, C, H, W});
  for (int n = 0; n < N; ++n)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        double m = 0;
        for (int c = 0; c < C; ++c) m += x->value.at4(n, c, h, w);
        m /= C;
        double var = 0;
        for (int c = 0; c < C; ++c) {
          double d = x->value.at4(n, c, h, w) - m;
          var += d * d;
        }
        var /= C;
        double inv = 1.0 / std::sqrt(var + eps);
        for (int c = 0; c < C; ++c)
          out.at4(n, c, h, w) =
              (x->value.at4(n, c, h, w) - m) * inv * gamma->value[c] +
              beta->value[c];
      }
  return make_op(std::move(out), {x, gamma, beta},
                 [N, C, H, W, eps](Node& n) {
    Node* px = n.parents[0].get();
    Node* pg = n.parents[1].get();
    Node* pb = n.parents[2].get();
    std::vector<double> xhat(static_cast<size_t>(C));
    std::vector<double> dy(static_cast<size_t>(C));
    for (int b = 0; b < N; ++b)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          double m = 0;
          for (int c = 0; c < C; ++c) m += px->value.at4(b, c, h, w);
          m /= C;
          double var = 0;
          for (int c = 0; c < C; ++c) {
            double d = px->value.at4(b, c, h, w) - m;
            var += d * d;
          }
          var /= C;
          double inv = 1.0 / std::sqrt(var + eps);
          for (int c = 0; c < C; ++c) {
            xhat[static_cast<size_t>(c)] =
                (px->value.at4(b, c, h, w) - m) * inv;
            dy[static_cast<size_t>(c)] = n.grad.at4(b, c, h, w);
          }
          if (pg->requires_grad || pb->requires_grad)
            for (int c = 0; c < C; ++c) {
              if (pg->requires_grad)
                pg->grad[c] += dy[static_cast<size_t>(c)] *
                               xhat[static_cast<size_t>(c)];
              if (pb->requires_grad) pb->grad[c] += dy[static_cast<size_t>(c)];
            }
          if (px->requires_grad) {
            double mean_dxhat = 0, mean_dxhat_xhat = 0;
            for (int c = 0; c < C; ++c) {
              double dxhat = dy[static_cast<size_t>(c)] * pg->value[c];
              mean_dxhat += dxhat;
              mean_dxhat_xhat += dxhat * xhat[static_cast<size_t>(c)];
            }
            mean_dxhat /= C;
            mean_dxhat_xhat /= C;
            for (int c = 0; c < C; ++c) {
              double dxhat = dy[static_cast<size_t>(c)] * pg->value[c];
              px->grad.at4(b, c, h, w) +=
                  inv * (dxhat - mean_dxhat -
                         xhat[static_cast<size_t>(c)] * mean_dxhat_xhat);
            }
          }
        }
  });
}

// ---------------------------------------------------------------------------
// softmax over channel blocks
// ---------------------------------------------------------------------------

Var softmax_blocks(const Var& x, int block) {
  if (x->value.ndim() != 4 || block <= 0 || x->value.dim(1) % block != 0)
    throw data_error("softmax_blocks: channel count not divisible by block");
  const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
            W = x->value.dim(3);
  const int nblocks = C / block;
  Tensor out({N, C, H, W});
  for (int n = 0; n < N; ++n)
    for (int g = 0; g < nblocks; ++g)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          double mx = -1e300;
          for (int k = 0; k < block; ++k)
            mx = std::max(mx, x->value.at4(n, g * block + k, h, w));
          double z = 0;
          for (int k = 0; k < block; ++k)
            z += std::exp(x->value.at4(n, g * block + k, h, w) - mx);
          for (int k = 0; k < block; ++k)
            out.at4(n, g * block + k, h, w) =
                std::exp(x->value.at4(n, g * block + k, h, w) - mx) / z;
        }
  return make_op(std::move(out), {x}, [N, C, H, W, block](Node& n) {
    Node* p = n.parents[0].get();
    const int nblocks = C / block;
    for (int b = 0; b < N; ++b)
      for (int g = 0; g < nblocks; ++g)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            double dot = 0;
            for (int k = 0; k < block; ++k)
              dot += n.grad.at4(b, g * block + k, h, w) *
                     n.value.at4(b, g * block + k, h, w);
            for (int k = 0; k < block; ++k) {
              double s = n.value.at4(b, g * block + k, h, w);
              p->grad.at4(b, g * block + k, h, w) +=
                  s * (n.grad.at4(b, g * block + k, h, w) - dot);
            }
          }
  });
}

// ---------------------------------------------------------------------------
// Gaussian integer-bin likelihood
// ---------------------------------------------------------------------------

double gaussian_bin_prob(double v, double mu, double sigma) {
  // P(v-1/2 < X <= v+1/2); evaluated via erfc on the side away from the
  // mean so the tails do not cancel.
  double a = (v - mu - 0.5) / sigma;
  double b = (v - mu + 0.5) / sigma;
  if (a >= 0.0)
    return 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2));
  if (b <= 0.0)
    return 0.5 * (std::erfc(-b * kInvSqrt2) - std::erfc(-a * kInvSqrt2));
  return 0.5 * (std::erf(b * kInvSqrt2) - std::erf(a * kInvSqrt2));
}

Var gaussian_bin_likelihood(const Var& v, const Var& mu, const Var& sigma) {
  check_same_shape(v, mu, "gaussian_bin_likelihood");
  check_same_shape(v, sigma, "gaussian_bin_likelihood");
  Tensor out = v->value;
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = gaussian_bin_prob(v->value[i], mu->value[i], sigma->value[i]);
  return make_op(std::move(out), {v, mu, sigma}, [](Node& n) {
    Node* pv = n.parents[0].get();
    Node* pm = n.parents[1].get();
    Node* ps = n.parents[2].get();
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      double s = ps->value[i];
      double a = (pv->value[i] - pm->value[i] - 0.5) / s;
      double b = (pv->value[i] - pm->value[i] + 0.5) / s;
      double pa = kInvSqrt2Pi * std::exp(-0.5 * a * a);
      double pb = kInvSqrt2Pi * std::exp(-0.5 * b * b);
      double g = n.grad[i];
      if (pv->requires_grad) pv->grad[i] += g * (pb - pa) / s;
      if (pm->requires_grad) pm->grad[i] += g * (pa - pb) / s;
      if (ps->requires_grad) ps->grad[i] += g * (pa * a - pb * b) / s;
    }
  });
}

}  // namespace dkic
