#pragma once

// Minimal define-by-run reverse-mode engine: exactly the ops Dynamics-Net
// needs, with gradients flowing into any tensor flagged requires_grad
// (inputs as well as parameters). Templated on the scalar so unit tests can
// run the identical code in double precision for finite-difference checks.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "fdn/rng.hpp"

namespace fdn::ad {

template <class T>
struct Node {
  std::vector<int> shape;
  std::vector<T> val;
  std::vector<T> grad;  // lazily sized by backward
  bool requires_grad = false;
  bool needs_grad = false;  // requires_grad or any ancestor does
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // scatter this->grad to parents

  size_t size() const {
    size_t s = 1;
    for (int d : shape) s *= static_cast<size_t>(d);
    return s;
  }
  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), T(0));
  }
};

template <class T>
class Var {
public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  static Var zeros(std::vector<int> shape, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->val.assign(n->size(), T(0));
    n->requires_grad = n->needs_grad = requires_grad;
    return Var(n);
  }
  static Var from(std::vector<int> shape, std::vector<T> data,
                  bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    if (data.size() != n->size())
      throw std::invalid_argument("Var::from: data size != shape product");
    n->val = std::move(data);
    n->requires_grad = n->needs_grad = requires_grad;
    return Var(n);
  }

  Node<T>& node() const { return *n_; }
  const std::shared_ptr<Node<T>>& ptr() const { return n_; }
  const std::vector<int>& shape() const { return n_->shape; }
  std::vector<T>& val() const { return n_->val; }
  std::vector<T>& grad() const {
    n_->ensure_grad();
    return n_->grad;
  }
  size_t size() const { return n_->size(); }
  bool defined() const { return n_ != nullptr; }
  void zero_grad() const { n_->grad.assign(n_->val.size(), T(0)); }

  // Reverse pass from this node; seeds d(this)/d(this) = 1 for scalars or
  // uses `seed` when given. Gradients accumulate (+=) into every node with
  // requires_grad.
  void backward(const std::vector<T>* seed = nullptr) const {
    if (!n_) throw std::runtime_error("backward on empty Var");
    if (!n_->backprop && !n_->requires_grad)
      throw std::runtime_error("backward without a recorded forward");
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    topo(n_.get(), seen, order);
    // intermediate (non-leaf) grads are scratch space for this pass; only
    // leaves with requires_grad accumulate across backward calls
    for (Node<T>* nd : order)
      if (nd->backprop && !nd->grad.empty()) nd->grad.assign(nd->grad.size(), T(0));
    n_->ensure_grad();
    if (seed) {
      if (seed->size() != n_->val.size())
        throw std::invalid_argument("backward: seed shape mismatch");
      for (size_t i = 0; i < seed->size(); ++i) n_->grad[i] += (*seed)[i];
    } else {
      if (n_->val.size() != 1)
        throw std::runtime_error("backward without seed on non-scalar");
      n_->grad[0] += T(1);
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* nd = *it;
      if (nd->backprop && nd->needs_grad) nd->backprop(*nd);
    }
    // graph-local gradients die with the graph; parameter/input grads persist
  }

private:
  static void topo(Node<T>* nd, std::unordered_set<Node<T>*>& seen,
                   std::vector<Node<T>*>& order) {
    if (seen.count(nd)) return;
    seen.insert(nd);
    for (auto& p : nd->parents) topo(p.get(), seen, order);
    order.push_back(nd);
  }

  std::shared_ptr<Node<T>> n_;
};

namespace detail {

template <class T>
std::shared_ptr<Node<T>> make_op(std::vector<int> shape,
                                 std::vector<std::shared_ptr<Node<T>>> parents) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->val.assign(n->size(), T(0));
  n->parents = std::move(parents);
  for (auto& p : n->parents)
    if (p->needs_grad) n->needs_grad = true;
  return n;
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <class T>
Var<T> relu(const Var<T>& x) {
  auto n = detail::make_op<T>(x.shape(), {x.ptr()});
  const auto& xv = x.node().val;
  for (size_t i = 0; i < xv.size(); ++i) n->val[i] = xv[i] > T(0) ? xv[i] : T(0);
  n->backprop = [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.val.size(); ++i)
      if (p.val[i] > T(0)) p.grad[i] += self.grad[i];
  };
  return Var<T>(n);
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  auto n = detail::make_op<T>(x.shape(), {x.ptr()});
  const auto& xv = x.node().val;
  for (size_t i = 0; i < xv.size(); ++i) n->val[i] = T(1) / (T(1) + std::exp(-xv[i]));
  n->backprop = [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.val.size(); ++i) {
      const T s = self.val[i];
      p.grad[i] += self.grad[i] * s * (T(1) - s);
    }
  };
  return Var<T>(n);
}

// ---- shape ------------------------------------------------------------------

template <class T>
Var<T> reshape(const Var<T>& x, std::vector<int> shape) {
  auto n = detail::make_op<T>(std::move(shape), {x.ptr()});
  if (n->size() != x.size())
    throw std::invalid_argument("reshape: element count mismatch");
  n->val = x.node().val;
  n->backprop = [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.val.size(); ++i) p.grad[i] += self.grad[i];
  };
  return Var<T>(n);
}

// Concatenate along dim 1 of 2-D [N, F] tensors.
template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty");
  const int N = xs[0].shape()[0];
  int F = 0;
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (const auto& x : xs) {
    if (x.shape().size() != 2 || x.shape()[0] != N)
      throw std::invalid_argument("concat_cols: shape mismatch");
    F += x.shape()[1];
    parents.push_back(x.ptr());
  }
  auto n = detail::make_op<T>({N, F}, std::move(parents));
  for (int r = 0; r < N; ++r) {
    size_t off = static_cast<size_t>(r) * F;
    for (const auto& x : xs) {
      const int f = x.shape()[1];
      const T* src = x.node().val.data() + static_cast<size_t>(r) * f;
      std::copy(src, src + f, n->val.data() + off);
      off += static_cast<size_t>(f);
    }
  }
  n->backprop = [N, F](Node<T>& self) {
    for (int r = 0; r < N; ++r) {
      size_t off = static_cast<size_t>(r) * F;
      for (auto& pp : self.parents) {
        auto& p = *pp;
        const int f = p.shape[1];
        if (p.needs_grad) {
          p.ensure_grad();
          for (int c = 0; c < f; ++c)
            p.grad[static_cast<size_t>(r) * f + c] += self.grad[off + c];
        }
        off += static_cast<size_t>(f);
      }
    }
  };
  return Var<T>(n);
}

// ---- linear -----------------------------------------------------------------

// x [N, I], W [O, I], b [O] -> [N, O]
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& W, const Var<T>& b) {
  const int N = x.shape()[0], I = x.shape()[1];
  const int O = W.shape()[0];
  if (W.shape()[1] != I || b.shape()[0] != O)
    throw std::invalid_argument("linear: shape mismatch");
  auto n = detail::make_op<T>({N, O}, {x.ptr(), W.ptr(), b.ptr()});
  const T* xv = x.node().val.data();
  const T* wv = W.node().val.data();
  const T* bv = b.node().val.data();
  for (int r = 0; r < N; ++r)
    for (int o = 0; o < O; ++o) {
      T acc = bv[o];
      const T* xr = xv + static_cast<size_t>(r) * I;
      const T* wr = wv + static_cast<size_t>(o) * I;
      for (int i = 0; i < I; ++i) acc += xr[i] * wr[i];
      n->val[static_cast<size_t>(r) * O + o] = acc;
    }
  n->backprop = [N, I, O](Node<T>& self) {
    auto& x = *self.parents[0];
    auto& W = *self.parents[1];
    auto& b = *self.parents[2];
    const T* g = self.grad.data();
    if (x.needs_grad) {
      x.ensure_grad();
      for (int r = 0; r < N; ++r)
        for (int o = 0; o < O; ++o) {
          const T go = g[static_cast<size_t>(r) * O + o];
          const T* wr = W.val.data() + static_cast<size_t>(o) * I;
          T* gx = x.grad.data() + static_cast<size_t>(r) * I;
          for (int i = 0; i < I; ++i) gx[i] += go * wr[i];
        }
    }
    if (W.needs_grad) {
      W.ensure_grad();
      for (int r = 0; r < N; ++r)
        for (int o = 0; o < O; ++o) {
          const T go = g[static_cast<size_t>(r) * O + o];
          const T* xr = x.val.data() + static_cast<size_t>(r) * I;
          T* gw = W.grad.data() + static_cast<size_t>(o) * I;
          for (int i = 0; i < I; ++i) gw[i] += go * xr[i];
        }
    }
    if (b.needs_grad) {
      b.ensure_grad();
      for (int r = 0; r < N; ++r)
        for (int o = 0; o < O; ++o)
          b.grad[o] += g[static_cast<size_t>(r) * O + o];
    }
  };
  return Var<T>(n);
}

// ---- convolution (3x3 kernel, stride 2, padding 1) ---------------------------

inline int conv_out(int in) { return (in - 1) / 2 + 1; }

// x [N, IC, H, W], W [OC, IC, 3, 3], b [OC] -> [N, OC, conv_out(H), conv_out(W)]
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& W, const Var<T>& b) {
  const auto& xs = x.shape();
  if (xs.size() != 4) throw std::invalid_argument("conv2d: input not 4-D");
  const int N = xs[0], IC = xs[1], H = xs[2], Wd = xs[3];
  const int OC = W.shape()[0];
  if (W.shape()[1] != IC) throw std::invalid_argument("conv2d: channel mismatch");
  const int Ho = conv_out(H), Wo = conv_out(Wd);
  auto n = detail::make_op<T>({N, OC, Ho, Wo}, {x.ptr(), W.ptr(), b.ptr()});
  const T* xv = x.node().val.data();
  const T* wv = W.node().val.data();
  const T* bv = b.node().val.data();
  for (int nn = 0; nn < N; ++nn)
    for (int oc = 0; oc < OC; ++oc) {
      T* out = n->val.data() +
               (static_cast<size_t>(nn) * OC + oc) * Ho * Wo;
      for (int i = 0; i < Ho * Wo; ++i) out[i] = bv[oc];
      for (int ic = 0; ic < IC; ++ic) {
        const T* in = xv + (static_cast<size_t>(nn) * IC + ic) * H * Wd;
        const T* k = wv + (static_cast<size_t>(oc) * IC + ic) * 9;
        for (int oy = 0; oy < Ho; ++oy)
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * 2 - 1 + ky;
            if (iy < 0 || iy >= H) continue;
            const T* row = in + static_cast<size_t>(iy) * Wd;
            T* orow = out + static_cast<size_t>(oy) * Wo;
            for (int kx = 0; kx < 3; ++kx) {
              const T kk = k[ky * 3 + kx];
              // valid ox range for ix = ox*2 - 1 + kx in [0, Wd)
              const int x0 = kx == 0 ? 1 : 0;
              const int x1 = std::min(Wo, (Wd - kx) / 2 + 1);
              for (int ox = x0; ox < x1; ++ox)
                orow[ox] += kk * row[ox * 2 - 1 + kx];
            }
          }
      }
    }
  n->backprop = [N, IC, OC, H, Wd, Ho, Wo](Node<T>& self) {
    auto& x = *self.parents[0];
    auto& W = *self.parents[1];
    auto& b = *self.parents[2];
    const T* g = self.grad.data();
    if (x.needs_grad) x.ensure_grad();
    if (W.needs_grad) W.ensure_grad();
    if (b.needs_grad) b.ensure_grad();
    for (int nn = 0; nn < N; ++nn)
      for (int oc = 0; oc < OC; ++oc) {
        const T* go = g + (static_cast<size_t>(nn) * OC + oc) * Ho * Wo;
        if (b.needs_grad) {
          T acc = T(0);
          for (int i = 0; i < Ho * Wo; ++i) acc += go[i];
          b.grad[oc] += acc;
        }
        for (int ic = 0; ic < IC; ++ic) {
          const T* in = x.val.data() + (static_cast<size_t>(nn) * IC + ic) * H * Wd;
          const T* k = W.val.data() + (static_cast<size_t>(oc) * IC + ic) * 9;
          T* gin = x.needs_grad
                       ? x.grad.data() + (static_cast<size_t>(nn) * IC + ic) * H * Wd
                       : nullptr;
          T* gk = W.needs_grad
                      ? W.grad.data() + (static_cast<size_t>(oc) * IC + ic) * 9
                      : nullptr;
          for (int oy = 0; oy < Ho; ++oy)
            for (int ky = 0; ky < 3; ++ky) {
              const int iy = oy * 2 - 1 + ky;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < 3; ++kx)
                for (int ox = 0; ox < Wo; ++ox) {
                  const int ix = ox * 2 - 1 + kx;
                  if (ix < 0 || ix >= Wd) continue;
                  const T gg = go[static_cast<size_t>(oy) * Wo + ox];
                  if (gin)
                    gin[static_cast<size_t>(iy) * Wd + ix] += gg * k[ky * 3 + kx];
                  if (gk)
                    gk[ky * 3 + kx] += gg * in[static_cast<size_t>(iy) * Wd + ix];
                }
            }
        }
      }
  };
  return Var<T>(n);
}

// Transposed convolution inverting the conv above: 3x3 kernel, stride 2,
// padding 1, output_padding 1, so H -> 2H. W is stored [IC, OC, 3, 3].
template <class T>
Var<T> deconv2d(const Var<T>& x, const Var<T>& W, const Var<T>& b) {
  const auto& xs = x.shape();
  if (xs.size() != 4) throw std::invalid_argument("deconv2d: input not 4-D");
  const int N = xs[0], IC = xs[1], H = xs[2], Wd = xs[3];
  if (W.shape()[0] != IC) throw std::invalid_argument("deconv2d: channel mismatch");
  const int OC = W.shape()[1];
  const int Ho = 2 * H, Wo = 2 * Wd;
  auto n = detail::make_op<T>({N, OC, Ho, Wo}, {x.ptr(), W.ptr(), b.ptr()});
  const T* xv = x.node().val.data();
  const T* wv = W.node().val.data();
  const T* bv = b.node().val.data();
  for (int nn = 0; nn < N; ++nn) {
    for (int oc = 0; oc < OC; ++oc) {
      T* out = n->val.data() + (static_cast<size_t>(nn) * OC + oc) * Ho * Wo;
      for (int i = 0; i < Ho * Wo; ++i) out[i] = bv[oc];
    }
    for (int ic = 0; ic < IC; ++ic) {
      const T* in = xv + (static_cast<size_t>(nn) * IC + ic) * H * Wd;
      for (int oc = 0; oc < OC; ++oc) {
        const T* k = wv + (static_cast<size_t>(ic) * OC + oc) * 9;
        T* out = n->val.data() + (static_cast<size_t>(nn) * OC + oc) * Ho * Wo;
        for (int iy = 0; iy < H; ++iy)
          for (int ky = 0; ky < 3; ++ky) {
            const int oy = iy * 2 - 1 + ky;
            if (oy < 0 || oy >= Ho) continue;
            const T* irow = in + static_cast<size_t>(iy) * Wd;
            T* orow = out + static_cast<size_t>(oy) * Wo;
            for (int kx = 0; kx < 3; ++kx) {
              const T kk = k[ky * 3 + kx];
              for (int ix = 0; ix < Wd; ++ix) {
                const int ox = ix * 2 - 1 + kx;
                if (ox < 0 || ox >= Wo) continue;
                orow[ox] += kk * irow[ix];
              }
            }
          }
      }
    }
  }
  n->backprop = [N, IC, OC, H, Wd, Ho, Wo](Node<T>& self) {
    auto& x = *self.parents[0];
    auto& W = *self.parents[1];
    auto& b = *self.parents[2];
    const T* g = self.grad.data();
    if (x.needs_grad) x.ensure_grad();
    if (W.needs_grad) W.ensure_grad();
    if (b.needs_grad) b.ensure_grad();
    if (b.needs_grad)
      for (int nn = 0; nn < N; ++nn)
        for (int oc = 0; oc < OC; ++oc) {
          const T* go = g + (static_cast<size_t>(nn) * OC + oc) * Ho * Wo;
          T acc = T(0);
          for (int i = 0; i < Ho * Wo; ++i) acc += go[i];
          b.grad[oc] += acc;
        }
    for (int nn = 0; nn < N; ++nn)
      for (int ic = 0; ic < IC; ++ic) {
        const T* in = x.val.data() + (static_cast<size_t>(nn) * IC + ic) * H * Wd;
        T* gin = x.needs_grad
                     ? x.grad.data() + (static_cast<size_t>(nn) * IC + ic) * H * Wd
                     : nullptr;
        for (int oc = 0; oc < OC; ++oc) {
          const T* k = W.val.data() + (static_cast<size_t>(ic) * OC + oc) * 9;
          T* gk = W.needs_grad
                      ? W.grad.data() + (static_cast<size_t>(ic) * OC + oc) * 9
                      : nullptr;
          const T* go = g + (static_cast<size_t>(nn) * OC + oc) * Ho * Wo;
          for (int iy = 0; iy < H; ++iy)
            for (int ky = 0; ky < 3; ++ky) {
              const int oy = iy * 2 - 1 + ky;
              if (oy < 0 || oy >= Ho) continue;
              for (int kx = 0; kx < 3; ++kx)
                for (int ix = 0; ix < Wd; ++ix) {
                  const int ox = ix * 2 - 1 + kx;
                  if (ox < 0 || ox >= Wo) continue;
                  const T gg = go[static_cast<size_t>(oy) * Wo + ox];
                  if (gin) gin[static_cast<size_t>(iy) * Wd + ix] += gg * k[ky * 3 + kx];
                  if (gk) gk[ky * 3 + kx] += gg * in[static_cast<size_t>(iy) * Wd + ix];
                }
            }
        }
      }
  };
  return Var<T>(n);
}

// ---- batch normalization -----------------------------------------------------

// Normalizes over every axis but dim 1. Running stats live outside the graph
// and are only touched in train mode.
template <class T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                 std::vector<T>& running_mean, std::vector<T>& running_var,
                 bool train, T momentum = T(0.1), T eps = T(1e-5)) {
  const auto& xs = x.shape();
  if (xs.size() != 2 && xs.size() != 4)
    throw std::invalid_argument("batchnorm: expects 2-D or 4-D input");
  const int N = xs[0], C = xs[1];
  const int S = xs.size() == 4 ? xs[2] * xs[3] : 1;  // per-sample spatial size
  if (static_cast<int>(gamma.size()) != C ||
      static_cast<int>(running_mean.size()) != C)
    throw std::invalid_argument("batchnorm: channel mismatch");
  const size_t count = static_cast<size_t>(N) * S;

  auto n = detail::make_op<T>(xs, {x.ptr(), gamma.ptr(), beta.ptr()});
  const T* xv = x.node().val.data();

  // mean/var per channel: batch stats in train mode, running in eval
  std::vector<T> mean(C), var(C);
  if (train) {
    for (int c = 0; c < C; ++c) {
      T m = T(0);
      for (int nn = 0; nn < N; ++nn) {
        const T* p = xv + (static_cast<size_t>(nn) * C + c) * S;
        for (int s = 0; s < S; ++s) m += p[s];
      }
      m /= static_cast<T>(count);
      T v = T(0);
      for (int nn = 0; nn < N; ++nn) {
        const T* p = xv + (static_cast<size_t>(nn) * C + c) * S;
        for (int s = 0; s < S; ++s) v += (p[s] - m) * (p[s] - m);
      }
      v /= static_cast<T>(count);
      mean[c] = m;
      var[c] = v;
      const T unbiased =
          count > 1 ? v * static_cast<T>(count) / static_cast<T>(count - 1) : v;
      running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * m;
      running_var[c] = (T(1) - momentum) * running_var[c] + momentum * unbiased;
    }
  } else {
    mean = running_mean;
    var = running_var;
  }

  const T* gv = gamma.node().val.data();
  const T* bv = beta.node().val.data();
  for (int nn = 0; nn < N; ++nn)
    for (int c = 0; c < C; ++c) {
      const T inv = T(1) / std::sqrt(var[c] + eps);
      const T* p = xv + (static_cast<size_t>(nn) * C + c) * S;
      T* o = n->val.data() + (static_cast<size_t>(nn) * C + c) * S;
      for (int s = 0; s < S; ++s)
        o[s] = gv[c] * (p[s] - mean[c]) * inv + bv[c];
    }

  n->backprop = [N, C, S, count, mean, var, train, eps](Node<T>& self) {
    auto& x = *self.parents[0];
    auto& gamma = *self.parents[1];
    auto& beta = *self.parents[2];
    const T* g = self.grad.data();
    const T* xv = x.val.data();
    if (gamma.needs_grad) gamma.ensure_grad();
    if (beta.needs_grad) beta.ensure_grad();
    if (x.needs_grad) x.ensure_grad();
    for (int c = 0; c < C; ++c) {
      const T inv = T(1) / std::sqrt(var[c] + eps);
      // channel reductions: sum g, sum g*xhat
      T sg = T(0), sgx = T(0);
      for (int nn = 0; nn < N; ++nn) {
        const T* p = xv + (static_cast<size_t>(nn) * C + c) * S;
        const T* gr = g + (static_cast<size_t>(nn) * C + c) * S;
        for (int s = 0; s < S; ++s) {
          sg += gr[s];
          sgx += gr[s] * (p[s] - mean[c]) * inv;
        }
      }
      if (beta.needs_grad) beta.grad[c] += sg;
      if (gamma.needs_grad) gamma.grad[c] += sgx;
      if (x.needs_grad) {
        const T gc = gamma.val[c];
        if (train) {
          const T invn = T(1) / static_cast<T>(count);
          for (int nn = 0; nn < N; ++nn) {
            const T* p = xv + (static_cast<size_t>(nn) * C + c) * S;
            const T* gr = g + (static_cast<size_t>(nn) * C + c) * S;
            T* gx = x.grad.data() + (static_cast<size_t>(nn) * C + c) * S;
            for (int s = 0; s < S; ++s) {
              const T xhat = (p[s] - mean[c]) * inv;
              gx[s] += gc * inv * (gr[s] - sg * invn - xhat * sgx * invn);
            }
          }
        } else {
          for (int nn = 0; nn < N; ++nn) {
            const T* gr = g + (static_cast<size_t>(nn) * C + c) * S;
            T* gx = x.grad.data() + (static_cast<size_t>(nn) * C + c) * S;
            for (int s = 0; s < S; ++s) gx[s] += gc * inv * gr[s];
          }
        }
      }
    }
  };
  return Var<T>(n);
}

// ---- loss ---------------------------------------------------------------------

// mean over all elements of (x - target)^2, scalar output
template <class T>
Var<T> mse_loss(const Var<T>& x, const std::vector<T>& target) {
  if (x.size() != target.size())
    throw std::invalid_argument("mse_loss: target size mismatch");
  auto n = detail::make_op<T>({1}, {x.ptr()});
  const auto& xv = x.node().val;
  T acc = T(0);
  for (size_t i = 0; i < xv.size(); ++i) {
    const T e = xv[i] - target[i];
    acc += e * e;
  }
  n->val[0] = acc / static_cast<T>(xv.size());
  n->backprop = [target](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    p.ensure_grad();
    const T scale = T(2) * self.grad[0] / static_cast<T>(p.val.size());
    for (size_t i = 0; i < p.val.size(); ++i)
      p.grad[i] += scale * (p.val[i] - target[i]);
  };
  return Var<T>(n);
}

// ---- layers --------------------------------------------------------------------

template <class T>
void kaiming_uniform(std::vector<T>& w, int fan_in, Rng& rng) {
  // ReLU gain sqrt(2): bound = sqrt(6 / fan_in)
  const double bound = std::sqrt(6.0 / fan_in);
  for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
void bias_uniform(std::vector<T>& b, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : b) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
struct Linear {
  Var<T> W, b;
  Linear() = default;
  Linear(int in, int out, Rng& rng) {
    std::vector<T> w(static_cast<size_t>(out) * in), bias(out);
    kaiming_uniform(w, in, rng);
    bias_uniform(bias, in, rng);
    W = Var<T>::from({out, in}, std::move(w), true);
    b = Var<T>::from({out}, std::move(bias), true);
  }
  Var<T> operator()(const Var<T>& x) const { return linear(x, W, b); }
};

template <class T>
struct Conv2d {
  Var<T> W, b;
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, Rng& rng) {
    const int fan_in = in_ch * 9;
    std::vector<T> w(static_cast<size_t>(out_ch) * in_ch * 9), bias(out_ch);
    kaiming_uniform(w, fan_in, rng);
    bias_uniform(bias, fan_in, rng);
    W = Var<T>::from({out_ch, in_ch, 3, 3}, std::move(w), true);
    b = Var<T>::from({out_ch}, std::move(bias), true);
  }
  Var<T> operator()(const Var<T>& x) const { return conv2d(x, W, b); }
};

template <class T>
struct Deconv2d {
  Var<T> W, b;
  Deconv2d() = default;
  Deconv2d(int in_ch, int out_ch, Rng& rng) {
    const int fan_in = in_ch * 9;
    std::vector<T> w(static_cast<size_t>(in_ch) * out_ch * 9), bias(out_ch);
    kaiming_uniform(w, fan_in, rng);
    bias_uniform(bias, fan_in, rng);
    W = Var<T>::from({in_ch, out_ch, 3, 3}, std::move(w), true);
    b = Var<T>::from({out_ch}, std::move(bias), true);
  }
  Var<T> operator()(const Var<T>& x) const { return deconv2d(x, W, b); }
};

template <class T>
struct BatchNorm {
  Var<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  T momentum = T(0.1), eps = T(1e-5);
  BatchNorm() = default;
  explicit BatchNorm(int channels) {
    gamma = Var<T>::from({channels}, std::vector<T>(channels, T(1)), true);
    beta = Var<T>::from({channels}, std::vector<T>(channels, T(0)), true);
    running_mean.assign(channels, T(0));
    running_var.assign(channels, T(1));
  }
  Var<T> operator()(const Var<T>& x, bool train) {
    return batchnorm(x, gamma, beta, running_mean, running_var, train,
                     momentum, eps);
  }
};

// ---- optimizer -----------------------------------------------------------------

template <class T>
struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t step_count = 0;
  std::vector<std::vector<double>> m, v;  // per parameter tensor

  explicit Adam(double learning_rate = 1e-3) : lr(learning_rate) {}

  // Applies one update to every parameter, then zeroes their grads.
  void step(const std::vector<Var<T>>& params) {
    if (m.empty()) {
      for (const auto& p : params) {
        m.emplace_back(p.size(), 0.0);
        v.emplace_back(p.size(), 0.0);
      }
    }
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (size_t pi = 0; pi < params.size(); ++pi) {
      auto& node = params[pi].node();
      node.ensure_grad();
      for (size_t i = 0; i < node.val.size(); ++i) {
        const double g = static_cast<double>(node.grad[i]);
        m[pi][i] = beta1 * m[pi][i] + (1.0 - beta1) * g;
        v[pi][i] = beta2 * v[pi][i] + (1.0 - beta2) * g * g;
        const double mhat = m[pi][i] / bc1;
        const double vhat = v[pi][i] / bc2;
        node.val[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
      }
      node.grad.assign(node.val.size(), T(0));
    }
  }
};

}  // namespace fdn::ad
