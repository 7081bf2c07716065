#include "jelly/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jelly/kernels.hpp"

namespace jelly::ad {

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (!loss || loss->value.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        (loss ? shape_str(loss->value.shape()) : std::string("null")));
  }
  visits_ = 0;
  if (!loss->requires_grad) return;
  loss->grad_buffer().fill(T(1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<T>& node = **it;
    ++visits_;
    if (node.grad.empty() || !node.backward) continue;
    node.backward();
  }
}

namespace {

template <typename T>
Var<T> make(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a->value.shape() != b->value.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a->value.shape()) + " and " +
                     shape_str(b->value.shape()) + " differ");
  }
}

template <typename T>
void require_rank(const Var<T>& a, int rank, const char* op) {
  if (a->value.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a->value.shape()));
  }
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> y(a->value.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->value[i] + b->value[i];
  auto out = make(std::move(y));
  if (tape.needs_grad({&a, &b})) {
    tape.record(out, [a, b, o = out.get()] {
      for (const auto* in : {&a, &b}) {
        if (!(*in)->requires_grad) continue;
        auto& g = (*in)->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> y(a->value.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->value[i] * b->value[i];
  auto out = make(std::move(y));
  if (tape.needs_grad({&a, &b})) {
    tape.record(out, [a, b, o = out.get()] {
      if (a->requires_grad) {
        auto& g = a->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * b->value[i];
      }
      if (b->requires_grad) {
        auto& g = b->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * a->value[i];
      }
    });
  }
  return out;
}

template <typename T>
Var<T> scale(Tape<T>& tape, const Var<T>& a, T factor) {
  Tensor<T> y(a->value.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->value[i] * factor;
  auto out = make(std::move(y));
  if (tape.needs_grad({&a})) {
    tape.record(out, [a, factor, o = out.get()] {
      auto& g = a->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * factor;
    });
  }
  return out;
}

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
  Tensor<T> y(x->value.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x->value[i] > T(0) ? x->value[i] : T(0);
  auto out = make(std::move(y));
  if (tape.needs_grad({&x})) {
    tape.record(out, [x, o = out.get()] {
      auto& g = x->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x->value[i] > T(0)) g[i] += o->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
Var<T> sigmoid(Tape<T>& tape, const Var<T>& x) {
  Tensor<T> y(x->value.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = sigmoid_scalar(x->value[i]);
  auto out = make(std::move(y));
  if (tape.needs_grad({&x})) {
    tape.record(out, [x, o = out.get()] {
      auto& g = x->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T s = o->value[i];
        g[i] += o->grad[i] * s * (T(1) - s);
      }
    });
  }
  return out;
}

template <typename T>
Var<T> tanh(Tape<T>& tape, const Var<T>& x) {
  Tensor<T> y(x->value.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(x->value[i]);
  auto out = make(std::move(y));
  if (tape.needs_grad({&x})) {
    tape.record(out, [x, o = out.get()] {
      auto& g = x->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T t = o->value[i];
        g[i] += o->grad[i] * (T(1) - t * t);
      }
    });
  }
  return out;
}

template <typename T>
Var<T> linear(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const int n = x->value.dim(0), in = x->value.dim(1), outf = w->value.dim(0);
  if (w->value.dim(1) != in) {
    throw ShapeError("linear: input " + shape_str(x->value.shape()) + " vs weight " + shape_str(w->value.shape()));
  }
  if (b && (b->value.rank() != 1 || b->value.dim(0) != outf)) {
    throw ShapeError("linear: bias " + shape_str(b->value.shape()) + " vs weight " + shape_str(w->value.shape()));
  }
  Tensor<T> y({n, outf});
  const T* xv = x->value.data();
  const T* wv = w->value.data();
  for (int r = 0; r < n; ++r) {
    for (int o = 0; o < outf; ++o) {
      T acc = b ? b->value[o] : T(0);
      const T* xr = xv + static_cast<std::size_t>(r) * in;
      const T* wr = wv + static_cast<std::size_t>(o) * in;
      for (int k = 0; k < in; ++k) acc += xr[k] * wr[k];
      y[static_cast<std::size_t>(r) * outf + o] = acc;
    }
  }
  auto out = make(std::move(y));
  if (tape.needs_grad({&x, &w, &b})) {
    tape.record(out, [x, w, b, n, in, outf, o = out.get()] {
      const T* dy = o->grad.data();
      if (x->requires_grad) {
        auto& g = x->grad_buffer();
        for (int r = 0; r < n; ++r)
          for (int f = 0; f < outf; ++f) {
            const T d = dy[static_cast<std::size_t>(r) * outf + f];
            const T* wr = w->value.data() + static_cast<std::size_t>(f) * in;
            T* gr = g.data() + static_cast<std::size_t>(r) * in;
            for (int k = 0; k < in; ++k) gr[k] += d * wr[k];
          }
      }
      if (w->requires_grad) {
        auto& g = w->grad_buffer();
        for (int r = 0; r < n; ++r)
          for (int f = 0; f < outf; ++f) {
            const T d = dy[static_cast<std::size_t>(r) * outf + f];
            const T* xr = x->value.data() + static_cast<std::size_t>(r) * in;
            T* gr = g.data() + static_cast<std::size_t>(f) * in;
            for (int k = 0; k < in; ++k) gr[k] += d * xr[k];
          }
      }
      if (b && b->requires_grad) {
        auto& g = b->grad_buffer();
        for (int r = 0; r < n; ++r)
          for (int f = 0; f < outf; ++f) g[f] += dy[static_cast<std::size_t>(r) * outf + f];
      }
    });
  }
  return out;
}

template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, int stride, int pad) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  kernels::ConvGeometry g;
  g.batch = x->value.dim(0);
  g.in_channels = x->value.dim(1);
  g.in_h = x->value.dim(2);
  g.in_w = x->value.dim(3);
  g.out_channels = w->value.dim(0);
  g.kernel_h = w->value.dim(2);
  g.kernel_w = w->value.dim(3);
  g.stride = stride;
  g.pad = pad;
  if (w->value.dim(1) != g.in_channels) {
    throw ShapeError("conv2d: input " + shape_str(x->value.shape()) + " vs kernel " + shape_str(w->value.shape()));
  }
  if (stride < 1 || pad < 0 || g.out_h() < 1 || g.out_w() < 1) {
    throw ShapeError("conv2d: empty output for input " + shape_str(x->value.shape()));
  }
  Tensor<T> y({g.batch, g.out_channels, g.out_h(), g.out_w()});
  kernels::conv2d_forward(g, x->value.data(), w->value.data(), y.data());
  auto out = make(std::move(y));
  if (tape.needs_grad({&x, &w})) {
    tape.record(out, [x, w, g, o = out.get()] {
      if (x->requires_grad) {
        auto& gx = x->grad_buffer();
        Tensor<T> dx(x->value.shape());
        kernels::conv2d_backward_input(g, w->value.data(), o->grad.data(), dx.data());
        for (std::size_t i = 0; i < dx.size(); ++i) gx[i] += dx[i];
      }
      if (w->requires_grad) {
        kernels::conv2d_backward_weight(g, x->value.data(), o->grad.data(), w->grad_buffer().data());
      }
    });
  }
  return out;
}

template <typename T>
Var<T> max_pool2d(Tape<T>& tape, const Var<T>& x, int kernel, int stride, int pad) {
  require_rank(x, 4, "max_pool2d");
  const int n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  const int oh = (h + 2 * pad - kernel) / stride + 1, ow = (w + 2 * pad - kernel) / stride + 1;
  if (oh < 1 || ow < 1) throw ShapeError("max_pool2d: empty output for " + shape_str(x->value.shape()));
  Tensor<T> y({n, c, oh, ow});
  std::vector<std::size_t> argmax(y.size());
  for (int p = 0; p < n * c; ++p) {
    const T* xp = x->value.data() + static_cast<std::size_t>(p) * h * w;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = 0;
        bool found = false;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const T v = xp[static_cast<std::size_t>(iy) * w + ix];
            if (!found || v > best) {
              best = v;
              best_idx = static_cast<std::size_t>(p) * h * w + static_cast<std::size_t>(iy) * w + ix;
              found = true;
            }
          }
        }
        const std::size_t k = (static_cast<std::size_t>(p) * oh + oy) * ow + ox;
        y[k] = best;
        argmax[k] = best_idx;
      }
  }
  auto out = make(std::move(y));
  if (tape.needs_grad({&x})) {
    tape.record(out, [x, argmax = std::move(argmax), o = out.get()] {
      auto& g = x->grad_buffer();
      for (std::size_t k = 0; k < argmax.size(); ++k) g[argmax[k]] += o->grad[k];
    });
  }
  return out;
}

template <typename T>
Var<T> global_avg_pool(Tape<T>& tape, const Var<T>& x) {
  require_rank(x, 4, "global_avg_pool");
  const int n = x->value.dim(0), c = x->value.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x->value.dim(2)) * x->value.dim(3);
  Tensor<T> y({n, c});
  for (std::size_t p = 0; p < static_cast<std::size_t>(n) * c; ++p) {
    const T* xp = x->value.data() + p * hw;
    T acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += xp[i];
    y[p] = acc / static_cast<T>(hw);
  }
  auto out = make(std::move(y));
  if (tape.needs_grad({&x})) {
    tape.record(out, [x, hw, o = out.get()] {
      auto& g = x->grad_buffer();
      for (std::size_t p = 0; p < o->grad.size(); ++p) {
        const T d = o->grad[p] / static_cast<T>(hw);
        T* gp = g.data() + p * hw;
        for (std::size_t i = 0; i < hw; ++i) gp[i] += d;
      }
    });
  }
  return out;
}

template <typename T>
Var<T> batch_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state,
                  bool training, double momentum, double eps) {
  const int rank = x->value.rank();
  if (rank != 2 && rank != 4) throw ShapeError("batch_norm: expected [N,C] or [N,C,H,W]");
  const int n = x->value.dim(0), c = x->value.dim(1);
  const std::size_t inner = rank == 4 ? static_cast<std::size_t>(x->value.dim(2)) * x->value.dim(3) : 1;
  if (gamma->value.size() != static_cast<std::size_t>(c) || beta->value.size() != static_cast<std::size_t>(c)) {
    throw ShapeError("batch_norm: affine parameters do not match " + std::to_string(c) + " channels");
  }
  if (state.running_mean.size() != static_cast<std::size_t>(c)) {
    state.running_mean = Tensor<T>({c}, T(0));
    state.running_var = Tensor<T>({c}, T(1));
  }
  const std::size_t m = static_cast<std::size_t>(n) * inner;
  const auto at = [&](int s, int ch) { return (static_cast<std::size_t>(s) * c + ch) * inner; };

  Tensor<T> xhat(x->value.shape());
  Tensor<T> y(x->value.shape());
  std::vector<T> inv_std(c);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    T mean, var;
    if (training) {
      T s = 0;
      for (int i = 0; i < n; ++i) {
        const T* xp = x->value.data() + at(i, ch);
        for (std::size_t k = 0; k < inner; ++k) s += xp[k];
      }
      mean = s / static_cast<T>(m);
      T ss = 0;
      for (int i = 0; i < n; ++i) {
        const T* xp = x->value.data() + at(i, ch);
        for (std::size_t k = 0; k < inner; ++k) ss += (xp[k] - mean) * (xp[k] - mean);
      }
      var = ss / static_cast<T>(m);
      const T unbiased = m > 1 ? ss / static_cast<T>(m - 1) : var;
      state.running_mean[ch] = static_cast<T>((1.0 - momentum) * state.running_mean[ch] + momentum * mean);
      state.running_var[ch] = static_cast<T>((1.0 - momentum) * state.running_var[ch] + momentum * unbiased);
    } else {
      mean = state.running_mean[ch];
      var = state.running_var[ch];
    }
    const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
    inv_std[ch] = is;
    const T gm = gamma->value[ch], bt = beta->value[ch];
    for (int i = 0; i < n; ++i) {
      const std::size_t off = at(i, ch);
      for (std::size_t k = 0; k < inner; ++k) {
        const T h = (x->value[off + k] - mean) * is;
        xhat[off + k] = h;
        y[off + k] = gm * h + bt;
      }
    }
  }
  auto out = make(std::move(y));
  if (tape.needs_grad({&x, &gamma, &beta})) {
    tape.record(out, [x, gamma, beta, training, n, c, inner, m, xhat = std::move(xhat), inv_std = std::move(inv_std),
                      o = out.get()] {
      const auto at = [&](int s, int ch) { return (static_cast<std::size_t>(s) * c + ch) * inner; };
      T* gx = x->requires_grad ? x->grad_buffer().data() : nullptr;
      T* gg = gamma->requires_grad ? gamma->grad_buffer().data() : nullptr;
      T* gb = beta->requires_grad ? beta->grad_buffer().data() : nullptr;
#pragma omp parallel for schedule(static)
      for (int ch = 0; ch < c; ++ch) {
        T sum_dy = 0, sum_dy_xhat = 0;
        for (int i = 0; i < n; ++i) {
          const std::size_t off = at(i, ch);
          for (std::size_t k = 0; k < inner; ++k) {
            sum_dy += o->grad[off + k];
            sum_dy_xhat += o->grad[off + k] * xhat[off + k];
          }
        }
        if (gg) gg[ch] += sum_dy_xhat;
        if (gb) gb[ch] += sum_dy;
        if (!gx) continue;
        const T gm = gamma->value[ch];
        const T is = inv_std[ch];
        for (int i = 0; i < n; ++i) {
          const std::size_t off = at(i, ch);
          for (std::size_t k = 0; k < inner; ++k) {
            if (training) {
              const T mm = static_cast<T>(m);
              gx[off + k] += gm * is / mm * (mm * o->grad[off + k] - sum_dy - xhat[off + k] * sum_dy_xhat);
            } else {
              gx[off + k] += gm * is * o->grad[off + k];
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> concat(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  if (sa.size() < 2 || sa.size() != sb.size() || sa[0] != sb[0] ||
      !std::equal(sa.begin() + 2, sa.end(), sb.begin() + 2)) {
    throw ShapeError("concat: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  }
  const int n = sa[0];
  const std::size_t inner = shape_size(std::vector<int>(sa.begin() + 2, sa.end()));
  const std::size_t ca = static_cast<std::size_t>(sa[1]) * inner, cb = static_cast<std::size_t>(sb[1]) * inner;
  auto shape = sa;
  shape[1] = sa[1] + sb[1];
  Tensor<T> y(shape);
  for (int i = 0; i < n; ++i) {
    std::copy_n(a->value.data() + i * ca, ca, y.data() + i * (ca + cb));
    std::copy_n(b->value.data() + i * cb, cb, y.data() + i * (ca + cb) + ca);
  }
  auto out = make(std::move(y));
  if (tape.needs_grad({&a, &b})) {
    tape.record(out, [a, b, n, ca, cb, o = out.get()] {
      for (int i = 0; i < n; ++i) {
        const T* src = o->grad.data() + i * (ca + cb);
        if (a->requires_grad) {
          T* g = a->grad_buffer().data() + i * ca;
          for (std::size_t k = 0; k < ca; ++k) g[k] += src[k];
        }
        if (b->requires_grad) {
          T* g = b->grad_buffer().data() + i * cb;
          for (std::size_t k = 0; k < cb; ++k) g[k] += src[ca + k];
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> narrow(Tape<T>& tape, const Var<T>& x, int start, int len) {
  require_rank(x, 2, "narrow");
  const int n = x->value.dim(0), k = x->value.dim(1);
  if (start < 0 || len < 1 || start + len > k) throw ShapeError("narrow: columns out of range");
  Tensor<T> y({n, len});
  for (int r = 0; r < n; ++r)
    std::copy_n(x->value.data() + static_cast<std::size_t>(r) * k + start, len, y.data() + static_cast<std::size_t>(r) * len);
  auto out = make(std::move(y));
  if (tape.needs_grad({&x})) {
    tape.record(out, [x, n, k, start, len, o = out.get()] {
      auto& g = x->grad_buffer();
      for (int r = 0; r < n; ++r)
        for (int j = 0; j < len; ++j)
          g[static_cast<std::size_t>(r) * k + start + j] += o->grad[static_cast<std::size_t>(r) * len + j];
    });
  }
  return out;
}

template <typename T>
Var<T> time_step(Tape<T>& tape, const Var<T>& features, int batch, int steps, int t) {
  require_rank(features, 2, "time_step");
  if (features->value.dim(0) != batch * steps || t < 0 || t >= steps) {
    throw ShapeError("time_step: " + shape_str(features->value.shape()) + " is not B*T rows");
  }
  const int d = features->value.dim(1);
  Tensor<T> y({batch, d});
  for (int b = 0; b < batch; ++b)
    std::copy_n(features->value.data() + static_cast<std::size_t>(b * steps + t) * d, d,
                y.data() + static_cast<std::size_t>(b) * d);
  auto out = make(std::move(y));
  if (tape.needs_grad({&features})) {
    tape.record(out, [features, batch, steps, t, d, o = out.get()] {
      auto& g = features->grad_buffer();
      for (int b = 0; b < batch; ++b) {
        T* gr = g.data() + static_cast<std::size_t>(b * steps + t) * d;
        const T* src = o->grad.data() + static_cast<std::size_t>(b) * d;
        for (int j = 0; j < d; ++j) gr[j] += src[j];
      }
    });
  }
  return out;
}

template <typename T>
Var<T> time_mean(Tape<T>& tape, const Var<T>& features, int batch, int steps) {
  require_rank(features, 2, "time_mean");
  if (features->value.dim(0) != batch * steps) {
    throw ShapeError("time_mean: " + shape_str(features->value.shape()) + " is not B*T rows");
  }
  const int d = features->value.dim(1);
  Tensor<T> y({batch, d});
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < steps; ++t)
      for (int j = 0; j < d; ++j)
        y[static_cast<std::size_t>(b) * d + j] += features->value[static_cast<std::size_t>(b * steps + t) * d + j];
  for (auto& v : y.values()) v /= static_cast<T>(steps);
  auto out = make(std::move(y));
  if (tape.needs_grad({&features})) {
    tape.record(out, [features, batch, steps, d, o = out.get()] {
      auto& g = features->grad_buffer();
      for (int b = 0; b < batch; ++b)
        for (int t = 0; t < steps; ++t)
          for (int j = 0; j < d; ++j)
            g[static_cast<std::size_t>(b * steps + t) * d + j] +=
                o->grad[static_cast<std::size_t>(b) * d + j] / static_cast<T>(steps);
    });
  }
  return out;
}

template <typename T>
Var<T> sum(Tape<T>& tape, const Var<T>& x) {
  T acc = 0;
  for (T v : x->value.values()) acc += v;
  auto out = make(Tensor<T>({1}, acc));
  if (tape.needs_grad({&x})) {
    tape.record(out, [x, o = out.get()] {
      auto& g = x->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[0];
    });
  }
  return out;
}

template <typename T>
Var<T> binary_cross_entropy(Tape<T>& tape, const Var<T>& prob, const std::vector<int>& labels) {
  const std::size_t n = prob->value.size();
  if (n == 0 || labels.empty()) throw InputError("binary_cross_entropy: empty batch");
  if (labels.size() != n) throw ShapeError("binary_cross_entropy: label count differs from predictions");
  const T lo = static_cast<T>(kProbabilityClamp), hi = T(1) - static_cast<T>(kProbabilityClamp);
  std::vector<T> clamped(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T p = std::clamp(prob->value[i], lo, hi);
    clamped[i] = p;
    acc += labels[i] ? std::log(static_cast<double>(p)) : std::log1p(-static_cast<double>(p));
  }
  auto out = make(Tensor<T>({1}, static_cast<T>(-acc / static_cast<double>(n))));
  if (tape.needs_grad({&prob})) {
    tape.record(out, [prob, labels, clamped = std::move(clamped), n, o = out.get()] {
      auto& g = prob->grad_buffer();
      const T scale = o->grad[0] / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const T p = clamped[i];
        g[i] += scale * (labels[i] ? -T(1) / p : T(1) / (T(1) - p));
      }
    });
  }
  return out;
}

template <typename T>
LstmState<T> lstm_cell(Tape<T>& tape, const Var<T>& x, const LstmState<T>& prev, const LstmWeights<T>& wts) {
  const int hidden = wts.hidden();
  if (wts.w_ih->value.dim(0) != 4 * hidden || wts.w_hh->value.dim(0) != 4 * hidden) {
    throw ShapeError("lstm_cell: weights are not [4H, *]");
  }
  if (prev.h->value.rank() != 2 || prev.h->value.dim(1) != hidden || prev.c->value.shape() != prev.h->value.shape()) {
    throw ShapeError("lstm_cell: state " + shape_str(prev.h->value.shape()) + " does not match hidden size " +
                     std::to_string(hidden));
  }
  const auto gates = add(tape, linear(tape, x, wts.w_ih, wts.bias), linear(tape, prev.h, wts.w_hh, Var<T>{}));
  const auto i = sigmoid(tape, narrow(tape, gates, 0, hidden));
  const auto f = sigmoid(tape, narrow(tape, gates, hidden, hidden));
  const auto g = tanh(tape, narrow(tape, gates, 2 * hidden, hidden));
  const auto o = sigmoid(tape, narrow(tape, gates, 3 * hidden, hidden));
  const auto c = add(tape, mul(tape, f, prev.c), mul(tape, i, g));
  const auto h = mul(tape, o, tanh(tape, c));
  return {h, c};
}

template <typename T>
LstmState<T> lstm_sequence(Tape<T>& tape, const std::vector<Var<T>>& sequence, const LstmWeights<T>& weights,
                           bool reverse) {
  if (sequence.empty()) throw InputError("lstm: empty sequence");
  const int batch = sequence.front()->value.dim(0);
  LstmState<T> state{constant(Tensor<T>({batch, weights.hidden()})), constant(Tensor<T>({batch, weights.hidden()}))};
  const std::size_t n = sequence.size();
  for (std::size_t k = 0; k < n; ++k) state = lstm_cell(tape, sequence[reverse ? n - 1 - k : k], state, weights);
  return state;
}

template <typename T>
std::pair<Var<T>, Var<T>> bilstm(Tape<T>& tape, const std::vector<Var<T>>& sequence, const LstmWeights<T>& forward,
                                 const LstmWeights<T>& backward) {
  if (sequence.empty()) throw InputError("bilstm: empty sequence");
  auto fwd = lstm_sequence(tape, sequence, forward, false);
  auto bwd = lstm_sequence(tape, sequence, backward, true);
  return {fwd.h, bwd.h};
}

template <typename T>
Var<T> ParamSet<T>::add(const std::string& name, Tensor<T> init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
  index_[name] = items_.size();
  items_.emplace_back(name, parameter(std::move(init)));
  return items_.back().second;
}

template <typename T>
const Var<T>& ParamSet<T>::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return items_[it->second].second;
}

template <typename T>
std::size_t ParamSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : items_) n += v->value.size();
  return n;
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& [name, v] : items_) v->grad = Tensor<T>();
}

template <typename T>
void sgd_step(ParamSet<T>& params, double learning_rate) {
  const T lr = static_cast<T>(learning_rate);
  for (auto& [name, v] : params.items()) {
    if (v->grad.empty()) continue;
    for (std::size_t i = 0; i < v->value.size(); ++i) v->value[i] -= lr * v->grad[i];
  }
  params.zero_grad();
}

#define JELLY_INSTANTIATE(T)                                                                                       \
  template class Tape<T>;                                                                                          \
  template class ParamSet<T>;                                                                                      \
  template Var<T> add(Tape<T>&, const Var<T>&, const Var<T>&);                                                     \
  template Var<T> mul(Tape<T>&, const Var<T>&, const Var<T>&);                                                     \
  template Var<T> scale(Tape<T>&, const Var<T>&, T);                                                               \
  template Var<T> relu(Tape<T>&, const Var<T>&);                                                                   \
  template Var<T> sigmoid(Tape<T>&, const Var<T>&);                                                                \
  template Var<T> tanh(Tape<T>&, const Var<T>&);                                                                   \
  template Var<T> linear(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&);                                   \
  template Var<T> conv2d(Tape<T>&, const Var<T>&, const Var<T>&, int, int);                                        \
  template Var<T> max_pool2d(Tape<T>&, const Var<T>&, int, int, int);                                              \
  template Var<T> global_avg_pool(Tape<T>&, const Var<T>&);                                                        \
  template Var<T> batch_norm(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, BatchNormState<T>&, bool,      \
                             double, double);                                                                      \
  template Var<T> concat(Tape<T>&, const Var<T>&, const Var<T>&);                                                  \
  template Var<T> narrow(Tape<T>&, const Var<T>&, int, int);                                                       \
  template Var<T> time_step(Tape<T>&, const Var<T>&, int, int, int);                                               \
  template Var<T> time_mean(Tape<T>&, const Var<T>&, int, int);                                                    \
  template Var<T> sum(Tape<T>&, const Var<T>&);                                                                    \
  template Var<T> binary_cross_entropy(Tape<T>&, const Var<T>&, const std::vector<int>&);                          \
  template LstmState<T> lstm_cell(Tape<T>&, const Var<T>&, const LstmState<T>&, const LstmWeights<T>&);            \
  template LstmState<T> lstm_sequence(Tape<T>&, const std::vector<Var<T>>&, const LstmWeights<T>&, bool);          \
  template std::pair<Var<T>, Var<T>> bilstm(Tape<T>&, const std::vector<Var<T>>&, const LstmWeights<T>&,           \
                                            const LstmWeights<T>&);                                                \
  template void sgd_step(ParamSet<T>&, double);

JELLY_INSTANTIATE(float)
JELLY_INSTANTIATE(double)

}  // namespace jelly::ad
