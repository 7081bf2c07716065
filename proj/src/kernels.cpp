#include "jelly/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace jelly::kernels {
namespace {

constexpr int kWeightChunk = 4;

// Output columns [lo, hi) whose input column ox*stride - pad + kx is inside the row.
inline void valid_columns(const ConvGeometry& g, int kx, int ow, int& lo, int& hi) {
  const int off = kx - g.pad;
  lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  hi = g.in_w - off <= 0 ? 0 : std::min(ow, (g.in_w - off + g.stride - 1) / g.stride);
  lo = std::min(lo, hi);
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const int oh = g.out_h(), ow = g.out_w();
  const int hw = oh * ow;
  for (int c = 0; c < g.in_channels; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        T* row = cols + static_cast<std::size_t>((c * g.kernel_h + ky) * g.kernel_w + kx) * hw;
        int lo, hi;
        valid_columns(g, kx, ow, lo, hi);
        const int off = kx - g.pad;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* out = row + oy * ow;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(out, out + ow, T(0));
            continue;
          }
          const T* xr = xc + static_cast<std::size_t>(iy) * g.in_w;
          std::fill(out, out + lo, T(0));
          if (g.stride == 1) {
            std::copy(xr + lo + off, xr + hi + off, out + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) out[ox] = xr[ox * g.stride + off];
          }
          std::fill(out + hi, out + ow, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* dx) {
  const int oh = g.out_h(), ow = g.out_w();
  const int hw = oh * ow;
  for (int c = 0; c < g.in_channels; ++c) {
    T* dc = dx + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        const T* row = cols + static_cast<std::size_t>((c * g.kernel_h + ky) * g.kernel_w + kx) * hw;
        int lo, hi;
        valid_columns(g, kx, ow, lo, hi);
        const int off = kx - g.pad;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          T* dr = dc + static_cast<std::size_t>(iy) * g.in_w;
          const T* in = row + oy * ow;
          for (int ox = lo; ox < hi; ++ox) dr[ox * g.stride + off] += in[ox];
        }
      }
    }
  }
}

// Eight independent partial sums so the loop vectorizes without reassociation.
template <typename T>
T dot(const T* a, const T* b, int n) {
  T lanes[8] = {};
  int i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) lanes[l] += a[i + l] * b[i + l];
  T s = 0;
  for (; i < n; ++i) s += a[i] * b[i];
  for (int l = 0; l < 8; ++l) s += lanes[l];
  return s;
}

template <typename T>
T x_at(const ConvGeometry& g, const T* x, int n, int c, int iy, int ix) {
  if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) return T(0);
  return x[((static_cast<std::size_t>(n) * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
}

template <typename T>
void forward_serial(const ConvGeometry& g, const T* x, const T* w, T* y) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int n = 0; n < g.batch; ++n)
    for (int f = 0; f < g.out_channels; ++f)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = 0;
          for (int c = 0; c < g.in_channels; ++c)
            for (int ky = 0; ky < g.kernel_h; ++ky)
              for (int kx = 0; kx < g.kernel_w; ++kx)
                acc += x_at(g, x, n, c, oy * g.stride - g.pad + ky, ox * g.stride - g.pad + kx) *
                       w[((static_cast<std::size_t>(f) * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
          y[((static_cast<std::size_t>(n) * g.out_channels + f) * oh + oy) * ow + ox] = acc;
        }
}

template <typename T>
void backward_input_serial(const ConvGeometry& g, const T* w, const T* dy, T* dx) {
  const int oh = g.out_h(), ow = g.out_w();
  std::fill(dx, dx + static_cast<std::size_t>(g.batch) * g.in_channels * g.in_h * g.in_w, T(0));
  for (int n = 0; n < g.batch; ++n)
    for (int f = 0; f < g.out_channels; ++f)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const T d = dy[((static_cast<std::size_t>(n) * g.out_channels + f) * oh + oy) * ow + ox];
          for (int c = 0; c < g.in_channels; ++c)
            for (int ky = 0; ky < g.kernel_h; ++ky)
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int iy = oy * g.stride - g.pad + ky, ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                dx[((static_cast<std::size_t>(n) * g.in_channels + c) * g.in_h + iy) * g.in_w + ix] +=
                    d * w[((static_cast<std::size_t>(f) * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
              }
        }
}

template <typename T>
void backward_weight_serial(const ConvGeometry& g, const T* x, const T* dy, T* dw) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int f = 0; f < g.out_channels; ++f)
    for (int c = 0; c < g.in_channels; ++c)
      for (int ky = 0; ky < g.kernel_h; ++ky)
        for (int kx = 0; kx < g.kernel_w; ++kx) {
          T acc = 0;
          for (int n = 0; n < g.batch; ++n)
            for (int oy = 0; oy < oh; ++oy)
              for (int ox = 0; ox < ow; ++ox)
                acc += dy[((static_cast<std::size_t>(n) * g.out_channels + f) * oh + oy) * ow + ox] *
                       x_at(g, x, n, c, oy * g.stride - g.pad + ky, ox * g.stride - g.pad + kx);
          dw[((static_cast<std::size_t>(f) * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx] += acc;
        }
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, T* y, Exec exec) {
  if (exec == Exec::serial) return forward_serial(g, x, w, y);
  const int hw = g.out_h() * g.out_w();
  const int ckk = g.in_channels * g.kernel_h * g.kernel_w;
  const std::size_t x_stride = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
#pragma omp parallel
  {
    std::vector<T> cols(static_cast<std::size_t>(ckk) * hw);
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      im2col(g, x + n * x_stride, cols.data());
      T* yn = y + static_cast<std::size_t>(n) * g.out_channels * hw;
      for (int f = 0; f < g.out_channels; ++f) {
        T* yr = yn + static_cast<std::size_t>(f) * hw;
        std::fill(yr, yr + hw, T(0));
        const T* wr = w + static_cast<std::size_t>(f) * ckk;
        for (int k = 0; k < ckk; ++k) {
          const T wv = wr[k];
          const T* cr = cols.data() + static_cast<std::size_t>(k) * hw;
          for (int p = 0; p < hw; ++p) yr[p] += wv * cr[p];
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* w, const T* dy, T* dx, Exec exec) {
  if (exec == Exec::serial) return backward_input_serial(g, w, dy, dx);
  const int hw = g.out_h() * g.out_w();
  const int ckk = g.in_channels * g.kernel_h * g.kernel_w;
  const std::size_t x_stride = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
#pragma omp parallel
  {
    std::vector<T> dcols(static_cast<std::size_t>(ckk) * hw);
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      std::fill(dcols.begin(), dcols.end(), T(0));
      const T* dyn = dy + static_cast<std::size_t>(n) * g.out_channels * hw;
      for (int f = 0; f < g.out_channels; ++f) {
        const T* dr = dyn + static_cast<std::size_t>(f) * hw;
        const T* wr = w + static_cast<std::size_t>(f) * ckk;
        for (int k = 0; k < ckk; ++k) {
          const T wv = wr[k];
          T* cr = dcols.data() + static_cast<std::size_t>(k) * hw;
          for (int p = 0; p < hw; ++p) cr[p] += wv * dr[p];
        }
      }
      T* dxn = dx + n * x_stride;
      std::fill(dxn, dxn + x_stride, T(0));
      col2im_add(g, dcols.data(), dxn);
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, Exec exec) {
  if (exec == Exec::serial) return backward_weight_serial(g, x, dy, dw);
  const int hw = g.out_h() * g.out_w();
  const int ckk = g.in_channels * g.kernel_h * g.kernel_w;
  const std::size_t wsize = static_cast<std::size_t>(g.out_channels) * ckk;
  const std::size_t x_stride = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const int chunks = (g.batch + kWeightChunk - 1) / kWeightChunk;
  std::vector<T> partial(static_cast<std::size_t>(chunks) * wsize, T(0));
#pragma omp parallel
  {
    std::vector<T> cols(static_cast<std::size_t>(ckk) * hw);
#pragma omp for schedule(static)
    for (int chunk = 0; chunk < chunks; ++chunk) {
      T* acc = partial.data() + static_cast<std::size_t>(chunk) * wsize;
      const int n_end = std::min(g.batch, (chunk + 1) * kWeightChunk);
      for (int n = chunk * kWeightChunk; n < n_end; ++n) {
        im2col(g, x + n * x_stride, cols.data());
        const T* dyn = dy + static_cast<std::size_t>(n) * g.out_channels * hw;
        for (int f = 0; f < g.out_channels; ++f) {
          const T* dr = dyn + static_cast<std::size_t>(f) * hw;
          T* ar = acc + static_cast<std::size_t>(f) * ckk;
          for (int k = 0; k < ckk; ++k) ar[k] += dot(dr, cols.data() + static_cast<std::size_t>(k) * hw, hw);
        }
      }
    }
  }
  for (int chunk = 0; chunk < chunks; ++chunk) {
    const T* acc = partial.data() + static_cast<std::size_t>(chunk) * wsize;
    for (std::size_t i = 0; i < wsize; ++i) dw[i] += acc[i];
  }
}

template void conv2d_forward<float>(const ConvGeometry&, const float*, const float*, float*, Exec);
template void conv2d_forward<double>(const ConvGeometry&, const double*, const double*, double*, Exec);
template void conv2d_backward_input<float>(const ConvGeometry&, const float*, const float*, float*, Exec);
template void conv2d_backward_input<double>(const ConvGeometry&, const double*, const double*, double*, Exec);
template void conv2d_backward_weight<float>(const ConvGeometry&, const float*, const float*, float*, Exec);
template void conv2d_backward_weight<double>(const ConvGeometry&, const double*, const double*, double*, Exec);

namespace {

double template_energy(const Image& templ) {
  double tt = 0.0;
  for (float v : templ.values()) tt += static_cast<double>(v) * v;
  return tt;
}

double ncc_with_energy(const Image& templ, double tt, const Image& frame, int row, int col) {
  double ti = 0.0, ii = 0.0;
  for (int a = 0; a < templ.height(); ++a) {
    const float* tr = templ.data() + static_cast<std::size_t>(a) * templ.width();
    const float* fr = frame.data() + static_cast<std::size_t>(row + a) * frame.width() + col;
    for (int b = 0; b < templ.width(); ++b) {
      const double iv = fr[b];
      ti += tr[b] * iv;
      ii += iv * iv;
    }
  }
  if (tt <= 0.0 || ii <= 0.0) return 0.0;
  // sqrt(tt)*sqrt(ii) folded into one root: sqrt(fl(x*x)) == x keeps exact
  // matches at exactly 1.0
  return ti / std::sqrt(tt * ii);
}

}  // namespace

double ncc_at(const Image& templ, const Image& frame, int row, int col) {
  return ncc_with_energy(templ, template_energy(templ), frame, row, col);
}

std::vector<double> ncc_scores(const Image& templ, const Image& frame, const SearchWindow& win,
                               Exec exec) {
  const int rows = win.row_end - win.row_begin;
  const int cols = win.col_end - win.col_begin;
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  const double tt = template_energy(templ);
  if (exec == Exec::serial) {
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        out[static_cast<std::size_t>(r) * cols + c] =
            ncc_with_energy(templ, tt, frame, win.row_begin + r, win.col_begin + c);
    return out;
  }
#pragma omp parallel for schedule(dynamic, 1)
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<std::size_t>(r) * cols + c] =
          ncc_with_energy(templ, tt, frame, win.row_begin + r, win.col_begin + c);
  return out;
}

}  // namespace jelly::kernels
