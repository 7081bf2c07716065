#pragma once

// Hot loops of the pipeline. Each kernel has a straightforward serial
// reference and an OpenMP version; tests hold the two against each other
// and bench/ compares their speed.

#include <cstdint>
#include <vector>

#include "jelly/image.hpp"

namespace jelly::kernels {

enum class Exec { serial, parallel };

struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int in_h = 1;
  int in_w = 1;
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int pad = 0;

  int out_h() const noexcept { return (in_h + 2 * pad - kernel_h) / stride + 1; }
  int out_w() const noexcept { return (in_w + 2 * pad - kernel_w) / stride + 1; }
};

// Layouts: x [N,C,H,W], w [F,C,kh,kw], y [N,F,H',W'], all contiguous.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, T* y, Exec exec = Exec::parallel);

/// dx is overwritten.
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* w, const T* dy, T* dx,
                           Exec exec = Exec::parallel);

/// dw is accumulated into. The parallel path reduces fixed-size sample
/// chunks in order, so its result does not depend on the thread count.
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw,
                            Exec exec = Exec::parallel);

/// Uncentered normalized cross-correlation for the template placed with its
/// top-left corner at (row, col). Zero-energy windows score 0.
double ncc_at(const Image& templ, const Image& frame, int row, int col);

struct SearchWindow {
  int row_begin = 0, row_end = 0;  // half-open
  int col_begin = 0, col_end = 0;
};

/// NCC over every offset in `window` (rows outer). Result is row-major with
/// (row_end-row_begin) x (col_end-col_begin) entries.
std::vector<double> ncc_scores(const Image& templ, const Image& frame, const SearchWindow& window,
                               Exec exec = Exec::parallel);

}  // namespace jelly::kernels
