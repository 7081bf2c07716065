#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's numerical code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "jelly/autodiff.hpp"
#include "jelly/image.hpp"

namespace oracle {

using jelly::Image;

// Direct summation, each root taken separately.
inline double ncc(const Image& templ, const Image& frame, int row, int col) {
  long double ti = 0, tt = 0, ii = 0;
  for (int a = 0; a < templ.height(); ++a)
    for (int b = 0; b < templ.width(); ++b) {
      const long double t = templ.at(a, b);
      const long double i = frame.at(row + a, col + b);
      ti += t * i;
      tt += t * t;
      ii += i * i;
    }
  if (tt == 0 || ii == 0) return 0.0;
  return static_cast<double>(ti / (std::sqrt(tt) * std::sqrt(ii)));
}

inline double bce(const std::vector<double>& p, const std::vector<int>& y) {
  double total = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double q = std::min(std::max(p[k], 1e-7), 1.0 - 1e-7);
    total += -(y[k] * std::log(q) + (1 - y[k]) * std::log(1.0 - q));
  }
  return total / static_cast<double>(p.size());
}

struct Counts {
  int tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Counts confusion(const std::vector<double>& p, const std::vector<int>& y, double threshold) {
  Counts c;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const int pred = p[k] >= threshold ? 1 : 0;
    if (pred == 1 && y[k] == 1) c.tp++;
    if (pred == 1 && y[k] == 0) c.fp++;
    if (pred == 0 && y[k] == 0) c.tn++;
    if (pred == 0 && y[k] == 1) c.fn++;
  }
  return c;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

inline jelly::Tensor<double> random_tensor(std::vector<int> shape, std::mt19937_64& gen, double lo = -1.0,
                                           double hi = 1.0) {
  const std::size_t n = jelly::shape_size(shape);
  return jelly::Tensor<double>(std::move(shape), random_vector(n, gen, lo, hi));
}

struct GradReport {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
  double max_abs_gradient = 0.0;
};

using Build = std::function<jelly::ad::Var<double>(jelly::ad::Tape<double>&)>;

// Central differences against the tape for every element of every parameter.
// Elements whose magnitudes are both below `floor` are compared absolutely.
inline GradReport gradcheck(const std::vector<std::pair<std::string, jelly::ad::Var<double>>>& params,
                            const Build& build, double step = 1e-5, double floor = 1e-8) {
  for (const auto& [name, p] : params) p->grad = jelly::Tensor<double>();
  {
    jelly::ad::Tape<double> tape;
    tape.backward(build(tape));
  }
  const auto eval = [&] {
    jelly::ad::Tape<double> tape(false);
    return build(tape)->value[0];
  };
  GradReport report;
  for (const auto& [name, p] : params) {
    const jelly::Tensor<double> analytic =
        p->grad.empty() ? jelly::Tensor<double>(p->value.shape()) : p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double up = eval();
      p->value[i] = saved - step;
      const double down = eval();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i];
      report.max_abs_gradient = std::max(report.max_abs_gradient, std::abs(a));
      if (!std::isfinite(a) || !std::isfinite(numeric)) {
        report.max_rel_error = std::numeric_limits<double>::infinity();
        report.worst = name + "[" + std::to_string(i) + "] is not finite";
        continue;
      }
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double err = scale < floor ? std::abs(a - numeric) : std::abs(a - numeric) / scale;
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return report;
}

}  // namespace oracle
