// Copyright (c) the qlic project authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qlic/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qlic/errors.hpp"

namespace qlic {

namespace {

// Solves the 4x4 linear system A x = b by Gaussian elimination with
// partial pivoting.
std::array<double, 4> solve4(std::array<std::array<double, 4>, 4> a, std::array<double, 4> b) {
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    if (a[col][col] == 0.0) throw Error("bd_rate: singular fit (degenerate PSNR values)");
    for (int r = col + 1; r < 4; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < 4; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::array<double, 4> x{};
  for (int r = 3; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < 4; ++c) acc -= a[r][c] * x[c];
    x[r] = acc / a[r][r];
  }
  return x;
}

double poly_integral(const std::array<double, 4>& coeff, double lo, double hi) {
  double acc = 0.0;
  for (int k = 0; k < 4; ++k)
    acc += coeff[k] * (std::pow(hi, k + 1) - std::pow(lo, k + 1)) / (k + 1);
  return acc;
}

}  // namespace

void RDCurve::finalize() {
  if (points.size() < 4) throw Error("RD curve needs at least 4 points");
  std::sort(points.begin(), points.end(),
            [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i].bpp <= points[i - 1].bpp)
      throw Error("RD curve bpp values must be strictly increasing");
  for (const RDPoint& p : points)
    if (!(p.bpp > 0.0) || !std::isfinite(p.psnr)) throw Error("RD curve point invalid");
}

double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeError("psnr: image dimensions differ");
  double sse = 0.0;
  for (std::size_t n = 0; n < a.rgb.size(); ++n) {
    const double d = static_cast<double>(a.rgb[n]) - static_cast<double>(b.rgb[n]);
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(a.rgb.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

std::array<double, 4> bd_fit_log_rate(const RDCurve& curve, double psnr_center) {
  // Least-squares normal equations for ln(bpp) = sum coeff[k] * p^k,
  // p = psnr - psnr_center.
  std::array<std::array<double, 4>, 4> a{};
  std::array<double, 4> b{};
  for (const RDPoint& pt : curve.points) {
    const double p = pt.psnr - psnr_center;
    const double y = std::log(pt.bpp);
    double pk[7];
    pk[0] = 1.0;
    for (int k = 1; k < 7; ++k) pk[k] = pk[k - 1] * p;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) a[r][c] += pk[r + c];
      b[r] += y * pk[r];
    }
  }
  return solve4(a, b);
}

double bd_rate(const RDCurve& anchor, const RDCurve& test) {
  if (anchor.points.size() < 4 || test.points.size() < 4)
    throw Error("bd_rate: curves need at least 4 points");

  auto psnr_range = [](const RDCurve& c) {
    double lo = c.points.front().psnr, hi = lo;
    for (const RDPoint& p : c.points) {
      lo = std::min(lo, p.psnr);
      hi = std::max(hi, p.psnr);
    }
    return std::pair<double, double>{lo, hi};
  };
  const auto [a_lo, a_hi] = psnr_range(anchor);
  const auto [t_lo, t_hi] = psnr_range(test);
  const double lo = std::max(a_lo, t_lo);
  const double hi = std::min(a_hi, t_hi);
  if (!(hi > lo)) throw Error("bd_rate: PSNR ranges do not overlap");

  const double center = 0.5 * (lo + hi);
  const auto fit_anchor = bd_fit_log_rate(anchor, center);
  const auto fit_test = bd_fit_log_rate(test, center);

  const double mean_diff = (poly_integral(fit_test, lo - center, hi - center) -
                            poly_integral(fit_anchor, lo - center, hi - center)) /
                           (hi - lo);
  return 100.0 * (std::exp(mean_diff) - 1.0);
}

}  // namespace qlic
