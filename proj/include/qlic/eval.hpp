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

#ifndef QLIC_EVAL_HPP_
#define QLIC_EVAL_HPP_

#include <array>
#include <string>
#include <vector>

#include "qlic/image.hpp"

namespace qlic {

struct RDPoint {
  double bpp = 0.0;   // (payload + header bytes) * 8 / original pixel count
  double psnr = 0.0;  // dB over RGB
};

// Rate-distortion curve: at least 4 points, strictly increasing bpp.
struct RDCurve {
  std::string label;
  std::vector<RDPoint> points;

  // Sorts by bpp and checks the invariants; throws Error on violations.
  void finalize();
};

// 10*log10(255^2 / MSE) with the MSE averaged over all pixels and
// channels. Identical images give the +infinity sentinel. Throws
// ShapeError on dimension mismatch.
double psnr(const Image& a, const Image& b);

// Bjontegaard delta-rate in percent: cubic least-squares fit of log(rate)
// against PSNR per curve, analytically integrated over the common PSNR
// interval; 100 * (exp(mean difference) - 1). Negative values mean the
// test curve saves rate. Throws Error on fewer than 4 points or
// non-overlapping PSNR ranges.
double bd_rate(const RDCurve& anchor, const RDCurve& test);

// Cubic coefficients (lowest degree first) of the least-squares fit of
// log(bpp) against PSNR, with psnr_center subtracted for conditioning.
// Exposed so integration oracles can reuse the exact fitted polynomial.
std::array<double, 4> bd_fit_log_rate(const RDCurve& curve, double psnr_center);

}  // namespace qlic

#endif  // QLIC_EVAL_HPP_
