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

#ifndef QLIC_QTENSOR_HPP_
#define QLIC_QTENSOR_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qlic/errors.hpp"

namespace qlic {

// Tensor geometry: channels x height x width, implicit batch of 1.
struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  std::int64_t volume() const {
    return static_cast<std::int64_t>(c) * h * w;
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Rank-3 tensor of 16-bit integers with a per-tensor power-of-two scale:
// real value = stored integer / 2^q_shift. There is no zero point and no
// per-element scale, so every rescale is a bit shift.
//
// Channel-major storage: index (ch, y, x) -> data[(ch*h + y)*w + x].
struct QTensor {
  Shape shape;
  int q_shift = 0;  // in [0, 15]
  std::vector<int16_t> data;

  QTensor() = default;
  QTensor(Shape s, int q)
      : shape(s), q_shift(q), data(static_cast<std::size_t>(s.volume()), 0) {}
  QTensor(Shape s, int q, std::vector<int16_t> d);

  int16_t at(int ch, int y, int x) const {
    return data[(static_cast<std::size_t>(ch) * shape.h + y) * shape.w + x];
  }
  int16_t& at(int ch, int y, int x) {
    return data[(static_cast<std::size_t>(ch) * shape.h + y) * shape.w + x];
  }
  std::span<const int16_t> plane(int ch) const {
    return std::span<const int16_t>(data).subspan(
        static_cast<std::size_t>(ch) * shape.h * shape.w,
        static_cast<std::size_t>(shape.h) * shape.w);
  }
  std::span<int16_t> plane(int ch) {
    return std::span<int16_t>(data).subspan(
        static_cast<std::size_t>(ch) * shape.h * shape.w,
        static_cast<std::size_t>(shape.h) * shape.w);
  }

  friend bool operator==(const QTensor&, const QTensor&) = default;
};

// round_half_away_from_zero(x * 2^q_shift), saturated to int16.
// Saturation is silent; this never fails.
int16_t quantize_value(double x, int q_shift);

// v / 2^q_shift, exact.
double dequantize_value(int16_t v, int q_shift);

// Quantize-clip-dequantize proxy: emulates a power-of-two integer weight
// in float arithmetic. clip_abs bounds the integer magnitude symmetrically.
double qcd_proxy(double x, int q_shift, int16_t clip_abs);

// Round-to-nearest rescale of a 32-bit accumulator down to int16:
// saturate((acc + 2^(shift-1)) >> shift) with an arithmetic shift, or
// saturate(acc) when shift == 0. The bias-then-shift rule makes negative
// halves round toward positive infinity; it is fixed so results are
// bit-exact everywhere.
int16_t requantize(int32_t acc, int shift);

// QTNS container: magic "QTNS", version u8, q_shift u8, c/h/w u32 LE,
// then c*h*w little-endian int16 in channel-major order.
std::vector<uint8_t> serialize_qtns(const QTensor& t);
QTensor parse_qtns(std::span<const uint8_t> bytes);
void save_qtns(const QTensor& t, const std::string& path);
QTensor load_qtns(const std::string& path);

}  // namespace qlic

#endif  // QLIC_QTENSOR_HPP_
