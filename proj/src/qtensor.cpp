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

#include "qlic/qtensor.hpp"

#include <cmath>
#include <limits>

#include "qlic/serial.hpp"

namespace qlic {

namespace {

constexpr int kVersion = 1;

int16_t saturate_i16(std::int64_t v) {
  if (v > std::numeric_limits<int16_t>::max()) return std::numeric_limits<int16_t>::max();
  if (v < std::numeric_limits<int16_t>::min()) return std::numeric_limits<int16_t>::min();
  return static_cast<int16_t>(v);
}

}  // namespace

QTensor::QTensor(Shape s, int q, std::vector<int16_t> d)
    : shape(s), q_shift(q), data(std::move(d)) {
  if (static_cast<std::int64_t>(data.size()) != shape.volume())
    throw ShapeError("QTensor data length does not match shape");
}

int16_t quantize_value(double x, int q_shift) {
  double scaled = std::ldexp(x, q_shift);
  // round half away from zero
  double rounded = scaled >= 0.0 ? std::floor(scaled + 0.5) : std::ceil(scaled - 0.5);
  if (rounded >= 32767.0) return 32767;
  if (rounded <= -32768.0) return -32768;
  return static_cast<int16_t>(rounded);
}

double dequantize_value(int16_t v, int q_shift) {
  return std::ldexp(static_cast<double>(v), -q_shift);
}

double qcd_proxy(double x, int q_shift, int16_t clip_abs) {
  double scaled = std::ldexp(x, q_shift);
  double rounded = scaled >= 0.0 ? std::floor(scaled + 0.5) : std::ceil(scaled - 0.5);
  double lo = -static_cast<double>(clip_abs);
  double hi = static_cast<double>(clip_abs);
  if (rounded < lo) rounded = lo;
  if (rounded > hi) rounded = hi;
  return std::ldexp(rounded, -q_shift);
}

int16_t requantize(int32_t acc, int shift) {
  if (shift == 0) return saturate_i16(acc);
  // 64-bit intermediate so the rounding bias cannot overflow.
  std::int64_t biased = static_cast<std::int64_t>(acc) + (std::int64_t{1} << (shift - 1));
  return saturate_i16(biased >> shift);
}

std::vector<uint8_t> serialize_qtns(const QTensor& t) {
  ByteWriter w;
  w.magic("QTNS");
  w.u8(kVersion);
  w.u8(static_cast<uint8_t>(t.q_shift));
  w.u32(static_cast<uint32_t>(t.shape.c));
  w.u32(static_cast<uint32_t>(t.shape.h));
  w.u32(static_cast<uint32_t>(t.shape.w));
  for (int16_t v : t.data) w.i16(v);
  return w.take();
}

QTensor parse_qtns(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("QTNS");
  if (r.u8() != kVersion) r.fail("unsupported QTNS version");
  int q_shift = r.u8();
  if (q_shift > 15) r.fail("q_shift out of range");
  Shape s;
  s.c = static_cast<int>(r.u32());
  s.h = static_cast<int>(r.u32());
  s.w = static_cast<int>(r.u32());
  if (s.c <= 0 || s.h <= 0 || s.w <= 0) r.fail("non-positive tensor dims");
  if (s.volume() > (1 << 28)) r.fail("tensor too large");
  std::vector<int16_t> data(static_cast<std::size_t>(s.volume()));
  for (auto& v : data) v = r.i16();
  return QTensor(s, q_shift, std::move(data));
}

void save_qtns(const QTensor& t, const std::string& path) {
  write_file(path, serialize_qtns(t));
}

QTensor load_qtns(const std::string& path) {
  auto bytes = read_file(path);
  return parse_qtns(bytes);
}

}  // namespace qlic
