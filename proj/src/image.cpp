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

#include "qlic/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <string>

#include "qlic/serial.hpp"

namespace qlic {

namespace {

// PPM token reader: skips whitespace and '#' comments.
long next_token(ByteReader& r) {
  for (;;) {
    uint8_t c = r.u8();
    if (c == '#') {
      while (r.u8() != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) continue;
    long value = 0;
    bool any = false;
    while (std::isdigit(c)) {
      value = value * 10 + (c - '0');
      any = true;
      if (r.done()) break;
      c = r.u8();
    }
    if (!any) r.fail("expected a number in PPM header");
    return value;
  }
}

}  // namespace

std::vector<uint8_t> serialize_ppm(const Image& img) {
  std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                       "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

Image parse_ppm(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.u8() != 'P' || r.u8() != '6') r.fail("not a P6 PPM");
  long w = next_token(r), h = next_token(r), maxval = next_token(r);
  if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16) r.fail("bad PPM dimensions");
  if (maxval != 255) r.fail("only maxval 255 supported");
  Image img(static_cast<int>(w), static_cast<int>(h));
  auto raw = r.raw(img.rgb.size());
  std::copy(raw.begin(), raw.end(), img.rgb.begin());
  return img;
}

void save_ppm(const Image& img, const std::string& path) {
  write_file(path, serialize_ppm(img));
}

Image load_ppm(const std::string& path) {
  auto bytes = read_file(path);
  return parse_ppm(bytes);
}

Image pad_image(const Image& img, int multiple) {
  const int pw = (img.width + multiple - 1) / multiple * multiple;
  const int ph = (img.height + multiple - 1) / multiple * multiple;
  if (pw == img.width && ph == img.height) return img;
  Image out(pw, ph);
  for (int y = 0; y < ph; ++y) {
    const int sy = std::min(y, img.height - 1);
    for (int x = 0; x < pw; ++x) {
      const int sx = std::min(x, img.width - 1);
      for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = img.at(sy, sx, ch);
    }
  }
  return out;
}

QTensor image_to_qtensor(const Image& img) {
  QTensor t(Shape{3, img.height, img.width}, 8);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t.at(ch, y, x) = quantize_value(img.at(y, x, ch) / 255.0, 8);
  return t;
}

Image qtensor_to_image(const QTensor& t) {
  if (t.shape.c != 3) throw ShapeError("qtensor_to_image: need 3 channels");
  Image img(t.shape.w, t.shape.h);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < t.shape.h; ++y)
      for (int x = 0; x < t.shape.w; ++x) {
        const double v = dequantize_value(t.at(ch, y, x), t.q_shift) * 255.0;
        const double rounded = v >= 0.0 ? std::floor(v + 0.5) : std::ceil(v - 0.5);
        img.at(y, x, ch) = static_cast<uint8_t>(std::clamp(rounded, 0.0, 255.0));
      }
  return img;
}

}  // namespace qlic
