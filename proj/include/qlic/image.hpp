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

#ifndef QLIC_IMAGE_HPP_
#define QLIC_IMAGE_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qlic/qtensor.hpp"

namespace qlic {

// 8-bit RGB image, interleaved rows (PPM order).
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // 3 * width * height

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(3) * w * h, 0) {}

  uint8_t at(int y, int x, int ch) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
  uint8_t& at(int y, int x, int ch) {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// Binary PPM (P6, maxval 255).
std::vector<uint8_t> serialize_ppm(const Image& img);
Image parse_ppm(std::span<const uint8_t> bytes);
void save_ppm(const Image& img, const std::string& path);
Image load_ppm(const std::string& path);

// Edge-replicated padding of the right and bottom borders up to the next
// multiple of `multiple` in each dimension.
Image pad_image(const Image& img, int multiple);

// [0,1]-normalized planar tensor at q_shift 8.
QTensor image_to_qtensor(const Image& img);

// Inverse conversion from a decoder output tensor: values dequantized,
// scaled by 255, rounded half away from zero, clamped to [0, 255].
Image qtensor_to_image(const QTensor& t);

}  // namespace qlic

#endif  // QLIC_IMAGE_HPP_
