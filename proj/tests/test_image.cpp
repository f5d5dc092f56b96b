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

#include <string>

#include "doctest.h"
#include "test_util.hpp"

using namespace qlic;

TEST_SUITE_BEGIN("image");

TEST_CASE("PPM round trip") {
  test::Rng rng(1);
  const Image img = test::random_image(rng, 13, 7);
  const auto bytes = serialize_ppm(img);
  CHECK(parse_ppm(bytes) == img);
}

TEST_CASE("PPM header with comments and whitespace") {
  std::string text = "P6\n# a comment line\n 2 # width\n3\n# another\n255\n";
  std::vector<uint8_t> bytes(text.begin(), text.end());
  for (int n = 0; n < 18; ++n) bytes.push_back(static_cast<uint8_t>(n * 7));
  const Image img = parse_ppm(bytes);
  CHECK(img.width == 2);
  CHECK(img.height == 3);
  CHECK(img.at(0, 0, 0) == 0);
  CHECK(img.at(2, 1, 2) == 17 * 7);
}

TEST_CASE("PPM rejects malformed input") {
  std::string p5 = "P5\n2 2\n255\n";
  CHECK_THROWS_AS(parse_ppm(std::vector<uint8_t>(p5.begin(), p5.end())), ParseError);

  std::string maxval = "P6\n2 2\n65535\n";
  CHECK_THROWS_AS(parse_ppm(std::vector<uint8_t>(maxval.begin(), maxval.end())), ParseError);

  std::string short_data = "P6\n2 2\n255\nabc";
  CHECK_THROWS_AS(parse_ppm(std::vector<uint8_t>(short_data.begin(), short_data.end())),
                  ParseError);
}

TEST_CASE("edge-replicated padding") {
  Image img(3, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<uint8_t>(10 * y + x + c);
  const Image padded = pad_image(img, 4);
  CHECK(padded.width == 4);
  CHECK(padded.height == 4);
  // interior preserved
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x)
      for (int c = 0; c < 3; ++c) CHECK(padded.at(y, x, c) == img.at(y, x, c));
  // right and bottom replicate the nearest edge pixel
  for (int y = 0; y < 4; ++y)
    for (int c = 0; c < 3; ++c)
      CHECK(padded.at(y, 3, c) == img.at(std::min(y, 1), 2, c));
  for (int x = 0; x < 4; ++x)
    for (int c = 0; c < 3; ++c)
      CHECK(padded.at(3, x, c) == img.at(1, std::min(x, 2), c));
  // already-multiple images pass through untouched
  CHECK(pad_image(padded, 4) == padded);
}

TEST_CASE("image to tensor and back") {
  test::Rng rng(2);
  const Image img = test::random_image(rng, 9, 5);
  const QTensor t = image_to_qtensor(img);
  CHECK(t.q_shift == 8);
  CHECK(t.shape == Shape{3, 5, 9});
  CHECK(qtensor_to_image(t) == img);  // q8 resolves every 8-bit level
}

TEST_CASE("tensor conversion clamps out-of-range values") {
  QTensor t(Shape{3, 1, 2}, 8);
  t.at(0, 0, 0) = -100;
  t.at(1, 0, 1) = 300;  // 300/256 * 255 > 255
  const Image img = qtensor_to_image(t);
  CHECK(img.at(0, 0, 0) == 0);
  CHECK(img.at(0, 1, 1) == 255);
}

TEST_SUITE_END();
