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

#ifndef QLIC_RANS_HPP_
#define QLIC_RANS_HPP_

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "qlic/errors.hpp"

namespace qlic {

// Frequency precision shared by every table in the codec: all cumulative
// frequencies live in [0, 2^16].
inline constexpr uint32_t kRansPrecision = 16;
inline constexpr uint32_t kRansTotal = 1u << kRansPrecision;

// One coded symbol: the slot [cum, cum + freq) of the 2^16 range.
struct SymbolCode {
  uint32_t cum = 0;
  uint32_t freq = 0;  // >= 1, cum + freq <= 2^16

  bool valid() const { return freq >= 1 && cum + freq <= kRansTotal; }
};

// Byte-oriented rANS with a 64-bit state and 32-bit renormalization.
// Encoding is LIFO: callers supply symbols in *decode* order and the
// encoder walks them backwards internally, so the decoder reads forward.
//
// Stream layout: 8-byte little-endian final state, then 4-byte
// little-endian renormalization words in decode order.
std::vector<uint8_t> rans_encode(std::span<const SymbolCode> symbols);

// Forward-reading decoder. probe() exposes the cumulative-frequency slot
// of the next symbol; the caller resolves it to a SymbolCode (this is
// where context modeling lives) and calls advance().
class RansDecoder {
 public:
  explicit RansDecoder(std::span<const uint8_t> bytes);

  // Cumulative-frequency slot of the next symbol, in [0, 2^16).
  uint32_t probe() const { return static_cast<uint32_t>(state_ & (kRansTotal - 1)); }

  // Consume the symbol whose slot range contains the current probe.
  void advance(SymbolCode code);

  // True once the stream has been fully and consistently consumed:
  // every byte read and the state back at its initial value. A false
  // result after decoding the expected symbol count means corruption.
  bool finished() const;

 private:
  uint64_t state_ = 0;
  std::span<const uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Decode `count` symbols. The resolver maps a cumulative-frequency probe
// to (symbol, SymbolCode); contexts may depend only on already-decoded
// symbols. Throws ParseError on a truncated or inconsistent stream.
template <typename Resolver>
std::vector<uint32_t> rans_decode(std::span<const uint8_t> bytes, std::size_t count,
                                  Resolver&& resolve) {
  RansDecoder dec(bytes);
  std::vector<uint32_t> symbols;
  symbols.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::pair<uint32_t, SymbolCode> r = resolve(dec.probe());
    dec.advance(r.second);
    symbols.push_back(r.first);
  }
  if (!dec.finished()) throw ParseError("rANS stream inconsistent after final symbol", bytes.size());
  return symbols;
}

}  // namespace qlic

#endif  // QLIC_RANS_HPP_
