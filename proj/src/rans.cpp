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

#include "qlic/rans.hpp"

#include <cassert>

namespace qlic {

namespace {

// Lower bound of the normalization interval. With 32-bit renormalization
// the state stays in [kLow, kLow << 32) between symbols.
constexpr uint64_t kLow = 1ull << 31;

}  // namespace

std::vector<uint8_t> rans_encode(std::span<const SymbolCode> symbols) {
  uint64_t state = kLow;
  std::vector<uint32_t> words;  // renorm words, in emission order

  // LIFO: process in reverse so the decoder sees symbols forward.
  for (std::size_t n = symbols.size(); n-- > 0;) {
    const SymbolCode sym = symbols[n];
    assert(sym.valid());
    const uint64_t freq = sym.freq;
    // Renormalize: one 32-bit word is always enough.
    const uint64_t max_state = ((kLow >> kRansPrecision) << 32) * freq;
    if (state >= max_state) {
      words.push_back(static_cast<uint32_t>(state));
      state >>= 32;
    }
    state = ((state / freq) << kRansPrecision) + (state % freq) + sym.cum;
  }

  std::vector<uint8_t> out;
  out.reserve(8 + 4 * words.size());
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(state >> (8 * i)));
  // The decoder consumes words in reverse emission order.
  for (std::size_t n = words.size(); n-- > 0;) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(words[n] >> (8 * i)));
  }
  return out;
}

RansDecoder::RansDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
  if (bytes_.size() < 8) throw ParseError("rANS stream shorter than state flush", bytes_.size());
  for (int i = 0; i < 8; ++i) state_ |= static_cast<uint64_t>(bytes_[i]) << (8 * i);
  pos_ = 8;
  if (state_ < kLow) throw ParseError("invalid rANS initial state", 0);
}

void RansDecoder::advance(SymbolCode code) {
  assert(code.valid());
  // The resolver contract puts probe() inside [cum, cum + freq); a
  // mismatched table yields well-defined garbage here, never UB.
  const uint64_t slot = state_ & (kRansTotal - 1);
  state_ = code.freq * (state_ >> kRansPrecision) + slot - code.cum;
  if (state_ < kLow) {
    if (bytes_.size() - pos_ < 4) throw ParseError("truncated rANS stream", pos_);
    uint32_t word = 0;
    for (int i = 0; i < 4; ++i) word |= static_cast<uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    state_ = (state_ << 32) | word;
  }
}

bool RansDecoder::finished() const { return pos_ == bytes_.size() && state_ == kLow; }

}  // namespace qlic
