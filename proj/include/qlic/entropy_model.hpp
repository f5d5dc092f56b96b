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

#ifndef QLIC_ENTROPY_MODEL_HPP_
#define QLIC_ENTROPY_MODEL_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qlic/qtensor.hpp"

namespace qlic {

// Context-switching variants: K1 conditions on the top and left spatial
// neighbors only (3 contexts), K2 adds the collocated value of the
// previously coded channel (4 contexts).
enum class ContextVariant : uint8_t { kK1 = 0, kK2 = 1 };

// Conditional entropy model of one latent channel: a per-channel
// threshold, an inclusive integer support, and one normalized CDF table
// per context. PMF values are adjacent CDF differences and are always
// >= 1, so every in-support value is codable.
struct ChannelEntropyModel {
  int channel = 0;
  int threshold = 0;  // context predicate: neighbor >= threshold
  int v_min = 0;      // support, inclusive; padded one step past the data
  int v_max = 0;
  // Each table has v_max - v_min + 2 entries, from 0 to 65536, strictly
  // increasing.
  std::array<std::vector<uint32_t>, 4> cdf;
  std::array<int, 4> mpv{};  // per-context most probable value
  int mpv_global = 0;        // argmax of the merged histogram; inactive-channel fill
  uint16_t act_prob_q12 = 2048;  // activation probability * 4096, in [1, 4095]

  int num_symbols() const { return v_max - v_min + 1; }
  bool in_support(int v) const { return v >= v_min && v <= v_max; }

  // Frequency (out of 2^16) of value v under context ctx.
  uint32_t pmf(int ctx, int v) const;
  // Cumulative frequency start of value v under context ctx.
  uint32_t cum(int ctx, int v) const;

  double act_prob() const { return act_prob_q12 / 4096.0; }

  friend bool operator==(const ChannelEntropyModel&, const ChannelEntropyModel&) = default;
};

struct EntropyModelSet {
  std::vector<int> order;  // coding order: order[pos] = channel index
  std::vector<ChannelEntropyModel> channels;  // indexed by channel, not position
  Shape latent_shape;  // shape of the training latents (s must match at use)

  int num_channels() const { return static_cast<int>(channels.size()); }

  friend bool operator==(const EntropyModelSet&, const EntropyModelSet&) = default;
};

// Context of latent position (i, j) at coding position pos: the count of
// true predicates among top >= eps_k, left >= eps_k and previous-channel
// collocated >= eps_prev, where k = order[pos] and prev = order[pos-1].
// Out-of-bounds neighbors (i == 0, j == 0, pos == 0) count as false.
int context_of(const QTensor& latent, int i, int j, int pos, const EntropyModelSet& models);

// Spatial-only variant: count of {top >= threshold, left >= threshold},
// in {0, 1, 2}.
int context_k1(const QTensor& latent, int i, int j, int k, int threshold);

// Builds the model set from a latent dataset: contextualized histograms,
// +-1 support padding, add-one smoothing, largest-remainder normalization
// to 2^16, per-context and merged most probable values, and activation
// probabilities. Throws Error on an empty dataset.
EntropyModelSet extract_cdfs(std::span<const QTensor> dataset, std::vector<int> order,
                             std::span<const int> thresholds,
                             ContextVariant variant = ContextVariant::kK2);

// True when any value of the channel differs from its merged-histogram
// most probable value (the criterion behind the per-channel activation bit).
bool channel_active(const QTensor& latent, const ChannelEntropyModel& model);

// Model estimate of the coded size: sum of -log2(pmf/2^16) over the coded
// positions in coding order, plus one activation-bit cost per channel.
// Inactive channels contribute only their activation bit. Throws Error on
// an out-of-support value.
double estimate_bits(const QTensor& latent, const EntropyModelSet& models,
                     ContextVariant variant = ContextVariant::kK2);

// Exhaustive threshold search for one channel: every distinct observed
// value + 1 is a candidate; returns the one minimizing the empirical
// 3-context (K1) conditional entropy, smallest on ties.
int optimize_threshold(std::span<const QTensor> dataset, int channel);

// Greedy coding order: start from the channel with the highest K1
// entropy, then repeatedly append the remaining channel with the best
// K2-vs-K1 entropy decrease relative to the previously selected channel.
// Ties break toward the lower channel index.
std::vector<int> order_channels(std::span<const QTensor> dataset,
                                std::span<const int> thresholds);

// QEMS container (bit-exact layout in docs/FORMATS.md). Round trips are
// byte-identical.
std::vector<uint8_t> serialize_qems(const EntropyModelSet& models);
EntropyModelSet parse_qems(std::span<const uint8_t> bytes);
void save_qems(const EntropyModelSet& models, const std::string& path);
EntropyModelSet load_qems(const std::string& path);

}  // namespace qlic

#endif  // QLIC_ENTROPY_MODEL_HPP_
