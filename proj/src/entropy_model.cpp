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

#include "qlic/entropy_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qlic/rans.hpp"
#include "qlic/serial.hpp"

namespace qlic {

namespace {

constexpr int kQemsVersion = 1;
constexpr int kMaxSupport = 16384;  // keeps min-frequency-1 satisfiable with room to spare

// Count of true threshold predicates among top/left (channel k) and the
// collocated value of channel prev (prev < 0: no channel predicate).
// Out-of-bounds neighbors count as false.
int context_count(const QTensor& latent, int i, int j, int k, int eps_k, int prev, int eps_prev) {
  int n = 0;
  if (i > 0 && latent.at(k, i - 1, j) >= eps_k) ++n;
  if (j > 0 && latent.at(k, i, j - 1) >= eps_k) ++n;
  if (prev >= 0 && latent.at(prev, i, j) >= eps_prev) ++n;
  return n;
}

// Empirical conditional entropy in total bits: sum over contexts of
// N_ctx * H(value | ctx).
double histogram_bits(const std::vector<std::vector<std::int64_t>>& hist) {
  double bits = 0.0;
  for (const auto& ctx_hist : hist) {
    std::int64_t total = std::accumulate(ctx_hist.begin(), ctx_hist.end(), std::int64_t{0});
    if (total == 0) continue;
    double sum_hlogh = 0.0;
    for (std::int64_t h : ctx_hist)
      if (h > 0) sum_hlogh += static_cast<double>(h) * std::log2(static_cast<double>(h));
    bits += static_cast<double>(total) * std::log2(static_cast<double>(total)) - sum_hlogh;
  }
  return bits;
}

// Largest-remainder apportionment of counts to a total of 2^16, then a
// minimum frequency of 1 enforced by stealing from the largest bin.
std::vector<uint32_t> normalize_to_total(const std::vector<std::int64_t>& counts) {
  const std::size_t n = counts.size();
  const std::int64_t total = std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
  std::vector<uint32_t> freq(n, 0);
  std::vector<std::pair<std::int64_t, std::size_t>> rem(n);  // (-remainder, index)
  std::int64_t allocated = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t scaled = counts[i] * static_cast<std::int64_t>(kRansTotal);
    freq[i] = static_cast<uint32_t>(scaled / total);
    rem[i] = {-(scaled % total), i};
    allocated += freq[i];
  }
  std::sort(rem.begin(), rem.end());
  const std::int64_t leftover = kRansTotal - allocated;  // < n by construction
  for (std::int64_t i = 0; i < leftover; ++i) ++freq[rem[static_cast<std::size_t>(i)].second];

  for (std::size_t i = 0; i < n; ++i) {
    while (freq[i] == 0) {
      std::size_t largest = std::max_element(freq.begin(), freq.end()) - freq.begin();
      --freq[largest];
      ++freq[i];
    }
  }
  return freq;
}

std::vector<uint32_t> freqs_to_cdf(const std::vector<uint32_t>& freq) {
  std::vector<uint32_t> cdf(freq.size() + 1, 0);
  for (std::size_t i = 0; i < freq.size(); ++i) cdf[i + 1] = cdf[i] + freq[i];
  return cdf;
}

void validate_model(const ChannelEntropyModel& m, std::size_t at) {
  if (m.v_min > m.v_max) throw ParseError("empty support", at);
  if (m.act_prob_q12 < 1 || m.act_prob_q12 > 4095) throw ParseError("bad activation probability", at);
  for (int ctx = 0; ctx < 4; ++ctx) {
    const auto& cdf = m.cdf[ctx];
    if (cdf.size() != static_cast<std::size_t>(m.num_symbols()) + 1)
      throw ParseError("bad CDF length", at);
    if (cdf.front() != 0 || cdf.back() != kRansTotal) throw ParseError("bad CDF bounds", at);
    for (std::size_t i = 1; i < cdf.size(); ++i)
      if (cdf[i] <= cdf[i - 1]) throw ParseError("CDF not strictly increasing", at);
    if (!m.in_support(m.mpv[ctx])) throw ParseError("MPV outside support", at);
  }
  if (!m.in_support(m.mpv_global)) throw ParseError("global MPV outside support", at);
}

}  // namespace

uint32_t ChannelEntropyModel::pmf(int ctx, int v) const {
  if (!in_support(v))
    throw Error("value " + std::to_string(v) + " outside support [" + std::to_string(v_min) +
                ", " + std::to_string(v_max) + "] of channel " + std::to_string(channel));
  return cdf[ctx][v - v_min + 1] - cdf[ctx][v - v_min];
}

uint32_t ChannelEntropyModel::cum(int ctx, int v) const {
  if (!in_support(v))
    throw Error("value " + std::to_string(v) + " outside support [" + std::to_string(v_min) +
                ", " + std::to_string(v_max) + "] of channel " + std::to_string(channel));
  return cdf[ctx][v - v_min];
}

int context_of(const QTensor& latent, int i, int j, int pos, const EntropyModelSet& models) {
  const int k = models.order[pos];
  const int prev = pos > 0 ? models.order[pos - 1] : -1;
  const int eps_prev = prev >= 0 ? models.channels[prev].threshold : 0;
  return context_count(latent, i, j, k, models.channels[k].threshold, prev, eps_prev);
}

int context_k1(const QTensor& latent, int i, int j, int k, int threshold) {
  return context_count(latent, i, j, k, threshold, -1, 0);
}

EntropyModelSet extract_cdfs(std::span<const QTensor> dataset, std::vector<int> order,
                             std::span<const int> thresholds, ContextVariant variant) {
  if (dataset.empty()) throw Error("extract_cdfs: empty dataset");
  const Shape shape = dataset.front().shape;
  const int s = shape.c;
  if (static_cast<int>(order.size()) != s || static_cast<int>(thresholds.size()) != s)
    throw Error("extract_cdfs: order/threshold size does not match channel count");
  for (const QTensor& latent : dataset)
    if (latent.shape != shape) throw Error("extract_cdfs: latents differ in shape");

  // Observed per-channel value range.
  std::vector<int> obs_min(s, 32767), obs_max(s, -32768);
  for (const QTensor& latent : dataset)
    for (int k = 0; k < s; ++k)
      for (int16_t v : latent.plane(k)) {
        obs_min[k] = std::min<int>(obs_min[k], v);
        obs_max[k] = std::max<int>(obs_max[k], v);
      }

  EntropyModelSet models;
  models.latent_shape = shape;
  models.order = std::move(order);
  models.channels.resize(s);
  for (int k = 0; k < s; ++k) {
    auto& m = models.channels[k];
    m.channel = k;
    m.threshold = thresholds[k];
    m.v_min = obs_min[k] - 1;
    m.v_max = obs_max[k] + 1;
    if (m.num_symbols() > kMaxSupport)
      throw Error("extract_cdfs: channel " + std::to_string(k) + " support too large");
  }

  // Contextualized histograms, indexed [channel][ctx][v - v_min].
  std::vector<std::array<std::vector<std::int64_t>, 4>> hist(s);
  for (int k = 0; k < s; ++k)
    for (auto& h : hist[k]) h.assign(models.channels[k].num_symbols(), 0);

  for (const QTensor& latent : dataset) {
    for (int pos = 0; pos < s; ++pos) {
      const int k = models.order[pos];
      const int prev = (variant == ContextVariant::kK2 && pos > 0) ? models.order[pos - 1] : -1;
      const int eps_prev = prev >= 0 ? models.channels[prev].threshold : 0;
      const int eps_k = models.channels[k].threshold;
      const int v_min = models.channels[k].v_min;
      for (int i = 0; i < shape.h; ++i)
        for (int j = 0; j < shape.w; ++j) {
          const int ctx = context_count(latent, i, j, k, eps_k, prev, eps_prev);
          ++hist[k][ctx][latent.at(k, i, j) - v_min];
        }
    }
  }

  for (int k = 0; k < s; ++k) {
    auto& m = models.channels[k];
    const int n = m.num_symbols();

    // Merged histogram decides the context-free most probable value.
    std::vector<std::int64_t> merged(n, 0);
    for (int ctx = 0; ctx < 4; ++ctx)
      for (int v = 0; v < n; ++v) merged[v] += hist[k][ctx][v];
    m.mpv_global = m.v_min + static_cast<int>(std::max_element(merged.begin(), merged.end()) -
                                              merged.begin());

    for (int ctx = 0; ctx < 4; ++ctx) {
      std::vector<std::int64_t> smoothed = hist[k][ctx];
      for (auto& c : smoothed) ++c;  // add-one smoothing over the support
      const std::vector<uint32_t> freq = normalize_to_total(smoothed);
      m.mpv[ctx] = m.v_min + static_cast<int>(std::max_element(freq.begin(), freq.end()) -
                                              freq.begin());
      m.cdf[ctx] = freqs_to_cdf(freq);
    }

    int active_count = 0;
    for (const QTensor& latent : dataset)
      if (channel_active(latent, m)) ++active_count;
    const double p = static_cast<double>(active_count) / static_cast<double>(dataset.size());
    const int q12 = static_cast<int>(std::lround(p * 4096.0));
    m.act_prob_q12 = static_cast<uint16_t>(std::clamp(q12, 1, 4095));
  }
  return models;
}

bool channel_active(const QTensor& latent, const ChannelEntropyModel& model) {
  for (int16_t v : latent.plane(model.channel))
    if (v != model.mpv_global) return true;
  return false;
}

double estimate_bits(const QTensor& latent, const EntropyModelSet& models,
                     ContextVariant variant) {
  if (latent.shape.c != models.num_channels())
    throw Error("estimate_bits: latent channel count does not match model set");
  double bits = 0.0;
  for (int pos = 0; pos < models.num_channels(); ++pos) {
    const int k = models.order[pos];
    const ChannelEntropyModel& m = models.channels[k];
    const bool active = channel_active(latent, m);
    bits += -std::log2(active ? m.act_prob() : 1.0 - m.act_prob());
    if (!active) continue;
    for (int i = 0; i < latent.shape.h; ++i)
      for (int j = 0; j < latent.shape.w; ++j) {
        const int ctx = (variant == ContextVariant::kK2)
                            ? context_of(latent, i, j, pos, models)
                            : context_k1(latent, i, j, k, m.threshold);
        bits += -std::log2(static_cast<double>(m.pmf(ctx, latent.at(k, i, j))) /
                           static_cast<double>(kRansTotal));
      }
  }
  return bits;
}

int optimize_threshold(std::span<const QTensor> dataset, int channel) {
  if (dataset.empty()) throw Error("optimize_threshold: empty dataset");
  const int k = channel;

  int obs_min = 32767, obs_max = -32768;
  std::vector<bool> seen(65536, false);
  for (const QTensor& latent : dataset)
    for (int16_t v : latent.plane(k)) {
      obs_min = std::min<int>(obs_min, v);
      obs_max = std::max<int>(obs_max, v);
      seen[static_cast<uint16_t>(v)] = true;
    }

  // One candidate per distinct observed value, shifted one step up, so
  // the candidates span [obs_min + 1, obs_max + 1].
  std::vector<int> candidates;
  for (int v = obs_min; v <= obs_max; ++v)
    if (seen[static_cast<uint16_t>(static_cast<int16_t>(v))]) candidates.push_back(v + 1);

  const int span = obs_max - obs_min + 1;
  double best_bits = 0.0;
  int best_eps = candidates.front();
  bool first = true;
  for (int eps : candidates) {
    std::vector<std::vector<std::int64_t>> hist(3, std::vector<std::int64_t>(span, 0));
    for (const QTensor& latent : dataset)
      for (int i = 0; i < latent.shape.h; ++i)
        for (int j = 0; j < latent.shape.w; ++j) {
          const int ctx = context_k1(latent, i, j, k, eps);
          ++hist[ctx][latent.at(k, i, j) - obs_min];
        }
    const double bits = histogram_bits(hist);
    if (first || bits < best_bits) {
      best_bits = bits;
      best_eps = eps;
      first = false;
    }
  }
  return best_eps;
}

std::vector<int> order_channels(std::span<const QTensor> dataset,
                                std::span<const int> thresholds) {
  if (dataset.empty()) throw Error("order_channels: empty dataset");
  const Shape shape = dataset.front().shape;
  const int s = shape.c;
  if (static_cast<int>(thresholds.size()) != s)
    throw Error("order_channels: threshold count does not match channel count");

  std::vector<int> obs_min(s, 32767), obs_max(s, -32768);
  for (const QTensor& latent : dataset)
    for (int k = 0; k < s; ++k)
      for (int16_t v : latent.plane(k)) {
        obs_min[k] = std::min<int>(obs_min[k], v);
        obs_max[k] = std::max<int>(obs_max[k], v);
      }

  // Empirical conditional entropy of channel k, optionally conditioned on
  // channel prev through the collocated predicate.
  auto entropy_bits = [&](int k, int prev) {
    const int span = obs_max[k] - obs_min[k] + 1;
    const int n_ctx = prev >= 0 ? 4 : 3;
    std::vector<std::vector<std::int64_t>> hist(n_ctx, std::vector<std::int64_t>(span, 0));
    for (const QTensor& latent : dataset)
      for (int i = 0; i < shape.h; ++i)
        for (int j = 0; j < shape.w; ++j) {
          const int ctx = context_count(latent, i, j, k, thresholds[k], prev,
                                        prev >= 0 ? thresholds[prev] : 0);
          ++hist[ctx][latent.at(k, i, j) - obs_min[k]];
        }
    return histogram_bits(hist);
  };

  std::vector<double> k1_bits(s);
  for (int k = 0; k < s; ++k) k1_bits[k] = entropy_bits(k, -1);

  // Highest K1 entropy goes first.
  int first = 0;
  for (int k = 1; k < s; ++k)
    if (k1_bits[k] > k1_bits[first]) first = k;

  std::vector<int> order{first};
  std::vector<bool> used(s, false);
  used[first] = true;
  while (static_cast<int>(order.size()) < s) {
    const int prev = order.back();
    int best = -1;
    double best_delta = 0.0;
    for (int k = 0; k < s; ++k) {
      if (used[k]) continue;
      const double delta = entropy_bits(k, prev) - k1_bits[k];
      if (best < 0 || delta < best_delta) {
        best = k;
        best_delta = delta;
      }
    }
    order.push_back(best);
    used[best] = true;
  }
  return order;
}

std::vector<uint8_t> serialize_qems(const EntropyModelSet& models) {
  ByteWriter w;
  w.magic("QEMS");
  w.u8(kQemsVersion);
  w.u32(static_cast<uint32_t>(models.channels.size()));
  w.u32(static_cast<uint32_t>(models.latent_shape.h));
  w.u32(static_cast<uint32_t>(models.latent_shape.w));
  for (int k : models.order) w.i32(k);
  for (const ChannelEntropyModel& m : models.channels) {
    w.i32(m.threshold);
    w.i32(m.v_min);
    w.i32(m.v_max);
    w.u16(m.act_prob_q12);
    for (int ctx = 0; ctx < 4; ++ctx) w.i32(m.mpv[ctx]);
    w.i32(m.mpv_global);
    for (int ctx = 0; ctx < 4; ++ctx)
      for (int v = 0; v < m.num_symbols(); ++v)
        w.u16(static_cast<uint16_t>(m.cdf[ctx][v + 1] - m.cdf[ctx][v]));
  }
  return w.take();
}

EntropyModelSet parse_qems(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("QEMS");
  if (r.u8() != kQemsVersion) r.fail("unsupported QEMS version");
  const uint32_t s = r.u32();
  if (s == 0 || s > 65536) r.fail("bad channel count");

  EntropyModelSet models;
  models.latent_shape.c = static_cast<int>(s);
  models.latent_shape.h = static_cast<int>(r.u32());
  models.latent_shape.w = static_cast<int>(r.u32());

  models.order.resize(s);
  std::vector<bool> used(s, false);
  for (auto& k : models.order) {
    k = r.i32();
    if (k < 0 || k >= static_cast<int>(s) || used[k]) r.fail("order is not a permutation");
    used[k] = true;
  }

  models.channels.resize(s);
  for (uint32_t k = 0; k < s; ++k) {
    const std::size_t at = r.pos();
    ChannelEntropyModel& m = models.channels[k];
    m.channel = static_cast<int>(k);
    m.threshold = r.i32();
    m.v_min = r.i32();
    m.v_max = r.i32();
    if (m.v_min > m.v_max || m.v_max - m.v_min + 1 > kMaxSupport) r.fail("bad support bounds");
    m.act_prob_q12 = r.u16();
    for (int ctx = 0; ctx < 4; ++ctx) m.mpv[ctx] = r.i32();
    m.mpv_global = r.i32();
    for (int ctx = 0; ctx < 4; ++ctx) {
      std::vector<uint32_t> freq(static_cast<std::size_t>(m.num_symbols()));
      for (auto& f : freq) f = r.u16();
      m.cdf[ctx] = freqs_to_cdf(freq);
    }
    validate_model(m, at);
  }
  return models;
}

void save_qems(const EntropyModelSet& models, const std::string& path) {
  write_file(path, serialize_qems(models));
}

EntropyModelSet load_qems(const std::string& path) {
  auto bytes = read_file(path);
  return parse_qems(bytes);
}

}  // namespace qlic
