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
//
// Acceptance suite: the codec's exit criteria, one pass/fail line each.
// Every tolerance is pinned here, not tuned at runtime.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qlic/codec.hpp"
#include "qlic/entropy_model.hpp"
#include "qlic/eval.hpp"
#include "qlic/integerize.hpp"
#include "qlic/nn_int.hpp"
#include "qlic/rans.hpp"
#include "test_util.hpp"

using namespace qlic;
using test::Rng;

namespace {

int g_failures = 0;

void report(int criterion, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %2d [%-22s] %s  %s\n", criterion, name, pass ? "PASS" : "FAIL",
              detail.c_str());
  if (!pass) ++g_failures;
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

struct Setup {
  test::ToyCodec codec;
  EntropyModelSet models;
};

Setup make_setup(uint64_t seed, int hidden, int latent, int train_imgs, int img) {
  Setup s{test::toy_codec(seed, hidden, latent, 4, img), {}};
  Rng rng(seed * 7919 + 13);
  const auto latents = test::toy_latents(s.codec.encoder, rng, train_imgs, img);
  s.models = test::train_models(latents, true);
  return s;
}

// --- 1. lossless transport ----------------------------------------------

void criterion_lossless() {
  int pairs = 0, exact = 0, stable = 0;
  for (uint64_t seed : {11u, 22u, 33u, 44u, 55u}) {
    const Setup s = make_setup(seed, 6, 4, 8, 32);
    Rng rng(seed + 1000);
    for (int n = 0; n < 20; ++n) {
      const Image img = test::random_image(rng, 32 + 4 * (n % 4), 32 + 4 * (n % 3));
      const EncodeResult enc =
          encode_image(img, s.codec.encoder, s.codec.decoder, s.models, 0.01, false);
      const QTensor decoded = decode_latent(enc.stream, s.models);
      if (decoded == enc.latent) ++exact;
      const Image d1 = decode_image(enc.stream, s.codec.decoder, s.models);
      const Image d2 = decode_image(enc.stream, s.codec.decoder, s.models);
      if (d1 == d2) ++stable;
      ++pairs;
    }
  }
  report(1, "lossless-transport", pairs == 100 && exact == 100 && stable == 100,
         fmt("%d/%d latents exact, %d/%d pixel decodes bit-stable", exact, pairs, stable, pairs));
}

// --- 2. rANS optimality ---------------------------------------------------

void criterion_rans() {
  Rng rng(777);
  int cases = 0, roundtrips = 0, within_bound = 0;
  for (int iter = 0; iter < 10000; ++iter) {
    const int n_symbols = rng.uniform(2, 32);
    std::vector<uint32_t> freq(n_symbols, 1);
    uint32_t left = kRansTotal - static_cast<uint32_t>(n_symbols);
    for (int i = 0; i < n_symbols - 1; ++i) {
      const uint32_t take = static_cast<uint32_t>(rng.next() % (left + 1));
      freq[i] += take;
      left -= take;
    }
    freq[n_symbols - 1] += left;
    std::vector<uint32_t> cum(n_symbols + 1, 0);
    for (int i = 0; i < n_symbols; ++i) cum[i + 1] = cum[i] + freq[i];

    const int len = rng.uniform(0, 240);
    std::vector<uint32_t> source;
    std::vector<SymbolCode> syms;
    double shannon = 0.0;
    for (int i = 0; i < len; ++i) {
      const uint32_t slot = static_cast<uint32_t>(rng.next() % kRansTotal);
      const uint32_t sym =
          static_cast<uint32_t>(std::upper_bound(cum.begin(), cum.end(), slot) - cum.begin()) - 1;
      source.push_back(sym);
      syms.push_back({cum[sym], freq[sym]});
      shannon += -std::log2(static_cast<double>(freq[sym]) / kRansTotal);
    }
    const auto bytes = rans_encode(syms);
    if (static_cast<double>(bytes.size()) * 8.0 <= shannon * 1.001 + 128.0) ++within_bound;
    const auto decoded = rans_decode(bytes, syms.size(), [&](uint32_t probe) {
      const uint32_t sym =
          static_cast<uint32_t>(std::upper_bound(cum.begin(), cum.end(), probe) - cum.begin()) -
          1;
      return std::pair<uint32_t, SymbolCode>{sym, {cum[sym], freq[sym]}};
    });
    if (decoded == source) ++roundtrips;
    ++cases;
  }
  report(2, "rans-optimality", cases == 10000 && roundtrips == 10000 && within_bound == 10000,
         fmt("%d/%d round trips exact, %d/%d payloads within cross-entropy + 0.1%% + 128 bits",
             roundtrips, cases, within_bound, cases));
}

// --- 3. context-model gain ------------------------------------------------

void criterion_context_gain() {
  const auto train = test::gauss_markov_corpus(2024, 40, 6, 16, 16);
  const auto held_out = test::gauss_markov_corpus(9090, 16, 6, 16, 16);

  const EntropyModelSet contexts = test::train_models(train, true);
  const EntropyModelSet factorized = test::train_factorized(train);

  double ctx_bits = 0.0, flat_bits = 0.0;
  std::size_t ctx_payload = 0, flat_payload = 0;
  for (const QTensor& raw : held_out) {
    // clamp to the (shared) training support, as the encoder does
    const QTensor latent = quantize_latent(raw, contexts, nullptr);
    ctx_bits += estimate_bits(latent, contexts);
    flat_bits += estimate_bits(latent, factorized);
    ctx_payload += encode_latent(latent, contexts).size();
    flat_payload += encode_latent(latent, factorized).size();
  }
  const double gain = 1.0 - ctx_bits / flat_bits;
  const bool pass = gain >= 0.02 && ctx_payload < flat_payload;
  report(3, "context-model-gain", pass,
         fmt("held-out estimate gain %.2f%% (>= 2%% required); payloads %zu vs %zu bytes", gain * 100.0,
             ctx_payload, flat_payload));
}

// --- 4. RDOQ monotonicity and convergence ----------------------------------

// The convergence claim holds for trained models, where nearest-integer
// rounding already starts near the distortion optimum. The desk-scale
// stand-in is the structured codec (the encoder is the least-squares
// inverse of its block-orthogonal decoder); monotonicity is additionally
// checked on a fully random codec below.
void criterion_rdoq() {
  const test::ToyCodec codec = test::structured_toy_codec(314, 4);
  Rng lrng(316);
  const auto latents = test::toy_latents(codec.encoder, lrng, 10, 32, /*smooth=*/true);
  const EntropyModelSet models = test::train_models(latents, true);

  Rng rng(315);
  int images = 0, monotone = 0, moved_total = 0;
  int pass4_moves = 0;
  bool moves_non_increasing = true;
  std::int64_t total_positions = 0;
  for (int n = 0; n < 8; ++n) {
    const Image img = test::smooth_image(rng, 32, 32);
    const Image padded = pad_image(img, codec.encoder.total_stride);
    const EncodeResult enc = encode_image(img, codec.encoder, codec.decoder, models, 0.0, false);
    RdoqOptions opts;
    opts.passes = 4;
    const RdoqResult r = rdoq(enc.latent, codec.decoder, models, 0.6, padded, opts);
    if (r.stats.cost_after <= r.stats.cost_before) ++monotone;
    for (int m : r.stats.moves_per_pass) moved_total += m;
    for (std::size_t p = 1; p < r.stats.moves_per_pass.size(); ++p)
      if (r.stats.moves_per_pass[p] > r.stats.moves_per_pass[p - 1]) moves_non_increasing = false;
    pass4_moves += r.stats.moves_per_pass[3];
    total_positions += enc.latent.shape.volume();
    ++images;
  }

  // monotonicity must also hold for an arbitrary (untrained) codec
  const Setup rough = make_setup(3141, 6, 4, 8, 32);
  Rng rough_rng(317);
  int rough_monotone = 0;
  for (int n = 0; n < 4; ++n) {
    const Image img = test::random_image(rough_rng, 32, 32);
    const Image padded = pad_image(img, rough.codec.encoder.total_stride);
    const EncodeResult enc =
        encode_image(img, rough.codec.encoder, rough.codec.decoder, rough.models, 0.0, false);
    const RdoqResult r = rdoq(enc.latent, rough.codec.decoder, rough.models, 0.004, padded, {});
    if (r.stats.cost_after <= r.stats.cost_before) ++rough_monotone;
  }

  const double pass4_rate = static_cast<double>(pass4_moves) / static_cast<double>(total_positions);
  const bool pass = monotone == images && rough_monotone == 4 && pass4_rate < 0.001 &&
                    moved_total > 0 && moves_non_increasing;
  report(4, "rdoq-monotone-converge", pass,
         fmt("rd_cost non-increasing on %d/%d + %d/4 images; %d moves total, per-pass moves "
             "non-increasing: %s; pass-4 changes %.4f%% (< 0.1%% required)",
             monotone, images, rough_monotone, moved_total, moves_non_increasing ? "yes" : "no",
             pass4_rate * 100.0));
}

// --- 5. crop-decision fidelity ---------------------------------------------

void criterion_crop_fidelity() {
  Setup s;
  s.codec = test::structured_toy_codec(555, 4);
  Rng lrng(557);
  const auto latents = test::toy_latents(s.codec.encoder, lrng, 10, 32, /*smooth=*/true);
  s.models = test::train_models(latents, true);
  const Footprint fp = influence_footprint(s.codec.decoder);
  const int ts = s.codec.decoder.total_stride;
  const int window = std::max(1, fp.output_extent / 2);
  Rng rng(556);

  int agree = 0, probes = 0;
  const double lambda = 0.6;
  while (probes < 200) {
    const Image img = test::smooth_image(rng, 32, 32);
    const Image padded = pad_image(img, ts);
    const EncodeResult enc =
        encode_image(img, s.codec.encoder, s.codec.decoder, s.models, lambda, false);
    QTensor latent = enc.latent;
    const double full_before = rd_cost(latent, s.codec.decoder, s.models, lambda, padded);
    const double norm = 1.0 / (3.0 * padded.height * padded.width);

    for (int probe = 0; probe < 25 && probes < 200; ++probe) {
      const int pos = rng.uniform(0, s.models.num_channels() - 1);
      const int k = s.models.order[pos];
      const ChannelEntropyModel& m = s.models.channels[k];
      const int i = rng.uniform(0, latent.shape.h - 1);
      const int j = rng.uniform(0, latent.shape.w - 1);
      const int v = latent.at(k, i, j);
      const int cand = (rng.uniform(0, 1) == 0) ? v - 1 : v + 1;
      if (!m.in_support(cand)) continue;

      // cropped decision (same bookkeeping as the RDOQ inner loop)
      auto local_rate = [&](void) {
        double bits = 0.0;
        auto one = [&](int p, int y, int x) {
          const int ch = s.models.order[p];
          const auto& cm = s.models.channels[ch];
          const int ctx = context_of(latent, y, x, p, s.models);
          bits += -std::log2(static_cast<double>(cm.pmf(ctx, latent.at(ch, y, x))) / kRansTotal);
        };
        one(pos, i, j);
        if (j + 1 < latent.shape.w) one(pos, i, j + 1);
        if (i + 1 < latent.shape.h) one(pos, i + 1, j);
        if (pos + 1 < s.models.num_channels()) one(pos + 1, i, j);
        return bits;
      };
      auto window_sse = [&](void) {
        const int pi0 = std::max(0, i - fp.latent_radius),
                  pi1 = std::min(latent.shape.h - 1, i + fp.latent_radius);
        const int pj0 = std::max(0, j - fp.latent_radius),
                  pj1 = std::min(latent.shape.w - 1, j + fp.latent_radius);
        QTensor patch(Shape{latent.shape.c, pi1 - pi0 + 1, pj1 - pj0 + 1}, 0);
        for (int c = 0; c < latent.shape.c; ++c)
          for (int y = pi0; y <= pi1; ++y)
            for (int x = pj0; x <= pj1; ++x) patch.at(c, y - pi0, x - pj0) = latent.at(c, y, x);
        const QTensor recon = forward(s.codec.decoder, patch);
        const int wy0 = std::max(ts * pi0, ts * i - window / 2);
        const int wx0 = std::max(ts * pj0, ts * j - window / 2);
        const int wy1 = std::min(ts * (pi1 + 1) - 1, wy0 + window - 1);
        const int wx1 = std::min(ts * (pj1 + 1) - 1, wx0 + window - 1);
        double sse = 0.0;
        for (int c = 0; c < 3; ++c)
          for (int gy = wy0; gy <= wy1; ++gy)
            for (int gx = wx0; gx <= wx1; ++gx) {
              const double d = dequantize_value(recon.at(c, gy - ts * pi0, gx - ts * pj0),
                                                recon.q_shift) * 255.0 -
                               padded.at(gy, gx, c);
              sse += d * d;
            }
        return sse;
      };

      const double rate0 = local_rate(), sse0 = window_sse();
      latent.at(k, i, j) = static_cast<int16_t>(cand);
      const double rate1 = local_rate(), sse1 = window_sse();
      const double cropped_delta = (sse1 - sse0) * norm + lambda * (rate1 - rate0);

      const double full_after = rd_cost(latent, s.codec.decoder, s.models, lambda, padded);
      latent.at(k, i, j) = static_cast<int16_t>(v);

      const bool crop_accepts = cropped_delta < 0.0;
      const bool full_accepts = (full_after - full_before) < 0.0;
      if (crop_accepts == full_accepts) ++agree;
      ++probes;
    }
  }
  const double rate = static_cast<double>(agree) / probes;
  report(5, "crop-decision-fidelity", probes == 200 && rate >= 0.95,
         fmt("%d/%d cropped decisions match the full rd_cost decision (%.1f%%)", agree, probes,
             rate * 100.0));
}

// --- 6. channel ordering ----------------------------------------------------

void criterion_ordering() {
  // 3-channel construction: A (structured), noise, copy-of-A.
  Rng rng(606);
  std::vector<QTensor> dataset;
  for (int n = 0; n < 6; ++n) {
    QTensor t(Shape{3, 10, 10}, 0);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) {
        const int top = i > 0 ? t.at(0, i - 1, j) : 0;
        const int left = j > 0 ? t.at(0, i, j - 1) : 0;
        t.at(0, i, j) =
            static_cast<int16_t>(std::clamp((top + left) / 2 + rng.uniform(-1, 1), -6, 6));
        t.at(1, i, j) = static_cast<int16_t>(rng.uniform(-8, 8));
      }
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) t.at(2, i, j) = t.at(0, i, j);
    dataset.push_back(std::move(t));
  }
  std::vector<int> thresholds(3);
  for (int k = 0; k < 3; ++k) thresholds[k] = optimize_threshold(dataset, k);
  const std::vector<int> greedy = order_channels(dataset, thresholds);

  const bool adjacent = (greedy[1] == 0 && greedy[2] == 2) || (greedy[1] == 2 && greedy[2] == 0);

  // Exhaustive oracle over all 6 orders: the optimum must itself keep the
  // correlated pair adjacent, and the greedy order must beat the identity
  // baseline (greedy is a heuristic, not guaranteed to match the optimum).
  auto total_bits = [&](std::vector<int> order) {
    const EntropyModelSet m = extract_cdfs(dataset, std::move(order), thresholds);
    double bits = 0.0;
    for (const QTensor& latent : dataset) bits += estimate_bits(latent, m);
    return bits;
  };
  std::vector<int> perm{0, 1, 2};
  double best_exhaustive = 1e300;
  std::vector<int> best_order;
  const double identity_bits = total_bits({0, 1, 2});
  do {
    const double bits = total_bits(perm);
    if (bits < best_exhaustive) {
      best_exhaustive = bits;
      best_order = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  const double greedy_bits = total_bits(greedy);
  bool best_adjacent = false;
  for (int n = 0; n + 1 < 3; ++n)
    if ((best_order[n] == 0 && best_order[n + 1] == 2) ||
        (best_order[n] == 2 && best_order[n + 1] == 0))
      best_adjacent = true;

  // general property on the synthetic corpus
  const auto corpus = test::gauss_markov_corpus(607, 12, 4, 12, 12);
  const EntropyModelSet g2 = test::train_models(corpus, true);
  const EntropyModelSet i2 = test::train_models(corpus, false);
  double corpus_greedy = 0.0, corpus_identity = 0.0;
  for (const QTensor& latent : corpus) {
    corpus_greedy += estimate_bits(latent, g2);
    corpus_identity += estimate_bits(latent, i2);
  }

  const bool pass = adjacent && best_adjacent && greedy_bits <= identity_bits + 1e-9 &&
                    corpus_greedy <= corpus_identity + 1e-9;
  report(6, "channel-ordering", pass,
         fmt("copy adjacent in greedy: %s, in exhaustive optimum: %s; greedy %.1f <= identity "
             "%.1f (best %.1f); corpus greedy %.1f <= identity %.1f",
             adjacent ? "yes" : "no", best_adjacent ? "yes" : "no", greedy_bits, identity_bits,
             best_exhaustive, corpus_greedy, corpus_identity));
}

// --- 7. threshold optimality -------------------------------------------------

void criterion_thresholds() {
  const auto corpus = test::gauss_markov_corpus(700, 8, 4, 12, 12);
  int channels_ok = 0;
  for (int k = 0; k < 4; ++k) {
    const int chosen = optimize_threshold(corpus, k);
    // independent entropy evaluation over every candidate
    int obs_min = 32767, obs_max = -32768;
    for (const QTensor& t : corpus)
      for (int16_t v : t.plane(k)) {
        obs_min = std::min<int>(obs_min, v);
        obs_max = std::max<int>(obs_max, v);
      }
    auto bits_at = [&](int eps) {
      std::vector<std::pair<int, int>> samples;
      for (const QTensor& t : corpus)
        for (int i = 0; i < t.shape.h; ++i)
          for (int j = 0; j < t.shape.w; ++j)
            samples.push_back({context_k1(t, i, j, k, eps), t.at(k, i, j)});
      return test::ref_conditional_entropy_bits(samples);
    };
    const double chosen_bits = bits_at(chosen);
    bool minimal = true;
    for (int eps = obs_min + 1; eps <= obs_max + 1; ++eps)
      if (bits_at(eps) < chosen_bits - 1e-9) minimal = false;
    if (minimal) ++channels_ok;
  }
  report(7, "threshold-optimality", channels_ok == 4,
         fmt("%d/4 channels: returned threshold minimizes the empirical K1 entropy", channels_ok));
}

// --- 8. integer inference oracle ---------------------------------------------

void criterion_inference_oracle() {
  Rng rng(800);
  int cases = 0, matches = 0;
  for (int iter = 0; iter < 520; ++iter) {
    const int in = rng.uniform(1, 3), out = rng.uniform(1, 3);
    const int kernel = 1 + 2 * rng.uniform(0, 2);
    const int stride = rng.uniform(1, 3);
    const int h = rng.uniform(1, 12), w = rng.uniform(1, 12);
    const int in_shift = rng.uniform(0, 6), w_shift = rng.uniform(0, 6);
    const int out_shift = rng.uniform(0, in_shift + w_shift);

    LayerSpec layer;
    layer.kind = (iter % 2 == 0) ? LayerKind::kConv : LayerKind::kDeconv;
    layer.in_channels = in;
    layer.out_channels = out;
    layer.kernel = kernel;
    layer.stride = stride;
    layer.w_shift = w_shift;
    layer.out_shift = out_shift;
    layer.weights.resize(static_cast<std::size_t>(out) * in * kernel * kernel);
    for (auto& wv : layer.weights) wv = static_cast<int16_t>(rng.uniform(-800, 800));
    layer.biases.resize(out);
    for (auto& b : layer.biases) b = rng.uniform(-40000, 40000);

    QTensor input(Shape{in, h, w}, in_shift);
    for (auto& v : input.data) v = static_cast<int16_t>(rng.uniform(-500, 500));

    if (layer.kind == LayerKind::kConv) {
      if (conv2d_int(input, layer) == test::ref_conv2d(input, layer)) ++matches;
    } else {
      if (deconv2d_int(input, layer) == test::ref_deconv2d(input, layer)) ++matches;
    }
    ++cases;
  }

  // one-hot probe of the reference architecture: extent 61
  std::vector<LayerSpec> layers;
  for (int i = 0; i < 4; ++i) {
    LayerSpec l;
    l.kind = LayerKind::kDeconv;
    l.in_channels = i == 0 ? 1 : 2;
    l.out_channels = i == 3 ? 3 : 2;
    l.kernel = 5;
    l.stride = 2;
    l.w_shift = 0;
    l.out_shift = 0;
    l.weights.resize(static_cast<std::size_t>(l.out_channels) * l.in_channels * 25);
    for (auto& wv : l.weights) wv = static_cast<int16_t>(1 + rng.uniform(0, 2));
    l.biases.assign(l.out_channels, 0);
    layers.push_back(std::move(l));
  }
  const ModelGraph dec = ModelGraph::build(ModelRole::kDecoder, layers);
  const Footprint fp = influence_footprint(dec);
  QTensor probe(Shape{1, 9, 9}, 0);
  probe.at(0, 4, 4) = 1;
  QTensor t = probe;
  for (const auto& layer : dec.layers) t = deconv2d_int(t, layer);
  int lo = t.shape.h, hi = -1;
  for (int y = 0; y < t.shape.h; ++y)
    for (int x = 0; x < t.shape.w; ++x)
      for (int c = 0; c < t.shape.c; ++c)
        if (t.at(c, y, x) != 0) {
          lo = std::min(lo, y);
          hi = std::max(hi, y);
        }
  const bool probe_ok = fp.output_extent == 61 && fp.latent_radius == 2 && (hi - lo + 1) == 61;

  report(8, "inference-oracle", cases >= 500 && matches == cases && probe_ok,
         fmt("%d/%d conv/deconv cases bit-exact vs scalar reference; one-hot extent %d (61 "
             "required)",
             matches, cases, hi - lo + 1));
}

// --- 9. context truth table ----------------------------------------------------

void criterion_truth_table() {
  EntropyModelSet models;
  models.latent_shape = Shape{2, 2, 2};
  models.order = {0, 1};
  models.channels.resize(2);
  models.channels[0].threshold = 1;
  models.channels[1].threshold = 1;

  bool all_ok = true;
  for (int mask = 0; mask < 8; ++mask) {
    const bool top = mask & 1, left = mask & 2, prev = mask & 4;
    QTensor latent(Shape{2, 2, 2}, 0);
    latent.at(1, 0, 1) = top ? 1 : 0;
    latent.at(1, 1, 0) = left ? 1 : 0;
    latent.at(0, 1, 1) = prev ? 1 : 0;
    const int expected = static_cast<int>(top) + static_cast<int>(left) + static_cast<int>(prev);
    if (context_of(latent, 1, 1, 1, models) != expected) all_ok = false;
  }
  // boundary convention: out-of-bounds neighbors count as below threshold
  QTensor hot(Shape{2, 2, 2}, 0);
  for (auto& v : hot.data) v = 9;
  const bool boundary_ok = context_of(hot, 0, 0, 0, models) == 0 &&
                           context_of(hot, 0, 1, 0, models) == 1 &&
                           context_of(hot, 1, 0, 0, models) == 1 &&
                           context_of(hot, 0, 0, 1, models) == 1;
  report(9, "context-truth-table", all_ok && boundary_ok,
         fmt("8/8 predicate assignments correct; boundary convention %s",
             boundary_ok ? "correct" : "wrong"));
}

// --- 10. BD-rate calculator ------------------------------------------------------

void criterion_bdrate() {
  RDCurve anchor;
  anchor.points = {{0.25, 30.0}, {0.5, 34.0}, {0.9, 37.5}, {1.4, 40.0}};
  anchor.finalize();
  const double self_delta = bd_rate(anchor, anchor);

  RDCurve shifted;
  for (const RDPoint& p : anchor.points) shifted.points.push_back({p.bpp * 1.10, p.psnr});
  shifted.finalize();
  const double ten = bd_rate(anchor, shifted);

  // quadrature oracle on a synthetic pair
  Rng rng(1010);
  bool quad_ok = true;
  double worst = 0.0;
  for (int iter = 0; iter < 10; ++iter) {
    std::array<double, 4> bpp_a, psnr_a, bpp_t, psnr_t;
    double b = 0.2 + rng.real() * 0.1, q = 29.0 + rng.real();
    for (int n = 0; n < 4; ++n) {
      bpp_a[n] = b;
      psnr_a[n] = q;
      b *= 1.6;
      q += 2.0 + rng.real();
    }
    b = 0.22 + rng.real() * 0.1;
    q = 29.5 + rng.real();
    for (int n = 0; n < 4; ++n) {
      bpp_t[n] = b;
      psnr_t[n] = q;
      b *= 1.55;
      q += 2.0 + rng.real();
    }
    RDCurve ca, ct;
    for (int n = 0; n < 4; ++n) {
      ca.points.push_back({bpp_a[n], psnr_a[n]});
      ct.points.push_back({bpp_t[n], psnr_t[n]});
    }
    ca.finalize();
    ct.finalize();
    std::array<double, 4> ln_a, ln_t;
    for (int n = 0; n < 4; ++n) {
      ln_a[n] = std::log(bpp_a[n]);
      ln_t[n] = std::log(bpp_t[n]);
    }
    const double lo = std::max(psnr_a[0], psnr_t[0]);
    const double hi = std::min(psnr_a[3], psnr_t[3]);
    const double mean_diff =
        test::ref_trapezoid(
            [&](double p) {
              return test::ref_lagrange4(psnr_t, ln_t, p) - test::ref_lagrange4(psnr_a, ln_a, p);
            },
            lo, hi) /
        (hi - lo);
    const double oracle = 100.0 * (std::exp(mean_diff) - 1.0);
    const double got = bd_rate(ca, ct);
    worst = std::max(worst, std::abs(got - oracle));
    if (std::abs(got - oracle) > 0.05) quad_ok = false;
  }

  const bool pass = std::abs(self_delta) < 1e-9 && std::abs(ten - 10.0) <= 0.01 && quad_ok;
  report(10, "bd-rate", pass,
         fmt("identical -> %.6f%%; +10%% shift -> %.4f%%; quadrature worst gap %.4f%%", self_delta,
             ten, worst));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion_lossless();
  criterion_rans();
  criterion_context_gain();
  criterion_rdoq();
  criterion_crop_fidelity();
  criterion_ordering();
  criterion_thresholds();
  criterion_inference_oracle();
  criterion_truth_table();
  criterion_bdrate();
  const auto t1 = std::chrono::steady_clock::now();
  const double seconds = std::chrono::duration<double>(t1 - t0).count();
  std::printf("%s (%d/10 criteria, %.1f s)\n", g_failures == 0 ? "ALL PASS" : "FAILURES",
              10 - g_failures, seconds);
  return g_failures == 0 ? 0 : 1;
}
