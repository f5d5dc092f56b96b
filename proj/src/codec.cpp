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

#include "qlic/codec.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "qlic/rans.hpp"
#include "qlic/serial.hpp"

namespace qlic {

namespace {

constexpr int kQbitVersion = 1;
constexpr std::size_t kQbitHeaderBytes = 38;

SymbolCode activation_code(const ChannelEntropyModel& m, bool active) {
  const uint32_t f_active = static_cast<uint32_t>(m.act_prob_q12) * 16;  // 12 -> 16 bit domain
  return active ? SymbolCode{0, f_active} : SymbolCode{f_active, kRansTotal - f_active};
}

// Symbol stream in decode order: one activation bit per channel, then for
// active channels every value in raster order under its threshold context.
std::vector<SymbolCode> latent_symbols(const QTensor& latent, const EntropyModelSet& models) {
  std::vector<SymbolCode> syms;
  syms.reserve(static_cast<std::size_t>(latent.shape.volume()) + models.channels.size());
  for (int pos = 0; pos < models.num_channels(); ++pos) {
    const int k = models.order[pos];
    const ChannelEntropyModel& m = models.channels[k];
    const bool active = channel_active(latent, m);
    syms.push_back(activation_code(m, active));
    if (!active) continue;
    for (int i = 0; i < latent.shape.h; ++i)
      for (int j = 0; j < latent.shape.w; ++j) {
        const int ctx = context_of(latent, i, j, pos, models);
        const int v = latent.at(k, i, j);
        syms.push_back(SymbolCode{m.cum(ctx, v), m.pmf(ctx, v)});
      }
  }
  return syms;
}

double mse_255(const QTensor& recon, const Image& target) {
  if (recon.shape.c != 3 || recon.shape.h != target.height || recon.shape.w != target.width)
    throw ShapeError("rd_cost: reconstruction does not match target dims");
  double sse = 0.0;
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < recon.shape.h; ++y)
      for (int x = 0; x < recon.shape.w; ++x) {
        const double d =
            dequantize_value(recon.at(ch, y, x), recon.q_shift) * 255.0 - target.at(y, x, ch);
        sse += d * d;
      }
  return sse / (3.0 * recon.shape.h * recon.shape.w);
}

// ---- RDOQ internals ----------------------------------------------------

struct RdoqWork {
  const ModelGraph* decoder = nullptr;
  const EntropyModelSet* models = nullptr;
  const Image* target = nullptr;  // padded
  double lambda = 0.0;
  int ts = 1;        // decoder total stride
  int radius = 0;    // latent crop radius
  int window = 1;    // distortion window extent (half the receptive field)
  double mse_norm = 1.0;  // 1 / (3 * H * W), converts window SSE to MSE delta
};

double position_bits(const QTensor& latent, const EntropyModelSet& models, int pos, int i, int j) {
  const int k = models.order[pos];
  const ChannelEntropyModel& m = models.channels[k];
  const int ctx = context_of(latent, i, j, pos, models);
  return -std::log2(static_cast<double>(m.pmf(ctx, latent.at(k, i, j))) /
                    static_cast<double>(kRansTotal));
}

// Rate of the position plus its three context dependents (right, below,
// next channel collocated) -- the exact causal influence set of one value.
double local_rate(const QTensor& latent, const EntropyModelSet& models, int pos, int i, int j) {
  double bits = position_bits(latent, models, pos, i, j);
  if (j + 1 < latent.shape.w) bits += position_bits(latent, models, pos, i, j + 1);
  if (i + 1 < latent.shape.h) bits += position_bits(latent, models, pos, i + 1, j);
  if (pos + 1 < models.num_channels()) bits += position_bits(latent, models, pos + 1, i, j);
  return bits;
}

// Squared pixel error over the distortion window of latent position (i, j),
// measured on a cropped decode of the influence footprint. Truncated at
// latent borders.
double window_sse(const RdoqWork& work, const QTensor& latent, int i, int j) {
  const int h = latent.shape.h, w = latent.shape.w;
  const int pi0 = std::max(0, i - work.radius), pi1 = std::min(h - 1, i + work.radius);
  const int pj0 = std::max(0, j - work.radius), pj1 = std::min(w - 1, j + work.radius);

  QTensor patch(Shape{latent.shape.c, pi1 - pi0 + 1, pj1 - pj0 + 1}, latent.q_shift);
  for (int ch = 0; ch < latent.shape.c; ++ch)
    for (int y = pi0; y <= pi1; ++y)
      for (int x = pj0; x <= pj1; ++x) patch.at(ch, y - pi0, x - pj0) = latent.at(ch, y, x);

  const QTensor recon = forward(*work.decoder, patch);

  // Window centered on the footprint center (ts*i, ts*j), clipped to the
  // patch's output region.
  const int ts = work.ts;
  const int wy0 = std::max(ts * pi0, ts * i - work.window / 2);
  const int wx0 = std::max(ts * pj0, ts * j - work.window / 2);
  const int wy1 = std::min(ts * (pi1 + 1) - 1, wy0 + work.window - 1);
  const int wx1 = std::min(ts * (pj1 + 1) - 1, wx0 + work.window - 1);

  double sse = 0.0;
  for (int ch = 0; ch < 3; ++ch)
    for (int gy = wy0; gy <= wy1; ++gy)
      for (int gx = wx0; gx <= wx1; ++gx) {
        const double d =
            dequantize_value(recon.at(ch, gy - ts * pi0, gx - ts * pj0), recon.q_shift) * 255.0 -
            work.target->at(gy, gx, ch);
        sse += d * d;
      }
  return sse;
}

// One +-1 refinement of a single position; returns true when a move was
// accepted (strict cost decrease).
bool refine_position(const RdoqWork& work, QTensor& latent, int pos, int i, int j) {
  const EntropyModelSet& models = *work.models;
  const int k = models.order[pos];
  const ChannelEntropyModel& m = models.channels[k];
  const int v = latent.at(k, i, j);
  const int ctx = context_of(latent, i, j, pos, models);
  if (v == m.mpv[ctx]) return false;  // already optimally coded

  const double rate_cur = local_rate(latent, models, pos, i, j);
  const double sse_cur = window_sse(work, latent, i, j);

  double best_delta = 0.0;
  int best_v = v;
  for (const int cand : {v - 1, v + 1}) {
    if (cand < m.v_min || cand > m.v_max) continue;
    latent.at(k, i, j) = static_cast<int16_t>(cand);
    const double delta =
        (window_sse(work, latent, i, j) - sse_cur) * work.mse_norm +
        work.lambda * (local_rate(latent, models, pos, i, j) - rate_cur);
    latent.at(k, i, j) = static_cast<int16_t>(v);
    if (delta < best_delta) {
      best_delta = delta;
      best_v = cand;
    }
  }
  if (best_v == v) return false;
  latent.at(k, i, j) = static_cast<int16_t>(best_v);
  return true;
}

int sequential_pass(const RdoqWork& work, QTensor& latent) {
  int moves = 0;
  for (int pos = 0; pos < work.models->num_channels(); ++pos)
    for (int i = 0; i < latent.shape.h; ++i)
      for (int j = 0; j < latent.shape.w; ++j)
        if (refine_position(work, latent, pos, i, j)) ++moves;
  return moves;
}

// Parallel over channels: each worker refines its share of coding
// positions on a private copy seeded from the pass-start snapshot, then
// the accepted planes are merged. Cross-channel reads are stale by one
// pass; the caller's cost check covers the rare conflicts.
int parallel_pass(const RdoqWork& work, QTensor& latent) {
  const int s = work.models->num_channels();
  const unsigned n_threads =
      std::max(1u, std::min(std::thread::hardware_concurrency(), static_cast<unsigned>(s)));
  const QTensor snapshot = latent;
  std::vector<QTensor> locals(n_threads, snapshot);
  std::vector<int> moves(n_threads, 0);

  auto worker = [&](unsigned t) {
    for (int pos = static_cast<int>(t); pos < s; pos += static_cast<int>(n_threads))
      for (int i = 0; i < snapshot.shape.h; ++i)
        for (int j = 0; j < snapshot.shape.w; ++j)
          if (refine_position(work, locals[t], pos, i, j)) ++moves[t];
  };
  std::vector<std::thread> threads;
  for (unsigned t = 0; t < n_threads; ++t) threads.emplace_back(worker, t);
  for (auto& th : threads) th.join();

  for (unsigned t = 0; t < n_threads; ++t)
    for (int pos = static_cast<int>(t); pos < s; pos += static_cast<int>(n_threads)) {
      const int k = work.models->order[pos];
      auto dst = latent.plane(k);
      auto src = locals[t].plane(k);
      std::copy(src.begin(), src.end(), dst.begin());
    }
  int total = 0;
  for (int m : moves) total += m;
  return total;
}

}  // namespace

std::size_t Bitstream::total_bytes() const { return kQbitHeaderBytes + payload.size(); }

std::vector<uint8_t> serialize_qbit(const Bitstream& bs) {
  ByteWriter w;
  w.magic("QBIT");
  w.u8(kQbitVersion);
  w.u32(bs.header.width);
  w.u32(bs.header.height);
  w.u8(bs.header.lambda_index);
  w.u64(bs.header.model_hash);
  w.u32(bs.header.latent_h);
  w.u32(bs.header.latent_w);
  w.u32(bs.header.latent_c);
  w.u32(static_cast<uint32_t>(bs.payload.size()));
  w.bytes(bs.payload);
  return w.take();
}

Bitstream parse_qbit(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("QBIT");
  if (r.u8() != kQbitVersion) r.fail("unsupported QBIT version");
  Bitstream bs;
  bs.header.width = r.u32();
  bs.header.height = r.u32();
  bs.header.lambda_index = r.u8();
  bs.header.model_hash = r.u64();
  bs.header.latent_h = r.u32();
  bs.header.latent_w = r.u32();
  bs.header.latent_c = r.u32();
  if (bs.header.width == 0 || bs.header.height == 0 || bs.header.width > (1u << 16) ||
      bs.header.height > (1u << 16))
    r.fail("bad image dims");
  if (bs.header.latent_h == 0 || bs.header.latent_w == 0 || bs.header.latent_c == 0)
    r.fail("bad latent dims");
  const std::uint64_t latent_volume = static_cast<std::uint64_t>(bs.header.latent_h) *
                                      bs.header.latent_w * bs.header.latent_c;
  if (latent_volume > (1u << 28)) r.fail("latent too large");
  const uint32_t payload_size = r.u32();
  if (payload_size != r.remaining()) r.fail("payload size mismatch");
  auto raw = r.raw(payload_size);
  bs.payload.assign(raw.begin(), raw.end());
  return bs;
}

void save_qbit(const Bitstream& bs, const std::string& path) {
  write_file(path, serialize_qbit(bs));
}

Bitstream load_qbit(const std::string& path) {
  auto bytes = read_file(path);
  return parse_qbit(bytes);
}

uint64_t model_hash(const ModelGraph& decoder, const EntropyModelSet& models) {
  const uint64_t h = fnv1a64(serialize_qmdl(decoder));
  return fnv1a64(serialize_qems(models), h);
}

QTensor quantize_latent(const QTensor& y, const EntropyModelSet& models, int* clamped_count) {
  if (y.shape.c != models.num_channels())
    throw ShapeError("quantize_latent: channel count does not match model set");
  QTensor out(y.shape, 0);
  int clamped = 0;
  for (int k = 0; k < y.shape.c; ++k) {
    const ChannelEntropyModel& m = models.channels[k];
    const int lo = std::max(m.v_min, -32768);
    const int hi = std::min(m.v_max, 32767);
    for (int i = 0; i < y.shape.h; ++i)
      for (int j = 0; j < y.shape.w; ++j) {
        const int v = quantize_value(dequantize_value(y.at(k, i, j), y.q_shift), 0);
        const int c = std::clamp(v, lo, hi);
        if (c != v) ++clamped;
        out.at(k, i, j) = static_cast<int16_t>(c);
      }
  }
  if (clamped_count) *clamped_count = clamped;
  return out;
}

EncodeResult encode_image(const Image& image, const ModelGraph& encoder,
                          const ModelGraph& decoder, const EntropyModelSet& models,
                          double lambda, bool use_rdoq, const RdoqOptions& opts) {
  const int ts = encoder.total_stride;
  if (image.width < ts || image.height < ts)
    throw Error("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                " smaller than the total stride " + std::to_string(ts));

  const Image padded = pad_image(image, ts);
  const QTensor input = image_to_qtensor(padded);
  const QTensor y = forward(encoder, input);

  EncodeResult result;
  result.latent = quantize_latent(y, models, &result.stats.clamped_values);

  if (use_rdoq) {
    RdoqResult r = rdoq(std::move(result.latent), decoder, models, lambda, padded, opts);
    result.latent = std::move(r.latent);
    result.stats.rdoq = std::move(r.stats);
  }

  result.stats.estimated_bits = estimate_bits(result.latent, models);
  result.stream.payload = encode_latent(result.latent, models);

  BitstreamHeader& hdr = result.stream.header;
  hdr.width = static_cast<uint32_t>(image.width);
  hdr.height = static_cast<uint32_t>(image.height);
  hdr.lambda_index = kLambdaCustom;
  for (std::size_t n = 0; n < std::size(kLambdaSet); ++n)
    if (std::abs(lambda - kLambdaSet[n]) < 1e-12) hdr.lambda_index = static_cast<uint8_t>(n);
  hdr.model_hash = model_hash(decoder, models);
  hdr.latent_h = static_cast<uint32_t>(result.latent.shape.h);
  hdr.latent_w = static_cast<uint32_t>(result.latent.shape.w);
  hdr.latent_c = static_cast<uint32_t>(result.latent.shape.c);
  return result;
}

std::vector<uint8_t> encode_latent(const QTensor& latent, const EntropyModelSet& models) {
  if (latent.shape.c != models.num_channels())
    throw Error("encode_latent: latent channel count does not match model set");
  return rans_encode(latent_symbols(latent, models));
}

QTensor decode_latent_payload(std::span<const uint8_t> payload, Shape shape,
                              const EntropyModelSet& models) {
  if (shape.c != models.num_channels())
    throw Error("decode_latent: latent channels do not match model set");

  QTensor latent(shape, 0);
  RansDecoder dec(payload);
  for (int pos = 0; pos < models.num_channels(); ++pos) {
    const int k = models.order[pos];
    const ChannelEntropyModel& m = models.channels[k];
    const uint32_t f_active = static_cast<uint32_t>(m.act_prob_q12) * 16;
    const bool active = dec.probe() < f_active;
    dec.advance(activation_code(m, active));
    if (!active) {
      for (auto& v : latent.plane(k)) v = static_cast<int16_t>(m.mpv_global);
      continue;
    }
    for (int i = 0; i < shape.h; ++i)
      for (int j = 0; j < shape.w; ++j) {
        const int ctx = context_of(latent, i, j, pos, models);
        const auto& cdf = m.cdf[ctx];
        const uint32_t slot = dec.probe();
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), slot);
        const int idx = static_cast<int>(it - cdf.begin()) - 1;
        dec.advance(SymbolCode{cdf[idx], cdf[idx + 1] - cdf[idx]});
        latent.at(k, i, j) =
            static_cast<int16_t>(std::clamp(m.v_min + idx, -32768, 32767));
      }
  }
  if (!dec.finished())
    throw ParseError("corrupt payload: rANS stream inconsistent", payload.size());
  return latent;
}

QTensor decode_latent(const Bitstream& bs, const EntropyModelSet& models) {
  const Shape shape{static_cast<int>(bs.header.latent_c), static_cast<int>(bs.header.latent_h),
                    static_cast<int>(bs.header.latent_w)};
  return decode_latent_payload(bs.payload, shape, models);
}

Image decode_image(const Bitstream& bs, const ModelGraph& decoder,
                   const EntropyModelSet& models) {
  if (bs.header.model_hash != model_hash(decoder, models))
    throw Error("bitstream was produced with a different decoder/entropy model");
  const int ts = decoder.total_stride;
  if (bs.header.latent_h * ts < bs.header.height || bs.header.latent_w * ts < bs.header.width)
    throw Error("latent dims inconsistent with image dims");

  const QTensor latent = decode_latent(bs, models);
  const QTensor recon = forward(decoder, latent);
  const Image full = qtensor_to_image(recon);
  if (full.width < static_cast<int>(bs.header.width) ||
      full.height < static_cast<int>(bs.header.height))
    throw Error("decoded image smaller than header dims");

  Image out(static_cast<int>(bs.header.width), static_cast<int>(bs.header.height));
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = full.at(y, x, ch);
  return out;
}

double rd_cost(const QTensor& latent, const ModelGraph& decoder, const EntropyModelSet& models,
               double lambda, const Image& padded_target) {
  const QTensor recon = forward(decoder, latent);
  return mse_255(recon, padded_target) + lambda * estimate_bits(latent, models);
}

RdoqResult rdoq(QTensor latent, const ModelGraph& decoder, const EntropyModelSet& models,
                double lambda, const Image& padded_target, const RdoqOptions& opts) {
  if (opts.passes < 1) throw Error("rdoq: passes must be >= 1");
  const Footprint fp = influence_footprint(decoder);

  RdoqWork work;
  work.decoder = &decoder;
  work.models = &models;
  work.target = &padded_target;
  work.lambda = lambda;
  work.ts = decoder.total_stride;
  work.radius = fp.latent_radius;
  work.window = std::max(1, fp.output_extent / 2);
  work.mse_norm = 1.0 / (3.0 * padded_target.height * padded_target.width);

  RdoqResult result;
  result.stats.cost_before = rd_cost(latent, decoder, models, lambda, padded_target);
  double cost = result.stats.cost_before;

  for (int pass = 0; pass < opts.passes; ++pass) {
    const QTensor snapshot = latent;
    int moves = opts.parallel ? parallel_pass(work, latent) : sequential_pass(work, latent);

    // The cropped deltas approximate the full objective; a pass may not
    // raise the true cost. Parallel passes retry sequentially first.
    double new_cost = rd_cost(latent, decoder, models, lambda, padded_target);
    if (new_cost > cost && opts.parallel) {
      latent = snapshot;
      moves = sequential_pass(work, latent);
      new_cost = rd_cost(latent, decoder, models, lambda, padded_target);
    }
    if (new_cost > cost) {
      latent = snapshot;
      result.stats.moves_per_pass.push_back(0);
      break;
    }
    cost = new_cost;
    result.stats.moves_per_pass.push_back(moves);
    if (moves == 0) break;
  }
  while (static_cast<int>(result.stats.moves_per_pass.size()) < opts.passes)
    result.stats.moves_per_pass.push_back(0);

  result.stats.cost_after = cost;
  result.latent = std::move(latent);
  return result;
}

}  // namespace qlic
