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

#ifndef QLIC_CODEC_HPP_
#define QLIC_CODEC_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qlic/entropy_model.hpp"
#include "qlic/image.hpp"
#include "qlic/nn_int.hpp"
#include "qlic/qtensor.hpp"

namespace qlic {

// The training lambda set; encode stores an index into it when the
// requested lambda matches, 255 otherwise.
inline constexpr double kLambdaSet[] = {0.0018, 0.0035, 0.0067, 0.02, 0.04, 0.08, 0.0130};
inline constexpr uint8_t kLambdaCustom = 255;

struct BitstreamHeader {
  uint32_t width = 0;   // pre-padding pixels
  uint32_t height = 0;
  uint8_t lambda_index = kLambdaCustom;
  uint64_t model_hash = 0;  // decoder graph + entropy model identifier
  uint32_t latent_h = 0;
  uint32_t latent_w = 0;
  uint32_t latent_c = 0;
};

struct Bitstream {
  BitstreamHeader header;
  std::vector<uint8_t> payload;  // single interleaved rANS stream

  std::size_t total_bytes() const;
};

// QBIT container (layout in docs/FORMATS.md).
std::vector<uint8_t> serialize_qbit(const Bitstream& bs);
Bitstream parse_qbit(std::span<const uint8_t> bytes);
void save_qbit(const Bitstream& bs, const std::string& path);
Bitstream load_qbit(const std::string& path);

// Identifier binding a bitstream to the decoder graph and entropy model
// that produced it.
uint64_t model_hash(const ModelGraph& decoder, const EntropyModelSet& models);

// Nearest-integer quantization of a continuous latent (round half away
// from zero), clamped to each channel's model support. clamped_count, if
// given, receives the number of clamped values.
QTensor quantize_latent(const QTensor& y, const EntropyModelSet& models,
                        int* clamped_count = nullptr);

struct RdoqOptions {
  int passes = 3;
  bool parallel = false;
};

struct RdoqStats {
  std::vector<int> moves_per_pass;
  double cost_before = 0.0;
  double cost_after = 0.0;
};

struct EncodeStats {
  double estimated_bits = 0.0;
  int clamped_values = 0;
  RdoqStats rdoq;  // populated when RDOQ ran
};

struct EncodeResult {
  Bitstream stream;
  QTensor latent;  // the transmitted latent (after RDOQ if enabled)
  EncodeStats stats;
};

// Full encode: pad (edge replication) to a multiple of the encoder's
// total stride, integer forward pass, latent quantization, optional RDOQ,
// then one rANS stream of per-channel activation bits and context-coded
// values in coding order. Throws Error when the image is smaller than the
// total stride in either dimension.
EncodeResult encode_image(const Image& image, const ModelGraph& encoder,
                          const ModelGraph& decoder, const EntropyModelSet& models,
                          double lambda, bool use_rdoq, const RdoqOptions& opts = {});

// The entropy-coding layer on its own: one rANS payload of activation
// bits and context-coded values. Latent values must lie inside the
// per-channel supports.
std::vector<uint8_t> encode_latent(const QTensor& latent, const EntropyModelSet& models);
QTensor decode_latent_payload(std::span<const uint8_t> payload, Shape latent_shape,
                              const EntropyModelSet& models);

// Entropy-decode the latent of a bitstream (no hash check).
QTensor decode_latent(const Bitstream& bs, const EntropyModelSet& models);

// Full decode: hash check, latent reconstruction (inactive channels fill
// with the channel's merged-histogram MPV), integer decoder pass, pixel
// conversion, crop to the header dimensions.
Image decode_image(const Bitstream& bs, const ModelGraph& decoder,
                   const EntropyModelSet& models);

// Canonical RD objective: full-image MSE against the padded target, in the
// 0..255 pixel scale, plus lambda * estimate_bits. This is the quantity
// RDOQ's cropped deltas approximate.
double rd_cost(const QTensor& latent, const ModelGraph& decoder, const EntropyModelSet& models,
               double lambda, const Image& padded_target);

struct RdoqResult {
  QTensor latent;
  RdoqStats stats;
};

// Inference-based rate-distortion optimization of the latent: multi-pass
// +-1 search in coding order, skipping values already at their context
// MPV. Rate deltas cover the position and its three context dependents;
// distortion deltas come from a cropped decode of the influence footprint
// compared over a window half the receptive field. Moves are accepted
// only on a strict decrease of deltaD + lambda * deltaR.
//
// The parallel mode partitions channels across threads with snapshot
// reads; it preserves the monotone-cost invariant (a pass that fails the
// check is reverted and redone sequentially) but not bit-exactness.
RdoqResult rdoq(QTensor latent, const ModelGraph& decoder, const EntropyModelSet& models,
                double lambda, const Image& padded_target, const RdoqOptions& opts = {});

}  // namespace qlic

#endif  // QLIC_CODEC_HPP_
