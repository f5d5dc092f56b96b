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

#ifndef QLIC_NN_INT_HPP_
#define QLIC_NN_INT_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qlic/qtensor.hpp"

namespace qlic {

enum class LayerKind : uint8_t { kConv = 0, kDeconv = 1, kRelu = 2 };
enum class ModelRole : uint8_t { kEncoder = 0, kDecoder = 1 };

// One integerized layer. Weights are stored (out, in, ky, kx) row-major at
// scale 2^w_shift; biases are 32-bit at the accumulator scale
// (input q_shift + w_shift), so no separate bias shift exists.
struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;  // odd, square
  int stride = 1;
  std::vector<int16_t> weights;  // out*in*kernel*kernel, empty for relu
  std::vector<int32_t> biases;   // out, empty for relu
  int w_shift = 0;
  int out_shift = 0;

  int16_t weight(int oc, int ic, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(oc) * in_channels + ic) * kernel + ky) * kernel + kx];
  }
};

// Sequential integer network. total_stride is the product of layer strides:
// the spatial downscale of an encoder or upscale of a decoder.
//
// Fixed-point conventions: encoder inputs are [0,1] images at q_shift 8,
// decoder inputs are integer latents at q_shift 0; output_shift is the
// q_shift of the last conv/deconv layer.
struct ModelGraph {
  ModelRole role = ModelRole::kEncoder;
  std::vector<LayerSpec> layers;
  int input_shift = 8;
  int output_shift = 8;
  int total_stride = 1;

  // Fills the derived fields and checks the graph invariants
  // (channel chaining, role/kind agreement, shift ranges).
  static ModelGraph build(ModelRole role, std::vector<LayerSpec> layers);

  void validate() const;
};

// Strided 2-D cross-correlation with zero padding kernel/2 per side.
// Output spatial dims are ceil(h/stride) x ceil(w/stride); each output is
// requantize(sum(w*x) + bias, input.q_shift + w_shift - out_shift) so the
// result carries q_shift == out_shift. Accumulation is 32-bit by contract;
// shift selection (module integerize) prevents overflow.
QTensor conv2d_int(const QTensor& input, const LayerSpec& layer);

// Transposed convolution, output dims h*stride x w*stride (output padding
// stride - kernel + 2*(kernel/2) makes an n x n image map to n/total_stride
// and back exactly). Same requantization contract as conv2d_int.
QTensor deconv2d_int(const QTensor& input, const LayerSpec& layer);

// Elementwise max(v, 0); q_shift unchanged.
QTensor relu_int(QTensor input);

// Applies the layers in order. Decoder outputs are clamped to [0, 1]
// (i.e. [0, 2^output_shift] in fixed point). Layer errors are rethrown
// with the layer index attached.
QTensor forward(const ModelGraph& graph, const QTensor& input);

struct Footprint {
  int latent_radius = 0;   // latent crop radius used by RDOQ
  int output_extent = 0;   // spatial width of the region one latent value touches
};

// Receptive-field geometry of a decoder, layer by layer:
// extent <- (extent - 1) * stride + kernel, starting from 1.
// latent_radius = ceil(output_extent / (2 * total_stride)).
Footprint influence_footprint(const ModelGraph& graph);

// QMDL container (bit-exact layout in docs/FORMATS.md).
std::vector<uint8_t> serialize_qmdl(const ModelGraph& graph);
ModelGraph parse_qmdl(std::span<const uint8_t> bytes);
void save_qmdl(const ModelGraph& graph, const std::string& path);
ModelGraph load_qmdl(const std::string& path);

}  // namespace qlic

#endif  // QLIC_NN_INT_HPP_
