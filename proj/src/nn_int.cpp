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

#include "qlic/nn_int.hpp"

#include <algorithm>
#include <cassert>

#include "qlic/serial.hpp"

namespace qlic {

namespace {

constexpr int kQmdlVersion = 1;

void check_layer_input(const QTensor& input, const LayerSpec& layer, const char* op) {
  if (input.shape.c != layer.in_channels)
    throw ShapeError(std::string(op) + ": expected " + std::to_string(layer.in_channels) +
                     " input channels, got " + std::to_string(input.shape.c));
}

int requant_shift(const QTensor& input, const LayerSpec& layer, const char* op) {
  int shift = input.q_shift + layer.w_shift - layer.out_shift;
  if (shift < 0)
    throw ShapeError(std::string(op) + ": negative requantization shift (in " +
                     std::to_string(input.q_shift) + " + w " + std::to_string(layer.w_shift) +
                     " < out " + std::to_string(layer.out_shift) + ")");
  return shift;
}

}  // namespace

QTensor conv2d_int(const QTensor& input, const LayerSpec& layer) {
  assert(layer.kind == LayerKind::kConv);
  check_layer_input(input, layer, "conv2d_int");
  const int shift = requant_shift(input, layer, "conv2d_int");

  const int h = input.shape.h, w = input.shape.w;
  const int k = layer.kernel, s = layer.stride, pad = layer.kernel / 2;
  const int out_h = (h + s - 1) / s;
  const int out_w = (w + s - 1) / s;
  QTensor out(Shape{layer.out_channels, out_h, out_w}, layer.out_shift);

  for (int oc = 0; oc < layer.out_channels; ++oc) {
    int16_t* dst = out.plane(oc).data();
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        std::int64_t acc = layer.biases[oc];
        for (int ic = 0; ic < layer.in_channels; ++ic) {
          const int16_t* src = input.plane(ic).data();
          const int16_t* wrow =
              &layer.weights[(static_cast<std::size_t>(oc) * layer.in_channels + ic) * k * k];
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * s - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const int16_t* in_row = src + static_cast<std::size_t>(iy) * w;
            const int16_t* w_row = wrow + ky * k;
            const int kx_lo = std::max(0, pad - ox * s);
            const int kx_hi = std::min(k - 1, w - 1 - ox * s + pad);
            const int ix0 = ox * s - pad;
            for (int kx = kx_lo; kx <= kx_hi; ++kx)
              acc += static_cast<std::int64_t>(w_row[kx]) * in_row[ix0 + kx];
          }
        }
        // 32-bit accumulation by contract; integerize's shift selection
        // guarantees this never saturates.
        assert(acc >= INT32_MIN && acc <= INT32_MAX);
        acc = std::clamp<std::int64_t>(acc, INT32_MIN, INT32_MAX);
        dst[static_cast<std::size_t>(oy) * out_w + ox] =
            requantize(static_cast<int32_t>(acc), shift);
      }
    }
  }
  return out;
}

QTensor deconv2d_int(const QTensor& input, const LayerSpec& layer) {
  assert(layer.kind == LayerKind::kDeconv);
  check_layer_input(input, layer, "deconv2d_int");
  const int shift = requant_shift(input, layer, "deconv2d_int");

  const int h = input.shape.h, w = input.shape.w;
  const int k = layer.kernel, s = layer.stride, pad = layer.kernel / 2;
  const int out_h = h * s;
  const int out_w = w * s;
  QTensor out(Shape{layer.out_channels, out_h, out_w}, layer.out_shift);

  // Scatter form: every input pixel adds w[ky][kx] * x to output
  // (iy*s - pad + ky, ix*s - pad + kx). Integer sums are associative, so
  // the result is identical to the per-output gather, element for element.
  std::vector<std::int64_t> acc(static_cast<std::size_t>(out_h) * out_w);
  for (int oc = 0; oc < layer.out_channels; ++oc) {
    std::fill(acc.begin(), acc.end(), static_cast<std::int64_t>(layer.biases[oc]));
    for (int ic = 0; ic < layer.in_channels; ++ic) {
      const int16_t* src = input.plane(ic).data();
      const int16_t* wbase =
          &layer.weights[(static_cast<std::size_t>(oc) * layer.in_channels + ic) * k * k];
      for (int iy = 0; iy < h; ++iy) {
        for (int ix = 0; ix < w; ++ix) {
          const std::int64_t v = src[static_cast<std::size_t>(iy) * w + ix];
          if (v == 0) continue;
          const int oy0 = iy * s - pad;
          const int ox0 = ix * s - pad;
          const int ky_lo = std::max(0, -oy0), ky_hi = std::min(k - 1, out_h - 1 - oy0);
          const int kx_lo = std::max(0, -ox0), kx_hi = std::min(k - 1, out_w - 1 - ox0);
          for (int ky = ky_lo; ky <= ky_hi; ++ky) {
            std::int64_t* arow = acc.data() + static_cast<std::size_t>(oy0 + ky) * out_w + ox0;
            const int16_t* wrow = wbase + ky * k;
            for (int kx = kx_lo; kx <= kx_hi; ++kx) arow[kx] += wrow[kx] * v;
          }
        }
      }
    }
    int16_t* dst = out.plane(oc).data();
    for (std::size_t n = 0; n < acc.size(); ++n) {
      // 32-bit accumulation by contract, as in conv2d_int.
      assert(acc[n] >= INT32_MIN && acc[n] <= INT32_MAX);
      const std::int64_t clamped = std::clamp<std::int64_t>(acc[n], INT32_MIN, INT32_MAX);
      dst[n] = requantize(static_cast<int32_t>(clamped), shift);
    }
  }
  return out;
}

QTensor relu_int(QTensor input) {
  for (auto& v : input.data) v = std::max<int16_t>(v, 0);
  return input;
}

QTensor forward(const ModelGraph& graph, const QTensor& input) {
  if (input.q_shift != graph.input_shift)
    throw ShapeError("forward: input q_shift " + std::to_string(input.q_shift) +
                     " does not match graph input_shift " + std::to_string(graph.input_shift));
  QTensor t = input;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& layer = graph.layers[i];
    try {
      switch (layer.kind) {
        case LayerKind::kConv: t = conv2d_int(t, layer); break;
        case LayerKind::kDeconv: t = deconv2d_int(t, layer); break;
        case LayerKind::kRelu: t = relu_int(std::move(t)); break;
      }
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  if (graph.role == ModelRole::kDecoder) {
    const int16_t hi = static_cast<int16_t>(
        std::min<int>(32767, 1 << graph.output_shift));
    for (auto& v : t.data) v = std::clamp<int16_t>(v, 0, hi);
  }
  return t;
}

Footprint influence_footprint(const ModelGraph& graph) {
  if (graph.role != ModelRole::kDecoder)
    throw Error("influence_footprint: graph is not a decoder");
  int extent = 1;
  for (const LayerSpec& layer : graph.layers) {
    if (layer.kind == LayerKind::kRelu) continue;
    extent = (extent - 1) * layer.stride + layer.kernel;
  }
  Footprint f;
  f.output_extent = extent;
  f.latent_radius = (extent + 2 * graph.total_stride - 1) / (2 * graph.total_stride);
  return f;
}

ModelGraph ModelGraph::build(ModelRole role, std::vector<LayerSpec> layers) {
  ModelGraph g;
  g.role = role;
  g.layers = std::move(layers);
  g.input_shift = (role == ModelRole::kEncoder) ? 8 : 0;
  g.output_shift = g.input_shift;
  g.total_stride = 1;
  int channels = -1;
  for (auto& layer : g.layers) {
    if (layer.kind == LayerKind::kRelu) {
      if (channels >= 0) layer.in_channels = layer.out_channels = channels;
      continue;
    }
    g.total_stride *= layer.stride;
    g.output_shift = layer.out_shift;
    channels = layer.out_channels;
  }
  g.validate();
  return g;
}

void ModelGraph::validate() const {
  // the latent must be able to take negative values
  if (role == ModelRole::kEncoder && !layers.empty() && layers.back().kind == LayerKind::kRelu)
    throw ShapeError("encoder graphs must not end with an activation");
  int channels = -1;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& layer = layers[i];
    const std::string where = "layer " + std::to_string(i);
    if (layer.kind == LayerKind::kRelu) {
      if (!layer.weights.empty() || !layer.biases.empty())
        throw ShapeError(where + ": relu must not carry weights");
      continue;
    }
    if (role == ModelRole::kEncoder && layer.kind != LayerKind::kConv)
      throw ShapeError(where + ": encoder graphs allow conv layers only");
    if (role == ModelRole::kDecoder && layer.kind != LayerKind::kDeconv)
      throw ShapeError(where + ": decoder graphs allow deconv layers only");
    if (layer.kernel <= 0 || layer.kernel % 2 == 0)
      throw ShapeError(where + ": kernel must be odd and positive");
    if (layer.stride <= 0) throw ShapeError(where + ": stride must be positive");
    if (layer.in_channels <= 0 || layer.out_channels <= 0)
      throw ShapeError(where + ": channel counts must be positive");
    if (channels >= 0 && layer.in_channels != channels)
      throw ShapeError(where + ": expected " + std::to_string(channels) +
                       " input channels, got " + std::to_string(layer.in_channels));
    const std::size_t nw = static_cast<std::size_t>(layer.out_channels) * layer.in_channels *
                           layer.kernel * layer.kernel;
    if (layer.weights.size() != nw) throw ShapeError(where + ": weight count mismatch");
    if (layer.biases.size() != static_cast<std::size_t>(layer.out_channels))
      throw ShapeError(where + ": bias count mismatch");
    if (layer.w_shift < 0 || layer.w_shift > 15 || layer.out_shift < 0 || layer.out_shift > 15)
      throw ShapeError(where + ": shift out of range");
    channels = layer.out_channels;
  }
}

std::vector<uint8_t> serialize_qmdl(const ModelGraph& graph) {
  ByteWriter w;
  w.magic("QMDL");
  w.u8(kQmdlVersion);
  w.u8(static_cast<uint8_t>(graph.role));
  w.u32(static_cast<uint32_t>(graph.layers.size()));
  for (const LayerSpec& layer : graph.layers) {
    w.u8(static_cast<uint8_t>(layer.kind));
    w.u32(static_cast<uint32_t>(layer.in_channels));
    w.u32(static_cast<uint32_t>(layer.out_channels));
    w.u32(static_cast<uint32_t>(layer.kernel));
    w.u32(static_cast<uint32_t>(layer.stride));
    w.u8(static_cast<uint8_t>(layer.w_shift));
    w.u8(static_cast<uint8_t>(layer.out_shift));
    for (int16_t v : layer.weights) w.i16(v);
    for (int32_t v : layer.biases) w.i32(v);
  }
  return w.take();
}

ModelGraph parse_qmdl(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("QMDL");
  if (r.u8() != kQmdlVersion) r.fail("unsupported QMDL version");
  uint8_t role_byte = r.u8();
  if (role_byte > 1) r.fail("bad role byte");
  uint32_t n_layers = r.u32();
  if (n_layers > 256) r.fail("implausible layer count");
  std::vector<LayerSpec> layers;
  layers.reserve(n_layers);
  for (uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec layer;
    uint8_t kind = r.u8();
    if (kind > 2) r.fail("bad layer kind");
    layer.kind = static_cast<LayerKind>(kind);
    layer.in_channels = static_cast<int>(r.u32());
    layer.out_channels = static_cast<int>(r.u32());
    layer.kernel = static_cast<int>(r.u32());
    layer.stride = static_cast<int>(r.u32());
    layer.w_shift = r.u8();
    layer.out_shift = r.u8();
    if (layer.kind != LayerKind::kRelu) {
      if (layer.in_channels <= 0 || layer.out_channels <= 0 || layer.kernel <= 0)
        r.fail("bad layer dims");
      const std::int64_t nw = static_cast<std::int64_t>(layer.out_channels) * layer.in_channels *
                              layer.kernel * layer.kernel;
      if (nw > (1 << 28)) r.fail("layer too large");
      layer.weights.resize(static_cast<std::size_t>(nw));
      for (auto& v : layer.weights) v = r.i16();
      layer.biases.resize(static_cast<std::size_t>(layer.out_channels));
      for (auto& v : layer.biases) v = r.i32();
    }
    layers.push_back(std::move(layer));
  }
  try {
    return ModelGraph::build(static_cast<ModelRole>(role_byte), std::move(layers));
  } catch (const ShapeError& e) {
    throw ParseError(std::string("invalid model: ") + e.what(), bytes.size());
  }
}

void save_qmdl(const ModelGraph& graph, const std::string& path) {
  write_file(path, serialize_qmdl(graph));
}

ModelGraph load_qmdl(const std::string& path) {
  auto bytes = read_file(path);
  return parse_qmdl(bytes);
}

}  // namespace qlic
