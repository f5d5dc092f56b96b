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

#include "qlic/integerize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qlic/serial.hpp"

namespace qlic {

namespace {

constexpr int kFmdlVersion = 1;
constexpr double kActivationMargin = 2.0;  // safety factor on calibration maxima

FloatTensor float_conv(const FloatTensor& input, const FloatLayerSpec& layer) {
  const int h = input.shape.h, w = input.shape.w;
  const int k = layer.kernel, s = layer.stride, pad = layer.kernel / 2;
  FloatTensor out(Shape{layer.out_channels, (h + s - 1) / s, (w + s - 1) / s});
  for (int oc = 0; oc < layer.out_channels; ++oc)
    for (int oy = 0; oy < out.shape.h; ++oy)
      for (int ox = 0; ox < out.shape.w; ++ox) {
        double acc = layer.biases[oc];
        for (int ic = 0; ic < layer.in_channels; ++ic)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * s - pad + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * s - pad + kx;
              if (ix < 0 || ix >= w) continue;
              acc += layer.weight(oc, ic, ky, kx) * input.at(ic, iy, ix);
            }
          }
        out.at(oc, oy, ox) = acc;
      }
  return out;
}

FloatTensor float_deconv(const FloatTensor& input, const FloatLayerSpec& layer) {
  const int h = input.shape.h, w = input.shape.w;
  const int k = layer.kernel, s = layer.stride, pad = layer.kernel / 2;
  FloatTensor out(Shape{layer.out_channels, h * s, w * s});
  for (int oc = 0; oc < layer.out_channels; ++oc)
    for (int oy = 0; oy < out.shape.h; ++oy)
      for (int ox = 0; ox < out.shape.w; ++ox) {
        double acc = layer.biases[oc];
        for (int ky = 0; ky < k; ++ky) {
          const int ny = oy + pad - ky;
          if (ny < 0 || ny % s != 0) continue;
          const int iy = ny / s;
          if (iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int nx = ox + pad - kx;
            if (nx < 0 || nx % s != 0) continue;
            const int ix = nx / s;
            if (ix >= w) continue;
            for (int ic = 0; ic < layer.in_channels; ++ic)
              acc += layer.weight(oc, ic, ky, kx) * input.at(ic, iy, ix);
          }
        }
        out.at(oc, oy, ox) = acc;
      }
  return out;
}

double max_abs(std::span<const double> values) {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

// Integer magnitude of the largest quantized weight at a given shift.
std::int64_t max_weight_int(double w_max, int w_shift) {
  return static_cast<std::int64_t>(std::floor(std::ldexp(w_max, w_shift) + 0.5));
}

}  // namespace

std::vector<FloatTensor> float_forward_layers(const FloatModel& model, const FloatTensor& input) {
  std::vector<FloatTensor> acts;
  FloatTensor t = input;
  for (const FloatLayerSpec& layer : model.layers) {
    switch (layer.kind) {
      case LayerKind::kConv: t = float_conv(t, layer); break;
      case LayerKind::kDeconv: t = float_deconv(t, layer); break;
      case LayerKind::kRelu:
        for (auto& v : t.data) v = std::max(v, 0.0);
        break;
    }
    acts.push_back(t);
  }
  return acts;
}

FloatTensor float_forward(const FloatModel& model, const FloatTensor& input) {
  auto acts = float_forward_layers(model, input);
  FloatTensor out = acts.empty() ? input : std::move(acts.back());
  if (model.role == ModelRole::kDecoder)
    for (auto& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

std::vector<LayerShifts> select_shifts(const FloatModel& model, const CalibrationSet& calib) {
  if (calib.empty()) throw Error("select_shifts: empty calibration set");

  const std::size_t n_layers = model.layers.size();

  // Observed per-layer activation maxima (after the layer, relu included).
  std::vector<double> act_max(n_layers, 0.0);
  double input_max = 0.0;
  for (const FloatTensor& item : calib) {
    input_max = std::max(input_max, max_abs(item.data));
    auto acts = float_forward_layers(model, item);
    for (std::size_t i = 0; i < n_layers; ++i)
      act_max[i] = std::max(act_max[i], max_abs(acts[i].data));
  }

  std::vector<LayerShifts> shifts(n_layers);

  // Initial w_shift from the weight magnitude alone.
  for (std::size_t i = 0; i < n_layers; ++i) {
    if (model.layers[i].kind == LayerKind::kRelu) continue;
    const double w_max = max_abs(model.layers[i].weights);
    int q = 15;
    while (q > 0 && std::ldexp(w_max, q) > 32767.0) --q;
    shifts[i].w_shift = q;
  }

  // Walk the graph keeping the integer magnitude bound of each layer's
  // input, shrinking shifts until activations fit int16 and accumulators
  // fit int32.
  int in_shift = model.input_shift();
  std::int64_t in_bound =
      static_cast<std::int64_t>(std::ceil(std::ldexp(input_max, in_shift)));
  std::size_t prev_conv = n_layers;  // index of the layer that produced the current input

  for (std::size_t i = 0; i < n_layers; ++i) {
    const FloatLayerSpec& layer = model.layers[i];
    if (layer.kind == LayerKind::kRelu) continue;

    const double w_max = max_abs(layer.weights);
    const std::int64_t n_terms =
        static_cast<std::int64_t>(layer.in_channels) * layer.kernel * layer.kernel;
    const double bias_max = layer.biases.empty() ? 0.0 : max_abs(layer.biases);

    auto acc_bound = [&](int w_shift_i, std::int64_t input_bound) {
      const std::int64_t wb = max_weight_int(w_max, w_shift_i);
      const std::int64_t bias_int = static_cast<std::int64_t>(
          std::ceil(std::ldexp(bias_max, in_shift + w_shift_i)));
      return n_terms * wb * input_bound + bias_int;
    };

    // Prefer lowering the producer's out_shift; fall back to this layer's
    // w_shift when the input scale is fixed (graph input) or exhausted.
    while (acc_bound(shifts[i].w_shift, in_bound) > std::numeric_limits<int32_t>::max()) {
      if (prev_conv < n_layers && shifts[prev_conv].out_shift > 0) {
        --shifts[prev_conv].out_shift;
        --in_shift;
        in_bound = static_cast<std::int64_t>(
            std::ceil(std::ldexp(kActivationMargin * act_max[prev_conv], in_shift)));
      } else if (shifts[i].w_shift > 0) {
        --shifts[i].w_shift;
      } else {
        throw Error("select_shifts: layer " + std::to_string(i) +
                    " cannot avoid accumulator overflow");
      }
    }

    // out_shift: int16 fit with margin, nonnegative requantization shift.
    const double bounded_act = kActivationMargin * act_max[i];
    int q = std::min(15, in_shift + shifts[i].w_shift);
    while (q > 0 && std::ldexp(bounded_act, q) > 32767.0) --q;
    if (q == 0 && bounded_act > 32767.0)
      throw Error("select_shifts: layer " + std::to_string(i) +
                  " activation exceeds int16 at shift 0");
    shifts[i].out_shift = q;

    prev_conv = i;
    in_shift = q;
    in_bound = static_cast<std::int64_t>(std::ceil(std::ldexp(bounded_act, q)));
  }
  return shifts;
}

ModelGraph integerize(const FloatModel& model, const std::vector<LayerShifts>& shifts) {
  if (shifts.size() != model.layers.size())
    throw Error("integerize: shift count does not match layer count");

  std::vector<LayerSpec> layers;
  layers.reserve(model.layers.size());
  int in_shift = model.input_shift();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const FloatLayerSpec& src = model.layers[i];
    LayerSpec dst;
    dst.kind = src.kind;
    dst.in_channels = src.in_channels;
    dst.out_channels = src.out_channels;
    dst.kernel = src.kernel;
    dst.stride = src.stride;
    if (src.kind != LayerKind::kRelu) {
      dst.w_shift = shifts[i].w_shift;
      dst.out_shift = shifts[i].out_shift;
      dst.weights.reserve(src.weights.size());
      for (double w : src.weights) dst.weights.push_back(quantize_value(w, dst.w_shift));
      const int bias_shift = in_shift + dst.w_shift;
      dst.biases.reserve(src.biases.size());
      for (double b : src.biases) {
        double scaled = std::ldexp(b, bias_shift);
        double rounded = scaled >= 0.0 ? std::floor(scaled + 0.5) : std::ceil(scaled - 0.5);
        rounded = std::clamp(rounded, static_cast<double>(std::numeric_limits<int32_t>::min()),
                             static_cast<double>(std::numeric_limits<int32_t>::max()));
        dst.biases.push_back(static_cast<int32_t>(rounded));
      }
      in_shift = dst.out_shift;
    }
    layers.push_back(std::move(dst));
  }
  return ModelGraph::build(model.role, std::move(layers));
}

DistillationReport distillation_report(const FloatModel& model, const ModelGraph& graph,
                                       const CalibrationSet& calib) {
  if (calib.empty()) throw Error("distillation_report: empty calibration set");

  DistillationReport report;
  std::vector<std::size_t> conv_layers;
  for (std::size_t i = 0; i < model.layers.size(); ++i)
    if (model.layers[i].kind != LayerKind::kRelu) conv_layers.push_back(i);
  report.per_layer.resize(conv_layers.size());

  std::vector<double> layer_count(conv_layers.size(), 0.0);
  double end_count = 0.0, end_sq = 0.0, float_peak = 0.0;

  for (const FloatTensor& item : calib) {
    auto float_acts = float_forward_layers(model, item);

    // Mirror the integer pass layer by layer.
    QTensor t(item.shape, graph.input_shift);
    for (std::size_t n = 0; n < item.data.size(); ++n)
      t.data[n] = quantize_value(item.data[n], graph.input_shift);
    std::size_t stat = 0;
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
      const LayerSpec& layer = graph.layers[i];
      switch (layer.kind) {
        case LayerKind::kConv: t = conv2d_int(t, layer); break;
        case LayerKind::kDeconv: t = deconv2d_int(t, layer); break;
        case LayerKind::kRelu: t = relu_int(std::move(t)); break;
      }
      if (layer.kind == LayerKind::kRelu) continue;
      auto& s = report.per_layer[stat];
      for (std::size_t n = 0; n < t.data.size(); ++n) {
        const double err = std::abs(dequantize_value(t.data[n], layer.out_shift) -
                                    float_acts[i].data[n]);
        s.max_abs = std::max(s.max_abs, err);
        s.mean_abs += err;
      }
      layer_count[stat] += static_cast<double>(t.data.size());
      ++stat;
    }

    // End to end, with the decoder clamp applied on both sides.
    FloatTensor gold = float_acts.empty() ? item : float_acts.back();
    if (graph.role == ModelRole::kDecoder) {
      const int16_t hi = static_cast<int16_t>(std::min<int>(32767, 1 << graph.output_shift));
      for (auto& v : t.data) v = std::clamp<int16_t>(v, 0, hi);
      for (auto& v : gold.data) v = std::clamp(v, 0.0, 1.0);
    }
    for (std::size_t n = 0; n < t.data.size(); ++n) {
      const double fv = gold.data[n];
      const double err = std::abs(dequantize_value(t.data[n], graph.output_shift) - fv);
      report.end_to_end.max_abs = std::max(report.end_to_end.max_abs, err);
      report.end_to_end.mean_abs += err;
      end_sq += err * err;
      float_peak = std::max(float_peak, std::abs(fv));
    }
    end_count += static_cast<double>(t.data.size());
  }

  for (std::size_t i = 0; i < report.per_layer.size(); ++i)
    if (layer_count[i] > 0) report.per_layer[i].mean_abs /= layer_count[i];
  if (end_count > 0) report.end_to_end.mean_abs /= end_count;
  const double mse = end_count > 0 ? end_sq / end_count : 0.0;
  report.psnr_db = (mse == 0.0) ? std::numeric_limits<double>::infinity()
                                : 10.0 * std::log10(float_peak * float_peak / mse);
  return report;
}

std::vector<uint8_t> serialize_fmdl(const FloatModel& model) {
  ByteWriter w;
  w.magic("FMDL");
  w.u8(kFmdlVersion);
  w.u8(static_cast<uint8_t>(model.role));
  w.u32(static_cast<uint32_t>(model.layers.size()));
  for (const FloatLayerSpec& layer : model.layers) {
    w.u8(static_cast<uint8_t>(layer.kind));
    w.u32(static_cast<uint32_t>(layer.in_channels));
    w.u32(static_cast<uint32_t>(layer.out_channels));
    w.u32(static_cast<uint32_t>(layer.kernel));
    w.u32(static_cast<uint32_t>(layer.stride));
    w.u8(0);  // shift slots kept for layout parity with QMDL
    w.u8(0);
    for (double v : layer.weights) w.f32(static_cast<float>(v));
    for (double v : layer.biases) w.f32(static_cast<float>(v));
  }
  return w.take();
}

FloatModel parse_fmdl(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("FMDL");
  if (r.u8() != kFmdlVersion) r.fail("unsupported FMDL version");
  uint8_t role_byte = r.u8();
  if (role_byte > 1) r.fail("bad role byte");
  FloatModel model;
  model.role = static_cast<ModelRole>(role_byte);
  uint32_t n_layers = r.u32();
  if (n_layers > 256) r.fail("implausible layer count");
  for (uint32_t i = 0; i < n_layers; ++i) {
    FloatLayerSpec layer;
    uint8_t kind = r.u8();
    if (kind > 2) r.fail("bad layer kind");
    layer.kind = static_cast<LayerKind>(kind);
    layer.in_channels = static_cast<int>(r.u32());
    layer.out_channels = static_cast<int>(r.u32());
    layer.kernel = static_cast<int>(r.u32());
    layer.stride = static_cast<int>(r.u32());
    r.u8();
    r.u8();
    if (layer.kind != LayerKind::kRelu) {
      if (layer.in_channels <= 0 || layer.out_channels <= 0 || layer.kernel <= 0)
        r.fail("bad layer dims");
      const std::int64_t nw = static_cast<std::int64_t>(layer.out_channels) * layer.in_channels *
                              layer.kernel * layer.kernel;
      if (nw > (1 << 28)) r.fail("layer too large");
      layer.weights.resize(static_cast<std::size_t>(nw));
      for (auto& v : layer.weights) {
        v = r.f32();
        if (!std::isfinite(v)) r.fail("non-finite weight");
      }
      layer.biases.resize(static_cast<std::size_t>(layer.out_channels));
      for (auto& v : layer.biases) {
        v = r.f32();
        if (!std::isfinite(v)) r.fail("non-finite bias");
      }
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

void save_fmdl(const FloatModel& model, const std::string& path) {
  write_file(path, serialize_fmdl(model));
}

FloatModel load_fmdl(const std::string& path) {
  auto bytes = read_file(path);
  return parse_fmdl(bytes);
}

}  // namespace qlic
