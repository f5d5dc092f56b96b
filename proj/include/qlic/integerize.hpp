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

#ifndef QLIC_INTEGERIZE_HPP_
#define QLIC_INTEGERIZE_HPP_

#include <span>
#include <string>
#include <vector>

#include "qlic/nn_int.hpp"
#include "qlic/qtensor.hpp"

namespace qlic {

// Real-valued tensor used on the calibration / reporting side.
struct FloatTensor {
  Shape shape;
  std::vector<double> data;

  FloatTensor() = default;
  FloatTensor(Shape s) : shape(s), data(static_cast<std::size_t>(s.volume()), 0.0) {}
  double at(int ch, int y, int x) const {
    return data[(static_cast<std::size_t>(ch) * shape.h + y) * shape.w + x];
  }
  double& at(int ch, int y, int x) {
    return data[(static_cast<std::size_t>(ch) * shape.h + y) * shape.w + x];
  }
};

struct FloatLayerSpec {
  LayerKind kind = LayerKind::kConv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  std::vector<double> weights;  // (out, in, ky, kx)
  std::vector<double> biases;

  double weight(int oc, int ic, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(oc) * in_channels + ic) * kernel + ky) * kernel + kx];
  }
};

// Same topology as ModelGraph, real-valued parameters. Finite values only.
struct FloatModel {
  ModelRole role = ModelRole::kEncoder;
  std::vector<FloatLayerSpec> layers;

  int input_shift() const { return role == ModelRole::kEncoder ? 8 : 0; }
};

// Representative inputs: [0,1] images for an encoder, integer-valued
// latents for a decoder. Must be non-empty.
using CalibrationSet = std::vector<FloatTensor>;

// Real-arithmetic mirror of the integer layer semantics (same padding,
// stride and clamping rules), used for calibration and error reporting.
FloatTensor float_forward(const FloatModel& model, const FloatTensor& input);
// As above, also returning the activation tensor after every layer.
std::vector<FloatTensor> float_forward_layers(const FloatModel& model, const FloatTensor& input);

struct LayerShifts {
  int w_shift = 0;
  int out_shift = 0;
};

// Per-layer power-of-two shift selection:
//  - w_shift: largest shift with max|w| * 2^shift <= 32767 (15 for an
//    all-zero layer), reduced if needed so 32-bit accumulators cannot
//    overflow against the layer's input magnitude bound.
//  - out_shift: largest shift keeping 2x the observed activation maximum
//    inside int16, capped so the requantization shift stays nonnegative
//    and reduced if the next layer's accumulator would overflow.
// Throws Error when an activation cannot fit int16 even at shift 0.
std::vector<LayerShifts> select_shifts(const FloatModel& model, const CalibrationSet& calib);

// Quantizes weights at w_shift and biases at the accumulator scale
// (input q_shift + w_shift); returns a valid ModelGraph.
ModelGraph integerize(const FloatModel& model, const std::vector<LayerShifts>& shifts);

struct DistillationReport {
  struct Stat {
    double max_abs = 0.0;
    double mean_abs = 0.0;
  };
  std::vector<Stat> per_layer;  // conv/deconv layers only, in order
  Stat end_to_end;
  // 10*log10(peak^2 / MSE) between the float and dequantized integer
  // outputs, peak = max |float output|. Infinity when identical.
  double psnr_db = 0.0;
};

// Max/mean absolute error between float and dequantized integer forward
// passes over the calibration set. Throws Error on an empty set.
DistillationReport distillation_report(const FloatModel& model, const ModelGraph& graph,
                                       const CalibrationSet& calib);

// FMDL container: QMDL layout with float32 payloads (shift bytes written
// as zero and ignored). Layout in docs/FORMATS.md.
std::vector<uint8_t> serialize_fmdl(const FloatModel& model);
FloatModel parse_fmdl(std::span<const uint8_t> bytes);
void save_fmdl(const FloatModel& model, const std::string& path);
FloatModel load_fmdl(const std::string& path);

}  // namespace qlic

#endif  // QLIC_INTEGERIZE_HPP_
