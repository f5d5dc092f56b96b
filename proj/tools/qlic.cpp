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
// qlic command-line tool: model integerization, latent dumping, entropy
// model training, encode/decode, RD evaluation and BD-rate.

#include <algorithm>
#include <atomic>
#include <clocale>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "qlic/codec.hpp"
#include "qlic/entropy_model.hpp"
#include "qlic/eval.hpp"
#include "qlic/image.hpp"
#include "qlic/integerize.hpp"
#include "qlic/nn_int.hpp"
#include "qlic/qtensor.hpp"
#include "qlic/serial.hpp"

namespace fs = std::filesystem;
using namespace qlic;

namespace {

std::vector<std::string> list_files(const std::string& dir, const std::string& ext) {
  std::vector<std::string> files;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ext)
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no " + ext + " files in " + dir);
  return files;
}

// Deterministic generator for the toy-model subcommand.
struct SplitMix {
  uint64_t state;
  uint64_t next() {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  double real() { return (next() >> 11) * 0x1.0p-53; }  // [0, 1)
  double sym(double a) { return (2.0 * real() - 1.0) * a; }
};

// ---- subcommands --------------------------------------------------------

int cmd_integerize(const std::string& float_model_path, const std::string& calib_dir,
                   const std::string& out_path) {
  const FloatModel model = load_fmdl(float_model_path);

  CalibrationSet calib;
  if (model.role == ModelRole::kEncoder) {
    for (const auto& path : list_files(calib_dir, ".ppm")) {
      const Image img = load_ppm(path);
      FloatTensor t(Shape{3, img.height, img.width});
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < img.height; ++y)
          for (int x = 0; x < img.width; ++x) t.at(ch, y, x) = img.at(y, x, ch) / 255.0;
      calib.push_back(std::move(t));
    }
  } else {
    for (const auto& path : list_files(calib_dir, ".qtns")) {
      const QTensor q = load_qtns(path);
      FloatTensor t(q.shape);
      for (std::size_t n = 0; n < q.data.size(); ++n)
        t.data[n] = dequantize_value(q.data[n], q.q_shift);
      calib.push_back(std::move(t));
    }
  }

  const auto shifts = select_shifts(model, calib);
  const ModelGraph graph = integerize(model, shifts);
  const DistillationReport report = distillation_report(model, graph, calib);

  std::printf("layer   w_shift  out_shift   max_err      mean_err\n");
  std::size_t stat = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (model.layers[i].kind == LayerKind::kRelu) continue;
    std::printf("%-7zu %-8d %-10d %-12.6g %-12.6g\n", i, shifts[i].w_shift, shifts[i].out_shift,
                report.per_layer[stat].max_abs, report.per_layer[stat].mean_abs);
    ++stat;
  }
  std::printf("end-to-end: max_err %.6g  mean_err %.6g  psnr %.2f dB\n",
              report.end_to_end.max_abs, report.end_to_end.mean_abs, report.psnr_db);
  save_qmdl(graph, out_path);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int cmd_dump_latents(const std::string& model_path, const std::string& images_dir,
                     const std::string& out_dir) {
  const ModelGraph encoder = load_qmdl(model_path);
  if (encoder.role != ModelRole::kEncoder) throw Error("dump-latents needs an encoder model");
  fs::create_directories(out_dir);
  for (const auto& path : list_files(images_dir, ".ppm")) {
    const Image img = load_ppm(path);
    const Image padded = pad_image(img, encoder.total_stride);
    const QTensor y = forward(encoder, image_to_qtensor(padded));
    QTensor latent(y.shape, 0);
    for (std::size_t n = 0; n < y.data.size(); ++n)
      latent.data[n] = quantize_value(dequantize_value(y.data[n], y.q_shift), 0);
    const std::string out =
        (fs::path(out_dir) / fs::path(path).filename().replace_extension(".qtns")).string();
    save_qtns(latent, out);
    std::printf("%s -> %s (%dx%dx%d)\n", path.c_str(), out.c_str(), latent.shape.c,
                latent.shape.h, latent.shape.w);
  }
  return 0;
}

int cmd_train_entropy(const std::string& latents_dir, const std::string& out_path,
                      bool skip_ordering) {
  std::vector<QTensor> dataset;
  for (const auto& path : list_files(latents_dir, ".qtns")) dataset.push_back(load_qtns(path));
  const int s = dataset.front().shape.c;

  std::vector<int> thresholds(s);
  for (int k = 0; k < s; ++k) thresholds[k] = optimize_threshold(dataset, k);

  std::vector<int> order(s);
  if (skip_ordering) {
    for (int k = 0; k < s; ++k) order[k] = k;
  } else {
    order = order_channels(dataset, thresholds);
  }

  const EntropyModelSet models = extract_cdfs(dataset, order, thresholds);
  const auto bytes = serialize_qems(models);
  write_file(out_path, bytes);
  std::printf("trained on %zu latents, %d channels; wrote %s (%zu bytes)\n", dataset.size(), s,
              out_path.c_str(), bytes.size());
  return 0;
}

void print_encode_stats(const EncodeResult& result, const Image& original, double lambda,
                        const ModelGraph& encoder, const ModelGraph& decoder,
                        const EntropyModelSet& models) {
  const double pixels = static_cast<double>(original.width) * original.height;
  const double bpp = 8.0 * static_cast<double>(result.stream.total_bytes()) / pixels;
  const Image decoded = decode_image(result.stream, decoder, models);
  const Image padded = pad_image(original, encoder.total_stride);
  const double cost = rd_cost(result.latent, decoder, models, lambda, padded);
  std::printf(
      "bpp %.6f  psnr %.4f dB  rd_cost %.4f  estimated %.1f bits  payload %zu bytes  clamped "
      "%d\n",
      bpp, psnr(original, decoded), cost, result.stats.estimated_bits,
      result.stream.payload.size(), result.stats.clamped_values);
  if (!result.stats.rdoq.moves_per_pass.empty()) {
    std::printf("rdoq: rd_cost %.4f -> %.4f (lambda %.6f), moves", result.stats.rdoq.cost_before,
                result.stats.rdoq.cost_after, lambda);
    for (int m : result.stats.rdoq.moves_per_pass) std::printf(" %d", m);
    std::printf("\n");
  }
}

int cmd_encode(const std::string& enc_path, const std::string& dec_path,
               const std::string& qems_path, double lambda, bool use_rdoq, int passes,
               bool parallel, const std::string& dump_latent, const std::string& in_path,
               const std::string& out_path) {
  const ModelGraph encoder = load_qmdl(enc_path);
  const ModelGraph decoder = load_qmdl(dec_path);
  const EntropyModelSet models = load_qems(qems_path);
  const Image img = load_ppm(in_path);

  RdoqOptions opts;
  opts.passes = passes;
  opts.parallel = parallel;
  const EncodeResult result = encode_image(img, encoder, decoder, models, lambda, use_rdoq, opts);
  save_qbit(result.stream, out_path);
  if (!dump_latent.empty()) save_qtns(result.latent, dump_latent);
  print_encode_stats(result, img, lambda, encoder, decoder, models);
  return 0;
}

int cmd_decode(const std::string& dec_path, const std::string& qems_path,
               const std::string& dump_latent, const std::string& in_path,
               const std::string& out_path) {
  const ModelGraph decoder = load_qmdl(dec_path);
  const EntropyModelSet models = load_qems(qems_path);
  const Bitstream bs = load_qbit(in_path);
  if (!dump_latent.empty()) save_qtns(decode_latent(bs, models), dump_latent);
  const Image img = decode_image(bs, decoder, models);
  save_ppm(img, out_path);
  std::printf("decoded %ux%u image to %s\n", bs.header.width, bs.header.height, out_path.c_str());
  return 0;
}

int cmd_eval(const std::string& enc_path, const std::string& dec_path,
             const std::string& qems_path, const std::string& images_dir,
             const std::string& out_csv, std::vector<double> lambdas, bool use_rdoq, int passes,
             bool parallel) {
  const ModelGraph encoder = load_qmdl(enc_path);
  const ModelGraph decoder = load_qmdl(dec_path);
  const EntropyModelSet models = load_qems(qems_path);
  const auto images = list_files(images_dir, ".ppm");
  if (lambdas.empty()) lambdas.assign(std::begin(kLambdaSet), std::end(kLambdaSet));
  std::sort(lambdas.begin(), lambdas.end());

  // Every (image, lambda) pair is an independent job; rows come out in a
  // fixed order regardless of scheduling.
  struct Job {
    std::size_t image_index;
    std::size_t lambda_index;
    double bpp = 0.0;
    double quality = 0.0;
  };
  std::vector<Job> jobs;
  for (std::size_t li = 0; li < lambdas.size(); ++li)
    for (std::size_t ii = 0; ii < images.size(); ++ii) jobs.push_back({ii, li});

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t n = next.fetch_add(1);
      if (n >= jobs.size()) return;
      Job& job = jobs[n];
      const Image img = load_ppm(images[job.image_index]);
      RdoqOptions opts;
      opts.passes = passes;
      opts.parallel = parallel;
      const EncodeResult r =
          encode_image(img, encoder, decoder, models, lambdas[job.lambda_index], use_rdoq, opts);
      const Image decoded = decode_image(r.stream, decoder, models);
      job.bpp = 8.0 * static_cast<double>(r.stream.total_bytes()) /
                (static_cast<double>(img.width) * img.height);
      job.quality = psnr(img, decoded);
    }
  };
  const unsigned n_threads = std::max(1u, std::min(std::thread::hardware_concurrency(),
                                                   static_cast<unsigned>(jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::string csv = "image,lambda,bpp,psnr\n";
  char line[256];
  std::size_t n = 0;
  for (std::size_t li = 0; li < lambdas.size(); ++li) {
    double sum_bpp = 0.0, sum_psnr = 0.0;
    for (std::size_t ii = 0; ii < images.size(); ++ii, ++n) {
      std::snprintf(line, sizeof line, "%s,%.4f,%.6f,%.4f\n",
                    fs::path(images[ii]).filename().string().c_str(), lambdas[li], jobs[n].bpp,
                    jobs[n].quality);
      csv += line;
      sum_bpp += jobs[n].bpp;
      sum_psnr += jobs[n].quality;
    }
    std::snprintf(line, sizeof line, "average,%.4f,%.6f,%.4f\n", lambdas[li],
                  sum_bpp / images.size(), sum_psnr / images.size());
    csv += line;
  }
  write_file(out_csv, std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(csv.data()),
                                               csv.size()));
  std::printf("wrote %s (%zu images x %zu lambdas)\n", out_csv.c_str(), images.size(),
              lambdas.size());
  return 0;
}

// Reads an eval CSV back into a curve: "average" rows when present,
// otherwise per-lambda means.
RDCurve read_curve_csv(const std::string& path) {
  const auto bytes = read_file(path);
  std::string text(bytes.begin(), bytes.end());

  std::map<double, std::pair<double, std::pair<double, int>>> by_lambda;  // bpp/psnr sums
  RDCurve avg_curve;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string row = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (row.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::array<std::string, 4> fields;
    std::size_t start = 0;
    for (int f = 0; f < 4; ++f) {
      std::size_t comma = row.find(',', start);
      if (comma == std::string::npos) comma = row.size();
      fields[f] = row.substr(start, comma - start);
      start = comma + 1;
    }
    const double lambda = std::stod(fields[1]);
    const double bpp = std::stod(fields[2]);
    const double quality = std::stod(fields[3]);
    if (fields[0] == "average") {
      avg_curve.points.push_back({bpp, quality});
    } else {
      auto& acc = by_lambda[lambda];
      acc.first += bpp;
      acc.second.first += quality;
      acc.second.second += 1;
    }
  }
  RDCurve curve = avg_curve;
  if (curve.points.empty()) {
    for (const auto& [lambda, acc] : by_lambda)
      curve.points.push_back({acc.first / acc.second.second, acc.second.first / acc.second.second});
  }
  curve.label = path;
  curve.finalize();
  return curve;
}

int cmd_bdrate(const std::string& anchor_csv, const std::string& test_csv) {
  const RDCurve anchor = read_curve_csv(anchor_csv);
  const RDCurve test = read_curve_csv(test_csv);
  std::printf("BD-rate: %+.2f%%\n", bd_rate(anchor, test));
  return 0;
}

// Generates an untrained random encoder/decoder FMDL pair. Useful for
// exercising the full pipeline when no trained weights are at hand; the
// reconstructions are meaningless but every stage runs end to end.
int cmd_make_toy_model(int latent_channels, int hidden_channels, int n_layers, uint64_t seed,
                       const std::string& out_enc, const std::string& out_dec) {
  if (n_layers < 1 || n_layers > 4) throw Error("make-toy-model: layers must be in [1, 4]");
  SplitMix rng{seed};

  auto make_layer = [&](LayerKind kind, int in, int out, double gain) {
    FloatLayerSpec layer;
    layer.kind = kind;
    layer.in_channels = in;
    layer.out_channels = out;
    layer.kernel = 5;
    layer.stride = 2;
    const double a = gain / std::sqrt(static_cast<double>(in) * 25.0);
    layer.weights.resize(static_cast<std::size_t>(out) * in * 25);
    for (auto& w : layer.weights) w = rng.sym(a);
    layer.biases.resize(out);
    for (auto& b : layer.biases) b = rng.sym(0.05);
    return layer;
  };

  FloatModel enc;
  enc.role = ModelRole::kEncoder;
  FloatModel dec;
  dec.role = ModelRole::kDecoder;
  for (int i = 0; i < n_layers; ++i) {
    const int in = i == 0 ? 3 : hidden_channels;
    const int out = i == n_layers - 1 ? latent_channels : hidden_channels;
    enc.layers.push_back(make_layer(LayerKind::kConv, in, out, 8.0));
    if (i != n_layers - 1) enc.layers.push_back({LayerKind::kRelu});
  }
  for (int i = 0; i < n_layers; ++i) {
    const int in = i == 0 ? latent_channels : hidden_channels;
    const int out = i == n_layers - 1 ? 3 : hidden_channels;
    dec.layers.push_back(make_layer(LayerKind::kDeconv, in, out, i == n_layers - 1 ? 0.3 : 1.5));
    if (i != n_layers - 1) dec.layers.push_back({LayerKind::kRelu});
  }
  save_fmdl(enc, out_enc);
  save_fmdl(dec, out_dec);
  std::printf("wrote %s and %s (%d layers, latent %d channels)\n", out_enc.c_str(),
              out_dec.c_str(), n_layers, latent_channels);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::setlocale(LC_NUMERIC, "C");  // fixed decimal formatting everywhere

  CLI::App app{"qlic - low-complexity learned image codec"};
  app.require_subcommand(1);

  // integerize
  std::string float_model, calib_dir, out_path;
  auto* sc_int = app.add_subcommand("integerize", "Distill a float model to 16-bit integers");
  sc_int->add_option("--float-model", float_model, "FMDL input")->required();
  sc_int->add_option("--calib", calib_dir, "calibration directory (.ppm or .qtns)")->required();
  sc_int->add_option("--out", out_path, "QMDL output")->required();

  // dump-latents
  std::string dl_model, dl_images, dl_out;
  auto* sc_dump = app.add_subcommand("dump-latents", "Encoder forward + rounding to QTNS files");
  sc_dump->add_option("--model", dl_model, "encoder QMDL")->required();
  sc_dump->add_option("--images", dl_images, "directory of .ppm images")->required();
  sc_dump->add_option("--out", dl_out, "output directory")->required();

  // train-entropy
  std::string te_latents, te_out;
  bool te_skip_ordering = false;
  auto* sc_train = app.add_subcommand("train-entropy", "Thresholds, ordering, CDFs, activations");
  sc_train->add_option("--latents", te_latents, "directory of .qtns latents")->required();
  sc_train->add_option("--out", te_out, "QEMS output")->required();
  sc_train->add_flag("--skip-ordering", te_skip_ordering, "keep the identity channel order");

  // encode
  std::string en_enc, en_dec, en_qems, en_dump, en_in, en_out;
  double en_lambda = 0.02;
  bool en_rdoq = false, en_parallel = false;
  int en_passes = 3;
  auto* sc_enc = app.add_subcommand("encode", "Encode a PPM image to a QBIT bitstream");
  sc_enc->add_option("--model-enc", en_enc, "encoder QMDL")->required();
  sc_enc->add_option("--model-dec", en_dec, "decoder QMDL")->required();
  sc_enc->add_option("--entropy", en_qems, "QEMS entropy model")->required();
  sc_enc->add_option("--lambda", en_lambda, "RD trade-off for RDOQ");
  sc_enc->add_flag("--rdoq", en_rdoq, "enable rate-distortion optimized quantization");
  sc_enc->add_option("--passes", en_passes, "RDOQ passes (default 3)");
  sc_enc->add_flag("--parallel", en_parallel, "parallel RDOQ over channels");
  sc_enc->add_option("--dump-latent", en_dump, "also write the coded latent as QTNS");
  sc_enc->add_option("input", en_in, "input .ppm")->required();
  sc_enc->add_option("output", en_out, "output .qbit")->required();

  // decode
  std::string de_dec, de_qems, de_dump, de_in, de_out;
  auto* sc_dec = app.add_subcommand("decode", "Decode a QBIT bitstream to a PPM image");
  sc_dec->add_option("--model-dec", de_dec, "decoder QMDL")->required();
  sc_dec->add_option("--entropy", de_qems, "QEMS entropy model")->required();
  sc_dec->add_option("--dump-latent", de_dump, "also write the decoded latent as QTNS");
  sc_dec->add_option("input", de_in, "input .qbit")->required();
  sc_dec->add_option("output", de_out, "output .ppm")->required();

  // eval
  std::string ev_enc, ev_dec, ev_qems, ev_images, ev_out;
  std::vector<double> ev_lambdas;
  bool ev_rdoq = false, ev_parallel = false;
  int ev_passes = 3;
  auto* sc_eval = app.add_subcommand("eval", "RD curve over a directory of images");
  sc_eval->add_option("--model-enc", ev_enc, "encoder QMDL")->required();
  sc_eval->add_option("--model-dec", ev_dec, "decoder QMDL")->required();
  sc_eval->add_option("--entropy", ev_qems, "QEMS entropy model")->required();
  sc_eval->add_option("--images", ev_images, "directory of .ppm images")->required();
  sc_eval->add_option("--out", ev_out, "output CSV")->required();
  sc_eval->add_option("--lambdas", ev_lambdas, "lambda sweep (default: the 7 training values)");
  sc_eval->add_flag("--rdoq", ev_rdoq, "enable RDOQ");
  sc_eval->add_option("--passes", ev_passes, "RDOQ passes");
  sc_eval->add_flag("--parallel", ev_parallel, "parallel RDOQ");

  // bdrate
  std::string bd_anchor, bd_test;
  auto* sc_bd = app.add_subcommand("bdrate", "BD-rate percent between two eval CSVs");
  sc_bd->add_option("anchor", bd_anchor, "anchor curve CSV")->required();
  sc_bd->add_option("test", bd_test, "test curve CSV")->required();

  // make-toy-model
  int tm_latent = 8, tm_hidden = 8, tm_layers = 2;
  uint64_t tm_seed = 7;
  std::string tm_enc = "enc.fmdl", tm_dec = "dec.fmdl";
  auto* sc_toy = app.add_subcommand("make-toy-model", "Random untrained FMDL pair for demos");
  sc_toy->add_option("--channels", tm_latent, "latent channels (default 8)");
  sc_toy->add_option("--hidden", tm_hidden, "hidden channels (default 8)");
  sc_toy->add_option("--layers", tm_layers, "conv layers per side, 1-4 (default 2)");
  sc_toy->add_option("--seed", tm_seed, "random seed");
  sc_toy->add_option("--out-enc", tm_enc, "encoder FMDL output");
  sc_toy->add_option("--out-dec", tm_dec, "decoder FMDL output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sc_int->parsed()) return cmd_integerize(float_model, calib_dir, out_path);
    if (sc_dump->parsed()) return cmd_dump_latents(dl_model, dl_images, dl_out);
    if (sc_train->parsed()) return cmd_train_entropy(te_latents, te_out, te_skip_ordering);
    if (sc_enc->parsed())
      return cmd_encode(en_enc, en_dec, en_qems, en_lambda, en_rdoq, en_passes, en_parallel,
                        en_dump, en_in, en_out);
    if (sc_dec->parsed()) return cmd_decode(de_dec, de_qems, de_dump, de_in, de_out);
    if (sc_eval->parsed())
      return cmd_eval(ev_enc, ev_dec, ev_qems, ev_images, ev_out, ev_lambdas, ev_rdoq, ev_passes,
                      ev_parallel);
    if (sc_bd->parsed()) return cmd_bdrate(bd_anchor, bd_test);
    if (sc_toy->parsed())
      return cmd_make_toy_model(tm_latent, tm_hidden, tm_layers, tm_seed, tm_enc, tm_dec);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
