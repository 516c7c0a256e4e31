/*
 * Copyright 2026 The cdstl authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cdstl/latent.hpp"

#include <cmath>
#include <sstream>

#include "cdstl/errors.hpp"
#include "cdstl/hash.hpp"
#include "cdstl/log.hpp"
#include "cdstl/model.hpp"

namespace cdstl {

namespace {

constexpr uint8_t kDecoderArchId = 4;
constexpr int kUpKernel = 4, kUpStride = 2, kUpPad = 1;

Tensor kaiming(Shape shape, int64_t fan_in, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  int64_t n = numel_of(shape);
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = (rng.next_double() * 2.0 - 1.0) * limit;
  return Tensor::leaf(std::move(shape), std::move(v), true);
}

Tensor zeros_param(Shape shape) {
  return Tensor::leaf(std::move(shape),
                      std::vector<double>(static_cast<size_t>(numel_of(shape)), 0.0), true);
}

void check_compression(const Decoder& dec, double min_compression) {
  if (static_cast<double>(dec.latent_elems()) * min_compression >
      static_cast<double>(dec.pixel_elems()))
    throw config_error("decoder: latent space too large (" + std::to_string(dec.latent_elems()) +
                       " elements vs " + std::to_string(dec.pixel_elems()) + " pixels, need " +
                       std::to_string(min_compression) + "x compression)");
}

void freeze(Decoder& dec) {
  for (auto& [name, t] : dec.params) t.set_requires_grad(false);
}

// Forward through explicit tensors so pretraining can pass trainable params.
Tensor decode_with(const Decoder& geom, const std::vector<Tensor>& p, const Tensor& codes) {
  if (codes.rank() != 4 || codes.dim(1) != geom.latent_d || codes.dim(2) != geom.latent_h ||
      codes.dim(3) != geom.latent_w)
    throw dimension_error("decode: codes " + shape_str(codes.shape()) + " do not match latent [" +
                          std::to_string(geom.latent_d) + "," + std::to_string(geom.latent_h) +
                          "," + std::to_string(geom.latent_w) + "]");
  int64_t m = codes.dim(0);
  Tensor x = reshape(codes, {m, geom.latent_elems()});
  x = dense(x, p[0], p[1]);  // -> [M, hidden1*h*w]
  x = relu(x);
  x = reshape(x, {m, geom.hidden1, geom.latent_h, geom.latent_w});
  x = conv_transpose2(x, p[2], p[3], kUpKernel, kUpStride, kUpPad);  // -> [M,h2,2h,2w]
  x = relu(x);
  x = conv_transpose2(x, p[4], p[5], kUpKernel, kUpStride, kUpPad);  // -> [M,C,4h,4w]
  return sigmoid(x);
}

std::vector<Tensor> decoder_tensors(const Decoder& dec) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : dec.params) out.push_back(t);
  return out;
}

}  // namespace

Decoder make_decoder(int64_t latent_d, int64_t latent_h, int64_t latent_w, int64_t out_c,
                     uint64_t seed, double min_compression) {
  if (latent_d < 1 || latent_h < 1 || latent_w < 1)
    throw config_error("decoder: latent dims must be positive");
  Decoder dec;
  dec.latent_d = latent_d;
  dec.latent_h = latent_h;
  dec.latent_w = latent_w;
  dec.out_c = out_c;
  check_compression(dec, min_compression);

  Rng rng(seed);
  int64_t z = dec.latent_elems();
  int64_t h1map = dec.hidden1 * latent_h * latent_w;
  dec.params.emplace_back("fc.weight", kaiming({z, h1map}, z, rng));
  dec.params.emplace_back("fc.bias", zeros_param({h1map}));
  dec.params.emplace_back(
      "tconv1.weight",
      kaiming({dec.hidden1, dec.hidden2 * kUpKernel * kUpKernel}, dec.hidden1 * 4, rng));
  dec.params.emplace_back("tconv1.bias", zeros_param({dec.hidden2}));
  dec.params.emplace_back(
      "tconv2.weight",
      kaiming({dec.hidden2, out_c * kUpKernel * kUpKernel}, dec.hidden2 * 4, rng));
  dec.params.emplace_back("tconv2.bias", zeros_param({out_c}));
  freeze(dec);
  return dec;
}

Tensor decode(const Decoder& dec, const Tensor& codes) {
  return decode_with(dec, decoder_tensors(dec), codes);
}

double reconstruction_mse(const Decoder& dec, const Tensor& codes, const Tensor& images) {
  NoGradGuard ng;
  Tensor diff = sub(decode(dec, codes), images);
  return mean(mul(diff, diff)).item();
}

uint64_t decoder_param_hash(const Decoder& dec) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : dec.params) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(t.raw().data(), t.raw().size() * sizeof(double), h);
  }
  return h;
}

Decoder pretrain_decoder(const LabeledDataset& ds, int epochs, double lr, int64_t batch,
                         uint64_t seed, int64_t latent_d, double min_compression,
                         double* final_mse) {
  if (ds.size() == 0) throw data_error("pretrain_decoder: empty dataset");
  if (ds.height() % 4 != 0 || ds.width() % 4 != 0)
    throw config_error("pretrain_decoder: image sides must be divisible by 4");

  int64_t lat_h = ds.height() / 4, lat_w = ds.width() / 4;
  Decoder dec = make_decoder(latent_d, lat_h, lat_w, ds.channels(), derive_seed(seed, "decoder"),
                             min_compression);
  // unfreeze for training; frozen again before returning
  for (auto& [name, t] : dec.params) t.set_requires_grad(true);

  // paired encoder (discarded afterwards): conv16-pool, conv32-pool, dense
  Rng erng(derive_seed(seed, "encoder"));
  int64_t ech1 = 16, ech2 = 32;
  std::vector<std::pair<std::string, Tensor>> enc;
  enc.emplace_back("e1.weight", kaiming({ech1, ds.channels(), 3, 3}, ds.channels() * 9, erng));
  enc.emplace_back("e1.bias", zeros_param({ech1}));
  enc.emplace_back("e2.weight", kaiming({ech2, ech1, 3, 3}, ech1 * 9, erng));
  enc.emplace_back("e2.bias", zeros_param({ech2}));
  int64_t efeat = ech2 * lat_h * lat_w;
  enc.emplace_back("efc.weight", kaiming({efeat, dec.latent_elems()}, efeat, erng));
  enc.emplace_back("efc.bias", zeros_param({dec.latent_elems()}));

  auto encode = [&](const Tensor& x) {
    int64_t b = x.dim(0);
    Tensor h = relu(conv2d(x, enc[0].second, enc[1].second, 1, 1));
    h = avg_pool2(h);
    h = relu(conv2d(h, enc[2].second, enc[3].second, 1, 1));
    h = avg_pool2(h);
    h = dense(reshape(h, {b, efeat}), enc[4].second, enc[5].second);
    return reshape(h, {b, dec.latent_d, lat_h, lat_w});
  };

  auto all_params = [&]() {
    std::vector<Tensor> p;
    for (auto& [n, t] : enc) p.push_back(t);
    for (auto& [n, t] : dec.params) p.push_back(t);
    return p;
  };

  Rng rng(derive_seed(seed, "pretrain-loop"));
  auto dec_tensors = decoder_tensors(dec);
  double last_epoch = 0.0;
  int64_t n = ds.size();
  for (int e = 0; e < epochs; ++e) {
    auto order = rng.permutation(n);
    double loss_sum = 0.0;
    int64_t batches = 0;
    for (int64_t start = 0; start < n; start += batch) {
      int64_t len = std::min(batch, n - start);
      std::vector<int64_t> idx(order.begin() + start, order.begin() + start + len);
      Tensor x;
      {
        NoGradGuard ng;
        x = gather_rows(ds.images, idx);
      }
      Tensor recon = decode_with(dec, dec_tensors, encode(x));
      Tensor diff = sub(recon, x);
      Tensor loss = mean(mul(diff, diff));
      double lv = loss.item();
      if (!std::isfinite(lv))
        throw numeric_error("pretrain_decoder: diverged (non-finite loss) at epoch " +
                            std::to_string(e));
      for (auto& p : all_params()) p.zero_grad();
      loss.backward();
      for (auto& p : all_params()) {
        Tensor g = p.grad();
        if (!g.defined()) continue;
        auto& data = p.raw();
        const auto& gd = g.raw();
        for (size_t i = 0; i < data.size(); ++i) data[i] -= lr * gd[i];
      }
      loss_sum += lv;
      ++batches;
    }
    last_epoch = loss_sum / static_cast<double>(batches);
    log_debug("pretrain_decoder epoch " + std::to_string(e + 1) + "/" + std::to_string(epochs) +
              " mse " + std::to_string(last_epoch));
  }
  log_info("pretrain_decoder: final reconstruction mse " + std::to_string(last_epoch));
  if (final_mse != nullptr) *final_mse = last_epoch;
  freeze(dec);
  return dec;
}

void save_decoder(const Decoder& dec, const std::string& path) {
  // A decoder checkpoint is an NNC1 file with the extended arch id 4 and a
  // trailing latent.meta tensor.
  Model shim;
  shim.arch = static_cast<Arch>(kDecoderArchId);
  for (const auto& [name, t] : dec.params) shim.params.emplace_back(name, t);
  shim.params.emplace_back(
      "latent.meta",
      Tensor::from({6}, {static_cast<double>(dec.latent_d), static_cast<double>(dec.latent_h),
                         static_cast<double>(dec.latent_w), static_cast<double>(dec.hidden1),
                         static_cast<double>(dec.hidden2), static_cast<double>(dec.out_c)}));
  save_model(shim, path);
}

Decoder load_decoder(const std::string& path) {
  Model shim = load_model_any(path);
  if (static_cast<uint8_t>(shim.arch) != kDecoderArchId)
    throw format_error("decoder checkpoint " + path + ": wrong architecture id");
  Decoder dec;
  const auto& meta_pair = shim.params.back();
  if (meta_pair.first != "latent.meta" || meta_pair.second.numel() != 6)
    throw format_error("decoder checkpoint " + path + ": missing latent.meta");
  const auto& meta = meta_pair.second.raw();
  dec.latent_d = static_cast<int64_t>(meta[0]);
  dec.latent_h = static_cast<int64_t>(meta[1]);
  dec.latent_w = static_cast<int64_t>(meta[2]);
  dec.hidden1 = static_cast<int64_t>(meta[3]);
  dec.hidden2 = static_cast<int64_t>(meta[4]);
  dec.out_c = static_cast<int64_t>(meta[5]);
  for (size_t i = 0; i + 1 < shim.params.size(); ++i)
    dec.params.push_back(shim.params[i]);
  freeze(dec);
  return dec;
}

LatentSet init_latent(int64_t class_count, int64_t ipc, const Decoder& dec, uint64_t seed) {
  LatentSet ls;
  ls.class_count = class_count;
  ls.ipc = ipc;
  for (int64_t c = 0; c < class_count; ++c)
    for (int64_t i = 0; i < ipc; ++i) ls.labels.push_back(static_cast<int>(c));
  int64_t m = class_count * ipc;
  Rng rng(seed);
  std::vector<double> codes(static_cast<size_t>(m * dec.latent_elems()));
  for (auto& v : codes) v = rng.next_gaussian();
  ls.codes = Tensor::leaf({m, dec.latent_d, dec.latent_h, dec.latent_w}, std::move(codes), true);
  ls.decoder_hash = hex64(decoder_param_hash(dec));
  return ls;
}

LatentDistillResult distill_latent_run(const CoreSet& core, const LabeledDataset& ds,
                                       const DistillConfig& cfg, int64_t ipc,
                                       const Decoder& dec, Provenance provenance) {
  if (dec.out_c != ds.channels() || dec.out_h() != ds.height() || dec.out_w() != ds.width())
    throw config_error("distill_latent_run: decoder output " + std::to_string(dec.out_h()) + "x" +
                       std::to_string(dec.out_w()) + " does not match dataset " +
                       std::to_string(ds.height()) + "x" + std::to_string(ds.width()));

  uint64_t hash_before = decoder_param_hash(dec);
  LatentSet ls = init_latent(ds.class_count, ipc, dec, derive_seed(cfg.seed, "latent-init"));

  SynTarget target;
  target.payload = ls.codes;
  target.clamp01 = false;  // codes are unbounded; the sigmoid bounds pixels
  Tensor codes_handle = target.payload;
  const Decoder* dec_ptr = &dec;
  target.render = [codes_handle, dec_ptr](const std::vector<int64_t>& rows) {
    return decode(*dec_ptr, gather_rows(codes_handle, rows));
  };

  EngineResult engine = run_distill_engine(core, ds, cfg, ipc, target, ls.labels);

  if (decoder_param_hash(dec) != hash_before)
    throw numeric_error("distill_latent_run: frozen decoder parameters changed");

  char rbuf[32];
  std::snprintf(rbuf, sizeof(rbuf), "%.17g", core.r);
  Provenance prov = std::move(provenance);
  prov["method"] = method_name(cfg.method);
  prov["r"] = rbuf;
  prov["mode"] = prune_mode_name(core.mode);
  prov["seed"] = std::to_string(cfg.seed);
  prov["ipc"] = std::to_string(ipc);
  prov["iterations"] = std::to_string(cfg.iterations);
  prov["dataset_hash"] = hex64(dataset_hash(ds));
  prov["decoder_hash"] = ls.decoder_hash;
  if (!core.scorer_hash.empty()) prov["scorer_hash"] = core.scorer_hash;
  if (cfg.method == DistillMethod::mtt) prov["experts_on"] = "coreset";

  LatentDistillResult out;
  out.history = std::move(engine.history);
  out.experts = std::move(engine.experts);

  out.codes.space = SynSpace::latent;
  out.codes.class_count = ds.class_count;
  out.codes.ipc = ipc;
  out.codes.payload = target.payload.detach();
  out.codes.labels = ls.labels;
  out.codes.provenance = prov;
  out.codes.validate();

  Tensor rendered;
  {
    NoGradGuard ng;
    rendered = decode(dec, target.payload);
  }
  out.rendered.space = SynSpace::pixel;
  out.rendered.class_count = ds.class_count;
  out.rendered.ipc = ipc;
  out.rendered.payload = rendered;
  out.rendered.labels = ls.labels;
  Provenance rprov = prov;
  rprov["rendered_from"] = "latent";
  out.rendered.provenance = std::move(rprov);
  out.rendered.validate();
  return out;
}

}  // namespace cdstl
