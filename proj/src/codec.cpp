// Copyright (c) the DKIC Project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dkic/codec.hpp"

#include <cmath>

#include "json.hpp"

#include "dkic/error.hpp"
#include "dkic/quantizer.hpp"

namespace dkic {

using nlohmann::json;

int lambda_index_of(double lambda) {
  for (int i = 0; i < kLambdaGridSize; ++i)
    if (std::fabs(kLambdaGrid[i] - lambda) < 1e-12) return i;
  return 255;
}

ModelConfig ModelConfig::full_preset() { return ModelConfig(); }

ModelConfig ModelConfig::toy_preset() {
  ModelConfig cfg;
  cfg.transform = TransformConfig::toy_preset();
  cfg.hyper_channels = 24;
  cfg.group_sizes = {2, 2, 4, 8, 24};
  cfg.stage_counts = {4, 4, 2, 2, 2};
  return cfg;
}

EntropyModelConfig ModelConfig::entropy_config() const {
  EntropyModelConfig e;
  e.latent_channels = transform.latent_channels;
  e.hyper_channels = hyper_channels;
  e.group_sizes = group_sizes;
  e.stage_counts = stage_counts;
  e.kernel_side = transform.kernel_side;
  e.offset_clamp = transform.offset_clamp;
  e.mlp_ratio = transform.mlp_ratio;
  e.ablate_contexts = ablate_contexts;
  return e;
}

void ModelConfig::validate() const {
  transform.validate();
  entropy_config().validate();
  if (!(lambda > 0)) throw data_error("lambda must be positive");
}

std::string ModelConfig::to_json() const {
  json j;
  j["preset"] = transform.scale_preset;
  j["base_width"] = transform.base_width;
  j["latent_channels"] = transform.latent_channels;
  j["drbg_per_stage"] = transform.drbg_per_stage;
  j["rbb_bottleneck_ratio"] = transform.rbb_bottleneck_ratio;
  j["mlp_ratio"] = transform.mlp_ratio;
  j["kernel_side"] = transform.kernel_side;
  j["offset_clamp"] = transform.offset_clamp;
  j["hyper_channels"] = hyper_channels;
  j["group_sizes"] = group_sizes;
  j["stage_counts"] = stage_counts;
  j["lambda"] = lambda;
  j["seed"] = seed;
  j["ablate_contexts"] = ablate_contexts;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw data_error(std::string("config parse error: ") + e.what());
  }
  static const std::vector<std::string> kKnown = {
      "preset",          "base_width",     "latent_channels",
      "drbg_per_stage",  "rbb_bottleneck_ratio", "mlp_ratio",
      "kernel_side",     "offset_clamp",   "hyper_channels",
      "group_sizes",     "stage_counts",   "lambda",
      "seed",            "ablate_contexts"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool known = false;
    for (const auto& k : kKnown) known = known || k == key;
    if (!known) throw usage_error("unknown config key: " + key);
  }
  ModelConfig cfg;
  const std::string preset = j.value("preset", std::string("full"));
  if (preset == "toy")
    cfg = ModelConfig::toy_preset();
  else if (preset == "full")
    cfg = ModelConfig::full_preset();
  else
    throw usage_error("unknown preset: " + preset);
  try {
    if (j.contains("base_width")) {
      auto v = j["base_width"].get<std::vector<int>>();
      if (v.size() != 4) throw usage_error("base_width must have 4 entries");
      for (size_t i = 0; i < 4; ++i) cfg.transform.base_width[i] = v[i];
    }
    if (j.contains("latent_channels"))
      cfg.transform.latent_channels = j["latent_channels"].get<int>();
    if (j.contains("drbg_per_stage"))
      cfg.transform.drbg_per_stage = j["drbg_per_stage"].get<int>();
    if (j.contains("rbb_bottleneck_ratio"))
      cfg.transform.rbb_bottleneck_ratio =
          j["rbb_bottleneck_ratio"].get<double>();
    if (j.contains("mlp_ratio"))
      cfg.transform.mlp_ratio = j["mlp_ratio"].get<int>();
    if (j.contains("kernel_side"))
      cfg.transform.kernel_side = j["kernel_side"].get<int>();
    if (j.contains("offset_clamp"))
      cfg.transform.offset_clamp = j["offset_clamp"].get<double>();
    if (j.contains("hyper_channels"))
      cfg.hyper_channels = j["hyper_channels"].get<int>();
    if (j.contains("group_sizes"))
      cfg.group_sizes = j["group_sizes"].get<std::vector<int>>();
    if (j.contains("stage_counts"))
      cfg.stage_counts = j["stage_counts"].get<std::vector<int>>();
    if (j.contains("lambda")) cfg.lambda = j["lambda"].get<double>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
    if (j.contains("ablate_contexts"))
      cfg.ablate_contexts = j["ablate_contexts"].get<bool>();
  } catch (const json::exception& e) {
    throw usage_error(std::string("config value error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

CodecModel::CodecModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Initializer init(cfg.seed);
  ga_ = AnalysisTransform(init, cfg.transform);
  gs_ = SynthesisTransform(init, cfg.transform);
  em_ = EntropyModel(init, cfg.entropy_config());
  ga_.register_params(params_, "ga");
  gs_.register_params(params_, "gs");
  em_.register_params(params_, "em");
}

void CodecModel::save(const std::string& path) const {
  json meta;
  meta["format"] = "dkic-checkpoint";
  meta["config"] = json::parse(cfg_.to_json());
  meta["lambda"] = cfg_.lambda;
  meta["train_step"] = train_step_;
  save_checkpoint(path, params_, meta.dump(2));
}

CodecModel CodecModel::load(const std::string& path) {
  LoadedCheckpoint ck = load_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ck.metadata_json);
  } catch (const json::exception&) {
    throw data_error("checkpoint metadata is not valid JSON");
  }
  if (meta.value("format", std::string()) != "dkic-checkpoint")
    throw data_error("not a DKIC checkpoint");
  CodecModel model(ModelConfig::from_json(meta["config"].dump()));
  assign_params(model.params_, ck);
  model.train_step_ = meta.value("train_step", int64_t{0});
  return model;
}

std::pair<Tensor, std::pair<int, int>> pad_image(const Tensor& x) {
  if (x.ndim() != 4 || x.dim(0) != 1 || x.dim(1) != 3)
    throw data_error("pad_image: expected 1x3xHxW");
  const int H = x.dim(2), W = x.dim(3);
  if (H <= 0 || W <= 0) throw data_error("pad_image: zero-sized image");
  const int Hp = (H + 63) / 64 * 64;
  const int Wp = (W + 63) / 64 * 64;
  if (Hp == H && Wp == W) return {x, {H, W}};
  Tensor out({1, 3, Hp, Wp});
  for (int c = 0; c < 3; ++c)
    for (int h = 0; h < Hp; ++h)
      for (int w = 0; w < Wp; ++w)
        out.at4(0, c, h, w) =
            x.at4(0, c, std::min(h, H - 1), std::min(w, W - 1));
  return {out, {H, W}};
}

Tensor unpad_image(const Tensor& x, int height, int width) {
  if (x.ndim() != 4 || x.dim(2) < height || x.dim(3) < width)
    throw data_error("unpad: target larger than input");
  if (x.dim(2) == height && x.dim(3) == width) return x;
  Tensor out({x.dim(0), x.dim(1), height, width});
  for (int n = 0; n < x.dim(0); ++n)
    for (int c = 0; c < x.dim(1); ++c)
      for (int h = 0; h < height; ++h)
        for (int w = 0; w < width; ++w)
          out.at4(n, c, h, w) = x.at4(n, c, h, w);
  return out;
}

size_t CompressResult::payload_bytes() const {
  size_t n = stream.z_stream.size();
  for (const auto& s : stream.y_substreams) n += s.size();
  return n;
}

double CompressResult::bpp() const {
  return 8.0 * static_cast<double>(pack_bitstream(stream).size()) /
         (static_cast<double>(stream.header.width) * stream.header.height);
}

namespace {

void check_finite(const Tensor& t, const char* where) {
  if (!t.all_finite())
    throw numeric_error(std::string("numeric failure in ") + where);
}

// Clamps a residual symbol into its table support; the clamped value is
// what both sides keep, so encoder and decoder state stay identical.
int32_t clamp_symbol(int32_t s, const CdfTable& t) {
  if (s < t.min_symbol()) return t.min_symbol();
  if (s > t.max_symbol()) return t.max_symbol();
  return s;
}

}  // namespace

CompressResult compress(const Tensor& x, const CodecModel& model) {
  NoGradGuard ng;
  const auto& em = model.entropy();
  const auto& schedule = model.schedule();
  const auto [xp, dims] = pad_image(x);
  const auto [H, W] = dims;
  if (H > 0xFFFF || W > 0xFFFF) throw data_error("image too large for header");

  Var y = model.analysis().forward(constant(xp));
  check_finite(y->value, "analysis transform");
  const int h = y->value.dim(2), w = y->value.dim(3);

  // Side information: plain rounding, factorized coding.
  Var z = em.hyper_analysis(y);
  check_finite(z->value, "hyper analysis");
  const int zc = z->value.dim(1), zh = z->value.dim(2), zw = z->value.dim(3);
  Tensor z_hat({1, zc, zh, zw});
  CompressResult res;
  {
    std::vector<CdfTable> ch_tables;
    ch_tables.reserve(static_cast<size_t>(zc));
    for (int c = 0; c < zc; ++c) ch_tables.push_back(em.prior().cdf_table(c));
    RangeEncoder zenc;
    for (int c = 0; c < zc; ++c)
      for (int hh = 0; hh < zh; ++hh)
        for (int ww = 0; ww < zw; ++ww) {
          int32_t s = static_cast<int32_t>(std::round(z->value.at4(0, c, hh, ww)));
          s = clamp_symbol(s, ch_tables[static_cast<size_t>(c)]);
          zenc.encode_symbol(ch_tables[static_cast<size_t>(c)], s);
          z_hat.at4(0, c, hh, ww) = static_cast<double>(s);
          res.ideal_bits_z += -std::log2(std::max(
              em.prior().bin_prob(c, s), kLikelihoodFloor));
        }
    res.stream.z_stream = zenc.finish();
  }

  Var gc = em.hyper_synthesis(constant(z_hat));
  check_finite(gc->value, "hyper synthesis");

  // Coding loop: the encoder mirrors the decoder's buffer state so the
  // contexts (and hence mu/sigma) match bit for bit.
  const auto offsets = schedule.group_offsets();
  std::vector<Var> buffers;
  for (int g = 0; g < schedule.num_groups(); ++g)
    buffers.push_back(constant(
        Tensor::zeros({1, schedule.group_sizes[static_cast<size_t>(g)], h, w})));

  RangeEncoder yenc;
  std::vector<size_t> segment_ends;
  for (int step = 0; step < schedule.num_steps(); ++step) {
    const auto& st = schedule.steps[static_cast<size_t>(step)];
    auto [mu, sigma] = em.params_for_step(gc, buffers, step);
    check_finite(mu->value, "entropy parameters");
    check_finite(sigma->value, "entropy parameters");
    res.step_params.push_back({mu->value, sigma->value});
    const Tensor mask = stage_mask(
        st.stage + 1, schedule.stage_counts[static_cast<size_t>(st.group)], h,
        w);
    Tensor& buf = buffers[static_cast<size_t>(st.group)]->value;
    const int gs = schedule.group_sizes[static_cast<size_t>(st.group)];
    for (int c = 0; c < gs; ++c)
      for (int hh = 0; hh < h; ++hh)
        for (int ww = 0; ww < w; ++ww) {
          if (mask.data[static_cast<size_t>(hh) * w + ww] == 0.0) continue;
          const double yv =
              y->value.at4(0, offsets[static_cast<size_t>(st.group)] + c, hh, ww);
          const double m = mu->value.at4(0, c, hh, ww);
          const double sd = sigma->value.at4(0, c, hh, ww);
          const CdfTable table = gaussian_cdf_table(0.0, sd);
          int32_t s = static_cast<int32_t>(std::round(yv - m));
          s = clamp_symbol(s, table);
          yenc.encode_symbol(table, s);
          buf.at4(0, c, hh, ww) = static_cast<double>(s) + m;
        }
    segment_ends.push_back(yenc.bytes_emitted());
  }
  std::vector<uint8_t> ybytes = yenc.finish();
  segment_ends.back() = ybytes.size();
  size_t start = 0;
  for (size_t end : segment_ends) {
    res.stream.y_substreams.emplace_back(ybytes.begin() + static_cast<ptrdiff_t>(start),
                                         ybytes.begin() + static_cast<ptrdiff_t>(end));
    start = end;
  }

  // Assemble the reconstructed latent and account its ideal rate.
  Tensor y_hat({1, schedule.total_channels(), h, w});
  for (int g = 0; g < schedule.num_groups(); ++g) {
    const Tensor& buf = buffers[static_cast<size_t>(g)]->value;
    for (int c = 0; c < schedule.group_sizes[static_cast<size_t>(g)]; ++c)
      for (int hh = 0; hh < h; ++hh)
        for (int ww = 0; ww < w; ++ww)
          y_hat.at4(0, offsets[static_cast<size_t>(g)] + c, hh, ww) =
              buf.at4(0, c, hh, ww);
  }
  for (int step = 0; step < schedule.num_steps(); ++step) {
    const auto& st = schedule.steps[static_cast<size_t>(step)];
    const auto& gp = res.step_params[static_cast<size_t>(step)];
    const Tensor mask = stage_mask(
        st.stage + 1, schedule.stage_counts[static_cast<size_t>(st.group)], h,
        w);
    const Tensor& buf = buffers[static_cast<size_t>(st.group)]->value;
    for (int c = 0; c < schedule.group_sizes[static_cast<size_t>(st.group)]; ++c)
      for (int hh = 0; hh < h; ++hh)
        for (int ww = 0; ww < w; ++ww)
          if (mask.data[static_cast<size_t>(hh) * w + ww] != 0.0)
            res.ideal_bits_y += -std::log2(std::max(
                gaussian_bin_prob(buf.at4(0, c, hh, ww),
                                  gp.mu.at4(0, c, hh, ww),
                                  gp.sigma.at4(0, c, hh, ww)),
                kLikelihoodFloor));
  }
  res.y_hat = std::move(y_hat);

  auto& hd = res.stream.header;
  hd.width = static_cast<uint16_t>(W);
  hd.height = static_cast<uint16_t>(H);
  hd.lambda_index = static_cast<uint8_t>(lambda_index_of(model.config().lambda));
  for (int g : schedule.group_sizes)
    hd.group_sizes.push_back(static_cast<uint16_t>(g));
  for (int s : schedule.stage_counts)
    hd.stage_counts.push_back(static_cast<uint8_t>(s));
  return res;
}

DecompressResult decompress(const Bitstream& stream, const CodecModel& model) {
  NoGradGuard ng;
  const auto& em = model.entropy();
  const auto& schedule = model.schedule();
  const auto& hd = stream.header;

  // The stream's schedule must reconstruct the model's step list exactly.
  if (static_cast<int>(hd.group_sizes.size()) != schedule.num_groups())
    throw data_error("schedule/header mismatch");
  for (int g = 0; g < schedule.num_groups(); ++g)
    if (hd.group_sizes[static_cast<size_t>(g)] !=
            schedule.group_sizes[static_cast<size_t>(g)] ||
        hd.stage_counts[static_cast<size_t>(g)] !=
            schedule.stage_counts[static_cast<size_t>(g)])
      throw data_error("schedule/header mismatch");

  const int H = hd.height, W = hd.width;
  const int Hp = (H + 63) / 64 * 64, Wp = (W + 63) / 64 * 64;
  const int h = Hp / 16, w = Wp / 16;
  const int zh = h / 4, zw = w / 4;
  const int zc = model.config().hyper_channels;

  Tensor z_hat({1, zc, zh, zw});
  {
    std::vector<CdfTable> ch_tables;
    ch_tables.reserve(static_cast<size_t>(zc));
    for (int c = 0; c < zc; ++c) ch_tables.push_back(em.prior().cdf_table(c));
    RangeDecoder zdec(stream.z_stream);
    for (int c = 0; c < zc; ++c)
      for (int hh = 0; hh < zh; ++hh)
        for (int ww = 0; ww < zw; ++ww)
          z_hat.at4(0, c, hh, ww) = static_cast<double>(
              zdec.decode_symbol(ch_tables[static_cast<size_t>(c)]));
  }

  Var gc = em.hyper_synthesis(constant(z_hat));
  check_finite(gc->value, "hyper synthesis");

  std::vector<uint8_t> ybytes;
  for (const auto& s : stream.y_substreams)
    ybytes.insert(ybytes.end(), s.begin(), s.end());
  RangeDecoder ydec(ybytes);

  DecompressResult res;
  std::vector<Var> buffers;
  for (int g = 0; g < schedule.num_groups(); ++g)
    buffers.push_back(constant(
        Tensor::zeros({1, schedule.group_sizes[static_cast<size_t>(g)], h, w})));
  const auto offsets = schedule.group_offsets();
  for (int step = 0; step < schedule.num_steps(); ++step) {
    const auto& st = schedule.steps[static_cast<size_t>(step)];
    auto [mu, sigma] = em.params_for_step(gc, buffers, step);
    check_finite(mu->value, "entropy parameters");
    check_finite(sigma->value, "entropy parameters");
    res.step_params.push_back({mu->value, sigma->value});
    const Tensor mask = stage_mask(
        st.stage + 1, schedule.stage_counts[static_cast<size_t>(st.group)], h,
        w);
    Tensor& buf = buffers[static_cast<size_t>(st.group)]->value;
    for (int c = 0; c < schedule.group_sizes[static_cast<size_t>(st.group)]; ++c)
      for (int hh = 0; hh < h; ++hh)
        for (int ww = 0; ww < w; ++ww) {
          if (mask.data[static_cast<size_t>(hh) * w + ww] == 0.0) continue;
          const double m = mu->value.at4(0, c, hh, ww);
          const double sd = sigma->value.at4(0, c, hh, ww);
          const CdfTable table = gaussian_cdf_table(0.0, sd);
          const int32_t s = ydec.decode_symbol(table);
          buf.at4(0, c, hh, ww) = static_cast<double>(s) + m;
        }
  }

  Tensor y_hat({1, schedule.total_channels(), h, w});
  for (int g = 0; g < schedule.num_groups(); ++g) {
    const Tensor& buf = buffers[static_cast<size_t>(g)]->value;
    for (int c = 0; c < schedule.group_sizes[static_cast<size_t>(g)]; ++c)
      for (int hh = 0; hh < h; ++hh)
        for (int ww = 0; ww < w; ++ww)
          y_hat.at4(0, offsets[static_cast<size_t>(g)] + c, hh, ww) =
              buf.at4(0, c, hh, ww);
  }
  Var xhat = model.synthesis().forward(constant(y_hat));
  check_finite(xhat->value, "synthesis transform");
  res.image = clamp01(unpad_image(xhat->value, H, W));
  res.y_hat = std::move(y_hat);
  return res;
}

}  // namespace dkic
