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

#include "dkic/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "json.hpp"

#include "dkic/image_io.hpp"
#include "dkic/quantizer.hpp"

namespace dkic {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lambda > 0)) throw usage_error("lambda must be positive");
  if (batch_size <= 0) throw usage_error("batch_size must be positive");
  if (crop <= 0 || crop % 64 != 0)
    throw usage_error("crop must be a positive multiple of 64");
  if (lr_initial <= 0 || lr_final <= 0)
    throw usage_error("learning rates must be positive");
  if (epochs <= 0 || lr_drop_epoch <= 0 || lr_drop_epoch > epochs)
    throw usage_error("bad epoch schedule");
  if (grad_clip < 0) throw usage_error("grad_clip must be nonnegative");
}

std::string TrainConfig::to_json() const {
  json j;
  j["lambda"] = lambda;
  j["batch_size"] = batch_size;
  j["crop"] = crop;
  j["lr_initial"] = lr_initial;
  j["lr_final"] = lr_final;
  j["epochs"] = epochs;
  j["lr_drop_epoch"] = lr_drop_epoch;
  j["steps"] = steps;
  j["seed"] = seed;
  j["dataset_path"] = dataset_path;
  j["weight_decay"] = weight_decay;
  j["grad_clip"] = grad_clip;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw data_error(std::string("train config parse error: ") + e.what());
  }
  static const std::vector<std::string> kKnown = {
      "lambda", "batch_size", "crop",         "lr_initial",
      "lr_final", "epochs",   "lr_drop_epoch", "steps",
      "seed",    "dataset_path", "weight_decay", "grad_clip"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool known = false;
    for (const auto& k : kKnown) known = known || k == key;
    if (!known) throw usage_error("unknown train config key: " + key);
  }
  TrainConfig cfg;
  try {
    if (j.contains("lambda")) cfg.lambda = j["lambda"].get<double>();
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
    if (j.contains("crop")) cfg.crop = j["crop"].get<int>();
    if (j.contains("lr_initial")) cfg.lr_initial = j["lr_initial"].get<double>();
    if (j.contains("lr_final")) cfg.lr_final = j["lr_final"].get<double>();
    if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
    if (j.contains("lr_drop_epoch"))
      cfg.lr_drop_epoch = j["lr_drop_epoch"].get<int>();
    if (j.contains("steps")) cfg.steps = j["steps"].get<int64_t>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
    if (j.contains("dataset_path"))
      cfg.dataset_path = j["dataset_path"].get<std::string>();
    if (j.contains("weight_decay"))
      cfg.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("grad_clip")) cfg.grad_clip = j["grad_clip"].get<double>();
  } catch (const json::exception& e) {
    throw usage_error(std::string("train config value error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RdStats rd_loss(const Tensor& x, const Tensor& xhat, const Tensor& lik_y,
                const Tensor& lik_z, double lambda) {
  if (!x.same_shape(xhat)) throw data_error("rd_loss: image shape mismatch");
  if (!(lambda > 0)) throw usage_error("lambda must be positive");
  const double pixels =
      static_cast<double>(x.dim(0)) * x.dim(2) * x.dim(3);
  double mse = 0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double d = x[i] - xhat[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.numel());
  RdStats s;
  s.distortion = 255.0 * 255.0 * mse;
  for (int64_t i = 0; i < lik_y.numel(); ++i) {
    if (!(lik_y[i] >= kLikelihoodFloor))
      throw data_error("rd_loss: likelihood below floor");
    s.rate_y += -std::log2(lik_y[i]);
  }
  for (int64_t i = 0; i < lik_z.numel(); ++i) {
    if (!(lik_z[i] >= kLikelihoodFloor))
      throw data_error("rd_loss: likelihood below floor");
    s.rate_z += -std::log2(lik_z[i]);
  }
  s.rate_y /= pixels;
  s.rate_z /= pixels;
  s.loss = lambda * s.distortion + s.rate_y + s.rate_z;
  if (!std::isfinite(s.loss)) throw numeric_error("rd_loss: non-finite loss");
  return s;
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

AdamW::AdamW(const NamedParams& params, double weight_decay)
    : weight_decay_(weight_decay) {
  for (const auto& [name, var] : params) {
    (void)name;
    m_.push_back(Tensor::zeros(var->value.shape));
    v_.push_back(Tensor::zeros(var->value.shape));
  }
}

double AdamW::clip_gradients(const NamedParams& params, double max_norm) {
  double sq = 0;
  for (const auto& [name, var] : params) {
    (void)name;
    if (var->grad.shape != var->value.shape) continue;
    for (double g : var->grad.data) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& [name, var] : params) {
      (void)name;
      if (var->grad.shape != var->value.shape) continue;
      for (auto& g : var->grad.data) g *= scale;
    }
  }
  return norm;
}

void AdamW::apply(const NamedParams& params, double lr) {
  if (params.size() != m_.size())
    throw data_error("optimizer/parameter count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Node* p = params[i].second.get();
    if (p->grad.shape != p->value.shape) continue;  // no gradient this step
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t k = 0; k < p->value.numel(); ++k) {
      const double g = p->grad[k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p->value[k] -= lr * (mhat / (std::sqrt(vhat) + eps_) +
                           weight_decay_ * p->value[k]);
    }
  }
}

void AdamW::zero_grads(const NamedParams& params) {
  for (const auto& [name, var] : params) {
    (void)name;
    var->grad = Tensor();
  }
}

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

CropDataset::CropDataset(const std::string& dir, int crop, uint64_t seed)
    : crop_(crop), rng_(seed) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw data_error("dataset dir not found: " + dir);
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (ext == ".png" || ext == ".PNG") paths.push_back(e.path().string());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    ImageU8 img = read_png(p);
    if (img.width < crop || img.height < crop) {
      std::cerr << "warning: skipping " << p << " (smaller than crop "
                << crop << ")\n";
      continue;
    }
    images_.push_back(to_tensor(img));
  }
  if (images_.empty()) throw data_error("no usable images in " + dir);
}

CropDataset::Draw CropDataset::next_draw() {
  std::uniform_int_distribution<int> img_dist(
      0, static_cast<int>(images_.size()) - 1);
  const int idx = img_dist(rng_);
  const Tensor& im = images_[static_cast<size_t>(idx)];
  std::uniform_int_distribution<int> oy_dist(0, im.dim(2) - crop_);
  std::uniform_int_distribution<int> ox_dist(0, im.dim(3) - crop_);
  return {idx, oy_dist(rng_), ox_dist(rng_)};
}

Tensor CropDataset::next_batch(int batch_size) {
  Tensor batch({batch_size, 3, crop_, crop_});
  for (int b = 0; b < batch_size; ++b) {
    const Draw d = next_draw();
    const Tensor& im = images_[static_cast<size_t>(d.image)];
    for (int c = 0; c < 3; ++c)
      for (int h = 0; h < crop_; ++h)
        for (int w = 0; w < crop_; ++w)
          batch.at4(b, c, h, w) = im.at4(0, c, d.oy + h, d.ox + w);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(CodecModel& model, const TrainConfig& cfg)
    : model_(model),
      cfg_(cfg),
      opt_(model.params(), cfg.weight_decay),
      noise_rng_(cfg.seed ^ 0x9E3779B97F4A7C15ull) {
  cfg_.validate();
  total_steps_ = cfg.steps;
}

double Trainer::learning_rate_at(int64_t step, int64_t total_steps) const {
  if (total_steps <= 0) return cfg_.lr_initial;
  // The drop lands at the configured epoch fraction of the run.
  const double frac = static_cast<double>(cfg_.lr_drop_epoch) / cfg_.epochs;
  const int64_t drop_at =
      static_cast<int64_t>(frac * static_cast<double>(total_steps));
  return step < drop_at ? cfg_.lr_initial : cfg_.lr_final;
}

RdStats Trainer::train_step(const Tensor& batch) {
  const auto& em = model_.entropy();
  const auto& schedule = model_.schedule();
  if (batch.ndim() != 4 || batch.dim(1) != 3 || batch.dim(2) % 16 != 0 ||
      batch.dim(3) % 16 != 0)
    throw data_error("train_step: batch dims must be divisible by 16");
  const double pixels =
      static_cast<double>(batch.dim(0)) * batch.dim(2) * batch.dim(3);

  Var x = constant(batch);
  Var y = model_.analysis().forward(x);
  Var z = em.hyper_analysis(y);

  // Rate proxies use additive uniform noise; decoder-facing paths use
  // straight-through rounding.
  const Tensor noise_y = draw_uniform_noise(y->value.shape, noise_rng_);
  const Tensor noise_z = draw_uniform_noise(z->value.shape, noise_rng_);
  Var z_noisy = add_const(z, noise_z);
  Var lik_z = em.prior().likelihood_var(z_noisy);
  Var rate_z_bits = sum_all(neg_log2(lik_z));

  Var z_ste = ste_round(z);
  Var gc = em.hyper_synthesis(z_ste);

  const auto offsets = schedule.group_offsets();
  const int h = y->value.dim(2), w = y->value.dim(3);
  std::vector<Var> buffers;
  std::vector<Var> noisy_groups;
  for (int g = 0; g < schedule.num_groups(); ++g) {
    const int c0 = offsets[static_cast<size_t>(g)];
    const int c1 = c0 + schedule.group_sizes[static_cast<size_t>(g)];
    buffers.push_back(constant(Tensor::zeros({batch.dim(0), c1 - c0, h, w})));
    Tensor ng({batch.dim(0), c1 - c0, h, w});
    for (int b = 0; b < batch.dim(0); ++b)
      for (int c = c0; c < c1; ++c)
        for (int hh = 0; hh < h; ++hh)
          for (int ww = 0; ww < w; ++ww)
            ng.at4(b, c - c0, hh, ww) = noise_y.at4(b, c, hh, ww);
    noisy_groups.push_back(add_const(slice_channels(y, c0, c1), ng));
  }

  Var rate_y_bits = scalar_const(0.0);
  for (int step = 0; step < schedule.num_steps(); ++step) {
    const auto& st = schedule.steps[static_cast<size_t>(step)];
    auto [mu, sigma] = em.params_for_step(gc, buffers, step);
    const Tensor mask = stage_mask(
        st.stage + 1, schedule.stage_counts[static_cast<size_t>(st.group)], h,
        w);
    Var lik = likelihood_var(noisy_groups[static_cast<size_t>(st.group)], mu,
                             sigma);
    rate_y_bits =
        add(rate_y_bits, sum_all(mul_mask_hw(neg_log2(lik), mask)));
    // Straight-through reconstruction of this stage's positions.
    Var y_g = slice_channels(y, offsets[static_cast<size_t>(st.group)],
                             offsets[static_cast<size_t>(st.group)] +
                                 schedule.group_sizes[static_cast<size_t>(
                                     st.group)]);
    buffers[static_cast<size_t>(st.group)] =
        add(buffers[static_cast<size_t>(st.group)],
            mul_mask_hw(quantize_ste(y_g, mu), mask));
  }

  Var y_hat = concat_channels(buffers);
  Var x_hat = model_.synthesis().forward(y_hat);
  Var mse = mean_all(square(sub(x, x_hat)));
  Var distortion = scale(mse, 255.0 * 255.0);
  Var rate_bpp = scale(add(rate_y_bits, rate_z_bits), 1.0 / pixels);
  Var loss = add(scale(distortion, cfg_.lambda), rate_bpp);

  RdStats stats;
  stats.distortion = distortion->value[0];
  stats.rate_y = rate_y_bits->value[0] / pixels;
  stats.rate_z = rate_z_bits->value[0] / pixels;
  stats.loss = loss->value[0];
  if (!std::isfinite(stats.loss)) {
    throw numeric_error(
        "NaN loss at step " + std::to_string(steps_done_) +
        " (D=" + std::to_string(stats.distortion) +
        ", Ry=" + std::to_string(stats.rate_y) +
        ", Rz=" + std::to_string(stats.rate_z) + ")");
  }

  opt_.zero_grads(model_.params());
  backward(loss);
  AdamW::clip_gradients(model_.params(), cfg_.grad_clip);
  opt_.apply(model_.params(),
             learning_rate_at(steps_done_, total_steps_));
  ++steps_done_;
  model_.set_train_step(model_.train_step() + 1);
  return stats;
}

RdStats evaluate_rd(const CodecModel& model, const Tensor& batch,
                    double lambda) {
  NoGradGuard ng;
  RdStats acc;
  const int B = batch.dim(0);
  for (int b = 0; b < B; ++b) {
    Tensor x({1, 3, batch.dim(2), batch.dim(3)});
    for (int c = 0; c < 3; ++c)
      for (int h = 0; h < batch.dim(2); ++h)
        for (int w = 0; w < batch.dim(3); ++w)
          x.at4(0, c, h, w) = batch.at4(b, c, h, w);
    CompressResult cr = compress(x, model);
    Var xhat = model.synthesis().forward(constant(cr.y_hat));
    const Tensor rec = unpad_image(xhat->value, batch.dim(2), batch.dim(3));
    const double pixels = static_cast<double>(batch.dim(2)) * batch.dim(3);
    double mse = 0;
    for (int64_t i = 0; i < x.numel(); ++i) {
      const double d = x[i] - rec[i];
      mse += d * d;
    }
    mse /= static_cast<double>(x.numel());
    acc.distortion += 255.0 * 255.0 * mse;
    acc.rate_y += cr.ideal_bits_y / pixels;
    acc.rate_z += cr.ideal_bits_z / pixels;
  }
  acc.distortion /= B;
  acc.rate_y /= B;
  acc.rate_z /= B;
  acc.loss = lambda * acc.distortion + acc.rate_y + acc.rate_z;
  return acc;
}

std::vector<RdStats> run_training(
    CodecModel& model, const TrainConfig& cfg, const std::string& log_path,
    const std::string& checkpoint_path,
    const std::function<void(int64_t, const RdStats&)>& on_step) {
  cfg.validate();
  CropDataset data(cfg.dataset_path, cfg.crop, cfg.seed);
  const int64_t steps_per_epoch = std::max<int64_t>(
      1, static_cast<int64_t>(data.size()) / cfg.batch_size);
  const int64_t total_steps =
      cfg.steps > 0 ? cfg.steps : steps_per_epoch * cfg.epochs;

  Trainer trainer(model, cfg);
  trainer.set_total_steps(total_steps);

  FILE* log = nullptr;
  if (!log_path.empty()) {
    log = std::fopen(log_path.c_str(), "w");
    if (!log) throw data_error("cannot open log: " + log_path);
  }
  std::vector<RdStats> history;
  history.reserve(static_cast<size_t>(total_steps));
  for (int64_t s = 0; s < total_steps; ++s) {
    const Tensor batch = data.next_batch(cfg.batch_size);
    const double lr = trainer.learning_rate_at(s, total_steps);
    const RdStats st = trainer.train_step(batch);
    history.push_back(st);
    if (log) {
      json j;
      j["step"] = s;
      j["loss"] = st.loss;
      j["D"] = st.distortion;
      j["R_y"] = st.rate_y;
      j["R_z"] = st.rate_z;
      j["lr"] = lr;
      std::fprintf(log, "%s\n", j.dump().c_str());
      std::fflush(log);
    }
    if (on_step) on_step(s, st);
  }
  if (log) std::fclose(log);
  if (!checkpoint_path.empty()) model.save(checkpoint_path);
  return history;
}

}  // namespace dkic
