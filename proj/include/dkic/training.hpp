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

#ifndef DKIC_TRAINING_HPP_
#define DKIC_TRAINING_HPP_

#include <functional>
#include <optional>
#include <string>

#include "dkic/codec.hpp"

namespace dkic {

struct TrainConfig {
  double lambda = 0.0130;
  int batch_size = 8;
  int crop = 256;  // divisible by 64
  double lr_initial = 1e-4;
  double lr_final = 1e-5;
  int epochs = 400;
  int lr_drop_epoch = 380;
  int64_t steps = 0;  // when > 0, overrides the epoch-derived step count
  uint64_t seed = 1;
  std::string dataset_path;
  double weight_decay = 0.0;
  double grad_clip = 1.0;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& json_text);
};

struct RdStats {
  double distortion = 0;  // 255^2-scaled MSE
  double rate_y = 0;      // bits per pixel
  double rate_z = 0;
  double loss = 0;
};

// Distortion is 255^2 * MSE on [0,1] images; rates are mean bits per pixel
// of the floored likelihoods; loss = lambda * D + R_y + R_z.
RdStats rd_loss(const Tensor& x, const Tensor& xhat, const Tensor& lik_y,
                const Tensor& lik_z, double lambda);

// Decoupled-weight-decay Adam (beta1 0.9, beta2 0.999).
class AdamW {
 public:
  explicit AdamW(const NamedParams& params, double weight_decay = 0.0);
  void apply(const NamedParams& params, double lr);
  void zero_grads(const NamedParams& params);
  int64_t step_count() const { return t_; }

  static double clip_gradients(const NamedParams& params, double max_norm);

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8, weight_decay_;
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Uniformly random, seed-reproducible crops from a directory of images.
// Images smaller than the crop are skipped with a warning.
class CropDataset {
 public:
  struct Draw {
    int image;
    int oy, ox;
  };

  CropDataset(const std::string& dir, int crop, uint64_t seed);
  size_t size() const { return images_.size(); }
  Draw next_draw();
  Tensor next_batch(int batch_size);  // {B,3,crop,crop} in [0,1]

 private:
  int crop_;
  std::mt19937_64 rng_;
  std::vector<Tensor> images_;  // each {1,3,H,W}
};

class Trainer {
 public:
  Trainer(CodecModel& model, const TrainConfig& cfg);

  // One optimizer update on a {B,3,H,W} batch (dims divisible by 16).
  RdStats train_step(const Tensor& batch);
  double learning_rate_at(int64_t step, int64_t total_steps) const;
  int64_t steps_done() const { return steps_done_; }

 private:
  CodecModel& model_;
  TrainConfig cfg_;
  AdamW opt_;
  std::mt19937_64 noise_rng_;
  int64_t steps_done_ = 0;
  int64_t total_steps_ = 0;

 public:
  int64_t total_steps() const { return total_steps_; }
  void set_total_steps(int64_t n) { total_steps_ = n; }
};

// Deterministic eval-mode RD statistics (round quantization, no coder).
RdStats evaluate_rd(const CodecModel& model, const Tensor& batch,
                    double lambda);

// Full training run: JSONL log (step, loss, D, R_y, R_z, lr) and a final
// checkpoint. Returns per-step stats.
std::vector<RdStats> run_training(
    CodecModel& model, const TrainConfig& cfg, const std::string& log_path,
    const std::string& checkpoint_path,
    const std::function<void(int64_t, const RdStats&)>& on_step = nullptr);

}  // namespace dkic

#endif  // DKIC_TRAINING_HPP_
