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

#ifndef DKIC_CODEC_HPP_
#define DKIC_CODEC_HPP_

#include <string>
#include <utility>
#include <vector>

#include "dkic/bitstream.hpp"
#include "dkic/checkpoint.hpp"
#include "dkic/entropy_model.hpp"

namespace dkic {

// The seven-point rate grid used for trained models.
inline constexpr double kLambdaGrid[] = {0.0035, 0.0067, 0.0130, 0.0250,
                                         0.0483, 0.0932, 0.1800};
inline constexpr int kLambdaGridSize = 7;
int lambda_index_of(double lambda);  // 255 when off-grid

struct ModelConfig {
  TransformConfig transform = TransformConfig::full_preset();
  int hyper_channels = 192;
  std::vector<int> group_sizes{16, 16, 32, 64, 192};
  std::vector<int> stage_counts{4, 4, 2, 2, 2};
  double lambda = 0.0130;
  uint64_t seed = 1;
  bool ablate_contexts = false;

  static ModelConfig full_preset();
  static ModelConfig toy_preset();
  EntropyModelConfig entropy_config() const;
  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& json_text);
};

// All learned state plus the coding schedule; one handle per model file.
class CodecModel {
 public:
  explicit CodecModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const AnalysisTransform& analysis() const { return ga_; }
  const SynthesisTransform& synthesis() const { return gs_; }
  const EntropyModel& entropy() const { return em_; }
  const CodingSchedule& schedule() const { return em_.schedule(); }
  const NamedParams& params() const { return params_; }
  int64_t train_step() const { return train_step_; }
  void set_train_step(int64_t s) { train_step_ = s; }

  void save(const std::string& path) const;
  static CodecModel load(const std::string& path);

 private:
  ModelConfig cfg_;
  AnalysisTransform ga_;
  SynthesisTransform gs_;
  EntropyModel em_;
  NamedParams params_;
  int64_t train_step_ = 0;
};

// Replicate-pads right/bottom to the next multiple of 64.
std::pair<Tensor, std::pair<int, int>> pad_image(const Tensor& x);
Tensor unpad_image(const Tensor& x, int height, int width);

struct CompressResult {
  Bitstream stream;
  Tensor y_hat;                 // encoder-side reconstruction of the latent
  double ideal_bits_y = 0;      // sum of -log2 likelihood over y-hat
  double ideal_bits_z = 0;
  // Per-step (mu, sigma) for the consistency checks.
  std::vector<GaussianParams> step_params;

  size_t payload_bytes() const;  // z stream + y substreams, without framing
  double bpp() const;
};

struct DecompressResult {
  Tensor image;  // {1,3,H,W}, clamped to [0,1]
  Tensor y_hat;
  std::vector<GaussianParams> step_params;
};

CompressResult compress(const Tensor& x, const CodecModel& model);
DecompressResult decompress(const Bitstream& stream, const CodecModel& model);

}  // namespace dkic

#endif  // DKIC_CODEC_HPP_
