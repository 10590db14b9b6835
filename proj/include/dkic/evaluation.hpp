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

#ifndef DKIC_EVALUATION_HPP_
#define DKIC_EVALUATION_HPP_

#include <string>
#include <vector>

#include "dkic/codec.hpp"
#include "dkic/image_io.hpp"

namespace dkic {

constexpr double kPsnrCap = 100.0;  // reported for identical images

// 10*log10(255^2 / MSE) on the 0-255 scale.
double psnr(const ImageU8& a, const ImageU8& b);

// 8 * container bytes / pixel count; dims must match the header.
double bpp(const Bitstream& b, int width, int height);

struct RdPoint {
  double bpp = 0;
  double psnr = 0;
};
using RdCurve = std::vector<RdPoint>;

void validate_curve(const RdCurve& c);

// Bjontegaard delta bit-rate: piecewise-cubic interpolation of log10(rate)
// against PSNR, integrated over the common PSNR interval. Negative means
// the test codec saves bits against the anchor.
double bd_rate(const RdCurve& test, const RdCurve& anchor);

void write_rd_csv(const std::string& path, const RdCurve& curve,
                  bool append = false);
RdCurve read_rd_csv(const std::string& path);

// Sampling-location record of the analysis probe block at one target
// position of its feature grid. JSON schema: docs/inspect.md.
struct OffsetRecord {
  int feature_height = 0;
  int feature_width = 0;
  int scale = 2;  // feature-to-pixel factor
  int target_y = 0;
  int target_x = 0;
  struct Point {
    int group;
    int point;
    double dy, dx;  // learned offset
    double y, x;    // absolute sampling position on the feature grid
  };
  std::vector<Point> points;

  std::string to_json() const;
  static OffsetRecord from_json(const std::string& text);
};

OffsetRecord visualize_offsets(const CodecModel& model, const ImageU8& image,
                               int target_y, int target_x);
// Draws the record onto a copy of the image (group-colored markers).
ImageU8 annotate_offsets(const ImageU8& image, const OffsetRecord& rec);

struct GroupStats {
  int group = 0;
  double mean_abs = 0;       // mean |y-hat| over the group's channels
  double lag1_correlation = 0;  // mean lag-1 spatial autocorrelation
};

struct LatentStatsReport {
  bool untrained = false;
  std::vector<GroupStats> groups;
  std::string to_json() const;
};

LatentStatsReport latent_group_stats(const CodecModel& model,
                                     const std::vector<ImageU8>& images);

}  // namespace dkic

#endif  // DKIC_EVALUATION_HPP_
