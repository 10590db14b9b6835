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

#ifndef DKIC_IMAGE_IO_HPP_
#define DKIC_IMAGE_IO_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "dkic/tensor.hpp"

namespace dkic {

// 8-bit interleaved RGB raster.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // height * width * 3

  uint8_t& at(int y, int x, int c) {
    return rgb[(static_cast<size_t>(y) * width + x) * 3 + static_cast<size_t>(c)];
  }
  uint8_t at(int y, int x, int c) const {
    return rgb[(static_cast<size_t>(y) * width + x) * 3 + static_cast<size_t>(c)];
  }
};

ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);  // write+rename

// {1,3,H,W} in [0,1] <-> 8-bit RGB; to_image clamps and rounds.
Tensor to_tensor(const ImageU8& img);
ImageU8 to_image(const Tensor& x);

}  // namespace dkic

#endif  // DKIC_IMAGE_IO_HPP_
