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

#ifndef DKIC_BITSTREAM_HPP_
#define DKIC_BITSTREAM_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace dkic {

// Container layout (little-endian integers, byte-exact; see
// docs/bitstream.md for the normative description):
//   magic "DKIC" | version u8 | width u16 | height u16 | lambda-index u8 |
//   N u8 | group_sizes N x u16 | stage_counts N x u8 |
//   z length u32 | z bytes | per step: u32 length + bytes
struct BitstreamHeader {
  uint8_t version = 1;
  uint16_t width = 0;   // original image dims, before padding
  uint16_t height = 0;
  uint8_t lambda_index = 0;  // 255 when the rate point is not on the grid
  std::vector<uint16_t> group_sizes;
  std::vector<uint8_t> stage_counts;

  size_t byte_size() const { return 11 + group_sizes.size() * 3; }
  int num_steps() const;
};

struct Bitstream {
  BitstreamHeader header;
  std::vector<uint8_t> z_stream;
  std::vector<std::vector<uint8_t>> y_substreams;

  size_t total_bytes() const;
};

std::vector<uint8_t> pack_bitstream(const Bitstream& b);
Bitstream unpack_bitstream(const std::vector<uint8_t>& bytes);

void write_file(const std::string& path, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_file(const std::string& path);

}  // namespace dkic

#endif  // DKIC_BITSTREAM_HPP_
