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

#ifndef DKIC_RANGE_CODER_HPP_
#define DKIC_RANGE_CODER_HPP_

#include <cstdint>
#include <vector>

#include "dkic/tensor.hpp"

namespace dkic {

// Quantized CDF over a contiguous integer symbol support. cumulative has
// one entry per symbol plus one: cumulative.front() == 0,
// cumulative.back() == 1 << precision_bits, strictly increasing (every bin
// holds at least one count so tail symbols stay decodable).
struct CdfTable {
  int precision_bits = 16;
  int32_t offset = 0;  // minimum symbol value
  std::vector<uint32_t> cumulative;

  int num_symbols() const { return static_cast<int>(cumulative.size()) - 1; }
  int32_t min_symbol() const { return offset; }
  int32_t max_symbol() const { return offset + num_symbols() - 1; }
  bool contains(int32_t symbol) const {
    return symbol >= min_symbol() && symbol <= max_symbol();
  }
  void validate() const;
  // Ideal code length of `symbol` under the quantized table, in bits.
  double bits_of(int32_t symbol) const;
};

// Integer-bin CDF table for N(mu, sigma^2) convolved with U(-1/2, 1/2).
// Support covers all but <= 1e-9 probability mass per side.
CdfTable gaussian_cdf_table(double mu, double sigma, int precision_bits = 16);

// Builds a table from an already-evaluated pmf over [offset, offset+n).
CdfTable quantize_pmf(const std::vector<double>& pmf, int32_t offset,
                      int precision_bits = 16);

// Carry-propagating range coder: 64-bit low / 32-bit range, 16-bit
// frequencies. The flush picks the in-range code value with the most
// trailing zero bytes and trims them; the decoder zero-extends reads by at
// most kMaxTrimmedFlush bytes before declaring an underrun.
class RangeEncoder {
 public:
  static constexpr int kMaxTrimmedFlush = 5;

  void encode(uint32_t cum, uint32_t freq, int precision_bits);
  void encode_symbol(const CdfTable& table, int32_t symbol);
  // Byte count emitted so far; used to segment one stream per coding step.
  size_t bytes_emitted() const { return out_.size(); }
  std::vector<uint8_t> finish();

 private:
  void shift_low();

  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  int64_t pending_ = 0;
  bool primed_ = false;  // first byte is the coder's leading zero
  bool finished_ = false;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  RangeDecoder(const uint8_t* data, size_t size);
  explicit RangeDecoder(const std::vector<uint8_t>& data)
      : RangeDecoder(data.data(), data.size()) {}

  int32_t decode_symbol(const CdfTable& table);
  size_t bytes_consumed() const { return pos_; }

 private:
  uint8_t next_byte();

  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  int virtual_reads_ = 0;
  uint64_t code_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
};

// One-shot helpers; tables[i] governs symbols[i].
std::vector<uint8_t> encode_symbols(const std::vector<int32_t>& symbols,
                                    const std::vector<CdfTable>& tables);
std::vector<int32_t> decode_symbols(const std::vector<uint8_t>& bytes,
                                    const std::vector<CdfTable>& tables);

}  // namespace dkic

#endif  // DKIC_RANGE_CODER_HPP_
