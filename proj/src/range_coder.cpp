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

#include "dkic/range_coder.hpp"

#include <algorithm>
#include <cmath>

#include "dkic/autograd.hpp"
#include "dkic/error.hpp"

namespace dkic {

namespace {
constexpr uint32_t kTopValue = 1u << 24;
}

void CdfTable::validate() const {
  if (precision_bits <= 0 || precision_bits > 16)
    throw data_error("cdf table: unsupported precision");
  if (cumulative.size() < 2) throw data_error("cdf table: empty support");
  if (cumulative.front() != 0 ||
      cumulative.back() != (1u << precision_bits))
    throw data_error("cdf table: endpoints");
  for (size_t i = 1; i < cumulative.size(); ++i)
    if (cumulative[i] <= cumulative[i - 1])
      throw data_error("cdf table: not strictly increasing");
}

double CdfTable::bits_of(int32_t symbol) const {
  if (!contains(symbol)) throw data_error("symbol outside table support");
  const size_t i = static_cast<size_t>(symbol - offset);
  const double p = static_cast<double>(cumulative[i + 1] - cumulative[i]) /
                   static_cast<double>(1u << precision_bits);
  return -std::log2(p);
}

CdfTable quantize_pmf(const std::vector<double>& pmf, int32_t offset,
                      int precision_bits) {
  if (pmf.empty()) throw data_error("quantize_pmf: empty pmf");
  const uint32_t total = 1u << precision_bits;
  if (pmf.size() >= total)
    throw data_error("quantize_pmf: support too wide for precision");
  double mass = 0;
  for (double p : pmf) {
    if (!(p >= 0) || !std::isfinite(p))
      throw data_error("quantize_pmf: invalid probability");
    mass += p;
  }
  if (mass <= 0) throw data_error("quantize_pmf: zero mass");

  // Round to integer counts with a floor of one per bin, then settle the
  // deficit/excess on the largest bin.
  std::vector<uint32_t> counts(pmf.size());
  int64_t sum = 0;
  size_t largest = 0;
  for (size_t i = 0; i < pmf.size(); ++i) {
    double scaled = pmf[i] / mass * static_cast<double>(total);
    uint32_t c = static_cast<uint32_t>(std::llround(scaled));
    if (c < 1) c = 1;
    counts[i] = c;
    sum += c;
    if (counts[i] > counts[largest]) largest = i;
  }
  int64_t diff = static_cast<int64_t>(total) - sum;
  if (diff != 0) {
    int64_t adjusted = static_cast<int64_t>(counts[largest]) + diff;
    if (adjusted < 1) {
      // Degenerate: spread the removal across bins, keeping every bin >= 1.
      for (size_t i = 0; i < counts.size() && diff < 0; ++i) {
        int64_t take = std::min<int64_t>(-diff, counts[i] - 1);
        counts[i] -= static_cast<uint32_t>(take);
        diff += take;
      }
      if (diff != 0) throw data_error("quantize_pmf: cannot normalize");
    } else {
      counts[largest] = static_cast<uint32_t>(adjusted);
    }
  }

  CdfTable t;
  t.precision_bits = precision_bits;
  t.offset = offset;
  t.cumulative.resize(counts.size() + 1);
  t.cumulative[0] = 0;
  for (size_t i = 0; i < counts.size(); ++i)
    t.cumulative[i + 1] = t.cumulative[i] + counts[i];
  t.validate();
  return t;
}

CdfTable gaussian_cdf_table(double mu, double sigma, int precision_bits) {
  if (!(sigma >= 0.11 - 1e-12)) throw data_error("sigma below clamp");
  if (!std::isfinite(mu) || !std::isfinite(sigma))
    throw data_error("gaussian table: non-finite parameters");
  // 6.25 sigma leaves ~2e-10 mass per side, comfortably under 1e-9.
  const double radius = 6.25 * sigma + 0.5;
  int32_t lo = static_cast<int32_t>(std::floor(mu - radius));
  int32_t hi = static_cast<int32_t>(std::ceil(mu + radius));
  // Keep the support width decodable at 16-bit precision.
  const int32_t max_width = (1 << precision_bits) - 2;
  if (hi - lo + 1 > max_width) {
    lo = static_cast<int32_t>(std::floor(mu)) - max_width / 2;
    hi = lo + max_width - 1;
  }
  std::vector<double> pmf(static_cast<size_t>(hi - lo + 1));
  for (int32_t v = lo; v <= hi; ++v)
    pmf[static_cast<size_t>(v - lo)] = gaussian_bin_prob(v, mu, sigma);
  // Fold the residual tails into the edge bins so the table is a proper
  // distribution over its support.
  pmf.front() += gaussian_cdf((lo - 0.5 - mu) / sigma);
  pmf.back() += 1.0 - gaussian_cdf((hi + 0.5 - mu) / sigma);
  return quantize_pmf(pmf, lo, precision_bits);
}

// ---------------------------------------------------------------------------
// encoder
// ---------------------------------------------------------------------------

void RangeEncoder::shift_low() {
  if (low_ < 0xFF000000ull || low_ > 0xFFFFFFFFull) {
    const uint8_t carry = static_cast<uint8_t>(low_ >> 32);
    if (primed_) out_.push_back(static_cast<uint8_t>(cache_ + carry));
    for (; pending_ > 0; --pending_)
      out_.push_back(static_cast<uint8_t>(0xFF + carry));
    cache_ = static_cast<uint8_t>(low_ >> 24);
    primed_ = true;
  } else {
    ++pending_;
  }
  low_ = (low_ & 0x00FFFFFFull) << 8;
}

void RangeEncoder::encode(uint32_t cum, uint32_t freq, int precision_bits) {
  if (finished_) throw data_error("range encoder: already finished");
  if (freq == 0) throw data_error("range encoder: zero-frequency symbol");
  range_ >>= precision_bits;
  low_ += static_cast<uint64_t>(cum) * range_;
  range_ *= freq;
  while (range_ < kTopValue) {
    shift_low();
    range_ <<= 8;
  }
}

void RangeEncoder::encode_symbol(const CdfTable& table, int32_t symbol) {
  if (!table.contains(symbol)) throw data_error("symbol outside table support");
  const size_t i = static_cast<size_t>(symbol - table.offset);
  encode(table.cumulative[i], table.cumulative[i + 1] - table.cumulative[i],
         table.precision_bits);
}

std::vector<uint8_t> RangeEncoder::finish() {
  if (finished_) throw data_error("range encoder: already finished");
  finished_ = true;
  // Choose the value in [low, low+range) with the most trailing zero bits;
  // its zero tail can then be dropped because the decoder zero-extends.
  const uint64_t top = low_ + range_ - 1;
  uint64_t v = top;
  for (int bits = 40; bits >= 0; --bits) {
    const uint64_t cand = top & ~((1ull << bits) - 1ull);
    if (cand >= low_) {
      v = cand;
      break;
    }
  }
  low_ = v;
  const size_t flush_start = out_.size();
  for (int i = 0; i < 5; ++i) shift_low();
  size_t trimmed = 0;
  while (!out_.empty() && out_.size() > flush_start && out_.back() == 0 &&
         trimmed < static_cast<size_t>(kMaxTrimmedFlush)) {
    out_.pop_back();
    ++trimmed;
  }
  return std::move(out_);
}

// ---------------------------------------------------------------------------
// decoder
// ---------------------------------------------------------------------------

RangeDecoder::RangeDecoder(const uint8_t* data, size_t size)
    : data_(data), size_(size) {
  // The encoder never emits the classic all-zero priming byte, so the code
  // register is seeded from the first four real bytes.
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
  if (pos_ < size_) return data_[pos_++];
  if (virtual_reads_ < RangeEncoder::kMaxTrimmedFlush) {
    ++virtual_reads_;
    return 0;
  }
  throw data_error("bitstream underrun");
}

int32_t RangeDecoder::decode_symbol(const CdfTable& table) {
  range_ >>= table.precision_bits;
  uint32_t f = static_cast<uint32_t>(code_ / range_);
  const uint32_t total = 1u << table.precision_bits;
  if (f >= total) f = total - 1;
  // Largest symbol with cumulative <= f.
  const auto it = std::upper_bound(table.cumulative.begin(),
                                   table.cumulative.end(), f);
  const size_t idx = static_cast<size_t>(it - table.cumulative.begin()) - 1;
  const uint32_t cum = table.cumulative[idx];
  const uint32_t freq = table.cumulative[idx + 1] - cum;
  code_ -= static_cast<uint64_t>(cum) * range_;
  range_ *= freq;
  if (code_ >= range_) throw data_error("bitstream corrupt");
  while (range_ < kTopValue) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
  return table.offset + static_cast<int32_t>(idx);
}

std::vector<uint8_t> encode_symbols(const std::vector<int32_t>& symbols,
                                    const std::vector<CdfTable>& tables) {
  if (symbols.size() != tables.size())
    throw data_error("encode_symbols: symbol/table count mismatch");
  RangeEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i)
    enc.encode_symbol(tables[i], symbols[i]);
  return enc.finish();
}

std::vector<int32_t> decode_symbols(const std::vector<uint8_t>& bytes,
                                    const std::vector<CdfTable>& tables) {
  std::vector<int32_t> out;
  out.reserve(tables.size());
  if (tables.empty()) return out;
  RangeDecoder dec(bytes);
  for (const auto& t : tables) out.push_back(dec.decode_symbol(t));
  return out;
}

}  // namespace dkic
