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

#include "dkic/bitstream.hpp"

#include <cstdio>
#include <filesystem>

#include "dkic/error.hpp"

namespace dkic {

namespace {

constexpr char kMagic[4] = {'D', 'K', 'I', 'C'};

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xFF));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& b) : b_(b) {}
  uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::vector<uint8_t> bytes(size_t n) {
    need(n);
    std::vector<uint8_t> v(b_.begin() + static_cast<ptrdiff_t>(pos_),
                           b_.begin() + static_cast<ptrdiff_t>(pos_ + n));
    pos_ += n;
    return v;
  }
  size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(size_t n) {
    if (pos_ + n > b_.size()) throw data_error("bitstream truncated");
  }
  const std::vector<uint8_t>& b_;
  size_t pos_ = 0;
};

}  // namespace

int BitstreamHeader::num_steps() const {
  int n = 0;
  for (uint8_t s : stage_counts) n += s;
  return n;
}

size_t Bitstream::total_bytes() const {
  size_t n = header.byte_size() + 4 + z_stream.size();
  for (const auto& s : y_substreams) n += 4 + s.size();
  return n;
}

std::vector<uint8_t> pack_bitstream(const Bitstream& b) {
  const auto& h = b.header;
  if (h.group_sizes.size() != h.stage_counts.size() ||
      h.group_sizes.empty() || h.group_sizes.size() > 255)
    throw data_error("pack: malformed schedule");
  if (h.width == 0 || h.height == 0) throw data_error("pack: empty image");
  if (static_cast<int>(b.y_substreams.size()) != h.num_steps())
    throw data_error("pack: substream count does not match schedule");
  std::vector<uint8_t> out;
  out.reserve(b.total_bytes());
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(h.version);
  put_u16(out, h.width);
  put_u16(out, h.height);
  out.push_back(h.lambda_index);
  out.push_back(static_cast<uint8_t>(h.group_sizes.size()));
  for (uint16_t g : h.group_sizes) put_u16(out, g);
  for (uint8_t s : h.stage_counts) out.push_back(s);
  put_u32(out, static_cast<uint32_t>(b.z_stream.size()));
  out.insert(out.end(), b.z_stream.begin(), b.z_stream.end());
  for (const auto& s : b.y_substreams) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

Bitstream unpack_bitstream(const std::vector<uint8_t>& bytes) {
  Reader r(bytes);
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic))
    throw data_error("bad magic: not a DKIC stream");
  Bitstream b;
  b.header.version = r.u8();
  if (b.header.version != 1) throw data_error("unsupported stream version");
  b.header.width = r.u16();
  b.header.height = r.u16();
  if (b.header.width == 0 || b.header.height == 0)
    throw data_error("bitstream: empty image dims");
  b.header.lambda_index = r.u8();
  const int n = r.u8();
  if (n == 0) throw data_error("bitstream: empty schedule");
  b.header.group_sizes.resize(static_cast<size_t>(n));
  for (auto& g : b.header.group_sizes) g = r.u16();
  b.header.stage_counts.resize(static_cast<size_t>(n));
  for (auto& s : b.header.stage_counts) {
    s = r.u8();
    if (s != 1 && s != 2 && s != 4)
      throw data_error("bitstream: unsupported stage count");
  }
  b.z_stream = r.bytes(r.u32());
  const int steps = b.header.num_steps();
  b.y_substreams.reserve(static_cast<size_t>(steps));
  for (int i = 0; i < steps; ++i) b.y_substreams.push_back(r.bytes(r.u32()));
  if (r.remaining() != 0) throw data_error("bitstream: trailing bytes");
  return b;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  // Write-then-rename so consumers never observe partial output.
  const std::string tmp = path + ".tmp";
  FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw data_error("cannot open for writing: " + tmp);
  const size_t n =
      bytes.empty() ? 0 : std::fwrite(bytes.data(), 1, bytes.size(), f);
  const bool ok = (n == bytes.size()) && std::fclose(f) == 0;
  if (!ok) {
    std::remove(tmp.c_str());
    throw data_error("short write: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw data_error("rename failed: " + path);
  }
}

std::vector<uint8_t> read_file(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw data_error("cannot open: " + path);
  std::fseek(f, 0, SEEK_END);
  const long sz = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> out(static_cast<size_t>(sz < 0 ? 0 : sz));
  const size_t n = out.empty() ? 0 : std::fread(out.data(), 1, out.size(), f);
  std::fclose(f);
  if (n != out.size()) throw data_error("short read: " + path);
  return out;
}

}  // namespace dkic
