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

#include "dkic/checkpoint.hpp"

#include <cstring>

#include "dkic/bitstream.hpp"
#include "dkic/error.hpp"

namespace dkic {

namespace {

constexpr char kMagic[4] = {'D', 'K', 'C', 'K'};
constexpr uint8_t kVersion = 1;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t get_u32(const std::vector<uint8_t>& b, size_t& pos) {
  if (pos + 4 > b.size()) throw data_error("checkpoint truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

void put_f64(std::vector<uint8_t>& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
}

double get_f64(const std::vector<uint8_t>& b, size_t& pos) {
  if (pos + 8 > b.size()) throw data_error("checkpoint truncated");
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[pos + i]) << (8 * i);
  pos += 8;
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedParams& params,
                     const std::string& metadata_json) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  put_u32(out, static_cast<uint32_t>(metadata_json.size()));
  out.insert(out.end(), metadata_json.begin(), metadata_json.end());
  put_u32(out, static_cast<uint32_t>(params.size()));
  for (const auto& [name, var] : params) {
    if (name.size() > 0xFFFF) throw data_error("checkpoint: name too long");
    out.push_back(static_cast<uint8_t>(name.size() & 0xFF));
    out.push_back(static_cast<uint8_t>(name.size() >> 8));
    out.insert(out.end(), name.begin(), name.end());
    const Tensor& t = var->value;
    out.push_back(static_cast<uint8_t>(t.ndim()));
    for (int d : t.shape) put_u32(out, static_cast<uint32_t>(d));
    for (double v : t.data) put_f64(out, v);
  }
  write_file(path, out);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const auto b = read_file(path);
  size_t pos = 0;
  if (b.size() < 5 || std::memcmp(b.data(), kMagic, 4) != 0)
    throw data_error("not a DKIC checkpoint: " + path);
  pos = 4;
  if (b[pos++] != kVersion) throw data_error("unsupported checkpoint version");
  LoadedCheckpoint ck;
  const uint32_t meta_len = get_u32(b, pos);
  if (pos + meta_len > b.size()) throw data_error("checkpoint truncated");
  ck.metadata_json.assign(b.begin() + static_cast<ptrdiff_t>(pos),
                          b.begin() + static_cast<ptrdiff_t>(pos + meta_len));
  pos += meta_len;
  const uint32_t count = get_u32(b, pos);
  for (uint32_t i = 0; i < count; ++i) {
    if (pos + 2 > b.size()) throw data_error("checkpoint truncated");
    const size_t name_len = b[pos] | (static_cast<size_t>(b[pos + 1]) << 8);
    pos += 2;
    if (pos + name_len > b.size()) throw data_error("checkpoint truncated");
    std::string name(b.begin() + static_cast<ptrdiff_t>(pos),
                     b.begin() + static_cast<ptrdiff_t>(pos + name_len));
    pos += name_len;
    if (pos >= b.size()) throw data_error("checkpoint truncated");
    const int ndim = b[pos++];
    std::vector<int> shape;
    for (int d = 0; d < ndim; ++d)
      shape.push_back(static_cast<int>(get_u32(b, pos)));
    Tensor t(shape);
    for (int64_t k = 0; k < t.numel(); ++k) t[k] = get_f64(b, pos);
    ck.arrays.emplace_back(std::move(name), std::move(t));
  }
  if (pos != b.size()) throw data_error("checkpoint: trailing bytes");
  return ck;
}

void assign_params(const NamedParams& params, const LoadedCheckpoint& ck) {
  if (params.size() != ck.arrays.size())
    throw data_error("checkpoint: parameter count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, var] = params[i];
    const auto& [ck_name, t] = ck.arrays[i];
    if (name != ck_name)
      throw data_error("checkpoint: parameter name mismatch at " + name);
    if (t.shape != var->value.shape)
      throw data_error("checkpoint: shape mismatch at " + name);
    var->value = t;
  }
}

}  // namespace dkic
