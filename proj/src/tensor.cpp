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

#include "dkic/tensor.hpp"

#include <cmath>
#include <sstream>

#include "dkic/error.hpp"

namespace dkic {

int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw data_error("negative tensor dimension");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> s)
    : shape(std::move(s)), data(static_cast<size_t>(numel_of(shape)), 0.0) {}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)) {
  if (numel_of(shape) != static_cast<int64_t>(d.size()))
    throw data_error("tensor data/shape mismatch");
  data = std::move(d);
}

Tensor Tensor::full(std::vector<int> s, double v) {
  Tensor t(std::move(s));
  for (auto& x : t.data) x = v;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

}  // namespace dkic
