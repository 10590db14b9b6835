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

#ifndef DKIC_TENSOR_HPP_
#define DKIC_TENSOR_HPP_

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace dkic {

// Dense row-major tensor of doubles. Feature maps use NCHW layout.
// Double precision throughout: the coder's determinism contract and the
// finite-difference gradient checks both want 64-bit math.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);
  Tensor(std::vector<int> s, std::vector<double> d);

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // NCHW accessors; no bounds checks beyond debug builds.
  double& at4(int n, int c, int h, int w) {
    return data[static_cast<size_t>(
        ((static_cast<int64_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] +
        w)];
  }
  double at4(int n, int c, int h, int w) const {
    return data[static_cast<size_t>(
        ((static_cast<int64_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] +
        w)];
  }
};

int64_t numel_of(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

}  // namespace dkic

#endif  // DKIC_TENSOR_HPP_
