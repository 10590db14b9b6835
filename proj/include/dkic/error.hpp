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

#ifndef DKIC_ERROR_HPP_
#define DKIC_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace dkic {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind {
  kUsage = 2,    // malformed arguments, bad config keys
  kData = 3,     // unreadable/invalid inputs, bitstream corruption
  kNumeric = 4,  // non-finite activations, NaN loss
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& what) {
  return Error(ErrorKind::kUsage, what);
}
inline Error data_error(const std::string& what) {
  return Error(ErrorKind::kData, what);
}
inline Error numeric_error(const std::string& what) {
  return Error(ErrorKind::kNumeric, what);
}

}  // namespace dkic

#endif  // DKIC_ERROR_HPP_
