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

#ifndef DKIC_CHECKPOINT_HPP_
#define DKIC_CHECKPOINT_HPP_

#include <string>

#include "dkic/nn.hpp"

namespace dkic {

// Checkpoint container (see docs/checkpoint.md): "DKCK" magic, version,
// a JSON metadata record, then named float64 arrays in registration order.
// Values round-trip bit-exactly.
void save_checkpoint(const std::string& path, const NamedParams& params,
                     const std::string& metadata_json);

struct LoadedCheckpoint {
  std::vector<std::pair<std::string, Tensor>> arrays;
  std::string metadata_json;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies loaded arrays into an already-constructed parameter set; every
// name must match and shapes must agree.
void assign_params(const NamedParams& params, const LoadedCheckpoint& ck);

}  // namespace dkic

#endif  // DKIC_CHECKPOINT_HPP_
