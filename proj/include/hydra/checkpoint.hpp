// Copyright 2026 The Hydra Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Binary checkpoints, little-endian throughout:
//   "HYDRACKP" | u32 version | str kind | str config text | u64 n_params |
//   n_params x (str name | u32 rank | rank x u64 dim | numel x f64)
// where str is a u64 byte length followed by the bytes.

#include <string>

#include "hydra/config.hpp"
#include "hydra/params.hpp"

namespace hydra {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::string kind;  // "hydra" or "transformer"
  ModelConfig config;
};

void save_checkpoint(const std::string& path, const std::string& kind, const ModelConfig& config,
                     const ParamList& params);

// Reads kind and config only.
CheckpointHeader read_checkpoint_header(const std::string& path);

// Copies stored values into `params`, which must have the same names and
// shapes (typically a freshly initialized model of the stored config).
// Throws IoError on a bad file and InputError on a mismatch.
CheckpointHeader load_checkpoint(const std::string& path, ParamList& params);

}  // namespace hydra
