// Copyright 2026 The AMLNet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef AMLNET_CHECKPOINT_HPP_
#define AMLNET_CHECKPOINT_HPP_

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "amlnet/data.hpp"
#include "amlnet/model.hpp"

namespace amlnet {

inline constexpr int kCheckpointVersion = 1;

// Model configuration, normalization statistics, every parameter by name
// and the discriminator running statistics.
struct Checkpoint {
  ModelConfig config;
  std::vector<data::NormStats> norm_stats;
  std::unique_ptr<AMLNet> model;
};

std::string serialize_checkpoint(AMLNet& model, const std::vector<data::NormStats>& norm_stats);
Checkpoint deserialize_checkpoint(const std::string& text);

// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, AMLNet& model,
                     const std::vector<data::NormStats>& norm_stats);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// LoadError when the stored configuration differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace amlnet

#endif  // AMLNET_CHECKPOINT_HPP_
