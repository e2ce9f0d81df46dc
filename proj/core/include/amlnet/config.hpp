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

#ifndef AMLNET_CONFIG_HPP_
#define AMLNET_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "amlnet/data.hpp"
#include "amlnet/layers.hpp"
#include "amlnet/training.hpp"

namespace amlnet {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | csv
  std::string kind = "sine-mix";     // sine-mix | solar-like
  int n_series = 2;
  data::Index t_total = 2400;
  std::uint64_t data_seed = 7;
  double noise = 0.1;
  std::string csv_path;
  std::string csv_timestamp = "timestamp";
  std::string csv_series = "series_id";
  std::string csv_target = "target";
  std::vector<std::string> csv_covariates;
  bool calendar_features = true;  // appended to CSV covariates
  std::string granularity = "1h";
  data::Index steps_per_day = 0;  // 0: derived from the granularity
  data::Index input_length = 24;
  data::Index horizon = 12;
  data::Index validation_steps = 240;
  data::Index test_steps = 240;
  data::Index train_stride = 1;
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
};

// Flat `key = value` text; `#` starts a comment. Unknown or repeated keys,
// and unparsable values, raise ConfigError naming the key. Derived fields
// (start token, steps per day, covariate count, init seed) are resolved.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Every key with its resolved value, in a fixed order.
std::string to_text(const RunConfig& config);
// Re-resolves derived fields after programmatic edits (e.g. a seed override).
void resolve(RunConfig& config);

struct PreparedData {
  data::SeriesDataset dataset;  // normalized
  std::vector<data::NormStats> norm_stats;
  data::SplitSpec split;
  data::WindowSets windows;
  data::Index steps_per_day = 0;
};

PreparedData prepare_data(const DataConfig& config);
data::Index covariate_count(const DataConfig& config);

// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& text);

}  // namespace amlnet

#endif  // AMLNET_CONFIG_HPP_
