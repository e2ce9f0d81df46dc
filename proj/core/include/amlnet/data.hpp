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

#ifndef AMLNET_DATA_HPP_
#define AMLNET_DATA_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace amlnet::data {

using Index = Eigen::Index;
// Seconds since 1970-01-01T00:00:00Z.
using Timestamp = std::int64_t;

enum class Granularity { kHalfHour, kHour };
enum class SyntheticKind { kSineMix, kSolarLike };

Granularity parse_granularity(const std::string& text);
std::string to_string(Granularity g);
std::int64_t step_seconds(Granularity g);
SyntheticKind parse_synthetic_kind(const std::string& text);

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

// Aligned panel: every series shares the same timestamps.
struct SeriesDataset {
  Eigen::MatrixXd values;                   // [n_series x length]
  std::vector<Eigen::MatrixXd> covariates;  // per series [length x n_covariates]
  std::vector<Timestamp> timestamps;
  std::vector<int> series_ids;
  std::vector<NormStats> norm_stats;  // empty until normalized

  Index n_series() const { return values.rows(); }
  Index length() const { return values.cols(); }
  Index n_covariates() const { return covariates.empty() ? 0 : covariates.front().cols(); }

  // Throws ContractError when shapes disagree or timestamps are not a
  // strictly increasing constant-step grid.
  void validate() const;
};

struct ForecastWindow {
  Eigen::VectorXd y_past;    // [T_l]
  Eigen::MatrixXd x_all;     // [(T_l + T_h) x d_x]
  Eigen::VectorXd y_future;  // [T_h]; empty for inference-only windows
  int series_id = 0;
  Index t0 = 0;  // dataset index of y_past(0)

  Index input_length() const { return y_past.size(); }
  Index horizon() const { return x_all.rows() - y_past.size(); }
  bool has_future() const { return y_future.size() == horizon() && horizon() > 0; }
};

// Half-open index range [begin, end).
struct IndexRange {
  Index begin = 0;
  Index end = 0;

  Index size() const { return end - begin; }
  bool contains(Index i) const { return i >= begin && i < end; }
};

struct SplitSpec {
  IndexRange training;
  IndexRange validation;
  IndexRange test;

  // Training precedes validation precedes test, all nonempty, no overlap.
  void validate() const;
};

struct WindowSets {
  std::vector<ForecastWindow> training;
  std::vector<ForecastWindow> validation;
  std::vector<ForecastWindow> test;
};

struct SyntheticSpec {
  int n_series = 1;
  Index t_total = 400;
  std::uint64_t seed = 0;
  SyntheticKind kind = SyntheticKind::kSineMix;
  Granularity granularity = Granularity::kHour;
  Index steps_per_day = 24;
  // T_l + T_h; the series must hold at least four windows.
  Index window_length = 36;
  double noise = 0.1;
};

SeriesDataset synthesize_dataset(const SyntheticSpec& spec);

struct CsvSchema {
  std::string timestamp = "timestamp";
  std::string series_id = "series_id";
  std::string target = "target";
  std::vector<std::string> covariates;
};

SeriesDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

// Parses "YYYY-MM-DD[T ]HH:MM[:SS][Z]" as UTC.
Timestamp parse_iso8601(const std::string& text);
std::string format_iso8601(Timestamp ts);

// Calendar covariates scaled to [0, 1]: month, hour-of-day, then
// minute-of-hour (30 min) or day-of-week (1 h, Monday = 0), then age.
Eigen::MatrixXd build_calendar_features(const std::vector<Timestamp>& timestamps,
                                        Granularity granularity);

// Statistics come from `training_range` only and are applied to the whole
// series. Population standard deviation.
std::pair<SeriesDataset, std::vector<NormStats>> normalize(const SeriesDataset& dataset,
                                                           IndexRange training_range);
Eigen::VectorXd denormalize(const Eigen::VectorXd& values, const NormStats& stats);
Eigen::VectorXd normalize_values(const Eigen::VectorXd& values, const NormStats& stats);

// All windows over the full series, ordered by t0 then series.
std::vector<ForecastWindow> window(const SeriesDataset& dataset, Index input_length,
                                   Index horizon, Index stride);

// Windows whose forecast span lies inside `target` and whose first input
// step is at or after `history_floor`.
std::vector<ForecastWindow> window_in_range(const SeriesDataset& dataset, Index input_length,
                                            Index horizon, Index stride, IndexRange target,
                                            Index history_floor);

// Training windows lie wholly inside the training range (stride
// `train_stride`); validation and test windows forecast inside their range
// with non-overlapping horizons and may read history from earlier ranges.
WindowSets split(const SeriesDataset& dataset, const SplitSpec& spec, Index input_length,
                 Index horizon, Index train_stride = 1);

// Last `test_steps` for test, the `validation_steps` before for validation,
// everything earlier for training.
SplitSpec chronological_split(Index length, Index validation_steps, Index test_steps);

}  // namespace amlnet::data

#endif  // AMLNET_DATA_HPP_
