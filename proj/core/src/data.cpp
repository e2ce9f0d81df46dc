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

#include "amlnet/data.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "amlnet/errors.hpp"

namespace amlnet::data {

namespace {

constexpr Timestamp kDefaultStart = 1293840000;  // 2011-01-01T00:00:00Z

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct CivilTime {
  int year, month, day, hour, minute, second;
  unsigned iso_weekday;  // 1 = Monday .. 7 = Sunday
};

CivilTime to_civil(Timestamp ts) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{ts}};
  const sys_days day = floor<days>(tp);
  const year_month_day ymd{day};
  const auto secs = (tp - day).count();
  return CivilTime{static_cast<int>(ymd.year()),
                   static_cast<int>(static_cast<unsigned>(ymd.month())),
                   static_cast<int>(static_cast<unsigned>(ymd.day())),
                   static_cast<int>(secs / 3600),
                   static_cast<int>((secs % 3600) / 60),
                   static_cast<int>(secs % 60),
                   weekday{day}.iso_encoding()};
}

}  // namespace

Granularity parse_granularity(const std::string& text) {
  if (text == "30min") return Granularity::kHalfHour;
  if (text == "1h") return Granularity::kHour;
  throw ConfigError("unsupported granularity '" + text + "' (expected 30min or 1h)");
}

std::string to_string(Granularity g) { return g == Granularity::kHalfHour ? "30min" : "1h"; }

std::int64_t step_seconds(Granularity g) { return g == Granularity::kHalfHour ? 1800 : 3600; }

SyntheticKind parse_synthetic_kind(const std::string& text) {
  if (text == "sine-mix") return SyntheticKind::kSineMix;
  if (text == "solar-like") return SyntheticKind::kSolarLike;
  throw ConfigError("unknown synthetic kind '" + text + "' (expected sine-mix or solar-like)");
}

void SeriesDataset::validate() const {
  const Index t = length();
  if (static_cast<Index>(timestamps.size()) != t)
    throw ContractError("dataset: timestamps length differs from values");
  if (static_cast<Index>(covariates.size()) != n_series())
    throw ContractError("dataset: one covariate block per series required");
  for (const auto& c : covariates) {
    if (c.rows() != t) throw ContractError("dataset: covariate length differs from values");
    if (c.cols() != n_covariates()) throw ContractError("dataset: covariate width differs");
  }
  if (static_cast<Index>(series_ids.size()) != n_series())
    throw ContractError("dataset: one series id per series required");
  if (t >= 2) {
    const Timestamp step = timestamps[1] - timestamps[0];
    for (Index i = 1; i < t; ++i) {
      const Timestamp d = timestamps[static_cast<std::size_t>(i)] -
                          timestamps[static_cast<std::size_t>(i - 1)];
      if (d <= 0 || d != step)
        throw ContractError("dataset: timestamps must increase with a constant step");
    }
  }
}

void SplitSpec::validate() const {
  const auto bad = [](const IndexRange& r) { return r.begin < 0 || r.end <= r.begin; };
  if (bad(training) || bad(validation) || bad(test))
    throw SplitError("split: every range must be nonempty");
  if (training.end > validation.begin || validation.end > test.begin)
    throw SplitError("split: ranges overlap or are out of chronological order");
}

SeriesDataset synthesize_dataset(const SyntheticSpec& spec) {
  if (spec.n_series < 1) throw SizingError("synthesize: n_series must be at least 1");
  const Index minimum = 4 * spec.window_length;
  if (spec.t_total < minimum)
    throw SizingError("synthesize: t_total=" + std::to_string(spec.t_total) +
                      " is too small; minimum is " + std::to_string(minimum));
  if (spec.steps_per_day < 2) throw SizingError("synthesize: steps_per_day must be >= 2");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SeriesDataset ds;
  const Index n = spec.n_series;
  const Index t_total = spec.t_total;
  const double day = static_cast<double>(spec.steps_per_day);
  const double week = 7.0 * day;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  ds.timestamps.resize(static_cast<std::size_t>(t_total));
  const std::int64_t step = step_seconds(spec.granularity);
  for (Index t = 0; t < t_total; ++t)
    ds.timestamps[static_cast<std::size_t>(t)] = kDefaultStart + t * step;
  const Eigen::MatrixXd calendar = build_calendar_features(ds.timestamps, spec.granularity);

  ds.values.resize(n, t_total);
  for (Index i = 0; i < n; ++i) {
    ds.series_ids.push_back(static_cast<int>(i));
    Eigen::MatrixXd cov(t_total, 4 + calendar.cols());
    for (Index t = 0; t < t_total; ++t) {
      const double td = static_cast<double>(t);
      cov(t, 0) = std::sin(two_pi * td / day);
      cov(t, 1) = std::cos(two_pi * td / day);
      cov(t, 2) = std::sin(two_pi * td / week);
      cov(t, 3) = std::cos(two_pi * td / week);
    }
    cov.rightCols(calendar.cols()) = calendar;

    if (spec.kind == SyntheticKind::kSineMix) {
      const double level = 2.0 + unit(rng);
      const double daily = 0.8 + 0.4 * unit(rng);
      const double weekly = 0.2 + 0.2 * unit(rng);
      const double phase_d = two_pi * unit(rng);
      const double phase_w = two_pi * unit(rng);
      for (Index t = 0; t < t_total; ++t) {
        const double td = static_cast<double>(t);
        ds.values(i, t) = level + daily * std::sin(two_pi * td / day + phase_d) +
                          weekly * std::sin(two_pi * td / week + phase_w) +
                          spec.noise * gauss(rng);
      }
    } else {
      // Generation window covers the middle half of every day; the rest is
      // an exact zero plateau.
      const double capacity = 1.0 + unit(rng);
      double cloud = 1.0;
      for (Index t = 0; t < t_total; ++t) {
        const Index slot = t % spec.steps_per_day;
        if (slot == 0) cloud = 0.7 + 0.3 * unit(rng);
        const double frac = static_cast<double>(slot) / day;
        double v = 0.0;
        if (frac > 0.25 && frac < 0.75) {
          v = capacity * cloud * std::sin(std::numbers::pi * (frac - 0.25) / 0.5);
          v = std::max(0.0, v * (1.0 + spec.noise * gauss(rng)));
        }
        ds.values(i, t) = v;
      }
    }
    ds.covariates.push_back(std::move(cov));
  }
  ds.validate();
  return ds;
}

Timestamp parse_iso8601(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  int consumed = 0;
  const int fields =
      std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
  if (fields < 6 || (sep != 'T' && sep != ' '))
    throw FormatError("cannot parse timestamp '" + text + "'");
  std::string rest = text.substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && rest[0] == ':') {
    int n2 = 0;
    if (std::sscanf(rest.c_str(), ":%2d%n", &s, &n2) != 1)
      throw FormatError("cannot parse timestamp '" + text + "'");
    rest = rest.substr(static_cast<std::size_t>(n2));
  }
  if (!rest.empty() && rest != "Z" && rest != "+00:00")
    throw FormatError("unsupported timestamp suffix in '" + text + "' (UTC only)");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59)
    throw FormatError("invalid calendar timestamp '" + text + "'");
  const sys_seconds tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
  return tp.time_since_epoch().count();
}

std::string format_iso8601(Timestamp ts) {
  const CivilTime c = to_civil(ts);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", c.year, c.month, c.day,
                c.hour, c.minute, c.second);
  return buf;
}

SeriesDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open CSV file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("CSV file " + path.string() + " is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
  const std::vector<std::string> header = split_csv_line(line);
  const auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("unknown column '" + name + "' in " + path.string());
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ts_col = column(schema.timestamp);
  const std::size_t id_col = column(schema.series_id);
  const std::size_t y_col = column(schema.target);
  std::vector<std::size_t> cov_cols;
  for (const auto& c : schema.covariates) cov_cols.push_back(column(c));

  struct Row {
    Timestamp ts;
    double y;
    std::vector<double> x;
    long line;
  };
  std::map<long, std::vector<Row>> by_series;
  long row_index = 0;
  while (std::getline(in, line)) {
    ++row_index;
    if (trim(line).empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size())
      throw FormatError("wrong number of fields", row_index);
    Row r;
    r.line = row_index;
    try {
      r.ts = parse_iso8601(f[ts_col]);
      r.y = std::stod(f[y_col]);
      for (std::size_t c : cov_cols) r.x.push_back(std::stod(f[c]));
      by_series[std::stol(f[id_col])].push_back(std::move(r));
    } catch (const FormatError& e) {
      throw FormatError(e.what(), row_index);
    } catch (const std::exception&) {
      throw FormatError("non-numeric field", row_index);
    }
  }
  if (by_series.empty()) throw FormatError("CSV file " + path.string() + " has no data rows");

  SeriesDataset ds;
  const std::size_t length = by_series.begin()->second.size();
  for (const auto& [id, rows] : by_series) {
    if (rows.size() != length)
      throw FormatError("series " + std::to_string(id) + " has " + std::to_string(rows.size()) +
                        " rows but series " + std::to_string(by_series.begin()->first) +
                        " has " + std::to_string(length) + "; an aligned panel is required");
  }
  const Index n = static_cast<Index>(by_series.size());
  const Index t_total = static_cast<Index>(length);
  ds.values.resize(n, t_total);
  Index i = 0;
  for (auto& [id, rows] : by_series) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.ts < b.ts; });
    for (std::size_t k = 1; k < rows.size(); ++k) {
      if (rows[k].ts == rows[k - 1].ts)
        throw FormatError("duplicated timestamp " + format_iso8601(rows[k].ts), rows[k].line);
      if (k >= 2 && rows[k].ts - rows[k - 1].ts != rows[1].ts - rows[0].ts)
        throw FormatError("non-constant timestamp step (missing or irregular step)",
                          rows[k].line);
    }
    Eigen::MatrixXd cov(t_total, static_cast<Index>(cov_cols.size()));
    for (Index t = 0; t < t_total; ++t) {
      const Row& r = rows[static_cast<std::size_t>(t)];
      ds.values(i, t) = r.y;
      for (std::size_t c = 0; c < r.x.size(); ++c) cov(t, static_cast<Index>(c)) = r.x[c];
      if (i == 0) {
        ds.timestamps.push_back(r.ts);
      } else if (ds.timestamps[static_cast<std::size_t>(t)] != r.ts) {
        throw FormatError("series " + std::to_string(id) + " is not aligned with series " +
                              std::to_string(by_series.begin()->first),
                          r.line);
      }
    }
    ds.covariates.push_back(std::move(cov));
    ds.series_ids.push_back(static_cast<int>(i));
    ++i;
  }
  ds.validate();
  return ds;
}

Eigen::MatrixXd build_calendar_features(const std::vector<Timestamp>& timestamps,
                                        Granularity granularity) {
  const Index n = static_cast<Index>(timestamps.size());
  for (Index i = 1; i < n; ++i) {
    const auto d = timestamps[static_cast<std::size_t>(i)] - timestamps[static_cast<std::size_t>(i - 1)];
    if (d <= 0 || d != timestamps[1] - timestamps[0])
      throw ContractError("calendar features need strictly increasing constant-step timestamps");
  }
  Eigen::MatrixXd out(n, 4);
  for (Index i = 0; i < n; ++i) {
    const CivilTime c = to_civil(timestamps[static_cast<std::size_t>(i)]);
    out(i, 0) = (c.month - 1) / 11.0;
    out(i, 1) = c.hour / 23.0;
    out(i, 2) = granularity == Granularity::kHalfHour ? c.minute / 59.0
                                                      : (c.iso_weekday - 1) / 6.0;
    out(i, 3) = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
  }
  return out;
}

std::pair<SeriesDataset, std::vector<NormStats>> normalize(const SeriesDataset& dataset,
                                                           IndexRange training_range) {
  if (training_range.begin < 0 || training_range.end > dataset.length() ||
      training_range.size() <= 0)
    throw ContractError("normalize: training range must be a nonempty slice of the series");
  SeriesDataset out = dataset;
  std::vector<NormStats> stats;
  for (Index i = 0; i < dataset.n_series(); ++i) {
    const auto seg = dataset.values.row(i).segment(training_range.begin, training_range.size());
    const double mean = seg.mean();
    const double var = (seg.array() - mean).square().mean();
    const double std = std::sqrt(var);
    if (!(std > 1e-12))
      throw DegenerateSeriesError(
          "normalize: series " + std::to_string(dataset.series_ids[static_cast<std::size_t>(i)]) +
              " has zero standard deviation over the training range",
          dataset.series_ids[static_cast<std::size_t>(i)]);
    out.values.row(i) = (dataset.values.row(i).array() - mean) / std;
    stats.push_back({mean, std});
  }
  out.norm_stats = stats;
  return {std::move(out), std::move(stats)};
}

Eigen::VectorXd denormalize(const Eigen::VectorXd& values, const NormStats& stats) {
  return (values.array() * stats.std + stats.mean).matrix();
}

Eigen::VectorXd normalize_values(const Eigen::VectorXd& values, const NormStats& stats) {
  return ((values.array() - stats.mean) / stats.std).matrix();
}

namespace {

ForecastWindow make_window(const SeriesDataset& ds, Index series, Index t0, Index input_length,
                           Index horizon) {
  ForecastWindow w;
  w.series_id = ds.series_ids[static_cast<std::size_t>(series)];
  w.t0 = t0;
  w.y_past = ds.values.row(series).segment(t0, input_length).transpose();
  w.y_future = ds.values.row(series).segment(t0 + input_length, horizon).transpose();
  w.x_all = ds.covariates[static_cast<std::size_t>(series)].middleRows(t0, input_length + horizon);
  return w;
}

}  // namespace

std::vector<ForecastWindow> window(const SeriesDataset& dataset, Index input_length,
                                   Index horizon, Index stride) {
  if (input_length <= 0 || horizon <= 0 || stride <= 0)
    throw ContractError("window: T_l, T_h and stride must be positive");
  if (input_length + horizon > dataset.length())
    throw ContractError("window: T_l + T_h exceeds the series length");
  return window_in_range(dataset, input_length, horizon, stride,
                         IndexRange{input_length, dataset.length()}, 0);
}

std::vector<ForecastWindow> window_in_range(const SeriesDataset& dataset, Index input_length,
                                            Index horizon, Index stride, IndexRange target,
                                            Index history_floor) {
  if (input_length <= 0 || horizon <= 0 || stride <= 0)
    throw ContractError("window: T_l, T_h and stride must be positive");
  std::vector<ForecastWindow> out;
  const Index first_future = std::max(target.begin, history_floor + input_length);
  for (Index f = first_future; f + horizon <= std::min(target.end, dataset.length());
       f += stride) {
    for (Index i = 0; i < dataset.n_series(); ++i)
      out.push_back(make_window(dataset, i, f - input_length, input_length, horizon));
  }
  return out;
}

WindowSets split(const SeriesDataset& dataset, const SplitSpec& spec, Index input_length,
                 Index horizon, Index train_stride) {
  spec.validate();
  if (spec.test.end > dataset.length()) throw SplitError("split: test range exceeds series");
  WindowSets sets;
  sets.training = window_in_range(dataset, input_length, horizon, train_stride, spec.training,
                                  spec.training.begin);
  sets.validation =
      window_in_range(dataset, input_length, horizon, horizon, spec.validation, 0);
  sets.test = window_in_range(dataset, input_length, horizon, horizon, spec.test, 0);
  return sets;
}

SplitSpec chronological_split(Index length, Index validation_steps, Index test_steps) {
  SplitSpec s;
  s.test = {length - test_steps, length};
  s.validation = {length - test_steps - validation_steps, length - test_steps};
  s.training = {0, length - test_steps - validation_steps};
  s.validate();
  return s;
}

}  // namespace amlnet::data
