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

#include "amlnet/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "amlnet/errors.hpp"

namespace amlnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream s(v);
  std::string item;
  while (std::getline(s, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T>
std::string fmt_int(T v) {
  return std::to_string(v);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

std::string fmt_list(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + xs[i];
  return out;
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define AMLNET_INT_KEY(name, field, type)                                                    \
  Key {                                                                                      \
    name, [](RunConfig& c, const std::string& v) { c.field = parse_integer<type>(name, v); }, \
        [](const RunConfig& c) { return fmt_int(c.field); }                                  \
  }
#define AMLNET_REAL_KEY(name, field)                                                \
  Key {                                                                             \
    name, [](RunConfig& c, const std::string& v) { c.field = parse_real(name, v); }, \
        [](const RunConfig& c) { return fmt(c.field); }                             \
  }
#define AMLNET_BOOL_KEY(name, field)                                                \
  Key {                                                                             \
    name, [](RunConfig& c, const std::string& v) { c.field = parse_bool(name, v); }, \
        [](const RunConfig& c) { return fmt(c.field); }                             \
  }
#define AMLNET_TEXT_KEY(name, field)                                     \
  Key {                                                                  \
    name, [](RunConfig& c, const std::string& v) { c.field = v; },       \
        [](const RunConfig& c) { return c.field; }                       \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      AMLNET_TEXT_KEY("source", data.source),
      AMLNET_TEXT_KEY("kind", data.kind),
      AMLNET_INT_KEY("n_series", data.n_series, int),
      AMLNET_INT_KEY("t_total", data.t_total, data::Index),
      AMLNET_INT_KEY("data_seed", data.data_seed, std::uint64_t),
      AMLNET_REAL_KEY("noise", data.noise),
      AMLNET_TEXT_KEY("csv_path", data.csv_path),
      AMLNET_TEXT_KEY("csv_timestamp", data.csv_timestamp),
      AMLNET_TEXT_KEY("csv_series", data.csv_series),
      AMLNET_TEXT_KEY("csv_target", data.csv_target),
      Key{"csv_covariates",
          [](RunConfig& c, const std::string& v) { c.data.csv_covariates = parse_list(v); },
          [](const RunConfig& c) { return fmt_list(c.data.csv_covariates); }},
      AMLNET_BOOL_KEY("calendar_features", data.calendar_features),
      AMLNET_TEXT_KEY("granularity", data.granularity),
      AMLNET_INT_KEY("steps_per_day", data.steps_per_day, data::Index),
      AMLNET_INT_KEY("input_length", data.input_length, data::Index),
      AMLNET_INT_KEY("horizon", data.horizon, data::Index),
      AMLNET_INT_KEY("validation_steps", data.validation_steps, data::Index),
      AMLNET_INT_KEY("test_steps", data.test_steps, data::Index),
      AMLNET_INT_KEY("train_stride", data.train_stride, data::Index),
      AMLNET_INT_KEY("d_hid", model.d_hid, int),
      AMLNET_INT_KEY("n_e", model.n_e, int),
      AMLNET_INT_KEY("n_d", model.n_d, int),
      AMLNET_INT_KEY("n_s", model.n_s, int),
      AMLNET_INT_KEY("d_f", model.d_f, int),
      AMLNET_INT_KEY("n_h", model.n_h, int),
      AMLNET_INT_KEY("start_token", model.start_token, int),
      AMLNET_REAL_KEY("dropout", model.dropout),
      AMLNET_INT_KEY("attn_sampling_factor", model.attn_sampling_factor, int),
      AMLNET_BOOL_KEY("use_prob_sparse", model.use_prob_sparse),
      AMLNET_INT_KEY("max_series", model.max_series, int),
      AMLNET_BOOL_KEY("use_id_embedding", model.use_id_embedding),
      AMLNET_REAL_KEY("lr_generator", train.lr_generator),
      AMLNET_REAL_KEY("lr_discriminator", train.lr_discriminator),
      AMLNET_REAL_KEY("alpha_o", train.alpha_o),
      AMLNET_REAL_KEY("alpha_h", train.alpha_h),
      AMLNET_INT_KEY("max_epochs", train.max_epochs, int),
      AMLNET_INT_KEY("batch_size", train.batch_size, int),
      AMLNET_INT_KEY("patience", train.patience, int),
      AMLNET_INT_KEY("seed", train.seed, std::uint64_t),
      AMLNET_REAL_KEY("grad_clip", train.grad_clip),
      AMLNET_BOOL_KEY("non_saturating", train.non_saturating),
      AMLNET_REAL_KEY("divergence_threshold", train.divergence_threshold),
  };
  return table;
}

#undef AMLNET_INT_KEY
#undef AMLNET_REAL_KEY
#undef AMLNET_BOOL_KEY
#undef AMLNET_TEXT_KEY

template <typename T>
T rethrow_as_config(const std::string& key, const std::function<T()>& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

}  // namespace

data::Index covariate_count(const DataConfig& config) {
  if (config.source == "synthetic") return 8;
  return static_cast<data::Index>(config.csv_covariates.size()) +
         (config.calendar_features ? 4 : 0);
}

void resolve(RunConfig& c) {
  DataConfig& d = c.data;
  if (d.source != "synthetic" && d.source != "csv")
    throw ConfigError("config key 'source': expected synthetic or csv, got '" + d.source + "'");
  const auto g = rethrow_as_config<data::Granularity>(
      "granularity", [&] { return data::parse_granularity(d.granularity); });
  if (d.source == "synthetic")
    rethrow_as_config<data::SyntheticKind>("kind",
                                           [&] { return data::parse_synthetic_kind(d.kind); });
  if (d.source == "csv" && d.csv_path.empty())
    throw ConfigError("config key 'csv_path': required when source = csv");
  if (d.steps_per_day == 0) d.steps_per_day = 86400 / data::step_seconds(g);
  if (d.steps_per_day < 2) throw ConfigError("config key 'steps_per_day': must be >= 2");
  if (d.input_length < 1) throw ConfigError("config key 'input_length': must be >= 1");
  if (d.horizon < 1) throw ConfigError("config key 'horizon': must be >= 1");
  if (d.validation_steps < d.horizon)
    throw ConfigError("config key 'validation_steps': must be >= horizon");
  if (d.test_steps < d.horizon) throw ConfigError("config key 'test_steps': must be >= horizon");
  if (d.train_stride < 1) throw ConfigError("config key 'train_stride': must be >= 1");
  if (d.n_series < 1) throw ConfigError("config key 'n_series': must be >= 1");

  ModelConfig& m = c.model;
  m.input_length = static_cast<int>(d.input_length);
  m.horizon = static_cast<int>(d.horizon);
  m.n_covariates = static_cast<int>(covariate_count(d));
  if (m.start_token == 0) m.start_token = std::max(1, m.horizon / 2);
  m.init_seed = c.train.seed;
  if (d.source == "synthetic" && d.n_series > m.max_series)
    throw ConfigError("config key 'max_series': smaller than n_series");
  m.validate();
  c.train.validate();
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  c.model.start_token = 0;
  std::map<std::string, const Key*> by_name;
  for (const Key& k : keys()) by_name[k.name] = &k;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_name.find(key);
    if (it == by_name.end())
      throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(line_no) + ")");
    if (!seen.insert(key).second)
      throw ConfigError("config key '" + key + "' given twice (line " +
                        std::to_string(line_no) + ")");
    it->second->set(c, value);
  }
  resolve(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse_config(s.str());
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const Key& k : keys()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

PreparedData prepare_data(const DataConfig& config) {
  PreparedData out;
  const auto g = data::parse_granularity(config.granularity);
  out.steps_per_day =
      config.steps_per_day > 0 ? config.steps_per_day : 86400 / data::step_seconds(g);
  const data::Index window_length = config.input_length + config.horizon;
  data::SeriesDataset raw;
  if (config.source == "synthetic") {
    data::SyntheticSpec spec;
    spec.n_series = config.n_series;
    spec.t_total = config.t_total;
    spec.seed = config.data_seed;
    spec.kind = data::parse_synthetic_kind(config.kind);
    spec.granularity = g;
    spec.steps_per_day = out.steps_per_day;
    spec.window_length = window_length;
    spec.noise = config.noise;
    raw = data::synthesize_dataset(spec);
  } else {
    data::CsvSchema schema{config.csv_timestamp, config.csv_series, config.csv_target,
                           config.csv_covariates};
    raw = data::load_csv(config.csv_path, schema);
    if (config.calendar_features) {
      const Eigen::MatrixXd cal = data::build_calendar_features(raw.timestamps, g);
      for (auto& cov : raw.covariates) {
        Eigen::MatrixXd joined(cov.rows(), cov.cols() + cal.cols());
        joined << cov, cal;
        cov = std::move(joined);
      }
    }
  }
  out.split = data::chronological_split(raw.length(), config.validation_steps, config.test_steps);
  auto [normalized, stats] = data::normalize(raw, out.split.training);
  out.dataset = std::move(normalized);
  out.norm_stats = std::move(stats);
  out.windows = data::split(out.dataset, out.split, config.input_length, config.horizon,
                            config.train_stride);
  return out;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace amlnet
