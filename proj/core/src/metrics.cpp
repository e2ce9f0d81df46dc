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

#include "amlnet/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "amlnet/errors.hpp"
#include "json.hpp"

namespace amlnet::metrics {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void require_same_length(const VectorXd& a, const VectorXd& b, const char* who) {
  if (a.size() != b.size())
    throw ContractError(std::string(who) + ": length mismatch (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
}

double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

Latency summarize(std::vector<double> runs) {
  Latency l;
  double total = 0.0;
  for (double r : runs) total += r;
  l.mean_ms = total / static_cast<double>(runs.size());
  l.std_ms = sample_std(runs, l.mean_ms);
  l.runs_ms = std::move(runs);
  return l;
}

double time_pass(AMLNet& model, std::span<const data::ForecastWindow> windows, DecoderKind d) {
  const auto start = std::chrono::steady_clock::now();
  for (const auto& w : windows) (void)model.predict(w, d);
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count();
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
  // Acklam's rational approximation, then one Halley step on erfc.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double lo = 0.02425;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - lo) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p == 0.5) return 0.0;
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

VectorXd gaussian_quantile(const GaussianForecast& forecast, double rho) {
  const double z = normal_quantile(rho);
  if ((forecast.sigma.array() <= 0.0).any()) throw DomainError("gaussian_quantile: sigma <= 0");
  if (z == 0.0) return forecast.mu;
  return forecast.mu + z * forecast.sigma;
}

double quantile_loss(const VectorXd& y, const VectorXd& yhat, double rho) {
  QuantileAccumulator acc(rho);
  require_same_length(y, yhat, "quantile_loss");
  if (y.cwiseAbs().sum() == 0.0) throw DomainError("quantile_loss: target is all zero");
  acc.add(y, yhat);
  return acc.value();
}

QuantileAccumulator::QuantileAccumulator(double rho) : rho_(rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
}

void QuantileAccumulator::add(const VectorXd& y, const VectorXd& yhat) {
  require_same_length(y, yhat, "quantile_loss");
  ++windows_;
  const double den = y.cwiseAbs().sum();
  if (den == 0.0) {
    ++skipped_;
    return;
  }
  double num = 0.0;
  for (Index t = 0; t < y.size(); ++t) {
    const double e = y(t) - yhat(t);
    num += e > 0.0 ? rho_ * e : (rho_ - 1.0) * e;
  }
  num_ += 2.0 * num;
  den_ += den;
}

double QuantileAccumulator::value() const {
  if (den_ == 0.0) throw DomainError("quantile_loss: no window with a nonzero target");
  return num_ / den_;
}

double dtw(const VectorXd& x, const VectorXd& y) {
  const Index n = x.size();
  const Index m = y.size();
  if (n == 0 || m == 0) throw DomainError("dtw: empty series");
  constexpr double inf = std::numeric_limits<double>::infinity();
  MatrixXd d = MatrixXd::Constant(n + 1, m + 1, inf);
  d(0, 0) = 0.0;
  for (Index i = 1; i <= n; ++i)
    for (Index j = 1; j <= m; ++j)
      d(i, j) = std::abs(x(i - 1) - y(j - 1)) +
                std::min({d(i - 1, j - 1), d(i - 1, j), d(i, j - 1)});
  return d(n, m);
}

std::optional<double> mape(const VectorXd& y, const VectorXd& yhat, double threshold) {
  require_same_length(y, yhat, "mape");
  double total = 0.0;
  long n = 0;
  for (Index t = 0; t < y.size(); ++t) {
    if (std::abs(y(t)) <= threshold) continue;
    total += std::abs(y(t) - yhat(t)) / std::abs(y(t));
    ++n;
  }
  if (n == 0) return std::nullopt;
  return total / static_cast<double>(n);
}

MatrixXd cosine_distance_matrix(const MatrixXd& h) {
  constexpr double eps = 1e-12;
  const VectorXd norms = h.rowwise().norm();
  const MatrixXd gram = h * h.transpose();
  const Index n = h.rows();
  MatrixXd out(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) {
        out(i, j) = 0.0;
        continue;
      }
      const double cos = gram(i, j) / std::max(norms(i) * norms(j), eps);
      out(i, j) = 1.0 - std::clamp(cos, -1.0, 1.0);
    }
  }
  return out;
}

double mean_knn_cosine(const MatrixXd& distances, int k) {
  const Index n = distances.rows();
  if (distances.cols() != n) throw ContractError("mean_knn_cosine: matrix must be square");
  if (k < 1 || n <= k)
    throw DomainError("mean_knn_cosine: need more than k=" + std::to_string(k) + " rows, got " +
                      std::to_string(n));
  double total = 0.0;
  std::vector<double> row;
  for (Index i = 0; i < n; ++i) {
    row.clear();
    for (Index j = 0; j < n; ++j)
      if (j != i) row.push_back(distances(i, j));
    std::partial_sort(row.begin(), row.begin() + k, row.end());
    double s = 0.0;
    for (int q = 0; q < k; ++q) s += row[static_cast<std::size_t>(q)];
    total += s / k;
  }
  return total / static_cast<double>(n);
}

Latency measure_latency(AMLNet& model, std::span<const data::ForecastWindow> windows,
                        DecoderKind decoder, int runs) {
  const DecoderKind one[] = {decoder};
  return measure_latency_interleaved(model, windows, one, runs).front();
}

std::vector<Latency> measure_latency_interleaved(AMLNet& model,
                                                 std::span<const data::ForecastWindow> windows,
                                                 std::span<const DecoderKind> decoders,
                                                 int runs) {
  if (runs < 2) throw ContractError("measure_latency: need at least 2 runs");
  if (windows.empty()) throw ContractError("measure_latency: no windows");
  for (DecoderKind d : decoders) (void)time_pass(model, windows, d);
  std::vector<std::vector<double>> times(decoders.size());
  for (int r = 0; r < runs; ++r) {
    std::vector<double> run(decoders.size(), 0.0);
    for (const auto& w : windows)
      for (std::size_t i = 0; i < decoders.size(); ++i)
        run[i] += time_pass(model, {&w, 1}, decoders[i]);
    for (std::size_t i = 0; i < decoders.size(); ++i) times[i].push_back(run[i]);
  }
  std::vector<Latency> out;
  for (auto& t : times) out.push_back(summarize(std::move(t)));
  return out;
}

VectorXd persistence_baseline(const data::ForecastWindow& window, data::Index steps_per_day) {
  const Index tl = window.input_length();
  const Index th = window.horizon();
  if (steps_per_day < 1 || tl < steps_per_day)
    throw ConfigError("persistence baseline: input length " + std::to_string(tl) +
                      " is shorter than one day (" + std::to_string(steps_per_day) + " steps)");
  VectorXd out(th);
  const Index start = tl - steps_per_day;
  for (Index t = 0; t < th; ++t) out(t) = window.y_past(start + t % steps_per_day);
  return out;
}

DecoderMetrics score(const std::string& decoder, std::span<const data::ForecastWindow> windows,
                     std::span<const GaussianForecast> forecasts,
                     std::span<const MatrixXd> hidden) {
  if (windows.size() != forecasts.size())
    throw ContractError("score: one forecast per window required");
  if (!hidden.empty() && hidden.size() != windows.size())
    throw ContractError("score: one hidden matrix per window required");
  QuantileAccumulator q50(0.5), q90(0.9);
  double dtw_total = 0.0, mape_total = 0.0;
  long mape_n = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const VectorXd& y = windows[i].y_future;
    const VectorXd median = gaussian_quantile(forecasts[i], 0.5);
    q50.add(y, median);
    q90.add(y, gaussian_quantile(forecasts[i], 0.9));
    dtw_total += dtw(median, y);
    if (auto m = mape(y, median)) {
      mape_total += *m;
      ++mape_n;
    }
  }
  DecoderMetrics out;
  out.decoder = decoder;
  out.rho50 = q50.value();
  out.rho90 = q90.value();
  if (mape_n > 0) out.mape = mape_total / static_cast<double>(mape_n);
  out.mean_dtw = dtw_total / static_cast<double>(windows.size());
  out.windows = static_cast<long>(windows.size());
  out.skipped_windows = q50.skipped();
  if (!hidden.empty()) {
    double knn = 0.0;
    for (const auto& h : hidden) knn += mean_knn_cosine(cosine_distance_matrix(h));
    out.mean_knn_cosine = knn / static_cast<double>(hidden.size());
  }
  return out;
}

DecoderMetrics score_point(const std::string& decoder,
                           std::span<const data::ForecastWindow> windows,
                           std::span<const VectorXd> points) {
  std::vector<GaussianForecast> f;
  f.reserve(points.size());
  for (const auto& p : points) f.push_back({p, VectorXd::Ones(p.size())});
  if (windows.size() != points.size())
    throw ContractError("score: one forecast per window required");
  DecoderMetrics out = score(decoder, windows, f);
  QuantileAccumulator q90(0.9);
  for (std::size_t i = 0; i < windows.size(); ++i) q90.add(windows[i].y_future, points[i]);
  out.rho90 = q90.value();
  return out;
}

namespace {

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["dataset"] = dataset;
  auto rows_json = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json o;
    o["decoder"] = r.decoder;
    o["rho50"] = r.rho50;
    o["rho90"] = r.rho90;
    o["mape"] = optional_json(r.mape);
    o["mean_dtw"] = r.mean_dtw;
    o["mean_knn_cosine"] = optional_json(r.mean_knn_cosine);
    if (r.latency) {
      o["latency_ms"] = {{"mean", r.latency->mean_ms}, {"std", r.latency->std_ms},
                         {"runs", r.latency->runs_ms}, {"exclusive", true}};
    }
    o["windows"] = r.windows;
    o["skipped_windows"] = r.skipped_windows;
    rows_json.push_back(std::move(o));
  }
  j["rows"] = std::move(rows_json);
  return j.dump(2) + "\n";
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out << "decoder,metric,value\n";
  const auto put = [&](const std::string& d, const char* m, const std::optional<double>& v) {
    out << d << ',' << m << ',' << (v ? format_double(*v) : std::string("NA")) << '\n';
  };
  for (const auto& r : rows) {
    put(r.decoder, "rho50", r.rho50);
    put(r.decoder, "rho90", r.rho90);
    put(r.decoder, "mape", r.mape);
    put(r.decoder, "mean_dtw", r.mean_dtw);
    put(r.decoder, "mean_knn_cosine", r.mean_knn_cosine);
    if (r.latency) {
      put(r.decoder, "latency_mean_ms", r.latency->mean_ms);
      put(r.decoder, "latency_std_ms", r.latency->std_ms);
    }
  }
  return out.str();
}

const DecoderMetrics& MetricReport::row(const std::string& decoder) const {
  for (const auto& r : rows)
    if (r.decoder == decoder) return r;
  throw ContractError("metric report has no row for " + decoder);
}

}  // namespace amlnet::metrics
