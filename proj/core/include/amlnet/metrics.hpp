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

#ifndef AMLNET_METRICS_HPP_
#define AMLNET_METRICS_HPP_

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amlnet/data.hpp"
#include "amlnet/model.hpp"

namespace amlnet::metrics {

// Standard normal inverse CDF, p in (0, 1).
double normal_quantile(double p);

// mu + z_rho * sigma.
Eigen::VectorXd gaussian_quantile(const GaussianForecast& forecast, double rho);

// 2 * sum_t P_rho(y_t - yhat_t) / sum_t |y_t|, with the pinball
// P_rho(e) = rho * e for e > 0 and (rho - 1) * e otherwise.
// DomainError when sum |y| is zero.
double quantile_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat, double rho);

// Pools numerators and denominators over many windows.
class QuantileAccumulator {
 public:
  explicit QuantileAccumulator(double rho);

  // Windows with an all-zero target are skipped and counted.
  void add(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);
  double value() const;
  long skipped() const { return skipped_; }
  long windows() const { return windows_; }

 private:
  double rho_;
  double num_ = 0.0;
  double den_ = 0.0;
  long skipped_ = 0;
  long windows_ = 0;
};

double dtw(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

inline constexpr double kMapeThreshold = 1e-6;

// Mean of |y - yhat| / |y| over steps with |y| > threshold; nullopt when no
// step qualifies.
std::optional<double> mape(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat,
                           double threshold = kMapeThreshold);

// 1 - cos(h_i, h_j) over the rows of h.
Eigen::MatrixXd cosine_distance_matrix(const Eigen::MatrixXd& h);
// Mean over rows of the average of the k smallest off-diagonal entries.
double mean_knn_cosine(const Eigen::MatrixXd& distances, int k = 6);

struct Latency {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::vector<double> runs_ms;
};

// Wall-clock of predicting every window, repeated `runs` times after one
// untimed warm-up pass. Needs exclusive use of the machine to be meaningful.
Latency measure_latency(AMLNet& model, std::span<const data::ForecastWindow> windows,
                        DecoderKind decoder, int runs = 10);

// Runs the decoders back to back on each window, so within a repetition
// every decoder sees the same machine state; a decoder's run time is the sum
// of its per-window times.
std::vector<Latency> measure_latency_interleaved(AMLNet& model,
                                                 std::span<const data::ForecastWindow> windows,
                                                 std::span<const DecoderKind> decoders,
                                                 int runs = 10);

// Previous day's values copied forward (tiled when T_h exceeds a day).
Eigen::VectorXd persistence_baseline(const data::ForecastWindow& window, data::Index steps_per_day);

struct DecoderMetrics {
  std::string decoder;
  double rho50 = 0.0;
  double rho90 = 0.0;
  std::optional<double> mape;
  double mean_dtw = 0.0;
  std::optional<double> mean_knn_cosine;
  std::optional<Latency> latency;
  long windows = 0;
  long skipped_windows = 0;
};

// Scores forecasts against each window's y_future. `hidden`, when
// non-empty, holds one last-layer hidden matrix per window.
DecoderMetrics score(const std::string& decoder, std::span<const data::ForecastWindow> windows,
                     std::span<const GaussianForecast> forecasts,
                     std::span<const Eigen::MatrixXd> hidden = {});
// Point forecasts (sigma unused): rho90 equals rho50 of the point.
DecoderMetrics score_point(const std::string& decoder,
                           std::span<const data::ForecastWindow> windows,
                           std::span<const Eigen::VectorXd> points);

struct MetricReport {
  std::string dataset;
  std::vector<DecoderMetrics> rows;

  std::string to_json() const;
  // decoder,metric,value rows.
  std::string to_csv() const;
  const DecoderMetrics& row(const std::string& decoder) const;
};

}  // namespace amlnet::metrics

#endif  // AMLNET_METRICS_HPP_
