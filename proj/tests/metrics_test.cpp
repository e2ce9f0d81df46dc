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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>

#include "amlnet/errors.hpp"
#include "amlnet/metrics.hpp"
#include "support.hpp"

namespace amlnet {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd vec(std::initializer_list<double> v) {
  return VectorXd::Map(std::data(v), static_cast<Eigen::Index>(v.size()));
}

double phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double quantile_by_bisection(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (phi(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

TEST(GaussianQuantile, Examples) {
  const GaussianForecast f{vec({0.0, 1.5, -2.0}), vec({1.0, 0.3, 4.0})};
  EXPECT_EQ(metrics::gaussian_quantile(f, 0.5), f.mu);
  EXPECT_NEAR(metrics::normal_quantile(0.9), 1.2816, 1e-4);
  EXPECT_NEAR(metrics::gaussian_quantile(GaussianForecast{vec({0.0}), vec({1.0})}, 0.9)(0), 1.2816, 1e-4);
  const VectorXd q50 = metrics::gaussian_quantile(f, 0.5);
  const VectorXd q90 = metrics::gaussian_quantile(f, 0.9);
  EXPECT_TRUE((q50.array() <= q90.array()).all());
  EXPECT_THROW(metrics::gaussian_quantile(f, 0.0), DomainError);
  EXPECT_THROW(metrics::gaussian_quantile(f, 1.0), DomainError);
  EXPECT_THROW(metrics::normal_quantile(-0.1), DomainError);
}

TEST(GaussianQuantile, MatchesErfBisectionAcrossLevels) {
  for (double p : {1e-9, 1e-4, 0.01, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.9, 0.97575, 0.99, 1 - 1e-6}) {
    EXPECT_NEAR(metrics::normal_quantile(p), quantile_by_bisection(p), 1e-9) << p;
  }
  double prev = -INFINITY;
  for (double p = 0.001; p < 1.0; p += 0.001) {
    const double z = metrics::normal_quantile(p);
    EXPECT_GT(z, prev);
    prev = z;
  }
}

TEST(QuantileLoss, Examples) {
  EXPECT_EQ(metrics::quantile_loss(vec({2, -1, 3}), vec({2, -1, 3}), 0.5), 0.0);
  EXPECT_NEAR(metrics::quantile_loss(vec({2}), vec({1}), 0.5), 0.5, 1e-15);
  EXPECT_NEAR(metrics::quantile_loss(vec({2}), vec({1}), 0.9), 0.9, 1e-15);
  // over-forecast is weighted by 1 - rho
  EXPECT_NEAR(metrics::quantile_loss(vec({2}), vec({3}), 0.9), 0.1, 1e-15);
  EXPECT_THROW(metrics::quantile_loss(vec({0, 0}), vec({1, 1}), 0.5), DomainError);
  EXPECT_THROW(metrics::quantile_loss(vec({1}), vec({1, 2}), 0.5), ContractError);
}

TEST(QuantileLoss, MedianIsNormalizedAbsoluteError) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const VectorXd y = testing::random_matrix(7, 1, rng, 2.0).col(0);
    const VectorXd yhat = testing::random_matrix(7, 1, rng, 2.0).col(0);
    EXPECT_NEAR(metrics::quantile_loss(y, yhat, 0.5),
                (y - yhat).cwiseAbs().sum() / y.cwiseAbs().sum(), 1e-12);
  }
}

TEST(QuantileLoss, AccumulatorPoolsWindowsAndSkipsZeroTargets) {
  metrics::QuantileAccumulator acc(0.5);
  acc.add(vec({2}), vec({1}));
  acc.add(vec({0, 0}), vec({5, 5}));
  acc.add(vec({4, 4}), vec({4, 1}));
  EXPECT_EQ(acc.windows(), 3);
  EXPECT_EQ(acc.skipped(), 1);
  // (1 + 3) / (2 + 8)
  EXPECT_NEAR(acc.value(), 0.4, 1e-15);
  metrics::QuantileAccumulator empty(0.9);
  empty.add(vec({0}), vec({1}));
  EXPECT_THROW(empty.value(), DomainError);
}

double dtw_by_enumeration(const VectorXd& x, const VectorXd& y) {
  const auto n = x.size(), m = y.size();
  double best = INFINITY;
  std::function<void(Eigen::Index, Eigen::Index, double)> walk = [&](Eigen::Index i, Eigen::Index j,
                                                                     double cost) {
    cost += std::abs(x(i) - y(j));
    if (i == n - 1 && j == m - 1) {
      best = std::min(best, cost);
      return;
    }
    if (i + 1 < n) walk(i + 1, j, cost);
    if (j + 1 < m) walk(i, j + 1, cost);
    if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1, cost);
  };
  walk(0, 0, 0.0);
  return best;
}

TEST(Dtw, Examples) {
  EXPECT_EQ(metrics::dtw(vec({1, 5, 2}), vec({1, 5, 2})), 0.0);
  EXPECT_EQ(metrics::dtw(vec({0}), vec({1})), 1.0);
  EXPECT_EQ(metrics::dtw(vec({1, 2, 3}), vec({1, 2, 2, 3})), 0.0);
  EXPECT_EQ(dtw_by_enumeration(vec({1, 2, 3}), vec({1, 2, 2, 3})), 0.0);
  EXPECT_THROW(metrics::dtw(VectorXd(), vec({1})), DomainError);
  EXPECT_THROW(metrics::dtw(vec({1}), VectorXd()), DomainError);
}

TEST(Dtw, MatchesBruteForceEnumeration) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> len(1, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const VectorXd x = testing::random_matrix(len(rng), 1, rng, 3.0).col(0);
    const VectorXd y = testing::random_matrix(len(rng), 1, rng, 3.0).col(0);
    const double d = metrics::dtw(x, y);
    EXPECT_NEAR(d, dtw_by_enumeration(x, y), 1e-12);
    EXPECT_EQ(d, metrics::dtw(y, x));
    EXPECT_EQ(metrics::dtw(x, x), 0.0);
    EXPECT_GE(d, 0.0);
    if (x.size() == y.size()) EXPECT_LE(d, (x - y).cwiseAbs().sum() + 1e-12);
  }
}

TEST(Mape, Examples) {
  EXPECT_EQ(metrics::mape(vec({1, 2}), vec({1, 2})), 0.0);
  EXPECT_EQ(metrics::mape(vec({2}), vec({1})), 0.5);
  EXPECT_EQ(metrics::mape(vec({1, 0}), vec({2, 5})), 1.0);
  EXPECT_FALSE(metrics::mape(vec({0, 1e-7}), vec({2, 5})).has_value());
}

TEST(Cosine, Examples) {
  MatrixXd same(3, 2);
  same << 1, 2, 1, 2, 1, 2;
  EXPECT_LT(metrics::cosine_distance_matrix(same).cwiseAbs().maxCoeff(), 1e-15);
  MatrixXd ortho(2, 2);
  ortho << 1, 0, 0, 3;
  EXPECT_NEAR(metrics::cosine_distance_matrix(ortho)(0, 1), 1.0, 1e-15);
  MatrixXd neg(2, 3);
  neg << 1, -2, 3, -1, 2, -3;
  EXPECT_NEAR(metrics::cosine_distance_matrix(neg)(1, 0), 2.0, 1e-15);
  MatrixXd zero_row = MatrixXd::Zero(2, 3);
  zero_row(1, 0) = 1.0;
  const MatrixXd d = metrics::cosine_distance_matrix(zero_row);
  EXPECT_TRUE(d.allFinite());
}

TEST(Cosine, PropertiesOnRandomStates) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    MatrixXd h = testing::random_matrix(9, 5, rng, 2.0);
    const MatrixXd d = metrics::cosine_distance_matrix(h);
    EXPECT_LT((d - d.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT(d.diagonal().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(d.minCoeff(), -1e-12);
    EXPECT_LE(d.maxCoeff(), 2.0 + 1e-12);
    h.row(4) *= 7.5;
    EXPECT_LT((metrics::cosine_distance_matrix(h) - d).cwiseAbs().maxCoeff(), 1e-12);
  }
}

double knn_by_sorting(const MatrixXd& d, int k) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    std::vector<double> row;
    for (Eigen::Index j = 0; j < d.cols(); ++j)
      if (j != i) row.push_back(d(i, j));
    std::sort(row.begin(), row.end());
    double s = 0.0;
    for (int t = 0; t < k; ++t) s += row[static_cast<std::size_t>(t)];
    total += s / k;
  }
  return total / static_cast<double>(d.rows());
}

TEST(Knn, Examples) {
  EXPECT_EQ(metrics::mean_knn_cosine(MatrixXd::Zero(8, 8)), 0.0);
  MatrixXd c = MatrixXd::Constant(8, 8, 0.37);
  c.diagonal().setZero();
  EXPECT_NEAR(metrics::mean_knn_cosine(c), 0.37, 1e-15);
  MatrixXd outlier = MatrixXd::Constant(8, 8, 0.1);
  outlier.row(7).setConstant(0.9);
  outlier.col(7).setConstant(0.9);
  outlier.diagonal().setZero();
  // rows 0..6 keep their six 0.1 entries; row 7 only has 0.9
  EXPECT_NEAR(metrics::mean_knn_cosine(outlier), (7 * 0.1 + 0.9) / 8.0, 1e-15);
  EXPECT_NEAR(metrics::mean_knn_cosine(outlier), knn_by_sorting(outlier, 6), 1e-15);
  EXPECT_THROW(metrics::mean_knn_cosine(MatrixXd::Zero(6, 6)), DomainError);
  EXPECT_THROW(metrics::mean_knn_cosine(MatrixXd::Zero(5, 5), 5), DomainError);
  EXPECT_NO_THROW(metrics::mean_knn_cosine(MatrixXd::Zero(7, 7)));
}

TEST(Knn, MatchesSortingOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const MatrixXd d = metrics::cosine_distance_matrix(testing::random_matrix(12, 4, rng));
    for (int k : {1, 3, 6, 11})
      EXPECT_NEAR(metrics::mean_knn_cosine(d, k), knn_by_sorting(d, k), 1e-12);
  }
}

TEST(Persistence, CopiesTheLastDay) {
  data::ForecastWindow w;
  w.y_past = vec({9, 9, 1, 2, 3, 4});
  w.x_all = MatrixXd::Zero(6 + 5, 1);
  const VectorXd f = metrics::persistence_baseline(w, 4);
  EXPECT_EQ(f, vec({1, 2, 3, 4, 1}));
  w.x_all = MatrixXd::Zero(6 + 3, 1);
  EXPECT_EQ(metrics::persistence_baseline(w, 4), vec({1, 2, 3}));
  EXPECT_THROW(metrics::persistence_baseline(w, 7), ConfigError);
}

TEST(Persistence, ExactOnDailyPeriodicSeries) {
  data::ForecastWindow w;
  w.y_past.resize(48);
  for (int t = 0; t < 48; ++t) w.y_past(t) = 2.0 + std::sin(2.0 * std::numbers::pi * t / 24.0);
  w.x_all = MatrixXd::Zero(48 + 12, 1);
  w.y_future.resize(12);
  for (int t = 0; t < 12; ++t) w.y_future(t) = 2.0 + std::sin(2.0 * std::numbers::pi * (48 + t) / 24.0);
  EXPECT_LT(metrics::quantile_loss(w.y_future, metrics::persistence_baseline(w, 24), 0.5), 1e-12);
}

// E|a + n| for n ~ N(0, s^2).
double expected_abs(double a, double s) {
  return s * std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * a * a / (s * s)) +
         a * (1.0 - 2.0 * phi(-a / s));
}

TEST(Persistence, SineMixLossTracksNoiseScale) {
  data::SyntheticSpec spec;
  spec.n_series = 1;
  spec.t_total = 24 * 7 * 12;
  spec.seed = 7;
  spec.noise = 0.3;
  const data::SeriesDataset noisy = data::synthesize_dataset(spec);
  spec.noise = 0.0;
  const data::SeriesDataset clean = data::synthesize_dataset(spec);
  const auto wn = data::window(noisy, 24, 12, 12);
  const auto wc = data::window(clean, 24, 12, 12);
  ASSERT_EQ(wn.size(), wc.size());
  metrics::QuantileAccumulator acc(0.5);
  double expected_num = 0.0, den = 0.0;
  const double s = 0.3 * std::numbers::sqrt2;  // difference of two independent noise draws
  for (std::size_t i = 0; i < wn.size(); ++i) {
    acc.add(wn[i].y_future, metrics::persistence_baseline(wn[i], 24));
    const VectorXd drift = wc[i].y_future - metrics::persistence_baseline(wc[i], 24);
    for (Eigen::Index t = 0; t < drift.size(); ++t) expected_num += expected_abs(drift(t), s);
    den += wn[i].y_future.cwiseAbs().sum();
  }
  const double expected = expected_num / den;
  EXPECT_NEAR(acc.value(), expected, 0.05 * expected);
  EXPECT_GT(acc.value(), 0.0);
}

TEST(Latency, MeanPositiveStdNonNegative) {
  AMLNet m(testing::toy_config());
  std::mt19937_64 rng(5);
  std::vector<data::ForecastWindow> ws;
  for (int i = 0; i < 4; ++i) ws.push_back(testing::random_window(m.config(), rng, i, false));
  const metrics::Latency l = metrics::measure_latency(m, ws, DecoderKind::kS, 3);
  EXPECT_GT(l.mean_ms, 0.0);
  EXPECT_GE(l.std_ms, 0.0);
  EXPECT_EQ(l.runs_ms.size(), 3u);
  EXPECT_THROW(metrics::measure_latency(m, ws, DecoderKind::kS, 1), ContractError);
}

std::vector<data::ForecastWindow> latency_windows(const ModelConfig& cfg, int n) {
  std::mt19937_64 rng(6);
  std::vector<data::ForecastWindow> ws;
  for (int i = 0; i < n; ++i) ws.push_back(testing::random_window(cfg, rng, i % cfg.max_series, false));
  return ws;
}

TEST(Latency, AutoregressiveDecoderIsSlowestAtLongHorizons) {
  ModelConfig cfg = testing::toy_config();
  cfg.horizon = 20;
  cfg.start_token = 3;
  AMLNet m(cfg);
  const auto ws = latency_windows(cfg, 6);
  const DecoderKind order[] = {DecoderKind::kS, DecoderKind::kP1};
  const auto l = metrics::measure_latency_interleaved(m, ws, order, 5);
  EXPECT_LT(l[0].mean_ms, l[1].mean_ms);
}

TEST(Latency, DoublingHorizonSlowsAutoregressiveDecoding) {
  ModelConfig short_cfg = testing::toy_config();
  short_cfg.horizon = 10;
  short_cfg.start_token = 3;
  ModelConfig long_cfg = short_cfg;
  long_cfg.horizon = 20;
  AMLNet a(short_cfg), b(long_cfg);
  const double ta = metrics::measure_latency(a, latency_windows(short_cfg, 6), DecoderKind::kP1, 5).mean_ms;
  const double tb = metrics::measure_latency(b, latency_windows(long_cfg, 6), DecoderKind::kP1, 5).mean_ms;
  EXPECT_GT(tb, ta);
}

TEST(Score, FieldsAndSerialization) {
  std::vector<data::ForecastWindow> ws(2);
  for (auto& w : ws) {
    w.y_past = vec({1, 1});
    w.x_all = MatrixXd::Zero(4, 1);
  }
  ws[0].y_future = vec({2, 4});
  ws[1].y_future = vec({0, 0});
  const std::vector<GaussianForecast> f{{vec({1, 4}), vec({1, 1})}, {vec({0, 1}), vec({1, 1})}};
  std::mt19937_64 rng(7);
  const std::vector<MatrixXd> hidden{testing::random_matrix(8, 3, rng), testing::random_matrix(8, 3, rng)};
  const metrics::DecoderMetrics r = metrics::score("S", ws, f, hidden);
  EXPECT_EQ(r.windows, 2);
  EXPECT_EQ(r.skipped_windows, 1);
  EXPECT_NEAR(r.rho50, 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(r.rho90, metrics::quantile_loss(ws[0].y_future, metrics::gaussian_quantile(f[0], 0.9), 0.9), 1e-15);
  EXPECT_NEAR(*r.mape, 0.25, 1e-15);
  EXPECT_NEAR(r.mean_dtw, 0.5 * (metrics::dtw(ws[0].y_future, f[0].mu) + metrics::dtw(ws[1].y_future, f[1].mu)),
              1e-15);
  ASSERT_TRUE(r.mean_knn_cosine.has_value());
  const double knn = 0.5 * (metrics::mean_knn_cosine(metrics::cosine_distance_matrix(hidden[0])) +
                            metrics::mean_knn_cosine(metrics::cosine_distance_matrix(hidden[1])));
  EXPECT_NEAR(*r.mean_knn_cosine, knn, 1e-15);

  const metrics::DecoderMetrics p = metrics::score_point("persistence", ws, std::vector<VectorXd>{vec({1, 1}), vec({1, 1})});
  EXPECT_NEAR(p.rho50, 4.0 / 6.0, 1e-15);
  EXPECT_EQ(p.rho90, metrics::quantile_loss(ws[0].y_future, vec({1, 1}), 0.9));
  EXPECT_FALSE(p.mean_knn_cosine.has_value());

  metrics::MetricReport report{"toy", {r, p}};
  const std::string csv = report.to_csv();
  EXPECT_EQ(csv.rfind("decoder,metric,value\n", 0), 0u);
  EXPECT_NE(csv.find("persistence,mean_knn_cosine,NA"), std::string::npos);
  EXPECT_NE(csv.find("S,rho50,"), std::string::npos);
  const std::string json = report.to_json();
  EXPECT_NE(json.find("\"dataset\": \"toy\""), std::string::npos);
  EXPECT_EQ(report.row("S").decoder, "S");
  EXPECT_THROW(report.row("P9"), ContractError);
  EXPECT_THROW(metrics::score("S", ws, std::vector<GaussianForecast>{f[0]}), ContractError);
}

}  // namespace
}  // namespace amlnet
