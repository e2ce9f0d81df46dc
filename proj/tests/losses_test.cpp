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

#include <cmath>
#include <numbers>
#include <optional>
#include <random>

#include "amlnet/errors.hpp"
#include "amlnet/losses.hpp"
#include "amlnet/model.hpp"
#include "support.hpp"

namespace amlnet {
namespace {

using ad::Matrix;
using ad::Tape;
using ad::Var;
using losses::BatchTrace;
using losses::HintOptions;
using losses::LayerMap;
using testing::gradient_error;
using testing::kFdTolerance;
using testing::random_matrix;
using testing::random_window;
using testing::toy_config;
using testing::toy_config_mapped;

const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

GaussianForecast gaussian(std::initializer_list<double> mu, std::initializer_list<double> sigma) {
  GaussianForecast f;
  f.mu = Eigen::VectorXd::Map(std::data(mu), static_cast<Eigen::Index>(mu.size()));
  f.sigma = Eigen::VectorXd::Map(std::data(sigma), static_cast<Eigen::Index>(sigma.size()));
  return f;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  return Eigen::VectorXd::Map(std::data(v), static_cast<Eigen::Index>(v.size()));
}

double log_normal_pdf(double x, double mu, double s) {
  const double z = (x - mu) / s;
  return -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// Composite Simpson integration of p log(p/q) over [lo, hi].
double kl_by_quadrature(double m1, double s1, double m2, double s2, double lo, double hi) {
  const int n = 40000;
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double lp = log_normal_pdf(x, m1, s1);
    const double f = std::exp(lp) * (lp - log_normal_pdf(x, m2, s2));
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += w * f;
  }
  return acc * h / 3.0;
}

TEST(Nll, Examples) {
  EXPECT_NEAR(losses::nll(gaussian({1, 2, 3}, {1, 1, 1}), vec({1, 2, 3})),
              0.5 * std::log(2.0 * std::numbers::pi), 1e-12);
  EXPECT_NEAR(losses::nll(gaussian({1}, {1}), vec({0})),
              0.5 * (std::log(2.0 * std::numbers::pi) + 1.0), 1e-12);
  EXPECT_NEAR(losses::nll(gaussian({1}, {1}), vec({0})), 1.4189, 1e-4);
  for (double s : {1.0, 1.5, 2.0, 4.0}) {
    EXPECT_LT(losses::nll(gaussian({0.3}, {s}), vec({0.3})),
              losses::nll(gaussian({0.3}, {2.0 * s}), vec({0.3})));
  }
}

TEST(Nll, Errors) {
  EXPECT_THROW(losses::nll(gaussian({0}, {0}), vec({0})), NumericError);
  EXPECT_THROW(losses::nll(gaussian({NAN}, {1}), vec({0})), NumericError);
  EXPECT_THROW(losses::nll(gaussian({0}, {1}), vec({0, 1})), ContractError);
}

TEST(Nll, RecordedMatchesClosedForm) {
  std::mt19937_64 rng(1);
  const Matrix mu = random_matrix(5, 1, rng);
  const Matrix s = random_matrix(5, 1, rng).array().abs() + 0.2;
  const Eigen::VectorXd y = random_matrix(5, 1, rng).col(0);
  Tape tape;
  const double recorded = losses::nll(tape.constant(mu), tape.constant(s), y).scalar();
  EXPECT_NEAR(recorded, losses::nll(GaussianForecast{mu.col(0), s.col(0)}, y), 1e-12);
}

TEST(Kl, Examples) {
  EXPECT_EQ(losses::gaussian_kl(0.7, 1.3, 0.7, 1.3), 0.0);
  EXPECT_NEAR(losses::gaussian_kl(0, 1, 1, 1), 0.5, 1e-12);
  EXPECT_NEAR(losses::gaussian_kl(0, 1, 0, 4), std::log(4.0) + 1.0 / 32.0 - 0.5, 1e-12);
  EXPECT_NEAR(kl_by_quadrature(0, 1, 1, 1, -12, 12), 0.5, 1e-6);
  EXPECT_THROW(losses::gaussian_kl(0, 0, 0, 1), NumericError);
  EXPECT_THROW(losses::gaussian_kl(0, 1, 0, -1), NumericError);
}

TEST(Kl, VarianceRatioExample) {
  // N(0,1) against N(0, variance 4)
  EXPECT_NEAR(losses::gaussian_kl(0, 1, 0, 2), std::log(2.0) + 1.0 / 8.0 - 0.5, 1e-12);
  EXPECT_NEAR(losses::gaussian_kl(0, 1, 0, 2), 0.3181, 1e-4);
  EXPECT_NEAR(kl_by_quadrature(0, 1, 0, 2, -12, 12), 0.3181471805599453, 1e-6);
}

TEST(Kl, MatchesQuadratureOnGrid) {
  const double mus[] = {-3.0, -1.5, 0.0, 1.5, 3.0};
  const double sigmas[] = {0.3, 0.975, 1.65, 2.325, 3.0};
  double worst = 0.0;
  for (double m1 : mus)
    for (double s1 : sigmas)
      for (double m2 : mus)
        for (double s2 : sigmas) {
          const double closed = losses::gaussian_kl(m1, s1, m2, s2);
          const double num = kl_by_quadrature(m1, s1, m2, s2, m1 - 14 * s1, m1 + 14 * s1);
          worst = std::max(worst, std::abs(closed - num));
          EXPECT_GE(closed, 0.0);
          if (m1 != m2 || s1 != s2) EXPECT_GT(closed, 0.0);
        }
  EXPECT_LT(worst, 1e-6);
}

TEST(OutcomeWeight, Examples) {
  const Eigen::VectorXd y = vec({2.0});
  EXPECT_NEAR(losses::outcome_weight(gaussian({2.0}, {kInvSqrt2Pi}), y)(0), 1.0, 1e-12);
  EXPECT_EQ(losses::outcome_weight(gaussian({2.0}, {0.01}), y)(0), 1.0);
  EXPECT_NEAR(losses::outcome_weight(gaussian({2.0}, {1.0}), y)(0), 0.3989422804, 1e-9);
  double prev = 2.0;
  for (double z : {0.0, 1.0, 2.0, 4.0}) {
    const double w = losses::outcome_weight(gaussian({2.0 + 1.7 * z}, {1.7}), y)(0);
    EXPECT_GT(w, 0.0);
    EXPECT_LE(w, 1.0);
    EXPECT_LT(w, prev);
    prev = w;
  }
}

TEST(OutcomeKd, Examples) {
  const Eigen::VectorXd y = vec({0.0});
  const auto p1 = gaussian({0.0}, {1.0});
  const auto p2 = gaussian({1.0}, {1.0});
  const auto same = losses::outcome_kd_losses(p1, p1, p2, y, 1.0);
  EXPECT_EQ(same.p1, 0.0);
  EXPECT_EQ(same.p2, 0.0);
  const auto off = losses::outcome_kd_losses(p1, p2, p2, y, 0.0);
  EXPECT_EQ(off.p1, 0.0);
  EXPECT_EQ(off.p2, 0.0);
  EXPECT_EQ(off.s, 0.0);
  const auto r = losses::outcome_kd_losses(p1, p2, p1, y, 1.0);
  EXPECT_NEAR(r.p1, kInvSqrt2Pi * std::exp(-0.5) * 0.5, 1e-12);
  EXPECT_NEAR(r.p1, 0.1210, 1e-4);
  // student equals P1: only the P2 teacher contributes
  EXPECT_NEAR(r.s, r.p1, 1e-12);
}

TEST(OutcomeKd, RecordedMatchesClosedFormAndDetachesTeacher) {
  std::mt19937_64 rng(2);
  ad::Parameter tm("tm", random_matrix(4, 1, rng));
  ad::Parameter ts("ts", random_matrix(4, 1, rng).array().abs() + 0.3);
  ad::Parameter sm("sm", random_matrix(4, 1, rng));
  ad::Parameter ss("ss", random_matrix(4, 1, rng).array().abs() + 0.3);
  const Eigen::VectorXd y = random_matrix(4, 1, rng).col(0);
  Tape tape;
  Var loss = losses::outcome_kd(tape.param(tm), tape.param(ts), tape.param(sm), tape.param(ss), y, 0.7);
  const GaussianForecast teacher{tm.value.col(0), ts.value.col(0)};
  const GaussianForecast student{sm.value.col(0), ss.value.col(0)};
  const double expected = 0.7 / 4.0 *
      losses::outcome_weight(teacher, y).dot(losses::gaussian_kl(teacher, student));
  EXPECT_NEAR(loss.scalar(), expected, 1e-12);
  tape.backward(loss);
  EXPECT_EQ(tm.grad.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(ts.grad.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(sm.grad.cwiseAbs().maxCoeff(), 0.0);
  const auto f = [&](Tape& t) {
    return losses::outcome_kd(t.constant(tm.value), t.constant(ts.value), t.param(sm), t.param(ss), y, 0.7);
  };
  EXPECT_LT(gradient_error(f, {&sm, &ss}), kFdTolerance);
  EXPECT_THROW(losses::outcome_kd(tape.param(tm), tape.param(ts), tape.param(sm), tape.param(ss), y, -1.0),
               ConfigError);
}

TEST(LayerMap, Examples) {
  const LayerMap a = losses::layer_map(4, 2);
  EXPECT_EQ(a.forward, (std::vector<std::pair<int, int>>{{1, 3}, {4, 4}}));
  EXPECT_EQ(a.inverse, (std::vector<std::vector<int>>{{1}, {1}, {1}, {2}}));
  const LayerMap b = losses::layer_map(4, 3);
  EXPECT_EQ(b.forward, (std::vector<std::pair<int, int>>{{1, 2}, {2, 3}, {3, 4}}));
  const LayerMap c = losses::layer_map(3, 2);
  EXPECT_EQ(c.forward, (std::vector<std::pair<int, int>>{{1, 2}, {3, 3}}));
  EXPECT_THROW(losses::layer_map(4, 1), ConfigError);
  EXPECT_THROW(losses::layer_map(3, 3), ConfigError);
  EXPECT_THROW(losses::layer_map(3, 0), ConfigError);
}

TEST(LayerMap, ExhaustiveCoverageAndInverse) {
  for (int n_d = 3; n_d <= 8; ++n_d) {
    for (int n_s = 2; n_s < n_d; ++n_s) {
      const LayerMap m = losses::layer_map(n_d, n_s);
      ASSERT_EQ(static_cast<int>(m.forward.size()), n_s);
      ASSERT_EQ(static_cast<int>(m.inverse.size()), n_d);
      std::vector<int> covered(static_cast<std::size_t>(n_d + 1), 0);
      const int stride = (n_d - 1) / (n_s - 1);
      for (int i = 1; i <= n_s; ++i) {
        const auto [lo, hi] = m.forward[static_cast<std::size_t>(i - 1)];
        EXPECT_EQ(lo, 1 + (i - 1) * stride);
        EXPECT_LE(lo, hi);
        EXPECT_LE(hi, n_d);
        for (int j = lo; j <= hi; ++j) ++covered[static_cast<std::size_t>(j)];
      }
      for (int j = 1; j <= n_d; ++j) {
        EXPECT_GT(covered[static_cast<std::size_t>(j)], 0) << n_d << "," << n_s << " j=" << j;
        for (int i = 1; i <= n_s; ++i) {
          const auto [lo, hi] = m.forward[static_cast<std::size_t>(i - 1)];
          const auto& inv = m.inverse[static_cast<std::size_t>(j - 1)];
          const bool in_forward = lo <= j && j <= hi;
          const bool in_inverse = std::find(inv.begin(), inv.end(), i) != inv.end();
          EXPECT_EQ(in_forward, in_inverse);
        }
      }
    }
  }
}

ModelConfig deep_config() {
  ModelConfig cfg = toy_config();
  cfg.n_e = 4;
  cfg.n_d = 4;
  cfg.n_s = 2;
  return cfg;
}

BatchTrace random_trace(Tape& tape, const ModelConfig& cfg, int batch, std::mt19937_64& rng) {
  BatchTrace t;
  const auto fill = [&](std::vector<std::vector<Var>>& bank, int depth) {
    bank.resize(static_cast<std::size_t>(depth));
    for (auto& layer : bank)
      for (int b = 0; b < batch; ++b) layer.push_back(tape.constant(random_matrix(cfg.horizon, cfg.d_hid, rng)));
  };
  fill(t.p1, cfg.n_d);
  fill(t.p2, cfg.n_d);
  fill(t.s, cfg.n_s);
  return t;
}

void make_half(AMLNet& m) {
  for (ad::Parameter* p : m.discriminator_parameters())
    if (p->name.ends_with(".linear.weight") || p->name.ends_with(".linear.bias")) p->value.setZero();
}

TEST(Hint, StudentCallCountAndSign) {
  const ModelConfig cfg = deep_config();
  AMLNet m(cfg);
  std::mt19937_64 rng(3);
  Tape tape;
  const BatchTrace trace = random_trace(tape, cfg, 3, rng);
  const LayerMap map = losses::layer_map(4, 2);
  int calls = -1;
  const Var s = losses::hint_loss_s(tape, m, trace, map, {.alpha_h = 0.5}, &calls);
  EXPECT_EQ(calls, 8);
  EXPECT_LT(s.scalar(), 0.0);
  EXPECT_TRUE(std::isfinite(s.scalar()));
  EXPECT_LT(losses::hint_loss_p1(tape, m, trace, {.alpha_h = 0.5}).scalar(), 0.0);
  EXPECT_LT(losses::hint_loss_p2(tape, m, trace, {.alpha_h = 0.5}).scalar(), 0.0);
  EXPECT_EQ(losses::hint_loss_s(tape, m, trace, map, {.alpha_h = 0.0}, &calls).scalar(), 0.0);
  EXPECT_EQ(calls, 0);
  EXPECT_EQ(losses::hint_loss_p1(tape, m, trace, {.alpha_h = 0.0}).scalar(), 0.0);
  EXPECT_EQ(losses::hint_loss_p2(tape, m, trace, {.alpha_h = 0.0}).scalar(), 0.0);
}

TEST(Hint, ValuesAtHalf) {
  const ModelConfig cfg = deep_config();
  AMLNet m(cfg);
  make_half(m);
  std::mt19937_64 rng(4);
  Tape tape;
  const BatchTrace trace = random_trace(tape, cfg, 2, rng);
  const double l = std::log(0.5);
  EXPECT_NEAR(losses::hint_loss_p1(tape, m, trace, {.alpha_h = 0.5}).scalar(), 4 * 0.5 * l, 1e-12);
  EXPECT_NEAR(losses::hint_loss_s(tape, m, trace, losses::layer_map(4, 2), {.alpha_h = 0.5}).scalar(),
              8 * 0.5 * l, 1e-12);
  EXPECT_NEAR(losses::hint_loss_p2(tape, m, trace, {.alpha_h = 0.5, .non_saturating = true}).scalar(),
              -4 * 0.5 * l, 1e-12);
}

TEST(Hint, MapDepthMismatchIsContractError) {
  const ModelConfig cfg = deep_config();
  AMLNet m(cfg);
  std::mt19937_64 rng(5);
  Tape tape;
  BatchTrace trace = random_trace(tape, cfg, 2, rng);
  EXPECT_THROW(losses::hint_loss_s(tape, m, trace, losses::layer_map(4, 3), {.alpha_h = 1.0}),
               ContractError);
  EXPECT_THROW(losses::hint_loss_s(tape, m, trace, losses::layer_map(5, 2), {.alpha_h = 1.0}),
               ContractError);
  trace.p1.pop_back();
  EXPECT_THROW(losses::hint_loss_p1(tape, m, trace, {.alpha_h = 1.0}), ContractError);
}

TEST(DiscriminatorLoss, ThreeLogTwoAtHalf) {
  const ModelConfig cfg = toy_config_mapped();  // n_d 3, n_s 2: inverse = {1},{1},{2}
  AMLNet m(cfg);
  make_half(m);
  std::mt19937_64 rng(6);
  Tape tape;
  const BatchTrace trace = random_trace(tape, cfg, 2, rng);
  const LayerMap map = losses::layer_map(3, 2);
  for (DecoderKind bank : {DecoderKind::kP1, DecoderKind::kP2}) {
    for (int layer = 1; layer <= 3; ++layer) {
      for (NormMode mode : {NormMode::kEval, NormMode::kTrainFrozen}) {
        EXPECT_NEAR(losses::discriminator_loss(tape, m, bank, layer, trace, &map, mode).scalar(),
                    3.0 * std::log(2.0), 1e-12);
        EXPECT_NEAR(losses::discriminator_loss(tape, m, bank, layer, trace, nullptr, mode).scalar(),
                    2.0 * std::log(2.0), 1e-12);
      }
    }
  }
  EXPECT_THROW(losses::discriminator_loss(tape, m, DecoderKind::kP1, 4, trace, &map, NormMode::kEval),
               ContractError);
}

TEST(DiscriminatorLoss, PerfectDiscriminatorApproachesZero) {
  std::vector<double> losses_at;
  for (double margin : {2.0, 6.0, 12.0}) {
    Tape tape;
    Var real = ad::sigmoid(tape.constant(Matrix::Constant(3, 1, margin)));
    Var fake = ad::sigmoid(tape.constant(Matrix::Constant(3, 1, -margin)));
    losses_at.push_back(losses::discriminator_objective(real, fake, {fake}).scalar());
  }
  EXPECT_GT(losses_at[0], losses_at[1]);
  EXPECT_GT(losses_at[1], losses_at[2]);
  EXPECT_GT(losses_at[2], 0.0);
  EXPECT_LT(losses_at[2], 1e-4);
}

TEST(DiscriminatorLoss, ClampsExtremeProbabilities) {
  Tape tape;
  Var one = tape.constant(Matrix::Ones(2, 1));
  Var zero = tape.constant(Matrix::Zero(2, 1));
  const double worst = losses::discriminator_objective(zero, one, {one}).scalar();
  EXPECT_TRUE(std::isfinite(worst));
  EXPECT_NEAR(worst, -3.0 * std::log(losses::kProbEps), 1e-6);
  EXPECT_TRUE(std::isfinite(losses::generator_objective(one, 1.0).scalar()));
}

struct Forward {
  BatchTrace trace;
  std::vector<DecodeResult> p1, p2, s;
};

Forward run(Tape& tape, AMLNet& m, const std::vector<data::ForecastWindow>& windows) {
  Forward f;
  const auto n_d = static_cast<std::size_t>(m.config().n_d);
  f.trace.p1.resize(n_d);
  f.trace.p2.resize(n_d);
  f.trace.s.resize(static_cast<std::size_t>(m.config().n_s));
  const auto push = [](std::vector<std::vector<Var>>& bank, const DecodeResult& r) {
    for (std::size_t i = 0; i < bank.size(); ++i) bank[i].push_back(r.hidden[i]);
  };
  for (const auto& w : windows) {
    Var h = m.encode(tape, w, {});
    f.p1.push_back(m.decode_p1_teacher_forced(tape, w, h, {}));
    f.p2.push_back(m.decode_p2(tape, w, h, {}));
    f.s.push_back(m.decode_s(tape, w, h, {}));
    push(f.trace.p1, f.p1.back());
    push(f.trace.p2, f.p2.back());
    push(f.trace.s, f.s.back());
  }
  return f;
}

std::vector<data::ForecastWindow> windows_for(const ModelConfig& cfg, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<data::ForecastWindow> out;
  for (int i = 0; i < n; ++i) out.push_back(random_window(cfg, rng, i % cfg.max_series));
  return out;
}

TEST(Isolation, StudentOutcomeKdLeavesTeachersUntouched) {
  AMLNet m(toy_config_mapped());
  const auto ws = windows_for(m.config(), 2, 7);
  Tape tape;
  Forward f = run(tape, m, ws);
  Var loss = losses::outcome_kd(f.p1[0].mu, f.p1[0].sigma, f.s[0].mu, f.s[0].sigma, ws[0].y_future, 0.5);
  loss = ad::add(loss, losses::outcome_kd(f.p2[1].mu, f.p2[1].sigma, f.s[1].mu, f.s[1].sigma,
                                          ws[1].y_future, 0.5));
  for (ad::Parameter* p : m.all_parameters()) p->zero_grad();
  tape.backward(loss);
  for (ad::Parameter* p : m.p1_parameters()) EXPECT_EQ(p->grad.cwiseAbs().maxCoeff(), 0.0) << p->name;
  for (ad::Parameter* p : m.p2_parameters()) EXPECT_EQ(p->grad.cwiseAbs().maxCoeff(), 0.0) << p->name;
  double s_grad = 0.0;
  for (ad::Parameter* p : m.s_parameters()) s_grad += p->grad.norm();
  EXPECT_GT(s_grad, 0.0);
  for (ad::Parameter* p : m.all_parameters()) p->zero_grad();
}

TEST(Isolation, HintLossesLeaveDiscriminatorsUntouched) {
  AMLNet m(toy_config_mapped());
  const auto ws = windows_for(m.config(), 2, 8);
  Tape tape;
  Forward f = run(tape, m, ws);
  const HintOptions opt{.alpha_h = 0.5};
  Var loss = ad::add(losses::hint_loss_p1(tape, m, f.trace, opt), losses::hint_loss_p2(tape, m, f.trace, opt));
  loss = ad::add(loss, losses::hint_loss_s(tape, m, f.trace, losses::layer_map(3, 2), opt));
  for (ad::Parameter* p : m.all_parameters()) p->zero_grad();
  tape.backward(loss);
  for (ad::Parameter* p : m.discriminator_parameters())
    EXPECT_EQ(p->grad.cwiseAbs().maxCoeff(), 0.0) << p->name;
  double gen_grad = 0.0;
  for (ad::Parameter* p : m.p1_parameters()) gen_grad += p->grad.norm();
  EXPECT_GT(gen_grad, 0.0);
  // perturbing the discriminators changes the value, not the generator graph
  const double before = loss.scalar();
  for (ad::Parameter* p : m.discriminator_parameters()) p->value.array() += 0.01;
  Tape tape2;
  Forward g = run(tape2, m, ws);
  EXPECT_NE(losses::hint_loss_p1(tape2, m, g.trace, opt).scalar(), before);
  for (ad::Parameter* p : m.all_parameters()) p->zero_grad();
}

TEST(Isolation, DiscriminatorLossLeavesDecodersUntouched) {
  AMLNet m(toy_config_mapped());
  const auto ws = windows_for(m.config(), 2, 9);
  Tape tape;
  Forward f = run(tape, m, ws);
  const LayerMap map = losses::layer_map(3, 2);
  Var loss = losses::discriminator_loss(tape, m, DecoderKind::kP1, 2, f.trace, &map, NormMode::kTrainFrozen);
  for (ad::Parameter* p : m.all_parameters()) p->zero_grad();
  tape.backward(loss);
  ad::ParameterList gen = m.encoder_parameters();
  append(gen, m.p1_parameters());
  append(gen, m.p2_parameters());
  append(gen, m.s_parameters());
  for (ad::Parameter* p : gen) EXPECT_EQ(p->grad.cwiseAbs().maxCoeff(), 0.0) << p->name;
  double d_grad = 0.0;
  for (ad::Parameter* p : m.discriminator(DecoderKind::kP1, 2).parameters()) d_grad += p->grad.norm();
  EXPECT_GT(d_grad, 0.0);
  for (ad::Parameter* p : m.discriminator(DecoderKind::kP2, 2).parameters())
    EXPECT_EQ(p->grad.cwiseAbs().maxCoeff(), 0.0);
  for (ad::Parameter* p : m.all_parameters()) p->zero_grad();
}

TEST(Totals, StructureAndErrors) {
  const losses::DecoderLosses p1{.nll = 1.25, .outcome_kd = 0.125, .hint_kd = -0.5};
  const losses::DecoderLosses p2{.nll = 0.75, .outcome_kd = 0.0625, .hint_kd = -0.25};
  const losses::DecoderLosses s{.nll = 2.0, .outcome_kd = 0.3, .hint_kd = -0.1};
  const auto r = losses::total_losses(p1, p2, s);
  EXPECT_NEAR(r.p1.total, 1.25 + 0.125 - 0.5, 1e-12);
  EXPECT_NEAR(r.p2.total, 0.75 + 0.0625 - 0.25, 1e-12);
  EXPECT_NEAR(r.s.total, 2.0 + 0.3 - 0.1, 1e-12);
  const auto plain = losses::total_losses({.nll = 0.4}, {.nll = 0.5}, {.nll = 0.6});
  EXPECT_EQ(plain.s.total, 0.6);
  try {
    losses::total_losses(p1, {.nll = 1.0, .outcome_kd = NAN}, s);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("outcome_kd"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("P2"), std::string::npos);
  }
}

TEST(Totals, JsonLinesHaveOneRecordPerPhaseAndDecoder) {
  losses::LossReport r = losses::total_losses({.nll = 1}, {.nll = 2}, {.nll = 3});
  r.step = 7;
  r.disc = {{"disc_p1.1", 1.3}};
  const std::string text = r.to_json_lines();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  EXPECT_NE(text.find("\"decoder\":\"S\""), std::string::npos);
  EXPECT_NE(text.find("\"disc_p1.1\""), std::string::npos);
  EXPECT_NE(text.find("\"step\":7"), std::string::npos);
}

// Totals differentiated through the whole model; some pre-activations sit
// close to leaky-relu kinks, so the probe step is small.
constexpr double kKinkSafeStep = 1e-6;

// Two-step horizons on the unmapped (n_s = 1) and mapped toy models.
std::vector<ModelConfig> fd_configs() {
  std::vector<ModelConfig> out{toy_config(), toy_config_mapped()};
  for (auto& c : out) {
    c.horizon = 2;
    c.start_token = 1;
  }
  return out;
}

TEST(Totals, PeerTotalsPassFiniteDifferences) {
  for (const ModelConfig& cfg : fd_configs()) {
  AMLNet m(cfg);
  const auto ws = windows_for(cfg, 2, 10);
  const HintOptions opt{.alpha_h = 0.5};
  // The teacher side of each outcome term is a stop-gradient, so the oracle
  // holds it at its value at the probe point.
  std::vector<GaussianForecast> t1, t2;
  {
    Tape t;
    Forward r = run(t, m, ws);
    for (std::size_t b = 0; b < ws.size(); ++b) {
      t1.push_back(r.p1[b].forecast());
      t2.push_back(r.p2[b].forecast());
    }
  }
  const auto f = [&](Tape& t) {
    Forward r = run(t, m, ws);
    const auto c = [&t](const Eigen::VectorXd& v) { return t.constant(v); };
    Var total = t.constant(Matrix::Zero(1, 1));
    for (std::size_t b = 0; b < ws.size(); ++b) {
      const auto& y = ws[b].y_future;
      total = ad::add(total, losses::nll(r.p1[b].mu, r.p1[b].sigma, y));
      total = ad::add(total, losses::nll(r.p2[b].mu, r.p2[b].sigma, y));
      total = ad::add(total, losses::outcome_kd(c(t2[b].mu), c(t2[b].sigma), r.p1[b].mu, r.p1[b].sigma, y, 0.1));
      total = ad::add(total, losses::outcome_kd(c(t1[b].mu), c(t1[b].sigma), r.p2[b].mu, r.p2[b].sigma, y, 0.1));
    }
    total = ad::add(total, losses::hint_loss_p1(t, m, r.trace, opt));
    return ad::add(total, losses::hint_loss_p2(t, m, r.trace, opt));
  };
  ad::ParameterList params = m.encoder_parameters();
  append(params, m.p1_parameters());
  append(params, m.p2_parameters());
  EXPECT_LT(gradient_error(f, params, 4, kKinkSafeStep), kFdTolerance) << "n_s=" << cfg.n_s;
  }
}

TEST(Totals, StudentTotalPassesFiniteDifferences) {
  for (const ModelConfig& cfg : fd_configs()) {
  AMLNet m(cfg);
  const auto ws = windows_for(cfg, 2, 11);
  const std::optional<LayerMap> map =
      cfg.n_s >= 2 ? std::optional(losses::layer_map(cfg.n_d, cfg.n_s)) : std::nullopt;
  const auto f = [&](Tape& t) {
    t.freeze(m.encoder_parameters());
    t.freeze(m.p1_parameters());
    t.freeze(m.p2_parameters());
    Forward r = run(t, m, ws);
    Var total = t.constant(Matrix::Zero(1, 1));
    for (std::size_t b = 0; b < ws.size(); ++b) {
      const auto& y = ws[b].y_future;
      total = ad::add(total, losses::nll(r.s[b].mu, r.s[b].sigma, y));
      total = ad::add(total, losses::outcome_kd(r.p1[b].mu, r.p1[b].sigma, r.s[b].mu, r.s[b].sigma, y, 0.1));
      total = ad::add(total, losses::outcome_kd(r.p2[b].mu, r.p2[b].sigma, r.s[b].mu, r.s[b].sigma, y, 0.1));
    }
    if (!map) return total;
    return ad::add(total, losses::hint_loss_s(t, m, r.trace, *map, {.alpha_h = 0.5}));
  };
  EXPECT_LT(gradient_error(f, m.s_parameters(), 4, kKinkSafeStep), kFdTolerance) << "n_s=" << cfg.n_s;
  }
}

TEST(Totals, DiscriminatorTotalPassesFiniteDifferences) {
  for (const ModelConfig& cfg : {toy_config(), toy_config_mapped()}) {
    AMLNet m(cfg);
    const auto ws = windows_for(cfg, 3, 12);
    const std::optional<LayerMap> map =
        cfg.n_s >= 2 ? std::optional(losses::layer_map(cfg.n_d, cfg.n_s)) : std::nullopt;
    const auto f = [&](Tape& t) {
      Forward r = run(t, m, ws);
      Var total = t.constant(Matrix::Zero(1, 1));
      for (DecoderKind bank : {DecoderKind::kP1, DecoderKind::kP2})
        for (int layer = 1; layer <= cfg.n_d; ++layer)
          total = ad::add(total, losses::discriminator_loss(t, m, bank, layer, r.trace,
                                                            map ? &*map : nullptr,
                                                            NormMode::kTrainFrozen));
      return total;
    };
    EXPECT_LT(gradient_error(f, m.discriminator_parameters(), 4, kKinkSafeStep), kFdTolerance)
        << "n_s=" << cfg.n_s;
  }
}

}  // namespace
}  // namespace amlnet
