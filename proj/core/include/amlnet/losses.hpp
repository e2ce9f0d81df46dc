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

#ifndef AMLNET_LOSSES_HPP_
#define AMLNET_LOSSES_HPP_

// Forecasting and distillation objectives: Gaussian NLL, Gaussian KL,
// likelihood-weighted outcome distillation, adversarial hint distillation
// over decoder hidden states, and the discriminator objectives.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "amlnet/autodiff.hpp"
#include "amlnet/model.hpp"

namespace amlnet::losses {

// Probabilities are clamped to [kProbEps, 1 - kProbEps] before any log.
inline constexpr double kProbEps = 1e-6;

// ---- closed forms on plain values -----------------------------------------

// (1/(2 T_h)) * (T_h log 2pi + sum log sigma^2 + sum (y - mu)^2 / sigma^2)
double nll(const GaussianForecast& forecast, const Eigen::VectorXd& y);

// KL(N(mu1, s1^2) || N(mu2, s2^2)).
double gaussian_kl(double mu1, double s1, double mu2, double s2);
Eigen::VectorXd gaussian_kl(const GaussianForecast& p, const GaussianForecast& q);

// Density of the truth under the teacher, clamped to at most 1.
Eigen::VectorXd outcome_weight(const GaussianForecast& teacher, const Eigen::VectorXd& y);

struct OutcomeKd {
  double p1 = 0.0;
  double p2 = 0.0;
  double s = 0.0;
};

OutcomeKd outcome_kd_losses(const GaussianForecast& p1, const GaussianForecast& p2,
                            const GaussianForecast& s, const Eigen::VectorXd& y, double alpha_o);

// ---- student/teacher layer mapping ----------------------------------------

// Layer indices are 1-based. forward[i-1] = inclusive teacher range of
// student layer i; inverse[j-1] = student layers mapped onto teacher layer j.
struct LayerMap {
  int n_d = 0;
  int n_s = 0;
  std::vector<std::pair<int, int>> forward;
  std::vector<std::vector<int>> inverse;
};

// Requires 2 <= n_s < n_d; n_s == 1 leaves the mapping undefined and is
// rejected with ConfigError.
LayerMap layer_map(int n_d, int n_s);

// ---- recorded (differentiable) forms --------------------------------------

// mu, sigma: [T_h x 1].
ad::Var nll(ad::Var mu, ad::Var sigma, const Eigen::VectorXd& y);
// Elementwise KL(p || q), [T_h x 1].
ad::Var gaussian_kl(ad::Var mu_p, ad::Var sigma_p, ad::Var mu_q, ad::Var sigma_q);
// (alpha_o / T_h) * sum_t w_t * KL(teacher_t || student_t). The teacher is
// detached and w_t is a constant coefficient.
ad::Var outcome_kd(ad::Var teacher_mu, ad::Var teacher_sigma, ad::Var student_mu,
                   ad::Var student_sigma, const Eigen::VectorXd& y, double alpha_o);

// alpha_h * mean_b log(1 - D(h_b)); with non_saturating, -alpha_h * mean_b log D(h_b).
ad::Var generator_objective(ad::Var probs, double alpha_h, bool non_saturating = false);
// -mean log D(real) - mean log(1 - D(peer)) - sum_k mean log(1 - D(student_k)).
ad::Var discriminator_objective(ad::Var p_real, ad::Var p_peer,
                                const std::vector<ad::Var>& p_students);

// Hidden states of one batch: [layer][batch element], each [T_h x d_hid].
struct BatchTrace {
  std::vector<std::vector<ad::Var>> p1;
  std::vector<std::vector<ad::Var>> p2;
  std::vector<std::vector<ad::Var>> s;
};

struct HintOptions {
  double alpha_h = 0.0;
  bool non_saturating = false;
  NormMode norm_mode = NormMode::kEval;
};

// sum_i L_{i,P1}: each P1 layer tries to pass as P2 under D_{i,P2}.
ad::Var hint_loss_p1(ad::Tape& tape, AMLNet& model, const BatchTrace& trace,
                     const HintOptions& opt);
// sum_i L_{i,P2}: each P2 layer tries to pass as P1 under D_{i,P1}.
ad::Var hint_loss_p2(ad::Tape& tape, AMLNet& model, const BatchTrace& trace,
                     const HintOptions& opt);
// sum_i L_{i,S} over the mapped teacher layers of both banks.
// `disc_calls`, when given, receives the number of discriminator evaluations.
ad::Var hint_loss_s(ad::Tape& tape, AMLNet& model, const BatchTrace& trace, const LayerMap& map,
                    const HintOptions& opt, int* disc_calls = nullptr);

// Classification loss of D_{layer, bank}. `map` may be null (no student
// layers act as fakes). Hidden states are used as constants.
ad::Var discriminator_loss(ad::Tape& tape, AMLNet& model, DecoderKind bank, int layer,
                           const BatchTrace& trace, const LayerMap* map, NormMode mode);

// ---- reporting -------------------------------------------------------------

struct DecoderLosses {
  double nll = 0.0;
  double outcome_kd = 0.0;
  double hint_kd = 0.0;
  double total = 0.0;
};

struct LossReport {
  std::int64_t step = 0;
  DecoderLosses p1, p2, s;
  std::vector<std::pair<std::string, double>> disc;  // name -> loss

  // One JSON object per optimization phase, newline-terminated.
  std::string to_json_lines() const;
};

// total = nll + outcome_kd + hint_kd per decoder; any non-finite component
// raises NumericError naming it.
LossReport total_losses(const DecoderLosses& p1, const DecoderLosses& p2, const DecoderLosses& s);

}  // namespace amlnet::losses

#endif  // AMLNET_LOSSES_HPP_
