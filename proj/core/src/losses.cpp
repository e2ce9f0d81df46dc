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

#include "amlnet/losses.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "amlnet/errors.hpp"
#include "json.hpp"

namespace amlnet::losses {

using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

void require_positive(const Eigen::VectorXd& sigma, const char* what) {
  if (!sigma.allFinite() || (sigma.array() <= 0.0).any())
    throw NumericError(std::string(what) + ": sigma must be finite and positive");
}

}  // namespace

double nll(const GaussianForecast& f, const Eigen::VectorXd& y) {
  if (f.mu.size() != y.size() || f.sigma.size() != y.size())
    throw ContractError("nll: horizon mismatch");
  if (!f.mu.allFinite() || !y.allFinite()) throw NumericError("nll: non-finite input");
  require_positive(f.sigma, "nll");
  const double th = static_cast<double>(y.size());
  const double log_var = (2.0 * f.sigma.array().log()).sum();
  const double resid = ((y - f.mu).array() / f.sigma.array()).square().sum();
  return (th * kLog2Pi + log_var + resid) / (2.0 * th);
}

double gaussian_kl(double mu1, double s1, double mu2, double s2) {
  if (!(s1 > 0.0) || !(s2 > 0.0)) throw NumericError("gaussian_kl: sigma must be positive");
  const double d = mu1 - mu2;
  return std::log(s2 / s1) + (s1 * s1 + d * d) / (2.0 * s2 * s2) - 0.5;
}

Eigen::VectorXd gaussian_kl(const GaussianForecast& p, const GaussianForecast& q) {
  if (p.horizon() != q.horizon()) throw ContractError("gaussian_kl: horizon mismatch");
  Eigen::VectorXd out(p.horizon());
  for (Eigen::Index t = 0; t < out.size(); ++t)
    out(t) = gaussian_kl(p.mu(t), p.sigma(t), q.mu(t), q.sigma(t));
  return out;
}

Eigen::VectorXd outcome_weight(const GaussianForecast& teacher, const Eigen::VectorXd& y) {
  if (teacher.horizon() != y.size()) throw ContractError("outcome_weight: horizon mismatch");
  require_positive(teacher.sigma, "outcome_weight");
  Eigen::VectorXd w(y.size());
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    const double z = (y(t) - teacher.mu(t)) / teacher.sigma(t);
    w(t) = std::min(1.0, inv_sqrt_2pi / teacher.sigma(t) * std::exp(-0.5 * z * z));
  }
  return w;
}

OutcomeKd outcome_kd_losses(const GaussianForecast& p1, const GaussianForecast& p2,
                            const GaussianForecast& s, const Eigen::VectorXd& y, double alpha_o) {
  const double scale = alpha_o / static_cast<double>(y.size());
  const Eigen::VectorXd w1 = outcome_weight(p1, y);
  const Eigen::VectorXd w2 = outcome_weight(p2, y);
  OutcomeKd out;
  out.p1 = scale * w2.dot(gaussian_kl(p2, p1));
  out.p2 = scale * w1.dot(gaussian_kl(p1, p2));
  out.s = scale * (w1.dot(gaussian_kl(p1, s)) + w2.dot(gaussian_kl(p2, s)));
  return out;
}

LayerMap layer_map(int n_d, int n_s) {
  if (n_s == 1)
    throw ConfigError("layer_map: a single-layer student (n_s = 1) has no defined mapping");
  if (n_s < 2 || n_s >= n_d)
    throw ConfigError("layer_map: requires 2 <= n_s < n_d (got n_d=" + std::to_string(n_d) +
                      ", n_s=" + std::to_string(n_s) + ")");
  LayerMap m;
  m.n_d = n_d;
  m.n_s = n_s;
  const int stride = (n_d - 1) / (n_s - 1);
  const int width = (n_d - 1 + n_s - 2) / (n_s - 1);  // ceil
  for (int i = 1; i <= n_s; ++i) {
    const int lo = 1 + (i - 1) * stride;
    int hi = std::min(width + (i - 1) * stride, n_d);
    // Close the last range at n_d so every teacher layer has a student.
    if (i == n_s) hi = n_d;
    m.forward.emplace_back(lo, hi);
  }
  m.inverse.assign(static_cast<std::size_t>(n_d), {});
  for (int i = 1; i <= n_s; ++i) {
    const auto [lo, hi] = m.forward[static_cast<std::size_t>(i - 1)];
    for (int j = lo; j <= hi; ++j) m.inverse[static_cast<std::size_t>(j - 1)].push_back(i);
  }
  for (const auto& k : m.inverse)
    if (k.empty()) throw ContractError("layer_map: teacher layer left without a student");
  return m;
}

// ---- recorded forms --------------------------------------------------------

Var nll(Var mu, Var sigma, const Eigen::VectorXd& y) {
  if (mu.rows() != y.size() || sigma.rows() != y.size())
    throw ContractError("nll: horizon mismatch");
  Tape& t = mu.tape();
  const double th = static_cast<double>(y.size());
  Var log_var = ad::sum(ad::scale(ad::log(sigma), 2.0));
  Var resid = ad::sum(ad::square(ad::div(ad::sub(t.constant(y), mu), sigma)));
  return ad::scale(ad::add_scalar(ad::add(log_var, resid), th * kLog2Pi), 1.0 / (2.0 * th));
}

Var gaussian_kl(Var mu_p, Var sigma_p, Var mu_q, Var sigma_q) {
  // log(sq/sp) + (sp^2 + (mp - mq)^2) / (2 sq^2) - 1/2
  Var log_ratio = ad::sub(ad::log(sigma_q), ad::log(sigma_p));
  Var num = ad::add(ad::square(sigma_p), ad::square(ad::sub(mu_p, mu_q)));
  Var frac = ad::div(num, ad::scale(ad::square(sigma_q), 2.0));
  return ad::add_scalar(ad::add(log_ratio, frac), -0.5);
}

Var outcome_kd(Var teacher_mu, Var teacher_sigma, Var student_mu, Var student_sigma,
               const Eigen::VectorXd& y, double alpha_o) {
  if (alpha_o < 0.0) throw ConfigError("alpha_o must be nonnegative");
  Tape& t = student_mu.tape();
  const GaussianForecast teacher{teacher_mu.value().col(0), teacher_sigma.value().col(0)};
  const Eigen::VectorXd w = outcome_weight(teacher, y);
  Var kl = gaussian_kl(ad::detach(teacher_mu), ad::detach(teacher_sigma), student_mu,
                       student_sigma);
  Var weighted = ad::sum(ad::mul(kl, t.constant(w)));
  return ad::scale(weighted, alpha_o / static_cast<double>(y.size()));
}

Var generator_objective(Var probs, double alpha_h, bool non_saturating) {
  Var p = ad::clamp(probs, kProbEps, 1.0 - kProbEps);
  if (non_saturating) return ad::scale(ad::mean(ad::log(p)), -alpha_h);
  return ad::scale(ad::mean(ad::log(ad::add_scalar(ad::neg(p), 1.0))), alpha_h);
}

Var discriminator_objective(Var p_real, Var p_peer, const std::vector<Var>& p_students) {
  const auto log_fake = [](Var p) {
    return ad::mean(ad::log(ad::add_scalar(ad::neg(ad::clamp(p, kProbEps, 1.0 - kProbEps)), 1.0)));
  };
  Var loss = ad::neg(ad::mean(ad::log(ad::clamp(p_real, kProbEps, 1.0 - kProbEps))));
  loss = ad::sub(loss, log_fake(p_peer));
  for (const Var& p : p_students) loss = ad::sub(loss, log_fake(p));
  return loss;
}

namespace {

Var zero(Tape& tape) { return tape.constant(Matrix::Zero(1, 1)); }

void check_depth(const std::vector<std::vector<Var>>& layers, int expected, const char* who) {
  if (static_cast<int>(layers.size()) != expected)
    throw ContractError(std::string("hint loss: ") + who + " trace depth does not match the model");
}

Var peer_hint(Tape& tape, AMLNet& model, const std::vector<std::vector<Var>>& layers,
              DecoderKind judge, const HintOptions& opt) {
  if (opt.alpha_h == 0.0) return zero(tape);
  Var total = zero(tape);
  for (int i = 1; i <= static_cast<int>(layers.size()); ++i) {
    tape.freeze(model.discriminator(judge, i).parameters());
    Var probs = model.discriminate(tape, judge, i, layers[static_cast<std::size_t>(i - 1)],
                                   opt.norm_mode);
    total = ad::add(total, generator_objective(probs, opt.alpha_h, opt.non_saturating));
  }
  return total;
}

}  // namespace

Var hint_loss_p1(Tape& tape, AMLNet& model, const BatchTrace& trace, const HintOptions& opt) {
  check_depth(trace.p1, model.config().n_d, "P1");
  return peer_hint(tape, model, trace.p1, DecoderKind::kP2, opt);
}

Var hint_loss_p2(Tape& tape, AMLNet& model, const BatchTrace& trace, const HintOptions& opt) {
  check_depth(trace.p2, model.config().n_d, "P2");
  return peer_hint(tape, model, trace.p2, DecoderKind::kP1, opt);
}

Var hint_loss_s(Tape& tape, AMLNet& model, const BatchTrace& trace, const LayerMap& map,
                const HintOptions& opt, int* disc_calls) {
  check_depth(trace.s, map.n_s, "S");
  if (map.n_d != model.config().n_d) throw ContractError("hint loss: map depth != model n_d");
  int calls = 0;
  Var total = zero(tape);
  if (opt.alpha_h != 0.0) {
    for (int i = 1; i <= map.n_s; ++i) {
      const auto& h = trace.s[static_cast<std::size_t>(i - 1)];
      const auto [lo, hi] = map.forward[static_cast<std::size_t>(i - 1)];
      for (int j = lo; j <= hi; ++j) {
        for (DecoderKind bank : {DecoderKind::kP1, DecoderKind::kP2}) {
          tape.freeze(model.discriminator(bank, j).parameters());
          Var probs = model.discriminate(tape, bank, j, h, opt.norm_mode);
          total = ad::add(total, generator_objective(probs, opt.alpha_h, opt.non_saturating));
          ++calls;
        }
      }
    }
  }
  if (disc_calls) *disc_calls = calls;
  return total;
}

Var discriminator_loss(Tape& tape, AMLNet& model, DecoderKind bank, int layer,
                       const BatchTrace& trace, const LayerMap* map, NormMode mode) {
  const int n_d = model.config().n_d;
  check_depth(trace.p1, n_d, "P1");
  check_depth(trace.p2, n_d, "P2");
  if (layer < 1 || layer > n_d) throw ContractError("discriminator_loss: layer out of range");
  const auto& own = bank == DecoderKind::kP1 ? trace.p1 : trace.p2;
  const auto& peer = bank == DecoderKind::kP1 ? trace.p2 : trace.p1;
  const auto constants = [&tape](const std::vector<Var>& xs) {
    std::vector<Var> out;
    out.reserve(xs.size());
    for (const Var& x : xs) out.push_back(tape.constant(x.value()));
    return out;
  };
  // Real, peer and every mapped student layer are scored in one batch so
  // they share normalization statistics.
  std::vector<std::vector<Var>> groups{constants(own[static_cast<std::size_t>(layer - 1)]),
                                       constants(peer[static_cast<std::size_t>(layer - 1)])};
  if (map != nullptr) {
    check_depth(trace.s, map->n_s, "S");
    for (int k : map->inverse[static_cast<std::size_t>(layer - 1)])
      groups.push_back(constants(trace.s[static_cast<std::size_t>(k - 1)]));
  }
  std::vector<Var> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  Var probs = model.discriminate(tape, bank, layer, all, mode);
  std::vector<Var> parts;
  ad::Index offset = 0;
  for (const auto& g : groups) {
    const auto n = static_cast<ad::Index>(g.size());
    parts.push_back(ad::slice_rows(probs, offset, n));
    offset += n;
  }
  std::vector<Var> students(parts.begin() + 2, parts.end());
  return discriminator_objective(parts[0], parts[1], students);
}

// ---- reporting -------------------------------------------------------------

LossReport total_losses(const DecoderLosses& p1, const DecoderLosses& p2, const DecoderLosses& s) {
  LossReport r;
  const auto fill = [](const char* name, DecoderLosses d) {
    const std::pair<const char*, double> parts[] = {
        {"nll", d.nll}, {"outcome_kd", d.outcome_kd}, {"hint_kd", d.hint_kd}};
    for (const auto& [what, v] : parts)
      if (!std::isfinite(v))
        throw NumericError(std::string("non-finite ") + what + " loss for decoder " + name);
    d.total = d.nll + d.outcome_kd + d.hint_kd;
    return d;
  };
  r.p1 = fill("P1", p1);
  r.p2 = fill("P2", p2);
  r.s = fill("S", s);
  return r;
}

std::string LossReport::to_json_lines() const {
  std::ostringstream out;
  const auto record = [&](int phase, const char* decoder, const DecoderLosses& d) {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["phase"] = phase;
    j["decoder"] = decoder;
    j["nll"] = d.nll;
    j["outcome_kd"] = d.outcome_kd;
    j["hint_kd"] = d.hint_kd;
    j["total"] = d.total;
    j["disc_losses"] = nlohmann::json::array();
    out << j.dump() << '\n';
  };
  record(1, "P1", p1);
  record(1, "P2", p2);
  record(2, "S", s);
  nlohmann::ordered_json j;
  j["step"] = step;
  j["phase"] = 3;
  j["decoder"] = "D";
  j["nll"] = nullptr;
  j["outcome_kd"] = nullptr;
  j["hint_kd"] = nullptr;
  j["total"] = nullptr;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& [name, v] : disc) arr.push_back({{"name", name}, {"loss", v}});
  j["disc_losses"] = arr;
  out << j.dump() << '\n';
  return out.str();
}

}  // namespace amlnet::losses
