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

#include "amlnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "amlnet/errors.hpp"
#include "amlnet/metrics.hpp"
#include "json_io.hpp"

namespace amlnet {

namespace {

using ad::Tape;
using ad::Var;
using detail::Json;

Var batch_mean(const std::vector<Var>& xs) {
  Var total = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) total = ad::add(total, xs[i]);
  return ad::scale(total, 1.0 / static_cast<double>(xs.size()));
}

ad::ParameterList concat(std::initializer_list<ad::ParameterList> lists) {
  ad::ParameterList out;
  for (const auto& l : lists) out.insert(out.end(), l.begin(), l.end());
  return out;
}

std::vector<std::vector<Var>> layers_of(int depth) {
  return std::vector<std::vector<Var>>(static_cast<std::size_t>(depth));
}

void push_hidden(std::vector<std::vector<Var>>& trace, const DecodeResult& r) {
  for (std::size_t i = 0; i < r.hidden.size(); ++i) trace[i].push_back(r.hidden[i]);
}

Json optimizer_to_json(Adam& opt) {
  Json m = Json::array(), v = Json::array();
  for (const auto& x : opt.first_moments()) m.push_back(detail::matrix_to_json(x));
  for (const auto& x : opt.second_moments()) v.push_back(detail::matrix_to_json(x));
  return Json{{"steps", opt.steps()}, {"m", std::move(m)}, {"v", std::move(v)}};
}

void optimizer_from_json(Adam& opt, const Json& j) {
  auto& m = opt.first_moments();
  auto& v = opt.second_moments();
  if (j.at("m").size() != m.size() || j.at("v").size() != v.size())
    throw LoadError("optimizer state does not match the parameter group");
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = detail::matrix_from_json(j.at("m")[i]);
    v[i] = detail::matrix_from_json(j.at("v")[i]);
  }
  opt.set_steps(j.at("steps").get<std::int64_t>());
}

Json snapshot_to_json(const ModelSnapshot& s) {
  Json p = Json::array(), mean = Json::array(), var = Json::array();
  for (const auto& x : s.parameters) p.push_back(detail::matrix_to_json(x));
  for (const auto& x : s.running_mean) mean.push_back(detail::matrix_to_json(x));
  for (const auto& x : s.running_var) var.push_back(detail::matrix_to_json(x));
  return Json{{"parameters", std::move(p)}, {"running_mean", std::move(mean)},
              {"running_var", std::move(var)}};
}

ModelSnapshot snapshot_from_json(const Json& j) {
  ModelSnapshot s;
  for (const auto& x : j.at("parameters")) s.parameters.push_back(detail::matrix_from_json(x));
  for (const auto& x : j.at("running_mean")) s.running_mean.push_back(detail::matrix_from_json(x));
  for (const auto& x : j.at("running_var")) s.running_var.push_back(detail::matrix_from_json(x));
  return s;
}

Json train_config_to_json(const TrainConfig& c) {
  return Json{{"lr_generator", c.lr_generator},
              {"lr_discriminator", c.lr_discriminator},
              {"alpha_o", c.alpha_o},
              {"alpha_h", c.alpha_h},
              {"max_epochs", c.max_epochs},
              {"batch_size", c.batch_size},
              {"patience", c.patience},
              {"seed", c.seed},
              {"grad_clip", c.grad_clip},
              {"non_saturating", c.non_saturating},
              {"divergence_threshold", c.divergence_threshold}};
}

Json epoch_to_json(const EpochRecord& r) {
  return Json{{"epoch", r.epoch},
              {"train_nll_p1", r.train_nll_p1},
              {"train_nll_p2", r.train_nll_p2},
              {"train_nll_s", r.train_nll_s},
              {"train_total_s", r.train_total_s},
              {"train_disc", r.train_disc},
              {"val_rho50_s", r.val_rho50_s},
              {"val_nll_s", r.val_nll_s},
              {"improved", r.improved}};
}

EpochRecord epoch_from_json(const Json& j) {
  EpochRecord r;
  j.at("epoch").get_to(r.epoch);
  j.at("train_nll_p1").get_to(r.train_nll_p1);
  j.at("train_nll_p2").get_to(r.train_nll_p2);
  j.at("train_nll_s").get_to(r.train_nll_s);
  j.at("train_total_s").get_to(r.train_total_s);
  j.at("train_disc").get_to(r.train_disc);
  j.at("val_rho50_s").get_to(r.val_rho50_s);
  j.at("val_nll_s").get_to(r.val_nll_s);
  j.at("improved").get_to(r.improved);
  return r;
}

}  // namespace

void TrainConfig::validate() const {
  const auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError(key + ": " + why);
  };
  if (!(lr_generator > 0.0)) fail("lr_generator", "must be > 0");
  if (!(lr_discriminator > 0.0)) fail("lr_discriminator", "must be > 0");
  if (!(alpha_o >= 0.0)) fail("alpha_o", "must be >= 0");
  if (!(alpha_h >= 0.0)) fail("alpha_h", "must be >= 0");
  if (max_epochs < 1) fail("max_epochs", "must be >= 1");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (patience < 0) fail("patience", "must be >= 0");
  if (!(divergence_threshold > 0.0)) fail("divergence_threshold", "must be > 0");
}

std::string EpochRecord::to_json() const { return epoch_to_json(*this).dump(); }

ModelSnapshot ModelSnapshot::capture(AMLNet& model) {
  ModelSnapshot s;
  for (const ad::Parameter* p : model.all_parameters()) s.parameters.push_back(p->value);
  for (Discriminator* d : model.discriminators()) {
    s.running_mean.push_back(d->running_mean());
    s.running_var.push_back(d->running_var());
  }
  return s;
}

void ModelSnapshot::restore(AMLNet& model) const {
  auto params = model.all_parameters();
  auto discs = model.discriminators();
  if (params.size() != parameters.size() || discs.size() != running_mean.size())
    throw LoadError("snapshot does not match the model layout");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.rows() != parameters[i].rows() ||
        params[i]->value.cols() != parameters[i].cols())
      throw LoadError("snapshot shape mismatch for " + params[i]->name);
    params[i]->value = parameters[i];
  }
  for (std::size_t i = 0; i < discs.size(); ++i) {
    discs[i]->running_mean() = running_mean[i];
    discs[i]->running_var() = running_var[i];
  }
}

Trainer::Trainer(const ModelConfig& model_config, const TrainConfig& train_config)
    : model_cfg_(model_config), cfg_(train_config), rng_(train_config.seed) {
  cfg_.validate();
  model_ = std::make_unique<AMLNet>(model_cfg_);
  if (model_cfg_.n_s >= 2) map_ = losses::layer_map(model_cfg_.n_d, model_cfg_.n_s);
  gen_opt_ = Adam(concat({model_->encoder_parameters(), model_->p1_parameters(),
                          model_->p2_parameters()}),
                  {.lr = cfg_.lr_generator});
  student_opt_ = Adam(model_->s_parameters(), {.lr = cfg_.lr_generator});
  disc_opt_ = Adam(model_->discriminator_parameters(), {.lr = cfg_.lr_discriminator});
}

void Trainer::require_finite(double value, const std::string& what) const {
  if (!std::isfinite(value))
    throw NumericError("non-finite " + what + " loss at step " + std::to_string(step_));
  if (value > cfg_.divergence_threshold)
    throw NumericError("training diverged: " + what + " loss " + std::to_string(value) +
                       " exceeds " + std::to_string(cfg_.divergence_threshold) + " at step " +
                       std::to_string(step_));
}

losses::LossReport Trainer::train_step(std::span<const data::ForecastWindow> batch) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  const auto tl = batch.front().input_length();
  const auto th = batch.front().horizon();
  for (const auto& w : batch) {
    if (w.input_length() != tl || w.horizon() != th)
      throw ContractError("train_step: windows differ in shape");
    if (!w.has_future()) throw ContractError("train_step: window without targets");
  }
  ++step_;
  AMLNet& m = *model_;
  const int n_d = model_cfg_.n_d;
  const ForwardContext ctx{.training = true, .dropout = model_cfg_.dropout, .rng = &rng_};
  const losses::HintOptions hint{.alpha_h = cfg_.alpha_h,
                                 .non_saturating = cfg_.non_saturating,
                                 .norm_mode = NormMode::kEval};
  const double ao = cfg_.alpha_o;

  losses::DecoderLosses p1, p2, s;
  std::vector<GaussianForecast> f1, f2;

  // Phase 1: encoder, P1 and P2.
  {
    Tape tape;
    tape.freeze(m.s_parameters());
    tape.freeze(m.discriminator_parameters());
    losses::BatchTrace trace{layers_of(n_d), layers_of(n_d), {}};
    std::vector<Var> nll1, nll2, kd1, kd2;
    for (const auto& w : batch) {
      Var h = m.encode(tape, w, ctx);
      DecodeResult r1 = m.decode_p1_teacher_forced(tape, w, h, ctx);
      DecodeResult r2 = m.decode_p2(tape, w, h, ctx);
      nll1.push_back(losses::nll(r1.mu, r1.sigma, w.y_future));
      nll2.push_back(losses::nll(r2.mu, r2.sigma, w.y_future));
      kd1.push_back(losses::outcome_kd(r2.mu, r2.sigma, r1.mu, r1.sigma, w.y_future, ao));
      kd2.push_back(losses::outcome_kd(r1.mu, r1.sigma, r2.mu, r2.sigma, w.y_future, ao));
      push_hidden(trace.p1, r1);
      push_hidden(trace.p2, r2);
      f1.push_back(r1.forecast());
      f2.push_back(r2.forecast());
    }
    Var n1 = batch_mean(nll1), n2 = batch_mean(nll2), k1 = batch_mean(kd1), k2 = batch_mean(kd2);
    Var h1 = losses::hint_loss_p1(tape, m, trace, hint);
    Var h2 = losses::hint_loss_p2(tape, m, trace, hint);
    p1 = {n1.scalar(), k1.scalar(), h1.scalar(), 0.0};
    p2 = {n2.scalar(), k2.scalar(), h2.scalar(), 0.0};
    Var l1 = ad::add(ad::add(n1, k1), h1);
    Var l2 = ad::add(ad::add(n2, k2), h2);
    require_finite(p1.nll, "P1 nll");
    require_finite(p2.nll, "P2 nll");
    require_finite(l1.scalar(), "P1 total");
    require_finite(l2.scalar(), "P2 total");
    gen_opt_.zero_grad();
    tape.backward(ad::add(l1, l2));
    if (cfg_.grad_clip > 0.0) gen_opt_.clip_grad_norm(cfg_.grad_clip);
    gen_opt_.step();
    gen_opt_.zero_grad();
  }
  if (phase_observer_) phase_observer_(1);

  // Phase 2: S against the phase-1 forecasts, encoder output detached.
  {
    Tape tape;
    tape.freeze(m.encoder_parameters());
    tape.freeze(m.p1_parameters());
    tape.freeze(m.p2_parameters());
    tape.freeze(m.discriminator_parameters());
    losses::BatchTrace trace{layers_of(n_d), layers_of(n_d), layers_of(model_cfg_.n_s)};
    std::vector<Var> nlls, kds;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& w = batch[b];
      Var h = ad::detach(m.encode(tape, w, ctx));
      DecodeResult rs = m.decode_s(tape, w, h, ctx);
      nlls.push_back(losses::nll(rs.mu, rs.sigma, w.y_future));
      Var kd_p1 = losses::outcome_kd(tape.constant(f1[b].mu), tape.constant(f1[b].sigma), rs.mu,
                                     rs.sigma, w.y_future, ao);
      Var kd_p2 = losses::outcome_kd(tape.constant(f2[b].mu), tape.constant(f2[b].sigma), rs.mu,
                                     rs.sigma, w.y_future, ao);
      kds.push_back(ad::add(kd_p1, kd_p2));
      push_hidden(trace.s, rs);
    }
    Var ns = batch_mean(nlls), ks = batch_mean(kds);
    Var hs = map_ ? losses::hint_loss_s(tape, m, trace, *map_, hint) : tape.constant(ad::Matrix::Zero(1, 1));
    s = {ns.scalar(), ks.scalar(), hs.scalar(), 0.0};
    Var ls = ad::add(ad::add(ns, ks), hs);
    require_finite(s.nll, "S nll");
    require_finite(ls.scalar(), "S total");
    student_opt_.zero_grad();
    tape.backward(ls);
    if (cfg_.grad_clip > 0.0) student_opt_.clip_grad_norm(cfg_.grad_clip);
    student_opt_.step();
    student_opt_.zero_grad();
  }
  if (phase_observer_) phase_observer_(2);

  losses::LossReport report = losses::total_losses(p1, p2, s);
  report.step = step_;

  // Phase 3: discriminators on freshly regenerated hidden states.
  {
    Tape tape;
    tape.freeze(m.encoder_parameters());
    tape.freeze(m.p1_parameters());
    tape.freeze(m.p2_parameters());
    tape.freeze(m.s_parameters());
    losses::BatchTrace trace{layers_of(n_d), layers_of(n_d), layers_of(model_cfg_.n_s)};
    for (const auto& w : batch) {
      Var h = m.encode(tape, w, ctx);
      push_hidden(trace.p1, m.decode_p1_teacher_forced(tape, w, h, ctx));
      push_hidden(trace.p2, m.decode_p2(tape, w, h, ctx));
      push_hidden(trace.s, m.decode_s(tape, w, h, ctx));
    }
    const losses::LayerMap* map = map_ ? &*map_ : nullptr;
    Var total = tape.constant(ad::Matrix::Zero(1, 1));
    for (DecoderKind bank : {DecoderKind::kP1, DecoderKind::kP2}) {
      for (int layer = 1; layer <= n_d; ++layer) {
        Var l = losses::discriminator_loss(tape, m, bank, layer, trace, map,
                                           NormMode::kTrainUpdate);
        const std::string name = m.discriminator(bank, layer).name();
        require_finite(l.scalar(), name);
        report.disc.emplace_back(name, l.scalar());
        total = ad::add(total, l);
      }
    }
    disc_opt_.zero_grad();
    tape.backward(total);
    if (cfg_.grad_clip > 0.0) disc_opt_.clip_grad_norm(cfg_.grad_clip);
    disc_opt_.step();
    disc_opt_.zero_grad();
  }
  if (phase_observer_) phase_observer_(3);

  for (const auto& w : batch) grad_windows_.emplace(w.series_id, w.t0);
  return report;
}

std::pair<double, double> Trainer::validate(const std::vector<data::ForecastWindow>& windows) {
  if (windows.empty()) throw ContractError("validation set is empty");
  const auto forecasts = predict(*model_, windows, DecoderKind::kS);
  metrics::QuantileAccumulator q50(0.5);
  double nll = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    q50.add(windows[i].y_future, forecasts[i].mu);
    nll += losses::nll(forecasts[i], windows[i].y_future);
  }
  return {q50.value(), nll / static_cast<double>(windows.size())};
}

FitResult Trainer::fit(const std::vector<data::ForecastWindow>& train,
                       const std::vector<data::ForecastWindow>& validation,
                       const FitHooks& hooks) {
  if (train.empty()) throw ContractError("fit: empty training set");
  if (validation.empty()) throw ContractError("fit: empty validation set");
  FitResult result;
  const auto stopped_early = [&] { return since_best_ > 0 && since_best_ >= cfg_.patience; };
  bool early = stopped_early();
  const auto bs = static_cast<std::size_t>(cfg_.batch_size);
  while (!early && epoch_ < cfg_.max_epochs) {
    const int epoch = epoch_ + 1;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);
    EpochRecord rec;
    rec.epoch = epoch;
    std::vector<data::ForecastWindow> batch;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i)
        batch.push_back(train[order[i]]);
      const losses::LossReport r = train_step(batch);
      if (hooks.on_step) hooks.on_step(r);
      rec.train_nll_p1 += r.p1.nll;
      rec.train_nll_p2 += r.p2.nll;
      rec.train_nll_s += r.s.nll;
      rec.train_total_s += r.s.total;
      for (const auto& [name, v] : r.disc) rec.train_disc += v;
      ++steps;
    }
    const double n = static_cast<double>(steps);
    rec.train_nll_p1 /= n;
    rec.train_nll_p2 /= n;
    rec.train_nll_s /= n;
    rec.train_total_s /= n;
    rec.train_disc /= n;
    std::tie(rec.val_rho50_s, rec.val_nll_s) = validate(validation);
    if (!std::isfinite(rec.val_rho50_s) || !std::isfinite(rec.val_nll_s))
      throw NumericError("non-finite S validation loss at epoch " + std::to_string(epoch));
    rec.improved = rec.val_rho50_s < best_val_;
    if (rec.improved) {
      best_val_ = rec.val_rho50_s;
      best_epoch_ = epoch;
      since_best_ = 0;
      best_ = ModelSnapshot::capture(*model_);
    } else {
      ++since_best_;
    }
    epoch_ = epoch;
    history_.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    early = stopped_early();
    if (hooks.stop_after && hooks.stop_after(epoch)) break;
  }
  result.history = history_;
  result.best_epoch = best_epoch_;
  result.best_val_rho50 = best_val_;
  result.early_stopped = early;
  return result;
}

std::unique_ptr<AMLNet> Trainer::best_model() {
  auto out = std::make_unique<AMLNet>(model_cfg_);
  (best_.empty() ? ModelSnapshot::capture(*model_) : best_).restore(*out);
  return out;
}

std::string Trainer::save_state() const {
  auto& self = const_cast<Trainer&>(*this);
  Json j;
  j["format"] = "amlnet-train-state";
  j["format_version"] = 1;
  j["model_config"] = detail::model_config_to_json(model_cfg_);
  j["train_config"] = train_config_to_json(cfg_);
  j["model"] = snapshot_to_json(ModelSnapshot::capture(*model_));
  j["best"] = best_.empty() ? Json(nullptr) : snapshot_to_json(best_);
  j["optimizers"] = {{"generator", optimizer_to_json(self.gen_opt_)},
                     {"student", optimizer_to_json(self.student_opt_)},
                     {"discriminator", optimizer_to_json(self.disc_opt_)}};
  std::ostringstream rng;
  rng << rng_;
  j["rng"] = rng.str();
  j["epoch"] = epoch_;
  j["step"] = step_;
  j["best_epoch"] = best_epoch_;
  j["since_best"] = since_best_;
  j["best_val"] = std::isfinite(best_val_) ? Json(best_val_) : Json(nullptr);
  Json hist = Json::array();
  for (const auto& r : history_) hist.push_back(epoch_to_json(r));
  j["history"] = std::move(hist);
  return j.dump();
}

void Trainer::load_state(const std::string& serialized) {
  Json j;
  try {
    j = Json::parse(serialized);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("training state is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "amlnet-train-state" || j.at("format_version") != 1)
      throw LoadError("unsupported training state format");
    if (detail::model_config_from_json(j.at("model_config")) != model_cfg_)
      throw LoadError("training state was written for a different model config");
    snapshot_from_json(j.at("model")).restore(*model_);
    best_ = j.at("best").is_null() ? ModelSnapshot{} : snapshot_from_json(j.at("best"));
    optimizer_from_json(gen_opt_, j.at("optimizers").at("generator"));
    optimizer_from_json(student_opt_, j.at("optimizers").at("student"));
    optimizer_from_json(disc_opt_, j.at("optimizers").at("discriminator"));
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> rng_;
    epoch_ = j.at("epoch").get<int>();
    step_ = j.at("step").get<std::int64_t>();
    best_epoch_ = j.at("best_epoch").get<int>();
    since_best_ = j.at("since_best").get<int>();
    best_val_ = j.at("best_val").is_null() ? std::numeric_limits<double>::infinity()
                                           : j.at("best_val").get<double>();
    history_.clear();
    for (const auto& r : j.at("history")) history_.push_back(epoch_from_json(r));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("training state: ") + e.what());
  }
}

std::vector<GaussianForecast> predict(AMLNet& model, std::span<const data::ForecastWindow> windows,
                                      DecoderKind decoder) {
  std::vector<GaussianForecast> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(model.predict(w, decoder));
  return out;
}

}  // namespace amlnet
