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

#include "amlnet/model.hpp"

#include <cmath>

#include "amlnet/errors.hpp"

namespace amlnet {

using ad::Matrix;
using ad::Tape;
using ad::Var;

std::string to_string(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::kP1: return "P1";
    case DecoderKind::kP2: return "P2";
    case DecoderKind::kS: return "S";
  }
  return "?";
}

DecoderKind parse_decoder_kind(const std::string& text) {
  if (text == "P1" || text == "p1") return DecoderKind::kP1;
  if (text == "P2" || text == "p2") return DecoderKind::kP2;
  if (text == "S" || text == "s") return DecoderKind::kS;
  throw ConfigError("unknown decoder '" + text + "' (expected P1, P2 or S)");
}

void GaussianForecast::validate() const {
  if (mu.size() != sigma.size()) throw NumericError("forecast: mu/sigma length mismatch");
  if (!mu.allFinite() || !sigma.allFinite()) throw NumericError("forecast: non-finite values");
  if ((sigma.array() <= 0.0).any()) throw NumericError("forecast: sigma must be positive");
}

GaussianForecast DecodeResult::forecast() const {
  return GaussianForecast{mu.value().col(0), sigma.value().col(0)};
}

// ---- Encoder ---------------------------------------------------------------

Encoder::Encoder(const ModelConfig& cfg, std::mt19937_64& rng)
    : input_length_(cfg.input_length),
      embed_("encoder.embed", cfg, cfg.input_length + cfg.horizon, rng),
      final_norm_("encoder.final_norm", cfg.d_hid) {
  for (int i = 0; i < cfg.n_e; ++i)
    layers_.emplace_back("encoder.layer" + std::to_string(i), cfg, rng, cfg.init_seed + 101 + i);
}

Var Encoder::forward(Tape& tape, const data::ForecastWindow& window, const ForwardContext& ctx) {
  calls_.bump();
  const ad::Index tl = window.input_length();
  if (tl != input_length_) throw ContractError("encode: window T_l does not match the model");
  std::vector<int> positions(static_cast<std::size_t>(tl));
  for (ad::Index t = 0; t < tl; ++t) positions[static_cast<std::size_t>(t)] = static_cast<int>(t);
  Var x = embed_.forward(tape, tape.constant(window.y_past), tape.constant(window.x_all.topRows(tl)),
                         window.series_id, positions);
  for (auto& layer : layers_) x = layer.forward(tape, x, ctx);
  return final_norm_.forward(tape, x);
}

ad::ParameterList Encoder::parameters() {
  ad::ParameterList p = embed_.parameters();
  for (auto& l : layers_) append(p, l.parameters());
  append(p, final_norm_.parameters());
  return p;
}

// ---- Decoder ---------------------------------------------------------------

Decoder::Decoder(std::string name, const ModelConfig& cfg, int n_layers, bool non_autoregressive,
                 std::mt19937_64& rng)
    : embed_(name + ".embed", cfg, cfg.input_length + cfg.horizon, rng),
      final_norm_(name + ".final_norm", cfg.d_hid),
      head_(name + ".head", cfg.d_hid, 2, rng) {
  for (int i = 0; i < n_layers; ++i)
    layers_.emplace_back(name + ".layer" + std::to_string(i), cfg, rng,
                         non_autoregressive && cfg.use_prob_sparse,
                         cfg.init_seed + 211 + static_cast<std::uint64_t>(i));
}

DecodeResult Decoder::forward(Tape& tape, Var values, Var covariates, int series_id,
                              const std::vector<int>& positions, Var enc_out, AttentionMask mask,
                              ad::Index output_rows, const ForwardContext& ctx) {
  calls_.bump();
  const ad::Index len = values.rows();
  if (output_rows < 1 || output_rows > len) throw ContractError("decoder: bad output row count");
  DecodeResult r;
  Var x = embed_.forward(tape, values, covariates, series_id, positions);
  for (auto& layer : layers_) {
    x = layer.forward(tape, x, enc_out, mask, ctx);
    r.hidden.push_back(ad::slice_rows(x, len - output_rows, output_rows));
  }
  Var out = head_.forward(tape, final_norm_.forward(tape, x));
  out = ad::slice_rows(out, len - output_rows, output_rows);
  r.mu = ad::slice_cols(out, 0, 1);
  r.sigma = ad::add_scalar(ad::softplus(ad::slice_cols(out, 1, 1)), kSigmaFloor);
  return r;
}

ad::ParameterList Decoder::parameters() {
  ad::ParameterList p = embed_.parameters();
  for (auto& l : layers_) append(p, l.parameters());
  append(p, final_norm_.parameters());
  append(p, head_.parameters());
  return p;
}

// ---- Discriminator ---------------------------------------------------------

Discriminator::Discriminator(std::string name, int d_hid, int horizon, std::mt19937_64& rng)
    : name_(name), horizon_(horizon) {
  const ad::Index l1 = conv_length(horizon);
  conv1_w_ = ad::Parameter(name + ".conv1.weight",
                           fan_in_uniform(3 * d_hid, kChannels, 3 * d_hid, rng));
  conv1_b_ = ad::Parameter(name + ".conv1.bias", Matrix::Zero(1, kChannels));
  bn_gamma_ = ad::Parameter(name + ".bn.gamma", Matrix::Ones(1, kChannels));
  bn_beta_ = ad::Parameter(name + ".bn.beta", Matrix::Zero(1, kChannels));
  conv2_w_ = ad::Parameter(name + ".conv2.weight",
                           fan_in_uniform(3 * kChannels, 1, 3 * kChannels, rng));
  conv2_b_ = ad::Parameter(name + ".conv2.bias", Matrix::Zero(1, 1));
  lin_w_ = ad::Parameter(name + ".linear.weight", fan_in_uniform(l1, 1, l1, rng));
  lin_b_ = ad::Parameter(name + ".linear.bias", Matrix::Zero(1, 1));
  running_mean_ = ad::RowVector::Zero(kChannels);
  running_var_ = ad::RowVector::Ones(kChannels);
}

namespace {

// im2col for a zero-padded (pad 1) kernel-3 convolution along rows.
Var unfold3(Var x, ad::Index stride, ad::Index out_len) {
  std::vector<Var> taps;
  for (int k = 0; k < 3; ++k) {
    std::vector<int> idx(static_cast<std::size_t>(out_len));
    for (ad::Index o = 0; o < out_len; ++o) {
      const ad::Index src = o * stride + k - 1;
      idx[static_cast<std::size_t>(o)] = (src >= 0 && src < x.rows()) ? static_cast<int>(src) : -1;
    }
    taps.push_back(ad::gather_rows(x, idx));
  }
  return ad::hstack(taps);
}

}  // namespace

Var Discriminator::forward(Tape& tape, const std::vector<Var>& batch, NormMode mode) {
  if (batch.empty()) throw ContractError("discriminator: empty batch");
  const ad::Index l1 = conv_length(horizon_);
  const ad::Index d_hid = conv1_w_.value.rows() / 3;
  Var w1 = tape.param(conv1_w_);
  Var b1 = tape.param(conv1_b_);
  std::vector<Var> conv1;
  for (const Var& h : batch) {
    if (h.rows() != horizon_ || h.cols() != d_hid)
      throw ContractError("discriminator: hidden state must be [T_h x d_hid]");
    conv1.push_back(ad::matmul(unfold3(h, 2, l1), w1));
  }
  Var stacked = ad::add_row(ad::vstack(conv1), b1);
  Var gamma = tape.param(bn_gamma_);
  Var beta = tape.param(bn_beta_);
  Var normed;
  if (mode == NormMode::kEval) {
    normed = ad::affine_norm_cols(stacked, gamma, beta, running_mean_, running_var_, kEps);
  } else {
    ad::RowVector bm, bv;
    normed = ad::batch_norm_cols(stacked, gamma, beta, kEps, &bm, &bv);
    if (mode == NormMode::kTrainUpdate) {
      running_mean_ = (1.0 - kMomentum) * running_mean_ + kMomentum * bm;
      running_var_ = (1.0 - kMomentum) * running_var_ + kMomentum * bv;
    }
  }
  Var act = ad::leaky_relu(normed, kLeakySlope);
  Var w2 = tape.param(conv2_w_);
  Var b2 = tape.param(conv2_b_);
  std::vector<Var> rows;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Var sample = ad::slice_rows(act, static_cast<ad::Index>(b) * l1, l1);
    Var c2 = ad::add_row(ad::matmul(unfold3(sample, 1, l1), w2), b2);  // [l1 x 1]
    rows.push_back(ad::transpose(c2));
  }
  Var logits = ad::add_row(ad::matmul(ad::vstack(rows), tape.param(lin_w_)), tape.param(lin_b_));
  return ad::sigmoid(logits);
}

ad::ParameterList Discriminator::parameters() {
  return {&conv1_w_, &conv1_b_, &bn_gamma_, &bn_beta_, &conv2_w_, &conv2_b_, &lin_w_, &lin_b_};
}

// ---- AMLNet ----------------------------------------------------------------

namespace {

std::mt19937_64& seeded(std::mt19937_64& rng, const ModelConfig& cfg) {
  cfg.validate();
  rng.seed(cfg.init_seed);
  return rng;
}

}  // namespace

AMLNet::AMLNet(const ModelConfig& cfg) : cfg_(cfg) {
  std::mt19937_64 rng;
  seeded(rng, cfg_);
  encoder_ = Encoder(cfg_, rng);
  p1_ = Decoder("p1", cfg_, cfg_.n_d, false, rng);
  p2_ = Decoder("p2", cfg_, cfg_.n_d, true, rng);
  s_ = Decoder("s", cfg_, cfg_.n_s, true, rng);
  for (int i = 1; i <= cfg_.n_d; ++i)
    disc_p1_.emplace_back("disc_p1." + std::to_string(i), cfg_.d_hid, cfg_.horizon, rng);
  for (int i = 1; i <= cfg_.n_d; ++i)
    disc_p2_.emplace_back("disc_p2." + std::to_string(i), cfg_.d_hid, cfg_.horizon, rng);
}

void AMLNet::check_window(const data::ForecastWindow& w) const {
  if (w.input_length() != cfg_.input_length || w.horizon() != cfg_.horizon)
    throw ContractError("window shape (T_l=" + std::to_string(w.input_length()) +
                        ", T_h=" + std::to_string(w.horizon()) + ") does not match the model (T_l=" +
                        std::to_string(cfg_.input_length) + ", T_h=" + std::to_string(cfg_.horizon) +
                        ")");
  if (w.x_all.cols() != cfg_.n_covariates)
    throw ContractError("window covariate width does not match the model");
}

Var AMLNet::encode(Tape& tape, const data::ForecastWindow& window, const ForwardContext& ctx) {
  check_window(window);
  return encoder_.forward(tape, window, ctx);
}

DecodeResult AMLNet::decode_p1_teacher_forced(Tape& tape, const data::ForecastWindow& window,
                                              Var enc_out, const ForwardContext& ctx) {
  check_window(window);
  if (!window.has_future())
    throw ContractError("teacher-forced P1 decoding needs y_future (training mode)");
  const ad::Index tl = cfg_.input_length, th = cfg_.horizon;
  Eigen::VectorXd inputs(th);
  inputs(0) = window.y_past(tl - 1);
  for (ad::Index k = 1; k < th; ++k) inputs(k) = window.y_future(k - 1);
  std::vector<int> positions(static_cast<std::size_t>(th));
  for (ad::Index k = 0; k < th; ++k) positions[static_cast<std::size_t>(k)] = static_cast<int>(tl + k);
  return p1_.forward(tape, tape.constant(inputs), tape.constant(window.x_all.bottomRows(th)),
                     window.series_id, positions, enc_out, AttentionMask::kCausal, th, ctx);
}

DecodeResult AMLNet::decode_p1_autoregressive(Tape& tape, const data::ForecastWindow& window,
                                              Var enc_out, const ForwardContext& ctx) {
  check_window(window);
  const ad::Index tl = cfg_.input_length, th = cfg_.horizon;
  Eigen::VectorXd inputs(th);
  inputs(0) = window.y_past(tl - 1);
  std::vector<Var> mus, sigmas;
  DecodeResult last;
  for (ad::Index k = 1; k <= th; ++k) {
    std::vector<int> positions(static_cast<std::size_t>(k));
    for (ad::Index j = 0; j < k; ++j) positions[static_cast<std::size_t>(j)] = static_cast<int>(tl + j);
    last = p1_.forward(tape, tape.constant(inputs.head(k)),
                       tape.constant(window.x_all.middleRows(tl, k)), window.series_id, positions,
                       enc_out, AttentionMask::kCausal, k, ctx);
    mus.push_back(ad::slice_rows(last.mu, k - 1, 1));
    sigmas.push_back(ad::slice_rows(last.sigma, k - 1, 1));
    if (k < th) inputs(k) = last.mu.value()(k - 1, 0);
  }
  DecodeResult r;
  r.mu = ad::vstack(mus);
  r.sigma = ad::vstack(sigmas);
  r.hidden = last.hidden;
  return r;
}

DecodeResult AMLNet::decode_nar(Decoder& dec, Tape& tape, const data::ForecastWindow& window,
                                Var enc_out, const ForwardContext& ctx) {
  check_window(window);
  const ad::Index tl = cfg_.input_length, th = cfg_.horizon, tde = cfg_.start_token;
  if (tde > tl) throw ConfigError("start token length T_de exceeds T_l");
  Eigen::VectorXd inputs = Eigen::VectorXd::Zero(tde + th);
  inputs.head(tde) = window.y_past.tail(tde);
  std::vector<int> positions(static_cast<std::size_t>(tde + th));
  for (ad::Index j = 0; j < tde + th; ++j)
    positions[static_cast<std::size_t>(j)] = static_cast<int>(tl - tde + j);
  return dec.forward(tape, tape.constant(inputs), tape.constant(window.x_all.bottomRows(tde + th)),
                     window.series_id, positions, enc_out, AttentionMask::kNone, th, ctx);
}

DecodeResult AMLNet::decode_p2(Tape& tape, const data::ForecastWindow& window, Var enc_out,
                               const ForwardContext& ctx) {
  return decode_nar(p2_, tape, window, enc_out, ctx);
}

DecodeResult AMLNet::decode_s(Tape& tape, const data::ForecastWindow& window, Var enc_out,
                              const ForwardContext& ctx) {
  return decode_nar(s_, tape, window, enc_out, ctx);
}

Discriminator& AMLNet::discriminator(DecoderKind which, int layer) {
  if (which == DecoderKind::kS) throw ContractError("discriminators exist only for P1 and P2");
  if (layer < 1 || layer > cfg_.n_d)
    throw ContractError("discriminator index " + std::to_string(layer) + " out of range 1.." +
                        std::to_string(cfg_.n_d));
  auto& bank = which == DecoderKind::kP1 ? disc_p1_ : disc_p2_;
  return bank[static_cast<std::size_t>(layer - 1)];
}

Var AMLNet::discriminate(Tape& tape, DecoderKind which, int layer, const std::vector<Var>& batch,
                         NormMode mode) {
  return discriminator(which, layer).forward(tape, batch, mode);
}

double AMLNet::discriminate(DecoderKind which, int layer, const Matrix& hidden) {
  Discriminator& d = discriminator(which, layer);
  Tape tape;
  tape.freeze(d.parameters());
  return d.forward(tape, {tape.constant(hidden)}, NormMode::kEval).scalar();
}

GaussianForecast AMLNet::predict(const data::ForecastWindow& window, DecoderKind decoder) {
  return predict(window, decoder, nullptr);
}

GaussianForecast AMLNet::predict(const data::ForecastWindow& window, DecoderKind decoder,
                                 PredictTrace* trace) {
  Tape tape;
  ForwardContext ctx;
  tape.freeze(encoder_parameters());
  Decoder& dec = this->decoder(decoder);
  tape.freeze(dec.parameters());
  Var h = encode(tape, window, ctx);
  DecodeResult r;
  switch (decoder) {
    case DecoderKind::kP1: r = decode_p1_autoregressive(tape, window, h, ctx); break;
    case DecoderKind::kP2: r = decode_p2(tape, window, h, ctx); break;
    case DecoderKind::kS: r = decode_s(tape, window, h, ctx); break;
  }
  if (trace) {
    trace->last_hidden = r.hidden.back().value();
    trace->touched = tape.touched();
  }
  GaussianForecast f = r.forecast();
  f.validate();
  return f;
}

ad::ParameterList AMLNet::discriminator_parameters() {
  ad::ParameterList p;
  for (auto& d : disc_p1_) append(p, d.parameters());
  for (auto& d : disc_p2_) append(p, d.parameters());
  return p;
}

ad::ParameterList AMLNet::all_parameters() {
  ad::ParameterList p = encoder_parameters();
  append(p, p1_parameters());
  append(p, p2_parameters());
  append(p, s_parameters());
  append(p, discriminator_parameters());
  return p;
}

std::vector<Discriminator*> AMLNet::discriminators() {
  std::vector<Discriminator*> out;
  for (auto& d : disc_p1_) out.push_back(&d);
  for (auto& d : disc_p2_) out.push_back(&d);
  return out;
}

const Decoder& AMLNet::decoder(DecoderKind kind) const {
  switch (kind) {
    case DecoderKind::kP1: return p1_;
    case DecoderKind::kP2: return p2_;
    case DecoderKind::kS: return s_;
  }
  return s_;
}

Decoder& AMLNet::decoder(DecoderKind kind) {
  return const_cast<Decoder&>(static_cast<const AMLNet*>(this)->decoder(kind));
}

}  // namespace amlnet
