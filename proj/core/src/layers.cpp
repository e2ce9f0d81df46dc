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

#include "amlnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "amlnet/errors.hpp"

namespace amlnet {

using ad::Matrix;
using ad::Tape;
using ad::Var;

void ModelConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (d_hid < 1 || n_h < 1 || d_f < 1) fail("d_hid, n_h and d_f must be positive");
  if (d_hid % n_h != 0) fail("d_hid must be divisible by n_h");
  if (n_s < 1) fail("n_s must be at least 1");
  if (!(n_d > n_s)) fail("n_d must exceed n_s");
  if (n_e < n_d) fail("n_e must be at least n_d");
  if (start_token < 1) fail("start_token (T_de) must be at least 1");
  if (input_length < 1 || horizon < 1) fail("input_length and horizon must be positive");
  if (start_token > input_length) fail("start_token (T_de) exceeds input_length (T_l)");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must lie in [0, 1)");
  if (attn_sampling_factor < 1) fail("attn_sampling_factor must be a positive integer");
  if (max_series < 1) fail("max_series must be positive");
  if (n_covariates < 0) fail("n_covariates must be nonnegative");
}

Var ForwardContext::maybe_dropout(Var x) const {
  if (!training || dropout <= 0.0 || rng == nullptr) return x;
  std::bernoulli_distribution keep(1.0 - dropout);
  Matrix mask(x.rows(), x.cols());
  for (ad::Index j = 0; j < mask.cols(); ++j)
    for (ad::Index i = 0; i < mask.rows(); ++i) mask(i, j) = keep(*rng) ? 1.0 : 0.0;
  return ad::dropout(x, mask, dropout);
}

Matrix fan_in_uniform(ad::Index rows, ad::Index cols, ad::Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<ad::Index>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (ad::Index j = 0; j < cols; ++j)
    for (ad::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

void append(ad::ParameterList& into, const ad::ParameterList& from) {
  into.insert(into.end(), from.begin(), from.end());
}

std::size_t count_parameters(const ad::ParameterList& params) {
  std::size_t n = 0;
  for (const ad::Parameter* p : params) n += static_cast<std::size_t>(p->size());
  return n;
}

// ---- Linear / LayerNorm ----------------------------------------------------

Linear::Linear(std::string name, int in, int out, std::mt19937_64& rng)
    : weight_(name + ".weight", fan_in_uniform(in, out, in, rng)),
      bias_(name + ".bias", Matrix::Zero(1, out)) {}

Var Linear::forward(Tape& tape, Var x) {
  return ad::add_row(ad::matmul(x, tape.param(weight_)), tape.param(bias_));
}

LayerNorm::LayerNorm(std::string name, int width)
    : gamma_(name + ".gamma", Matrix::Ones(1, width)),
      beta_(name + ".beta", Matrix::Zero(1, width)) {}

Var LayerNorm::forward(Tape& tape, Var x) {
  return ad::layer_norm_rows(x, tape.param(gamma_), tape.param(beta_));
}

// ---- Embedding -------------------------------------------------------------

Embedding::Embedding(std::string name, const ModelConfig& cfg, int max_positions,
                     std::mt19937_64& rng)
    : value_proj_(name + ".value_proj", fan_in_uniform(1, cfg.d_hid, 1 + cfg.n_covariates, rng)),
      covariate_proj_(name + ".covariate_proj",
                      fan_in_uniform(cfg.n_covariates, cfg.d_hid, 1 + cfg.n_covariates, rng)),
      bias_(name + ".bias", Matrix::Zero(1, cfg.d_hid)),
      position_(name + ".position", fan_in_uniform(max_positions, cfg.d_hid, cfg.d_hid, rng)),
      series_(name + ".series", fan_in_uniform(cfg.max_series, cfg.d_hid, cfg.d_hid, rng)),
      max_series_(cfg.max_series),
      use_id_(cfg.use_id_embedding) {}

Var Embedding::forward(Tape& tape, Var values, Var covariates, int series_id,
                       const std::vector<int>& positions) {
  const ad::Index len = values.rows();
  if (values.cols() != 1) throw ContractError("embed: values must be a column");
  if (covariates.rows() != len) throw ContractError("embed: covariate rows != values length");
  if (covariates.cols() != covariate_proj_.value.rows())
    throw ContractError("embed: covariate width mismatch");
  if (static_cast<ad::Index>(positions.size()) != len)
    throw ContractError("embed: one position per row required");
  for (int p : positions)
    if (p < 0 || p >= position_.value.rows()) throw ContractError("embed: position out of range");
  if (series_id < 0 || series_id >= max_series_)
    throw ConfigError("embed: series_id " + std::to_string(series_id) +
                      " exceeds max_series=" + std::to_string(max_series_));

  Var out = ad::matmul(values, tape.param(value_proj_));
  if (covariates.cols() > 0) out = ad::add(out, ad::matmul(covariates, tape.param(covariate_proj_)));
  out = ad::add_row(out, tape.param(bias_));
  out = ad::add(out, ad::gather_rows(tape.param(position_), positions));
  if (use_id_) {
    Var id_row = ad::slice_rows(tape.param(series_), series_id, 1);
    out = ad::add_row(out, id_row);
  }
  return out;
}

ad::ParameterList Embedding::parameters() {
  ad::ParameterList p{&value_proj_, &covariate_proj_, &bias_, &position_};
  if (use_id_) p.push_back(&series_);
  return p;
}

// ---- Attention -------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(std::string name, int d_hid, int n_heads,
                                       std::mt19937_64& rng, bool prob_sparse,
                                       int sampling_factor, std::uint64_t sample_seed)
    : wq_(name + ".q", d_hid, d_hid, rng),
      wk_(name + ".k", d_hid, d_hid, rng),
      wv_(name + ".v", d_hid, d_hid, rng),
      wo_(name + ".o", d_hid, d_hid, rng),
      n_heads_(n_heads),
      d_head_(d_hid / n_heads),
      prob_sparse_(prob_sparse),
      factor_(sampling_factor),
      sample_seed_(sample_seed) {
  if (n_heads < 1 || d_hid % n_heads != 0)
    throw ContractError("attention: n_h must divide d_hid");
}

ad::ParameterList MultiHeadAttention::parameters() {
  ad::ParameterList p;
  append(p, wq_.parameters());
  append(p, wk_.parameters());
  append(p, wv_.parameters());
  append(p, wo_.parameters());
  return p;
}

namespace {

Var full_attention(Tape& tape, Var q, Var k, Var v, AttentionMask mask, double scale) {
  Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), scale);
  if (mask == AttentionMask::kCausal) {
    if (q.rows() != k.rows()) throw ContractError("attention: causal mask needs Lq == Lk");
    Matrix m = Matrix::Zero(q.rows(), k.rows());
    for (ad::Index i = 0; i < m.rows(); ++i)
      for (ad::Index j = i + 1; j < m.cols(); ++j) m(i, j) = -1e30;
    scores = ad::add_const(scores, m);
  }
  (void)tape;
  return ad::matmul(ad::softmax_rows(scores), v);
}

ad::Index sparse_count(int factor, ad::Index length) {
  const double c = std::ceil(std::log(static_cast<double>(length)));
  return std::clamp<ad::Index>(static_cast<ad::Index>(factor * c), 1, length);
}

}  // namespace

Var MultiHeadAttention::head(Tape& tape, Var q, Var k, Var v, AttentionMask mask,
                             int head_index) const {
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_head_));
  const ad::Index lq = q.rows(), lk = k.rows();
  // ProbSparse only at non-causal sites: query selection ranks all rows,
  // which would leak future positions under a causal mask.
  if (!prob_sparse_ || mask == AttentionMask::kCausal)
    return full_attention(tape, q, k, v, mask, scale);
  const ad::Index n_top = sparse_count(factor_, lq);
  if (n_top >= lq) return full_attention(tape, q, k, v, mask, scale);

  // Query sparsity measure M(q) = max_j s_j - mean_j s_j over sampled keys.
  const ad::Index n_sample = sparse_count(factor_, lk);
  std::mt19937_64 gen(sample_seed_ ^ (static_cast<std::uint64_t>(lq) * 0x9E3779B97F4A7C15ULL) ^
                      (static_cast<std::uint64_t>(lk) << 32) ^
                      static_cast<std::uint64_t>(head_index));
  std::uniform_int_distribution<ad::Index> pick(0, lk - 1);
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  std::vector<double> measure(static_cast<std::size_t>(lq));
  for (ad::Index i = 0; i < lq; ++i) {
    double mx = -std::numeric_limits<double>::infinity(), total = 0.0;
    for (ad::Index s = 0; s < n_sample; ++s) {
      const double d = qv.row(i).dot(kv.row(pick(gen))) * scale;
      mx = std::max(mx, d);
      total += d;
    }
    measure[static_cast<std::size_t>(i)] = mx - total / static_cast<double>(lk);
  }
  std::vector<int> order(static_cast<std::size_t>(lq));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return measure[static_cast<std::size_t>(a)] > measure[static_cast<std::size_t>(b)];
  });
  std::vector<int> selected(order.begin(), order.begin() + n_top);
  std::sort(selected.begin(), selected.end());

  Var q_sel = ad::gather_rows(q, selected);
  Var out_sel = full_attention(tape, q_sel, k, v, AttentionMask::kNone, scale);
  std::vector<int> scatter(static_cast<std::size_t>(lq), -1);
  Matrix lazy_mask = Matrix::Ones(lq, 1);
  for (std::size_t s = 0; s < selected.size(); ++s) {
    scatter[static_cast<std::size_t>(selected[s])] = static_cast<int>(s);
    lazy_mask(selected[s], 0) = 0.0;
  }
  // Lazy queries receive the mean of the values.
  Var mean_v = ad::matmul(tape.constant(lazy_mask / static_cast<double>(lk) *
                                        Matrix::Ones(1, lk)),
                          v);
  return ad::add(mean_v, ad::gather_rows(out_sel, scatter));
}

Var MultiHeadAttention::forward(Tape& tape, Var queries, Var keys_values, AttentionMask mask) {
  if (queries.cols() != keys_values.cols() ||
      queries.cols() != wq_.weight().value.rows())
    throw ContractError("attention: width mismatch");
  Var q = wq_.forward(tape, queries);
  Var k = wk_.forward(tape, keys_values);
  Var v = wv_.forward(tape, keys_values);
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(n_heads_));
  for (int h = 0; h < n_heads_; ++h) {
    const ad::Index c = static_cast<ad::Index>(h) * d_head_;
    heads.push_back(head(tape, ad::slice_cols(q, c, d_head_), ad::slice_cols(k, c, d_head_),
                         ad::slice_cols(v, c, d_head_), mask, h));
  }
  Var merged = n_heads_ == 1 ? heads.front() : ad::hstack(heads);
  return wo_.forward(tape, merged);
}

// ---- Feed-forward / layers -------------------------------------------------

FeedForward::FeedForward(std::string name, int d_hid, int d_ff, std::mt19937_64& rng)
    : in_(name + ".in", d_hid, d_ff, rng), out_(name + ".out", d_ff, d_hid, rng) {}

Var FeedForward::forward(Tape& tape, Var x) {
  return out_.forward(tape, ad::gelu(in_.forward(tape, x)));
}

ad::ParameterList FeedForward::parameters() {
  ad::ParameterList p = in_.parameters();
  append(p, out_.parameters());
  return p;
}

EncoderLayer::EncoderLayer(std::string name, const ModelConfig& cfg, std::mt19937_64& rng,
                           std::uint64_t sample_seed)
    : norm1_(name + ".norm1", cfg.d_hid),
      norm2_(name + ".norm2", cfg.d_hid),
      attn_(name + ".attn", cfg.d_hid, cfg.n_h, rng, cfg.use_prob_sparse,
            cfg.attn_sampling_factor, sample_seed),
      ffn_(name + ".ffn", cfg.d_hid, cfg.d_f, rng) {}

Var EncoderLayer::forward(Tape& tape, Var x, const ForwardContext& ctx) {
  Var a = norm1_.forward(tape, x);
  x = ad::add(x, ctx.maybe_dropout(attn_.forward(tape, a, a, AttentionMask::kNone)));
  x = ad::add(x, ctx.maybe_dropout(ffn_.forward(tape, norm2_.forward(tape, x))));
  return x;
}

ad::ParameterList EncoderLayer::parameters() {
  ad::ParameterList p = norm1_.parameters();
  append(p, norm2_.parameters());
  append(p, attn_.parameters());
  append(p, ffn_.parameters());
  return p;
}

DecoderLayer::DecoderLayer(std::string name, const ModelConfig& cfg, std::mt19937_64& rng,
                           bool self_prob_sparse, std::uint64_t sample_seed)
    : norm1_(name + ".norm1", cfg.d_hid),
      norm2_(name + ".norm2", cfg.d_hid),
      norm3_(name + ".norm3", cfg.d_hid),
      self_attn_(name + ".self_attn", cfg.d_hid, cfg.n_h, rng, self_prob_sparse,
                 cfg.attn_sampling_factor, sample_seed),
      cross_attn_(name + ".cross_attn", cfg.d_hid, cfg.n_h, rng),
      ffn_(name + ".ffn", cfg.d_hid, cfg.d_f, rng) {}

Var DecoderLayer::forward(Tape& tape, Var x, Var enc_out, AttentionMask self_mask,
                          const ForwardContext& ctx) {
  if (x.cols() != enc_out.cols()) throw ContractError("decoder layer: width mismatch");
  Var a = norm1_.forward(tape, x);
  x = ad::add(x, ctx.maybe_dropout(self_attn_.forward(tape, a, a, self_mask)));
  Var c = norm2_.forward(tape, x);
  x = ad::add(x, ctx.maybe_dropout(cross_attn_.forward(tape, c, enc_out, AttentionMask::kNone)));
  x = ad::add(x, ctx.maybe_dropout(ffn_.forward(tape, norm3_.forward(tape, x))));
  return x;
}

ad::ParameterList DecoderLayer::parameters() {
  ad::ParameterList p = norm1_.parameters();
  append(p, norm2_.parameters());
  append(p, norm3_.parameters());
  append(p, self_attn_.parameters());
  append(p, cross_attn_.parameters());
  append(p, ffn_.parameters());
  return p;
}

}  // namespace amlnet
