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

#ifndef AMLNET_LAYERS_HPP_
#define AMLNET_LAYERS_HPP_

// Informer-style building blocks shared by the encoder and all decoders.
// Every layer owns its Parameters and records its forward pass on a Tape.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "amlnet/autodiff.hpp"

namespace amlnet {

struct ModelConfig {
  int d_hid = 16;
  int n_e = 3;
  int n_d = 3;  // depth of both deep decoders (P1, P2)
  int n_s = 2;  // depth of the shallow student decoder
  int d_f = 32;
  int n_h = 4;
  int start_token = 6;  // T_de
  double dropout = 0.0;
  int attn_sampling_factor = 2;
  bool use_prob_sparse = false;
  int max_series = 16;
  bool use_id_embedding = true;
  int input_length = 24;  // T_l
  int horizon = 12;       // T_h
  int n_covariates = 8;
  std::uint64_t init_seed = 1;

  // Throws ConfigError on any violated invariant.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Per-forward state. With training=false (or dropout 0) every layer is a
// pure function of its parameters and inputs.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  ad::Var maybe_dropout(ad::Var x) const;
};

enum class AttentionMask { kNone, kCausal };

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initializer.
ad::Matrix fan_in_uniform(ad::Index rows, ad::Index cols, ad::Index fan_in,
                          std::mt19937_64& rng);

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in, int out, std::mt19937_64& rng);

  ad::Var forward(ad::Tape& tape, ad::Var x);
  ad::ParameterList parameters() { return {&weight_, &bias_}; }
  ad::Parameter& weight() { return weight_; }
  ad::Parameter& bias() { return bias_; }

 private:
  ad::Parameter weight_;  // [in x out]
  ad::Parameter bias_;    // [1 x out]
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::string name, int width);

  ad::Var forward(ad::Tape& tape, ad::Var x);
  ad::ParameterList parameters() { return {&gamma_, &beta_}; }

 private:
  ad::Parameter gamma_;
  ad::Parameter beta_;
};

// Sum of value projection, covariate projection, learnable position
// embedding and (optionally) series-ID embedding.
class Embedding {
 public:
  Embedding() = default;
  Embedding(std::string name, const ModelConfig& cfg, int max_positions, std::mt19937_64& rng);

  // values [L], covariates [L x d_x], positions [L] -> [L x d_hid]
  ad::Var forward(ad::Tape& tape, ad::Var values, ad::Var covariates, int series_id,
                  const std::vector<int>& positions);
  ad::ParameterList parameters();

  ad::Parameter& value_proj() { return value_proj_; }
  ad::Parameter& covariate_proj() { return covariate_proj_; }
  ad::Parameter& bias() { return bias_; }
  ad::Parameter& position() { return position_; }
  ad::Parameter& series() { return series_; }

 private:
  ad::Parameter value_proj_;      // [1 x d]
  ad::Parameter covariate_proj_;  // [d_x x d]
  ad::Parameter bias_;            // [1 x d]
  ad::Parameter position_;        // [max_positions x d]
  ad::Parameter series_;          // [max_series x d]
  int max_series_ = 0;
  bool use_id_ = true;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::string name, int d_hid, int n_heads, std::mt19937_64& rng,
                     bool prob_sparse = false, int sampling_factor = 2,
                     std::uint64_t sample_seed = 0);

  // queries [Lq x d], keys/values [Lk x d] -> [Lq x d]
  ad::Var forward(ad::Tape& tape, ad::Var queries, ad::Var keys_values, AttentionMask mask);
  ad::ParameterList parameters();

  void set_prob_sparse(bool on, int factor) {
    prob_sparse_ = on;
    factor_ = factor;
  }

 private:
  ad::Var head(ad::Tape& tape, ad::Var q, ad::Var k, ad::Var v, AttentionMask mask,
               int head_index) const;

  Linear wq_, wk_, wv_, wo_;
  int n_heads_ = 1;
  int d_head_ = 1;
  bool prob_sparse_ = false;
  int factor_ = 2;
  std::uint64_t sample_seed_ = 0;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::string name, int d_hid, int d_ff, std::mt19937_64& rng);

  ad::Var forward(ad::Tape& tape, ad::Var x);
  ad::ParameterList parameters();

 private:
  Linear in_, out_;
};

// Pre-norm: x + SelfAttn(LN x), then x + FFN(LN x).
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(std::string name, const ModelConfig& cfg, std::mt19937_64& rng,
               std::uint64_t sample_seed);

  ad::Var forward(ad::Tape& tape, ad::Var x, const ForwardContext& ctx);
  ad::ParameterList parameters();

 private:
  LayerNorm norm1_, norm2_;
  MultiHeadAttention attn_;
  FeedForward ffn_;
};

// Pre-norm: masked self-attention, cross-attention over the encoder output,
// position-wise feed-forward; each with a residual connection.
class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(std::string name, const ModelConfig& cfg, std::mt19937_64& rng,
               bool self_prob_sparse, std::uint64_t sample_seed);

  ad::Var forward(ad::Tape& tape, ad::Var x, ad::Var enc_out, AttentionMask self_mask,
                  const ForwardContext& ctx);
  ad::ParameterList parameters();

 private:
  LayerNorm norm1_, norm2_, norm3_;
  MultiHeadAttention self_attn_, cross_attn_;
  FeedForward ffn_;
};

void append(ad::ParameterList& into, const ad::ParameterList& from);
std::size_t count_parameters(const ad::ParameterList& params);

}  // namespace amlnet

#endif  // AMLNET_LAYERS_HPP_
