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

#ifndef AMLNET_MODEL_HPP_
#define AMLNET_MODEL_HPP_

#include <atomic>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "amlnet/autodiff.hpp"
#include "amlnet/data.hpp"
#include "amlnet/layers.hpp"

namespace amlnet {

enum class DecoderKind { kP1, kP2, kS };

std::string to_string(DecoderKind kind);
DecoderKind parse_decoder_kind(const std::string& text);

// Per-step Gaussian predictive distribution over the horizon.
struct GaussianForecast {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;

  Eigen::Index horizon() const { return mu.size(); }
  // sigma > 0 and all values finite; throws NumericError otherwise.
  void validate() const;
};

// Decoder output recorded on a tape. mu and sigma are [T_h x 1]; hidden
// holds one [T_h x d_hid] residual-stream matrix per decoder layer.
struct DecodeResult {
  ad::Var mu;
  ad::Var sigma;
  std::vector<ad::Var> hidden;

  GaussianForecast forecast() const;
};

// Smallest admissible predictive standard deviation.
inline constexpr double kSigmaFloor = 1e-4;

// Forward-call instrumentation; copyable so models stay value types.
class CallCounter {
 public:
  CallCounter() = default;
  CallCounter(const CallCounter& o) : n_(o.n_.load()) {}
  CallCounter& operator=(const CallCounter& o) {
    n_.store(o.n_.load());
    return *this;
  }
  void bump() { n_.fetch_add(1, std::memory_order_relaxed); }
  std::uint64_t count() const { return n_.load(); }
  void reset() { n_.store(0); }

 private:
  std::atomic<std::uint64_t> n_{0};
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const ModelConfig& cfg, std::mt19937_64& rng);

  // (y_t, x_t) over the input span -> [T_l x d_hid]
  ad::Var forward(ad::Tape& tape, const data::ForecastWindow& window, const ForwardContext& ctx);
  ad::ParameterList parameters();
  const CallCounter& calls() const { return calls_; }

 private:
  int input_length_ = 0;
  Embedding embed_;
  std::vector<EncoderLayer> layers_;
  LayerNorm final_norm_;
  CallCounter calls_;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(std::string name, const ModelConfig& cfg, int n_layers, bool non_autoregressive,
          std::mt19937_64& rng);

  // values [L x 1], covariates [L x d_x]; the last `output_rows` rows form the
  // forecast and the hidden states.
  DecodeResult forward(ad::Tape& tape, ad::Var values, ad::Var covariates, int series_id,
                       const std::vector<int>& positions, ad::Var enc_out, AttentionMask mask,
                       ad::Index output_rows, const ForwardContext& ctx);
  ad::ParameterList parameters();
  int depth() const { return static_cast<int>(layers_.size()); }
  const CallCounter& calls() const { return calls_; }
  void reset_calls() { calls_.reset(); }

 private:
  Embedding embed_;
  std::vector<DecoderLayer> layers_;
  LayerNorm final_norm_;
  Linear head_;
  CallCounter calls_;
};

enum class NormMode {
  kTrainUpdate,  // batch statistics; running averages updated
  kTrainFrozen,  // batch statistics; running averages untouched
  kEval,         // running averages
};

// Conv(16, k3, s2) - BatchNorm - LeakyReLU - Conv(1, k3, s1) - Linear -
// Sigmoid over a [T_h x d_hid] hidden-state matrix (d_hid channels, T_h
// positions, zero padding 1).
class Discriminator {
 public:
  static constexpr int kChannels = 16;
  static constexpr double kLeakySlope = 0.2;
  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

  Discriminator() = default;
  Discriminator(std::string name, int d_hid, int horizon, std::mt19937_64& rng);

  // One probability per batch element: [B x 1].
  ad::Var forward(ad::Tape& tape, const std::vector<ad::Var>& batch, NormMode mode);
  ad::ParameterList parameters();

  ad::RowVector& running_mean() { return running_mean_; }
  ad::RowVector& running_var() { return running_var_; }
  const std::string& name() const { return name_; }
  static ad::Index conv_length(ad::Index horizon) { return (horizon - 1) / 2 + 1; }

 private:
  std::string name_;
  int horizon_ = 0;
  ad::Parameter conv1_w_, conv1_b_, bn_gamma_, bn_beta_, conv2_w_, conv2_b_, lin_w_, lin_b_;
  ad::RowVector running_mean_, running_var_;
};

// Full AMLNet state: shared encoder, P1 (deep AR), P2 (deep NAR), S (shallow
// NAR) and one discriminator per deep-decoder layer for P1 and P2.
class AMLNet {
 public:
  explicit AMLNet(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  ad::Var encode(ad::Tape& tape, const data::ForecastWindow& window, const ForwardContext& ctx);
  // Teacher forcing: step t reads ground truth y_{t-1}; causal self-attention.
  DecodeResult decode_p1_teacher_forced(ad::Tape& tape, const data::ForecastWindow& window,
                                        ad::Var enc_out, const ForwardContext& ctx);
  // Step t reads the predicted mean at t-1; T_h sequential decoder passes.
  // Hidden states are those of the final pass.
  DecodeResult decode_p1_autoregressive(ad::Tape& tape, const data::ForecastWindow& window,
                                        ad::Var enc_out, const ForwardContext& ctx);
  DecodeResult decode_p2(ad::Tape& tape, const data::ForecastWindow& window, ad::Var enc_out,
                         const ForwardContext& ctx);
  DecodeResult decode_s(ad::Tape& tape, const data::ForecastWindow& window, ad::Var enc_out,
                        const ForwardContext& ctx);

  // `layer` is 1-based; which must be P1 or P2.
  Discriminator& discriminator(DecoderKind which, int layer);
  ad::Var discriminate(ad::Tape& tape, DecoderKind which, int layer,
                       const std::vector<ad::Var>& batch, NormMode mode);
  // Evaluation-mode probability for one hidden-state matrix.
  double discriminate(DecoderKind which, int layer, const ad::Matrix& hidden);

  // Inference with every parameter frozen. P1 decodes autoregressively.
  GaussianForecast predict(const data::ForecastWindow& window, DecoderKind decoder);
  // Like predict, also recording the last decoder layer's hidden states and
  // every parameter the pass read.
  struct PredictTrace {
    ad::Matrix last_hidden;
    std::unordered_set<const ad::Parameter*> touched;
  };
  GaussianForecast predict(const data::ForecastWindow& window, DecoderKind decoder,
                           PredictTrace* trace);

  ad::ParameterList encoder_parameters() { return encoder_.parameters(); }
  ad::ParameterList p1_parameters() { return p1_.parameters(); }
  ad::ParameterList p2_parameters() { return p2_.parameters(); }
  ad::ParameterList s_parameters() { return s_.parameters(); }
  ad::ParameterList discriminator_parameters();
  ad::ParameterList all_parameters();
  std::vector<Discriminator*> discriminators();

  const Decoder& decoder(DecoderKind kind) const;
  Decoder& decoder(DecoderKind kind);
  const Encoder& encoder() const { return encoder_; }

 private:
  DecodeResult decode_nar(Decoder& dec, ad::Tape& tape, const data::ForecastWindow& window,
                          ad::Var enc_out, const ForwardContext& ctx);
  void check_window(const data::ForecastWindow& window) const;

  ModelConfig cfg_;
  Encoder encoder_;
  Decoder p1_, p2_, s_;
  std::vector<Discriminator> disc_p1_, disc_p2_;
};

}  // namespace amlnet

#endif  // AMLNET_MODEL_HPP_
