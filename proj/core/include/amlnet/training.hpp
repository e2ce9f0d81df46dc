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

#ifndef AMLNET_TRAINING_HPP_
#define AMLNET_TRAINING_HPP_

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "amlnet/data.hpp"
#include "amlnet/losses.hpp"
#include "amlnet/model.hpp"
#include "amlnet/optimizer.hpp"

namespace amlnet {

struct TrainConfig {
  double lr_generator = 0.005;      // lambda_G: encoder, P1, P2 and S
  double lr_discriminator = 0.001;  // lambda_D
  double alpha_o = 0.1;
  double alpha_h = 0.5;
  int max_epochs = 200;
  int batch_size = 32;
  int patience = 10;
  std::uint64_t seed = 1;
  double grad_clip = 5.0;  // global L2 norm per group; <= 0 disables
  bool non_saturating = false;
  double divergence_threshold = 1e6;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  int epoch = 0;
  double train_nll_p1 = 0.0;
  double train_nll_p2 = 0.0;
  double train_nll_s = 0.0;
  double train_total_s = 0.0;
  double train_disc = 0.0;
  double val_rho50_s = 0.0;
  double val_nll_s = 0.0;
  bool improved = false;

  std::string to_json() const;
};

// Parameter values plus discriminator running statistics.
struct ModelSnapshot {
  std::vector<ad::Matrix> parameters;
  std::vector<ad::RowVector> running_mean;
  std::vector<ad::RowVector> running_var;

  static ModelSnapshot capture(AMLNet& model);
  void restore(AMLNet& model) const;
  bool empty() const { return parameters.empty(); }
};

struct FitHooks {
  std::function<void(const losses::LossReport&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
  // Return true to stop after the given epoch (checkpoint/resume tests).
  std::function<bool(int epoch)> stop_after;
};

struct FitResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_rho50 = std::numeric_limits<double>::infinity();
  bool early_stopped = false;
};

// Runs the three-phase optimization: {encoder, P1, P2}, then {S}, then the
// discriminator bank, each with its own Adam state.
class Trainer {
 public:
  Trainer(const ModelConfig& model_config, const TrainConfig& train_config);

  AMLNet& model() { return *model_; }
  const TrainConfig& config() const { return cfg_; }

  losses::LossReport train_step(std::span<const data::ForecastWindow> batch);
  FitResult fit(const std::vector<data::ForecastWindow>& train,
                const std::vector<data::ForecastWindow>& validation, const FitHooks& hooks = {});

  // S-decoder validation metrics on normalized values: (rho50, mean NLL).
  std::pair<double, double> validate(const std::vector<data::ForecastWindow>& windows);

  // Best-epoch parameters (empty before the first validation).
  const ModelSnapshot& best() const { return best_; }
  // Copy of the model holding the best-epoch parameters.
  std::unique_ptr<AMLNet> best_model();

  int epoch() const { return epoch_; }
  std::int64_t step() const { return step_; }
  const std::vector<EpochRecord>& history() const { return history_; }

  Adam& generator_optimizer() { return gen_opt_; }
  Adam& student_optimizer() { return student_opt_; }
  Adam& discriminator_optimizer() { return disc_opt_; }

  // Every (series_id, t0) whose loss was backpropagated.
  const std::set<std::pair<int, data::Index>>& gradient_windows() const { return grad_windows_; }
  // Called with 1, 2, 3 after each optimizer step of train_step.
  void set_phase_observer(std::function<void(int phase)> observer) {
    phase_observer_ = std::move(observer);
  }

  // Complete resumable state (model, optimizers, RNG, counters, best).
  std::string save_state() const;
  void load_state(const std::string& serialized);

 private:
  void require_finite(double value, const std::string& what) const;

  ModelConfig model_cfg_;
  TrainConfig cfg_;
  std::unique_ptr<AMLNet> model_;
  std::optional<losses::LayerMap> map_;
  Adam gen_opt_, student_opt_, disc_opt_;
  std::mt19937_64 rng_;
  int epoch_ = 0;
  std::int64_t step_ = 0;
  int best_epoch_ = 0;
  int since_best_ = 0;
  double best_val_ = std::numeric_limits<double>::infinity();
  ModelSnapshot best_;
  std::vector<EpochRecord> history_;
  std::set<std::pair<int, data::Index>> grad_windows_;
  std::function<void(int)> phase_observer_;
};

// Forecasts one window per entry with all parameters frozen. P1 decodes
// autoregressively; P2 and S in one pass.
std::vector<GaussianForecast> predict(AMLNet& model, std::span<const data::ForecastWindow> windows,
                                      DecoderKind decoder = DecoderKind::kS);

}  // namespace amlnet

#endif  // AMLNET_TRAINING_HPP_
