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

#ifndef AMLNET_TESTS_SUPPORT_HPP_
#define AMLNET_TESTS_SUPPORT_HPP_

#include <functional>
#include <random>
#include <vector>

#include "amlnet/autodiff.hpp"
#include "amlnet/data.hpp"
#include "amlnet/layers.hpp"

namespace amlnet::testing {

// d_hid=8, n_e=2, n_d=2 (n_s=1, so no student mapping), T_l=6, T_h=4.
ModelConfig toy_config();
// d_hid=8, n_e=3, n_d=3, n_s=2.
ModelConfig toy_config_mapped();

data::ForecastWindow random_window(const ModelConfig& cfg, std::mt19937_64& rng,
                                   int series_id = 0, bool with_future = true);

ad::Matrix random_matrix(ad::Index rows, ad::Index cols, std::mt19937_64& rng,
                         double scale = 1.0);

// ||a - b|| / max(||a||, ||b||, 1e-8)
double relative_error(const ad::Matrix& a, const ad::Matrix& b);

inline constexpr double kFdStep = 1e-3;
inline constexpr double kFdTolerance = 1e-4;

// Builds a scalar from the given parameters on a fresh tape.
using ScalarFn = std::function<ad::Var(ad::Tape&)>;

// Relative error between the taped gradient and central differences over
// every entry of every parameter in `params` (at most `max_entries` entries
// per parameter, chosen deterministically).
double gradient_error(const ScalarFn& f, const ad::ParameterList& params,
                      int max_entries = 1 << 30, double step = kFdStep);

// Wraps f(x) in a random linear functional so every output entry matters.
using OpFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;
double op_gradient_error(const OpFn& op, std::vector<ad::Matrix> inputs, std::uint64_t seed = 3);

}  // namespace amlnet::testing

#endif  // AMLNET_TESTS_SUPPORT_HPP_
