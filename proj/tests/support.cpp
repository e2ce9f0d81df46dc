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

#include "support.hpp"

#include <algorithm>
#include <cmath>

namespace amlnet::testing {

ModelConfig toy_config() {
  ModelConfig c;
  c.d_hid = 8;
  c.n_e = 2;
  c.n_d = 2;
  c.n_s = 1;
  c.d_f = 16;
  c.n_h = 2;
  c.start_token = 2;
  c.max_series = 4;
  c.input_length = 6;
  c.horizon = 4;
  c.n_covariates = 3;
  c.init_seed = 11;
  return c;
}

ModelConfig toy_config_mapped() {
  ModelConfig c = toy_config();
  c.n_e = 3;
  c.n_d = 3;
  c.n_s = 2;
  return c;
}

ad::Matrix random_matrix(ad::Index rows, ad::Index cols, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  ad::Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

data::ForecastWindow random_window(const ModelConfig& cfg, std::mt19937_64& rng, int series_id,
                                   bool with_future) {
  data::ForecastWindow w;
  w.y_past = random_matrix(cfg.input_length, 1, rng);
  w.x_all = random_matrix(cfg.input_length + cfg.horizon, cfg.n_covariates, rng);
  if (with_future) w.y_future = random_matrix(cfg.horizon, 1, rng);
  w.series_id = series_id;
  return w;
}

double relative_error(const ad::Matrix& a, const ad::Matrix& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-8});
  return (a - b).norm() / denom;
}

double gradient_error(const ScalarFn& f, const ad::ParameterList& params, int max_entries,
                      double step) {
  for (ad::Parameter* p : params) p->zero_grad();
  {
    ad::Tape tape;
    tape.backward(f(tape));
  }
  std::vector<double> analytic, numeric;
  for (ad::Parameter* p : params) {
    const ad::Index n = p->value.size();
    const ad::Index stride = std::max<ad::Index>(1, n / max_entries);
    for (ad::Index i = 0; i < n; i += stride) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + step;
      double up;
      {
        ad::Tape tape;
        up = f(tape).scalar();
      }
      x = saved - step;
      double down;
      {
        ad::Tape tape;
        down = f(tape).scalar();
      }
      x = saved;
      analytic.push_back(p->grad.data()[i]);
      numeric.push_back((up - down) / (2.0 * step));
    }
  }
  for (ad::Parameter* p : params) p->zero_grad();
  const auto as_vec = [](const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<ad::Index>(v.size()));
  };
  return relative_error(as_vec(analytic), as_vec(numeric));
}

double op_gradient_error(const OpFn& op, std::vector<ad::Matrix> inputs, std::uint64_t seed) {
  std::vector<ad::Parameter> params;
  params.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i)
    params.emplace_back("in" + std::to_string(i), std::move(inputs[i]));
  ad::ParameterList list;
  for (auto& p : params) list.push_back(&p);
  ad::Matrix weights;
  const ScalarFn f = [&](ad::Tape& tape) {
    std::vector<ad::Var> vars;
    for (auto& p : params) vars.push_back(tape.param(p));
    ad::Var out = op(tape, vars);
    if (weights.rows() != out.rows() || weights.cols() != out.cols()) {
      std::mt19937_64 rng(seed);
      weights = random_matrix(out.rows(), out.cols(), rng);
    }
    return ad::sum(ad::mul(out, tape.constant(weights)));
  };
  return gradient_error(f, list);
}

}  // namespace amlnet::testing
