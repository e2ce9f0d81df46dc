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

#include "amlnet/optimizer.hpp"

#include <cmath>

namespace amlnet {

Adam::Adam(ad::ParameterList params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const ad::Parameter* p : params_) {
    m_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Parameter& p = *params_[i];
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * p.grad;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * p.grad.cwiseAbs2();
    const ad::Matrix m_hat = m_[i] / bc1;
    const ad::Matrix v_hat = v_[i] / bc2;
    p.value.array() -= options_.lr * m_hat.array() / (v_hat.array().sqrt() + options_.eps);
  }
}

void Adam::zero_grad() {
  for (ad::Parameter* p : params_) p->zero_grad();
}

double Adam::grad_norm() const {
  double sq = 0.0;
  for (const ad::Parameter* p : params_) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double Adam::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (ad::Parameter* p : params_) p->grad *= s;
  }
  return norm;
}

}  // namespace amlnet
