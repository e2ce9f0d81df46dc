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

#ifndef AMLNET_OPTIMIZER_HPP_
#define AMLNET_OPTIMIZER_HPP_

#include <cstdint>
#include <vector>

#include "amlnet/autodiff.hpp"

namespace amlnet {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a fixed parameter group. Reads Parameter::grad, never clears it
// implicitly.
class Adam {
 public:
  Adam() = default;
  Adam(ad::ParameterList params, AdamOptions options);

  void step();
  void zero_grad();
  // Rescales the group's gradients to global L2 norm <= max_norm; returns
  // the norm before clipping.
  double clip_grad_norm(double max_norm);
  double grad_norm() const;

  const ad::ParameterList& parameters() const { return params_; }
  const AdamOptions& options() const { return options_; }
  std::int64_t steps() const { return t_; }

  // Moment buffers, in parameter order (checkpoint/resume).
  std::vector<ad::Matrix>& first_moments() { return m_; }
  std::vector<ad::Matrix>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  ad::ParameterList params_;
  AdamOptions options_;
  std::vector<ad::Matrix> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace amlnet

#endif  // AMLNET_OPTIMIZER_HPP_
