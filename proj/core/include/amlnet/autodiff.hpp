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

#ifndef AMLNET_AUTODIFF_HPP_
#define AMLNET_AUTODIFF_HPP_

// Tape-based reverse-mode automatic differentiation over dense 2-D matrices.
//
// A Tape records every operation of one forward pass. Leaves are either
// constants or bound Parameters; backward() propagates the gradient of a
// scalar output to every node that depends on a trainable leaf and adds the
// leaf gradients into Parameter::grad. Parameters can be frozen on a tape,
// in which case they enter the graph as constants and receive nothing.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace amlnet::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)),
        grad(Matrix::Zero(value.rows(), value.cols())) {}

  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

using ParameterList = std::vector<Parameter*>;

class Tape;

// Lightweight handle to a node on a Tape.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  // (tape, upstream gradient, id of the node being differentiated)
  using Backward = std::function<void(Tape&, const Matrix&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Binds a parameter. Unless frozen on this tape, its gradient is
  // accumulated into p.grad by backward().
  Var param(Parameter& p);

  void freeze(std::span<Parameter* const> params);
  void freeze(const ParameterList& params) { freeze(std::span<Parameter* const>(params)); }
  bool is_frozen(const Parameter& p) const { return frozen_.contains(&p); }

  // Every parameter bound on this tape, frozen or not (access
  // instrumentation).
  const std::unordered_set<const Parameter*>& touched() const { return touched_; }

  void backward(Var output);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  // Gradient accumulator of a node; allocated as zeros on first access.
  Matrix& grad(int id);
  // Gradient of a node after backward(); zero matrix if none flowed.
  Matrix grad_of(Var v);

  std::size_t size() const { return nodes_.size(); }

  // Records an op node. `backward` receives the upstream gradient and must
  // accumulate into the parents' grad(). Skipped when no parent needs grad.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var record(Matrix value, const std::vector<Var>& parents, Backward backward);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_set<const Parameter*> frozen_;
  std::unordered_set<const Parameter*> touched_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

// ---- elementwise and linear algebra ----------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // Hadamard
Var div(Var a, Var b);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);
// Adds a [1 x c] row to every row of a.
Var add_row(Var a, Var row);
// Adds a constant matrix of the same shape (masks, offsets).
Var add_const(Var a, const Matrix& c);

Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
Var gelu(Var a);
Var leaky_relu(Var a, double slope);
// Clamps values to [lo, hi]; gradient is zero outside the interval.
Var clamp(Var a, double lo, double hi);

Var sum(Var a);
Var mean(Var a);

// Row-wise softmax.
Var softmax_rows(Var a);
// Normalizes every row to zero mean / unit variance, then applies the
// [1 x c] affine gamma/beta.
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
// Normalizes every column over the rows (batch statistics); returns the
// per-column mean and population variance through the out-params.
Var batch_norm_cols(Var x, Var gamma, Var beta, double eps, RowVector* batch_mean,
                    RowVector* batch_var);
// Normalizes columns with fixed statistics (evaluation mode).
Var affine_norm_cols(Var x, Var gamma, Var beta, const RowVector& mean,
                     const RowVector& var, double eps);

Var slice_rows(Var a, Eigen::Index start, Eigen::Index n);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index n);
Var vstack(const std::vector<Var>& parts);
Var hstack(const std::vector<Var>& parts);
// Row gather; index -1 yields a zero row (used for padded convolutions).
Var gather_rows(Var a, const std::vector<int>& index);
// Multiplies every row of `a` by a constant per-row weight ([rows x 1]).
Var scale_rows(Var a, const Vector& weights);
// Drops elements with probability p and rescales survivors by 1/(1-p).
Var dropout(Var a, const Matrix& keep_mask, double p);

Var detach(Var a);

}  // namespace amlnet::ad

#endif  // AMLNET_AUTODIFF_HPP_
