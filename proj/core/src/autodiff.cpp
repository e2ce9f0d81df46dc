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

#include "amlnet/autodiff.hpp"

#include <cmath>
#include <utility>

#include "amlnet/errors.hpp"

namespace amlnet::ad {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw ContractError(what);
}

Tape& tape_of(Var a) {
  require(a.valid(), "autodiff: uninitialized Var");
  return a.tape();
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

double Var::scalar() const {
  const Matrix& v = value();
  require(v.rows() == 1 && v.cols() == 1, "autodiff: scalar() on non-scalar");
  return v(0, 0);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  touched_.insert(&p);
  Node n;
  n.value = p.value;
  if (!frozen_.contains(&p)) {
    n.needs_grad = true;
    n.param = &p;
  }
  return push(std::move(n));
}

void Tape::freeze(std::span<Parameter* const> params) {
  for (Parameter* p : params) frozen_.insert(p);
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Matrix Tape::grad_of(Var v) {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    require(p.tape_ == this, "autodiff: operands live on different tapes");
    if (nodes_[static_cast<std::size_t>(p.id_)].needs_grad) n.needs_grad = true;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    require(p.tape_ == this, "autodiff: operands live on different tapes");
    if (nodes_[static_cast<std::size_t>(p.id_)].needs_grad) n.needs_grad = true;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::backward(Var output) {
  require(output.tape_ == this, "autodiff: backward on foreign Var");
  require(output.rows() == 1 && output.cols() == 1, "autodiff: backward needs a scalar");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!needs_grad(output.id_)) return;
  grad(output.id_).setOnes();
  for (int id = output.id_; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      // Copy: backward may allocate parent grads, never this node's.
      const Matrix g = n.grad;
      n.backward(*this, g, id);
    }
  }
}

// ---- ops -------------------------------------------------------------------

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Tape& t = tape_of(a);
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g, int) {
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ib)) t.grad(ib) += g;
  });
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Tape& t = tape_of(a);
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g, int) {
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ib)) t.grad(ib) -= g;
  });
}

Var mul(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Tape& t = tape_of(a);
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), {a, b},
                  [ia, ib](Tape& t, const Matrix& g, int) {
                    if (t.needs_grad(ia)) t.grad(ia) += g.cwiseProduct(t.value(ib));
                    if (t.needs_grad(ib)) t.grad(ib) += g.cwiseProduct(t.value(ia));
                  });
}

Var div(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "div: shape mismatch");
  Tape& t = tape_of(a);
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseQuotient(b.value()), {a, b},
                  [ia, ib](Tape& t, const Matrix& g, int self) {
                    const Matrix& bv = t.value(ib);
                    if (t.needs_grad(ia)) t.grad(ia) += g.cwiseQuotient(bv);
                    if (t.needs_grad(ib))
                      t.grad(ib) -= g.cwiseProduct(t.value(self)).cwiseQuotient(bv);
                  });
}

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Tape& t = tape_of(a);
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g, int) {
    if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.needs_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().transpose(), {a},
                  [ia](Tape& t, const Matrix& g, int) { t.grad(ia) += g.transpose(); });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value() * s, {a},
                  [ia, s](Tape& t, const Matrix& g, int) { t.grad(ia) += g * s; });
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().array() + s, {a},
                  [ia](Tape& t, const Matrix& g, int) { t.grad(ia) += g; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: shape mismatch");
  Tape& t = tape_of(a);
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), {a, row}, [ia, ir](Tape& t, const Matrix& g, int) {
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ir)) t.grad(ir) += g.colwise().sum();
  });
}

Var add_const(Var a, const Matrix& c) {
  require(a.rows() == c.rows() && a.cols() == c.cols(), "add_const: shape mismatch");
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value() + c, {a},
                  [ia](Tape& t, const Matrix& g, int) { t.grad(ia) += g; });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().array().exp().matrix(), {a},
                  [ia](Tape& t, const Matrix& g, int self) {
                    t.grad(ia) += g.cwiseProduct(t.value(self));
                  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().array().log().matrix(), {a}, [ia](Tape& t, const Matrix& g, int) {
    t.grad(ia) += g.cwiseQuotient(t.value(ia));
  });
}

Var square(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().array().square().matrix(), {a},
                  [ia](Tape& t, const Matrix& g, int) {
                    t.grad(ia) += 2.0 * g.cwiseProduct(t.value(ia));
                  });
}

Var softplus(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().unaryExpr(&stable_softplus), {a},
                  [ia](Tape& t, const Matrix& g, int) {
                    t.grad(ia) += g.cwiseProduct(t.value(ia).unaryExpr(&stable_sigmoid));
                  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().unaryExpr(&stable_sigmoid), {a},
                  [ia](Tape& t, const Matrix& g, int self) {
                    const auto y = t.value(self).array();
                    t.grad(ia) += (g.array() * y * (1.0 - y)).matrix();
                  });
}

Var gelu(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  });
  return t.record(std::move(out), {a}, [ia](Tape& t, const Matrix& g, int) {
    const Matrix d = t.value(ia).unaryExpr([](double x) {
      const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
      return 0.5 * (1.0 + th) +
             0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    });
    t.grad(ia) += g.cwiseProduct(d);
  });
}

Var leaky_relu(Var a, double slope) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([slope](double x) { return x > 0 ? x : slope * x; });
  return t.record(std::move(out), {a}, [ia, slope](Tape& t, const Matrix& g, int) {
    const Matrix d = t.value(ia).unaryExpr([slope](double x) { return x > 0 ? 1.0 : slope; });
    t.grad(ia) += g.cwiseProduct(d);
  });
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return t.record(std::move(out), {a}, [ia, lo, hi](Tape& t, const Matrix& g, int) {
    const Matrix d =
        t.value(ia).unaryExpr([lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
    t.grad(ia) += g.cwiseProduct(d);
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a},
                  [ia](Tape& t, const Matrix& g, int) { t.grad(ia).array() += g(0, 0); });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  require(n > 0, "mean: empty input");
  return scale(sum(a), 1.0 / n);
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return t.record(std::move(y), {a}, [ia](Tape& t, const Matrix& g, int self) {
    const Matrix& y = t.value(self);
    const Vector dot = g.cwiseProduct(y).rowwise().sum();
    t.grad(ia) += y.cwiseProduct(g.colwise() - dot);
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  require(gamma.rows() == 1 && gamma.cols() == x.cols(), "layer_norm: gamma shape");
  require(beta.rows() == 1 && beta.cols() == x.cols(), "layer_norm: beta shape");
  Tape& t = tape_of(x);
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  const Matrix& xv = x.value();
  const double n = static_cast<double>(xv.cols());
  Matrix xhat(xv.rows(), xv.cols());
  Vector inv(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().sum() / n;
    inv(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv(r);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return t.record(std::move(out), {x, gamma, beta},
                  [ix, ig, ib, xhat, inv, n](Tape& t, const Matrix& g, int) {
                    if (t.needs_grad(ig)) t.grad(ig) += g.cwiseProduct(xhat).colwise().sum();
                    if (t.needs_grad(ib)) t.grad(ib) += g.colwise().sum();
                    if (!t.needs_grad(ix)) return;
                    const Matrix dxhat =
                        (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
                    const Vector m1 = dxhat.rowwise().sum() / n;
                    const Vector m2 = dxhat.cwiseProduct(xhat).rowwise().sum() / n;
                    Matrix dx = dxhat;
                    dx.colwise() -= m1;
                    dx -= (xhat.array().colwise() * m2.array()).matrix();
                    t.grad(ix) += (dx.array().colwise() * inv.array()).matrix();
                  });
}

Var batch_norm_cols(Var x, Var gamma, Var beta, double eps, RowVector* batch_mean,
                    RowVector* batch_var) {
  require(gamma.rows() == 1 && gamma.cols() == x.cols(), "batch_norm: gamma shape");
  require(beta.rows() == 1 && beta.cols() == x.cols(), "batch_norm: beta shape");
  Tape& t = tape_of(x);
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  const Matrix& xv = x.value();
  const double n = static_cast<double>(xv.rows());
  const RowVector mu = xv.colwise().mean();
  const RowVector var = (xv.rowwise() - mu).array().square().colwise().sum().matrix() / n;
  const RowVector inv = (var.array() + eps).rsqrt().matrix();
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  const Matrix xhat = ((xv.rowwise() - mu).array().rowwise() * inv.array()).matrix();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return t.record(std::move(out), {x, gamma, beta},
                  [ix, ig, ib, xhat, inv, n](Tape& t, const Matrix& g, int) {
                    if (t.needs_grad(ig)) t.grad(ig) += g.cwiseProduct(xhat).colwise().sum();
                    if (t.needs_grad(ib)) t.grad(ib) += g.colwise().sum();
                    if (!t.needs_grad(ix)) return;
                    const Matrix dxhat =
                        (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
                    const RowVector m1 = dxhat.colwise().sum() / n;
                    const RowVector m2 = dxhat.cwiseProduct(xhat).colwise().sum() / n;
                    Matrix dx = dxhat.rowwise() - m1;
                    dx -= (xhat.array().rowwise() * m2.array()).matrix();
                    t.grad(ix) += (dx.array().rowwise() * inv.array()).matrix();
                  });
}

Var affine_norm_cols(Var x, Var gamma, Var beta, const RowVector& mean, const RowVector& var,
                     double eps) {
  require(mean.size() == x.cols() && var.size() == x.cols(), "affine_norm: stats shape");
  const RowVector inv = (var.array() + eps).rsqrt().matrix();
  Tape& t = tape_of(x);
  Var centered = add_row(x, t.constant(-mean));
  Var scaled = mul(centered, t.constant(inv.replicate(x.rows(), 1)));
  // gamma broadcast via ones-column outer product keeps gradients exact
  Var g_full = matmul(t.constant(Matrix::Ones(x.rows(), 1)), gamma);
  return add_row(mul(scaled, g_full), beta);
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index n) {
  require(start >= 0 && n >= 0 && start + n <= a.rows(), "slice_rows: out of range");
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().middleRows(start, n), {a},
                  [ia, start, n](Tape& t, const Matrix& g, int) {
                    t.grad(ia).middleRows(start, n) += g;
                  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index n) {
  require(start >= 0 && n >= 0 && start + n <= a.cols(), "slice_cols: out of range");
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().middleCols(start, n), {a},
                  [ia, start, n](Tape& t, const Matrix& g, int) {
                    t.grad(ia).middleCols(start, n) += g;
                  });
}

Var vstack(const std::vector<Var>& parts) {
  require(!parts.empty(), "vstack: no inputs");
  Tape& t = tape_of(parts.front());
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, "vstack: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    spans.emplace_back(p.id(), r);
    r += p.rows();
  }
  return t.record(std::move(out), parts, [spans](Tape& t, const Matrix& g, int) {
    for (const auto& [id, start] : spans) {
      if (t.needs_grad(id)) t.grad(id) += g.middleRows(start, t.value(id).rows());
    }
  });
}

Var hstack(const std::vector<Var>& parts) {
  require(!parts.empty(), "hstack: no inputs");
  Tape& t = tape_of(parts.front());
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "hstack: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    spans.emplace_back(p.id(), c);
    c += p.cols();
  }
  return t.record(std::move(out), parts, [spans](Tape& t, const Matrix& g, int) {
    for (const auto& [id, start] : spans) {
      if (t.needs_grad(id)) t.grad(id) += g.middleCols(start, t.value(id).cols());
    }
  });
}

Var gather_rows(Var a, const std::vector<int>& index) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  const Matrix& av = a.value();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(index.size()), av.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    const int src = index[r];
    require(src < av.rows(), "gather_rows: index out of range");
    if (src >= 0) out.row(static_cast<Eigen::Index>(r)) = av.row(src);
  }
  return t.record(std::move(out), {a}, [ia, index](Tape& t, const Matrix& g, int) {
    Matrix& ga = t.grad(ia);
    for (std::size_t r = 0; r < index.size(); ++r) {
      if (index[r] >= 0) ga.row(index[r]) += g.row(static_cast<Eigen::Index>(r));
    }
  });
}

Var scale_rows(Var a, const Vector& weights) {
  require(weights.size() == a.rows(), "scale_rows: weight count");
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix out = (a.value().array().colwise() * weights.array()).matrix();
  return t.record(std::move(out), {a}, [ia, weights](Tape& t, const Matrix& g, int) {
    t.grad(ia) += (g.array().colwise() * weights.array()).matrix();
  });
}

Var dropout(Var a, const Matrix& keep_mask, double p) {
  require(keep_mask.rows() == a.rows() && keep_mask.cols() == a.cols(), "dropout: mask shape");
  Tape& t = tape_of(a);
  const Matrix m = keep_mask / (1.0 - p);
  return mul(a, t.constant(m));
}

Var detach(Var a) { return tape_of(a).constant(a.value()); }

}  // namespace amlnet::ad
