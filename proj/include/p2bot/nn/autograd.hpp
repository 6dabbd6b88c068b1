// Copyright 2026 The P2Bot Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Graph records every operation applied to its nodes; Graph::backward()
// replays the tape in reverse and accumulates gradients into the nodes and
// into the Parameter objects that fed the computation. Graphs built with
// record = false skip all bookkeeping and are used for inference.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "p2bot/error.hpp"

namespace p2bot::nn {

using Index = Eigen::Index;

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A trainable tensor with its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  Parameter() = default;
  Parameter(std::string n, Index rows, Index cols)
      : name(std::move(n)),
        value(Matrix<T>::Zero(rows, cols)),
        grad(Matrix<T>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename T>
class Graph {
 public:
  struct Node {
    Matrix<T> data;
    const Matrix<T>* external = nullptr;
    Matrix<T> grad;
    bool needs_grad = false;
    std::function<void(Node&)> backward;

    const Matrix<T>& value() const { return external ? *external : data; }
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    T scalar() const { return value()(0, 0); }

    Matrix<T>& grad_buffer() {
      if (grad.size() == 0) grad = Matrix<T>::Zero(rows(), cols());
      return grad;
    }
  };
  using Var = Node*;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Matrix<T> value) { return emplace(std::move(value), false); }

  Var scalar_constant(T v) {
    Matrix<T> m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  // Leaf bound to a parameter; backward accumulates into p.grad.
  Var param(Parameter<T>& p) {
    Node& n = nodes_.emplace_back();
    n.external = &p.value;
    n.needs_grad = record_;
    if (n.needs_grad) {
      Parameter<T>* target = &p;
      n.backward = [target](Node& self) { target->grad += self.grad; };
    }
    return &n;
  }

  // Rows of an embedding table selected by id.
  Var embed(Parameter<T>& table, std::span<const int> ids) {
    Matrix<T> out(static_cast<Index>(ids.size()), table.value.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= table.value.rows()) {
        throw InvalidArgument("embedding id " + std::to_string(ids[i]) +
                              " out of range for " + table.name);
      }
      out.row(static_cast<Index>(i)) = table.value.row(ids[i]);
    }
    Var o = emplace(std::move(out), record_);
    if (o->needs_grad) {
      std::vector<int> saved(ids.begin(), ids.end());
      Parameter<T>* target = &table;
      o->backward = [target, saved = std::move(saved)](Node& self) {
        for (std::size_t i = 0; i < saved.size(); ++i) {
          target->grad.row(saved[i]) += self.grad.row(static_cast<Index>(i));
        }
      };
    }
    return o;
  }

  Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    Var o = make(a->value() + b->value(), {a, b});
    if (o->needs_grad) {
      o->backward = [a, b](Node& self) {
        if (a->needs_grad) a->grad_buffer() += self.grad;
        if (b->needs_grad) b->grad_buffer() += self.grad;
      };
    }
    return o;
  }

  Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    Var o = make(a->value() - b->value(), {a, b});
    if (o->needs_grad) {
      o->backward = [a, b](Node& self) {
        if (a->needs_grad) a->grad_buffer() += self.grad;
        if (b->needs_grad) b->grad_buffer() -= self.grad;
      };
    }
    return o;
  }

  // a + row broadcast over every row of a.
  Var add_row(Var a, Var row) {
    if (row->rows() != 1 || row->cols() != a->cols()) {
      throw InvalidArgument("add_row: bias shape mismatch");
    }
    Matrix<T> out = a->value().rowwise() + row->value().row(0);
    Var o = make(std::move(out), {a, row});
    if (o->needs_grad) {
      o->backward = [a, row](Node& self) {
        if (a->needs_grad) a->grad_buffer() += self.grad;
        if (row->needs_grad) row->grad_buffer() += self.grad.colwise().sum();
      };
    }
    return o;
  }

  Var scale(Var a, T s) {
    Var o = make(a->value() * s, {a});
    if (o->needs_grad) {
      o->backward = [a, s](Node& self) { a->grad_buffer() += self.grad * s; };
    }
    return o;
  }

  Var add_scalar(Var a, T c) {
    Matrix<T> out = a->value().array() + c;
    Var o = make(std::move(out), {a});
    if (o->needs_grad) {
      o->backward = [a](Node& self) { a->grad_buffer() += self.grad; };
    }
    return o;
  }

  Var matmul(Var a, Var b) {
    if (a->cols() != b->rows()) throw InvalidArgument("matmul: inner dimension mismatch");
    Matrix<T> out = a->value() * b->value();
    Var o = make(std::move(out), {a, b});
    if (o->needs_grad) {
      o->backward = [a, b](Node& self) {
        if (a->needs_grad) a->grad_buffer().noalias() += self.grad * b->value().transpose();
        if (b->needs_grad) b->grad_buffer().noalias() += a->value().transpose() * self.grad;
      };
    }
    return o;
  }

  // a * b^T
  Var matmul_bt(Var a, Var b) {
    if (a->cols() != b->cols()) throw InvalidArgument("matmul_bt: inner dimension mismatch");
    Matrix<T> out = a->value() * b->value().transpose();
    Var o = make(std::move(out), {a, b});
    if (o->needs_grad) {
      o->backward = [a, b](Node& self) {
        if (a->needs_grad) a->grad_buffer().noalias() += self.grad * b->value();
        if (b->needs_grad) b->grad_buffer().noalias() += self.grad.transpose() * a->value();
      };
    }
    return o;
  }

  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5)) {
    const Index n = x->rows();
    const Index c = x->cols();
    Matrix<T> xhat(n, c);
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(n);
    for (Index i = 0; i < n; ++i) {
      auto row = x->value().row(i);
      T mean = row.mean();
      T var = (row.array() - mean).square().mean();
      inv_std(i) = T(1) / std::sqrt(var + eps);
      xhat.row(i) = (row.array() - mean) * inv_std(i);
    }
    Matrix<T> out = (xhat.array().rowwise() * gain->value().row(0).array()).matrix();
    out.rowwise() += bias->value().row(0);
    Var o = make(std::move(out), {x, gain, bias});
    if (o->needs_grad) {
      o->backward = [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const Matrix<T>& dy = self.grad;
        if (gain->needs_grad) {
          gain->grad_buffer() += (dy.array() * xhat.array()).colwise().sum().matrix();
        }
        if (bias->needs_grad) bias->grad_buffer() += dy.colwise().sum();
        if (x->needs_grad) {
          Matrix<T> dxhat = (dy.array().rowwise() * gain->value().row(0).array()).matrix();
          Matrix<T>& dx = x->grad_buffer();
          for (Index i = 0; i < dy.rows(); ++i) {
            T m1 = dxhat.row(i).mean();
            T m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
            dx.row(i).array() +=
                inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
          }
        }
      };
    }
    return o;
  }

  // tanh approximation of GELU.
  Var gelu(Var x) {
    constexpr double kC = 0.7978845608028654;
    Matrix<T> out = x->value().unaryExpr([](T v) {
      T t = std::tanh(T(kC) * (v + T(0.044715) * v * v * v));
      return T(0.5) * v * (T(1) + t);
    });
    Var o = make(std::move(out), {x});
    if (o->needs_grad) {
      o->backward = [x](Node& self) {
        Matrix<T> d = x->value().unaryExpr([](T v) {
          T t = std::tanh(T(kC) * (v + T(0.044715) * v * v * v));
          return T(0.5) * (T(1) + t) +
                 T(0.5) * v * (T(1) - t * t) * T(kC) * (T(1) + T(3 * 0.044715) * v * v);
        });
        x->grad_buffer().array() += self.grad.array() * d.array();
      };
    }
    return o;
  }

  // Row-wise softmax. With causal = true, entry (i, j) for j > i is masked out.
  Var softmax_rows(Var x, bool causal = false) {
    const Index n = x->rows();
    const Index c = x->cols();
    Matrix<T> p = Matrix<T>::Zero(n, c);
    for (Index i = 0; i < n; ++i) {
      const Index width = causal ? std::min<Index>(i + 1, c) : c;
      auto row = x->value().row(i).head(width);
      T mx = row.maxCoeff();
      auto e = (row.array() - mx).exp();
      p.row(i).head(width) = e / e.sum();
    }
    Var o = make(std::move(p), {x});
    if (o->needs_grad) {
      o->backward = [x](Node& self) {
        const Matrix<T>& p = self.value();
        for (Index i = 0; i < p.rows(); ++i) {
          T dot = (p.row(i).array() * self.grad.row(i).array()).sum();
          x->grad_buffer().row(i).array() += p.row(i).array() * (self.grad.row(i).array() - dot);
        }
      };
    }
    return o;
  }

  Var log_softmax_rows(Var x) {
    const Index n = x->rows();
    Matrix<T> out(n, x->cols());
    for (Index i = 0; i < n; ++i) {
      auto row = x->value().row(i);
      T mx = row.maxCoeff();
      T lse = mx + std::log((row.array() - mx).exp().sum());
      out.row(i) = row.array() - lse;
    }
    Var o = make(std::move(out), {x});
    if (o->needs_grad) {
      o->backward = [x](Node& self) {
        const Matrix<T>& lp = self.value();
        for (Index i = 0; i < lp.rows(); ++i) {
          T gsum = self.grad.row(i).sum();
          x->grad_buffer().row(i).array() += self.grad.row(i).array() - lp.row(i).array().exp() * gsum;
        }
      };
    }
    return o;
  }

  // log(sigmoid(x)) elementwise, computed without overflow.
  Var log_sigmoid(Var x) {
    Matrix<T> out = x->value().unaryExpr([](T v) {
      return std::min(v, T(0)) - std::log1p(std::exp(-std::abs(v)));
    });
    Var o = make(std::move(out), {x});
    if (o->needs_grad) {
      o->backward = [x](Node& self) {
        Matrix<T> d = x->value().unaryExpr([](T v) { return T(1) / (T(1) + std::exp(v)); });
        x->grad_buffer().array() += self.grad.array() * d.array();
      };
    }
    return o;
  }

  Var relu(Var x) {
    Matrix<T> out = x->value().cwiseMax(T(0));
    Var o = make(std::move(out), {x});
    if (o->needs_grad) {
      o->backward = [x](Node& self) {
        x->grad_buffer().array() +=
            (x->value().array() > T(0)).select(self.grad.array(), T(0));
      };
    }
    return o;
  }

  Var slice_cols(Var a, Index start, Index count) {
    if (start < 0 || start + count > a->cols()) throw InvalidArgument("slice_cols out of range");
    Matrix<T> out = a->value().middleCols(start, count);
    Var o = make(std::move(out), {a});
    if (o->needs_grad) {
      o->backward = [a, start, count](Node& self) {
        a->grad_buffer().middleCols(start, count) += self.grad;
      };
    }
    return o;
  }

  Var select_row(Var a, Index row) {
    if (row < 0 || row >= a->rows()) throw InvalidArgument("select_row out of range");
    Matrix<T> out = a->value().row(row);
    Var o = make(std::move(out), {a});
    if (o->needs_grad) {
      o->backward = [a, row](Node& self) { a->grad_buffer().row(row) += self.grad.row(0); };
    }
    return o;
  }

  // Rows of a in the given order (repeats allowed).
  Var gather_rows(Var a, std::vector<Index> rows) {
    Matrix<T> out(static_cast<Index>(rows.size()), a->cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0 || rows[i] >= a->rows()) throw InvalidArgument("gather_rows out of range");
      out.row(static_cast<Index>(i)) = a->value().row(rows[i]);
    }
    Var o = make(std::move(out), {a});
    if (o->needs_grad) {
      o->backward = [a, rows = std::move(rows)](Node& self) {
        Matrix<T>& g = a->grad_buffer();
        for (std::size_t i = 0; i < rows.size(); ++i) g.row(rows[i]) += self.grad.row(static_cast<Index>(i));
      };
    }
    return o;
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
    Index total = 0;
    for (Var p : parts) {
      if (p->rows() != parts.front()->rows()) throw InvalidArgument("concat_cols: row mismatch");
      total += p->cols();
    }
    Matrix<T> out(parts.front()->rows(), total);
    Index at = 0;
    for (Var p : parts) {
      out.middleCols(at, p->cols()) = p->value();
      at += p->cols();
    }
    Var o = make(std::move(out), parts);
    if (o->needs_grad) {
      o->backward = [parts](Node& self) {
        Index at = 0;
        for (Var p : parts) {
          if (p->needs_grad) p->grad_buffer() += self.grad.middleCols(at, p->cols());
          at += p->cols();
        }
      };
    }
    return o;
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw InvalidArgument("concat_rows: no inputs");
    Index total = 0;
    for (Var p : parts) {
      if (p->cols() != parts.front()->cols()) throw InvalidArgument("concat_rows: column mismatch");
      total += p->rows();
    }
    Matrix<T> out(total, parts.front()->cols());
    Index at = 0;
    for (Var p : parts) {
      out.middleRows(at, p->rows()) = p->value();
      at += p->rows();
    }
    Var o = make(std::move(out), parts);
    if (o->needs_grad) {
      o->backward = [parts](Node& self) {
        Index at = 0;
        for (Var p : parts) {
          if (p->needs_grad) p->grad_buffer() += self.grad.middleRows(at, p->rows());
          at += p->rows();
        }
      };
    }
    return o;
  }

  // Column vector of the entries a(r, c) for each (r, c) in `at`.
  Var pick(Var a, std::vector<std::pair<Index, Index>> at) {
    Matrix<T> out(static_cast<Index>(at.size()), 1);
    for (std::size_t i = 0; i < at.size(); ++i) {
      auto [r, c] = at[i];
      if (r < 0 || r >= a->rows() || c < 0 || c >= a->cols()) {
        throw InvalidArgument("pick: index out of range");
      }
      out(static_cast<Index>(i), 0) = a->value()(r, c);
    }
    Var o = make(std::move(out), {a});
    if (o->needs_grad) {
      o->backward = [a, at = std::move(at)](Node& self) {
        Matrix<T>& g = a->grad_buffer();
        for (std::size_t i = 0; i < at.size(); ++i) {
          g(at[i].first, at[i].second) += self.grad(static_cast<Index>(i), 0);
        }
      };
    }
    return o;
  }

  Var sum(Var a) {
    Var o = make(one(a->value().sum()), {a});
    if (o->needs_grad) {
      o->backward = [a](Node& self) { a->grad_buffer().array() += self.grad(0, 0); };
    }
    return o;
  }

  Var mean(Var a) {
    const T n = static_cast<T>(a->value().size());
    Var o = make(one(a->value().sum() / n), {a});
    if (o->needs_grad) {
      o->backward = [a, n](Node& self) { a->grad_buffer().array() += self.grad(0, 0) / n; };
    }
    return o;
  }

  // Mean over rows: (n x c) -> (1 x c).
  Var mean_rows(Var a) {
    const Index n = a->rows();
    Matrix<T> out = a->value().colwise().mean();
    Var o = make(std::move(out), {a});
    if (o->needs_grad) {
      o->backward = [a, n](Node& self) {
        a->grad_buffer().rowwise() += self.grad.row(0) / static_cast<T>(n);
      };
    }
    return o;
  }

  Var abs_sum(Var a) {
    Var o = make(one(a->value().cwiseAbs().sum()), {a});
    if (o->needs_grad) {
      o->backward = [a](Node& self) {
        a->grad_buffer().array() += self.grad(0, 0) * a->value().array().sign();
      };
    }
    return o;
  }

  // Temperature-weighted pooling of each row:
  //   out_i = sum_k softmax(u_i / tau)_k * u_ik     ((n x L) -> (n x 1))
  Var agg_rows(Var u, T tau) {
    if (!(tau > T(0))) throw InvalidArgument("agg: tau must be positive");
    if (u->cols() == 0) throw InvalidArgument("agg: empty row");
    const Index n = u->rows();
    Matrix<T> weights(n, u->cols());
    Matrix<T> out(n, 1);
    for (Index i = 0; i < n; ++i) {
      auto row = u->value().row(i);
      T mx = row.maxCoeff();
      auto e = ((row.array() - mx) / tau).exp();
      weights.row(i) = e / e.sum();
      out(i, 0) = (weights.row(i).array() * row.array()).sum();
    }
    Var o = make(std::move(out), {u});
    if (o->needs_grad) {
      o->backward = [u, tau, weights = std::move(weights)](Node& self) {
        Matrix<T>& g = u->grad_buffer();
        for (Index i = 0; i < weights.rows(); ++i) {
          T a = self.value()(i, 0);
          T go = self.grad(i, 0);
          g.row(i).array() += go * weights.row(i).array() *
                              (T(1) + (u->value().row(i).array() - a) / tau);
        }
      };
    }
    return o;
  }

  // sum_i w_i * s_i over 1x1 scalars.
  Var weighted_sum(const std::vector<Var>& scalars, std::vector<T> weights) {
    if (scalars.size() != weights.size() || scalars.empty()) {
      throw InvalidArgument("weighted_sum: size mismatch");
    }
    T total = 0;
    for (std::size_t i = 0; i < scalars.size(); ++i) total += weights[i] * scalars[i]->scalar();
    Var o = make(one(total), scalars);
    if (o->needs_grad) {
      o->backward = [scalars, weights = std::move(weights)](Node& self) {
        for (std::size_t i = 0; i < scalars.size(); ++i) {
          if (scalars[i]->needs_grad) scalars[i]->grad_buffer()(0, 0) += weights[i] * self.grad(0, 0);
        }
      };
    }
    return o;
  }

  // Seeds d(loss)/d(loss) = 1 and propagates to every recorded input.
  void backward(Var loss) {
    if (!record_) throw InvalidArgument("backward on a non-recording graph");
    if (loss->rows() != 1 || loss->cols() != 1) throw InvalidArgument("backward: loss must be scalar");
    if (!loss->needs_grad) return;
    loss->grad_buffer()(0, 0) += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->backward && it->grad.size() != 0) it->backward(*it);
    }
  }

 private:
  static Matrix<T> one(T v) {
    Matrix<T> m(1, 1);
    m(0, 0) = v;
    return m;
  }

  static void require_same_shape(Var a, Var b, const char* op) {
    if (a->rows() != b->rows() || a->cols() != b->cols()) {
      throw InvalidArgument(std::string(op) + ": shape mismatch");
    }
  }

  Var emplace(Matrix<T> value, bool needs_grad) {
    Node& n = nodes_.emplace_back();
    n.data = std::move(value);
    n.needs_grad = needs_grad;
    return &n;
  }

  template <typename Inputs>
  Var make_impl(Matrix<T> value, const Inputs& inputs) {
    bool needs = false;
    if (record_) {
      for (Var v : inputs) needs = needs || v->needs_grad;
    }
    return emplace(std::move(value), needs);
  }

  Var make(Matrix<T> value, std::initializer_list<Var> inputs) { return make_impl(std::move(value), inputs); }
  Var make(Matrix<T> value, const std::vector<Var>& inputs) { return make_impl(std::move(value), inputs); }

  bool record_;
  std::deque<Node> nodes_;
};

}  // namespace p2bot::nn
