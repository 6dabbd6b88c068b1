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

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "p2bot/error.hpp"
#include "p2bot/nn/autograd.hpp"

namespace p2bot::nn {

// Adam hyperparameters. Betas and epsilon default to the usual values.
struct OptimizerConfig {
  double learning_rate = 6.25e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moment buffers are bound positionally to the
// parameter list handed to the constructor.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, OptimizerConfig config)
      : params_(std::move(params)), config_(config) {
    if (!(config_.learning_rate > 0)) throw InvalidArgument("learning_rate must be > 0");
    for (Parameter<T>* p : params_) {
      m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  const OptimizerConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  std::int64_t steps() const { return step_; }

  void zero_grad() {
    for (Parameter<T>* p : params_) p->zero_grad();
  }

  // Applies one update from the gradients currently stored in the parameters.
  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const Parameter<T>& p = *params_[i];
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
        throw InvalidArgument("adam: gradient shape mismatch for " + p.name);
      }
    }
    ++step_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const T c1 = static_cast<T>(1.0 - std::pow(b1, static_cast<double>(step_)));
    const T c2 = static_cast<T>(1.0 - std::pow(b2, static_cast<double>(step_)));
    const T lr = static_cast<T>(config_.learning_rate);
    const T eps = static_cast<T>(config_.epsilon);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter<T>& p = *params_[i];
      m_[i] = T(b1) * m_[i] + T(1 - b1) * p.grad;
      v_[i] = T(b2) * v_[i] + T(1 - b2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
  }

 private:
  std::vector<Parameter<T>*> params_;
  OptimizerConfig config_;
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
  std::int64_t step_ = 0;
};

}  // namespace p2bot::nn
