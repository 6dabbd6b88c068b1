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

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "p2bot/error.hpp"
#include "p2bot/nn/autograd.hpp"

namespace p2bot::nn {

struct GradCheckResult {
  double max_relative_error = 0;
  std::size_t probes = 0;
};

// Builds a scalar loss on the given graph.
template <typename T>
using LossFn = std::function<typename Graph<T>::Var(Graph<T>&)>;

namespace detail {

template <typename T>
double checked_loss(const LossFn<T>& loss_fn) {
  Graph<T> g(false);
  const double v = static_cast<double>(loss_fn(g)->scalar());
  if (!std::isfinite(v)) throw InvalidArgument("grad_check: loss is not finite");
  return v;
}

template <typename T>
void backprop(const LossFn<T>& loss_fn, const std::vector<Parameter<T>*>& params) {
  for (Parameter<T>* p : params) p->zero_grad();
  Graph<T> g(true);
  auto loss = loss_fn(g);
  if (!std::isfinite(static_cast<double>(loss->scalar()))) throw InvalidArgument("grad_check: loss is not finite");
  g.backward(loss);
}

// Analytic gradients come from `grads` (backprop at precision A); numeric
// ones from central differences of `loss_fn` over `params` (precision N),
// which must mirror `grads` entry for entry.
template <typename A, typename N>
GradCheckResult compare(const std::vector<Parameter<A>*>& grads, const LossFn<N>& loss_fn,
                        const std::vector<Parameter<N>*>& params, std::size_t probe_size, double epsilon,
                        std::uint64_t seed, double floor) {
  if (params.empty() || params.size() != grads.size()) throw InvalidArgument("grad_check: parameter lists differ");
  std::vector<std::size_t> sizes;
  std::size_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.rows() != grads[i]->value.rows() || params[i]->value.cols() != grads[i]->value.cols()) {
      throw InvalidArgument("grad_check: parameter shapes differ for " + params[i]->name);
    }
    sizes.push_back(static_cast<std::size_t>(params[i]->value.size()));
    total += sizes.back();
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);

  GradCheckResult result;
  for (std::size_t probe = 0; probe < std::min(probe_size, total); ++probe) {
    std::size_t flat = pick(rng);
    std::size_t which = 0;
    while (flat >= sizes[which]) flat -= sizes[which++];
    N* slot = params[which]->value.data() + flat;
    const N saved = *slot;
    auto central = [&](double h) {
      const N hi = static_cast<N>(saved + h);
      const N lo = static_cast<N>(saved - h);
      *slot = hi;
      const double up = checked_loss(loss_fn);
      *slot = lo;
      const double down = checked_loss(loss_fn);
      *slot = saved;
      return (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
    };
    // Richardson extrapolation cancels the O(h^2) term of the central difference.
    const double numeric = (4.0 * central(epsilon) - central(2.0 * epsilon)) / 3.0;
    const double analytic = static_cast<double>(grads[which]->grad.data()[flat]);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
    ++result.probes;
  }
  return result;
}

}  // namespace detail

// Compares backprop gradients with finite differences on `probe_size`
// randomly chosen scalar parameters. The relative error of one probe is
// |analytic - numeric| / max(|analytic|, |numeric|, floor).
template <typename T>
GradCheckResult grad_check(const LossFn<T>& loss_fn, const std::vector<Parameter<T>*>& params,
                           std::size_t probe_size, double epsilon, std::uint64_t seed = 0,
                           double floor = 1e-3) {
  if (params.empty()) throw InvalidArgument("grad_check: no parameters");
  detail::backprop(loss_fn, params);
  return detail::compare<T, T>(params, loss_fn, params, probe_size, epsilon, seed, floor);
}

// Checks low-precision backprop (e.g. float) against finite differences of a
// high-precision twin of the same loss. The twin's parameters are first set
// to the low-precision values, so both sides see identical weights.
template <typename Lo, typename Hi>
GradCheckResult grad_check_mixed(const LossFn<Lo>& lo_fn, const std::vector<Parameter<Lo>*>& lo_params,
                                 const LossFn<Hi>& hi_fn, const std::vector<Parameter<Hi>*>& hi_params,
                                 std::size_t probe_size, double epsilon, std::uint64_t seed = 0,
                                 double floor = 1e-3) {
  if (lo_params.empty() || lo_params.size() != hi_params.size()) {
    throw InvalidArgument("grad_check_mixed: parameter lists differ");
  }
  for (std::size_t i = 0; i < lo_params.size(); ++i) {
    if (lo_params[i]->value.rows() != hi_params[i]->value.rows() ||
        lo_params[i]->value.cols() != hi_params[i]->value.cols()) {
      throw InvalidArgument("grad_check_mixed: parameter shapes differ for " + lo_params[i]->name);
    }
    hi_params[i]->value = lo_params[i]->value.template cast<Hi>();
  }
  detail::backprop(lo_fn, lo_params);
  return detail::compare<Lo, Hi>(lo_params, hi_fn, hi_params, probe_size, epsilon, seed, floor);
}

}  // namespace p2bot::nn
