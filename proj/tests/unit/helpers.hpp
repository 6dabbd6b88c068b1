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

#include <cstdint>
#include <random>
#include <vector>

#include "p2bot/corpus/synthetic.hpp"
#include "p2bot/nn/autograd.hpp"
#include "p2bot/nn/sequence_model.hpp"

namespace p2bot::testing {

inline nn::SequenceModelConfig tiny_config(int vocab, bool causal = true) {
  nn::SequenceModelConfig c;
  c.num_layers = 2;
  c.model_dim = 16;
  c.num_heads = 2;
  c.max_positions = 64;
  c.vocab_size = vocab;
  c.causal = causal;
  return c;
}

template <typename T>
nn::Matrix<T> random_matrix(nn::Index rows, nn::Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  nn::Matrix<T> m(rows, cols);
  for (nn::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(normal(rng));
  return m;
}

template <typename T>
nn::Parameter<T> random_parameter(const std::string& name, nn::Index rows, nn::Index cols, std::uint64_t seed,
                                  double scale = 1.0) {
  nn::Parameter<T> p(name, rows, cols);
  p.value = random_matrix<T>(rows, cols, seed, scale);
  return p;
}

inline std::vector<corpus::DialogueEpisode> small_corpus(int personas = 8, int turns = 3, std::uint64_t seed = 3) {
  return corpus::generate_synthetic(personas, turns, seed);
}

}  // namespace p2bot::testing
