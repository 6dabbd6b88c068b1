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

// Pre-norm transformer stack shared by the generator (causal) and the
// sentence encoders (bidirectional).

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "p2bot/error.hpp"
#include "p2bot/nn/autograd.hpp"

namespace p2bot::nn {

struct SequenceModelConfig {
  int num_layers = 2;
  int model_dim = 128;
  int num_heads = 4;
  int max_positions = 256;
  int vocab_size = 0;
  int num_segments = 4;
  bool causal = true;

  void validate() const {
    if (num_layers < 0) throw InvalidArgument("num_layers must be >= 0");
    if (model_dim <= 0 || num_heads <= 0 || model_dim % num_heads != 0) {
      throw InvalidArgument("model_dim must be a positive multiple of num_heads");
    }
    if (max_positions <= 0) throw InvalidArgument("max_positions must be > 0");
    if (vocab_size <= 0) throw InvalidArgument("vocab_size must be > 0");
    if (num_segments < 0) throw InvalidArgument("num_segments must be >= 0");
  }

  // The 12-layer GPT geometry.
  static SequenceModelConfig gpt_preset(int vocab_size) {
    return {12, 768, 12, 512, vocab_size, 4, true};
  }

  friend bool operator==(const SequenceModelConfig&, const SequenceModelConfig&) = default;
};

template <typename T>
class SequenceModel {
 public:
  using G = Graph<T>;
  using Var = typename G::Var;

  SequenceModel() = default;

  SequenceModel(SequenceModelConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    const Index d = config_.model_dim;
    add("tok_emb", config_.vocab_size, d);
    add("pos_emb", config_.max_positions, d);
    add("seg_emb", std::max(config_.num_segments, 1), d);
    for (int l = 0; l < config_.num_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      add(p + "ln1.gain", 1, d);
      add(p + "ln1.bias", 1, d);
      add(p + "attn.w_qkv", d, 3 * d);
      add(p + "attn.b_qkv", 1, 3 * d);
      add(p + "attn.w_out", d, d);
      add(p + "attn.b_out", 1, d);
      add(p + "ln2.gain", 1, d);
      add(p + "ln2.bias", 1, d);
      add(p + "mlp.w_in", d, 4 * d);
      add(p + "mlp.b_in", 1, 4 * d);
      add(p + "mlp.w_out", 4 * d, d);
      add(p + "mlp.b_out", 1, d);
    }
    add("ln_f.gain", 1, d);
    add("ln_f.bias", 1, d);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    for (Parameter<T>& p : params_) {
      const bool is_gain = p.name.ends_with(".gain");
      const bool is_bias = p.name.ends_with(".bias") || p.name.find(".b_") != std::string::npos;
      if (is_gain) {
        p.value.setOnes();
      } else if (!is_bias) {
        for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(normal(rng));
      }
    }
  }

  const SequenceModelConfig& config() const { return config_; }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (Parameter<T>& p : params_) out.push_back(&p);
    return out;
  }
  std::vector<const Parameter<T>*> parameters() const {
    std::vector<const Parameter<T>*> out;
    for (const Parameter<T>& p : params_) out.push_back(&p);
    return out;
  }

  Parameter<T>& token_embedding() { return params_[0]; }

  // Final-layer hidden states, one row per input position.
  Var hidden(G& g, std::span<const int> tokens, std::span<const int> segments = {},
             std::span<const int> positions = {}) {
    const std::size_t n = tokens.size();
    if (n == 0) throw InvalidArgument("empty input sequence");
    if (n > static_cast<std::size_t>(config_.max_positions)) {
      throw InvalidArgument("sequence length " + std::to_string(n) + " exceeds max_positions " +
                            std::to_string(config_.max_positions));
    }
    if (!segments.empty() && segments.size() != n) throw InvalidArgument("segment ids length mismatch");
    if (!positions.empty() && positions.size() != n) throw InvalidArgument("position ids length mismatch");

    std::vector<int> pos(positions.begin(), positions.end());
    if (pos.empty()) {
      pos.resize(n);
      std::iota(pos.begin(), pos.end(), 0);
    }
    Var x = g.add(g.embed(params_[0], tokens), g.embed(params_[1], pos));
    if (!segments.empty() && config_.num_segments > 0) x = g.add(x, g.embed(params_[2], segments));

    const Index d = config_.model_dim;
    const Index heads = config_.num_heads;
    const Index dh = d / heads;
    const T attn_scale = T(1) / std::sqrt(static_cast<T>(dh));
    for (int l = 0; l < config_.num_layers; ++l) {
      const std::size_t b = 3 + 12 * static_cast<std::size_t>(l);
      Var h = g.layer_norm(x, g.param(params_[b]), g.param(params_[b + 1]));
      Var qkv = g.add_row(g.matmul(h, g.param(params_[b + 2])), g.param(params_[b + 3]));
      std::vector<Var> outs;
      outs.reserve(static_cast<std::size_t>(heads));
      for (Index hd = 0; hd < heads; ++hd) {
        Var q = g.slice_cols(qkv, hd * dh, dh);
        Var k = g.slice_cols(qkv, d + hd * dh, dh);
        Var v = g.slice_cols(qkv, 2 * d + hd * dh, dh);
        Var att = g.softmax_rows(g.scale(g.matmul_bt(q, k), attn_scale), config_.causal);
        outs.push_back(g.matmul(att, v));
      }
      Var merged = heads == 1 ? outs.front() : g.concat_cols(outs);
      x = g.add(x, g.add_row(g.matmul(merged, g.param(params_[b + 4])), g.param(params_[b + 5])));
      Var h2 = g.layer_norm(x, g.param(params_[b + 6]), g.param(params_[b + 7]));
      Var f = g.gelu(g.add_row(g.matmul(h2, g.param(params_[b + 8])), g.param(params_[b + 9])));
      x = g.add(x, g.add_row(g.matmul(f, g.param(params_[b + 10])), g.param(params_[b + 11])));
    }
    const std::size_t f = params_.size() - 2;
    return g.layer_norm(x, g.param(params_[f]), g.param(params_[f + 1]));
  }

  // Vocabulary logits through the tied output embedding.
  Var logits(G& g, Var hidden) { return g.matmul_bt(hidden, g.param(params_[0])); }

  // Inference-only convenience: (sequence length x vocab_size) logits.
  Matrix<T> forward_logits(std::span<const int> tokens, std::span<const int> segments = {},
                           std::span<const int> positions = {}) const {
    G g(false);
    auto& self = const_cast<SequenceModel&>(*this);
    return self.logits(g, self.hidden(g, tokens, segments, positions))->value();
  }

 private:
  void add(std::string name, Index rows, Index cols) { params_.emplace_back(std::move(name), rows, cols); }

  SequenceModelConfig config_;
  std::vector<Parameter<T>> params_;
};

// FNV-1a over every parameter's bytes; changes whenever any weight changes.
template <typename Model>
std::uint64_t parameter_fingerprint(const Model& model) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto* p : model.parameters()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    const std::size_t n = static_cast<std::size_t>(p->value.size()) * sizeof(*p->value.data());
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace p2bot::nn
