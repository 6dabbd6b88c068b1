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
#include <string>
#include <vector>

#include "p2bot/corpus/vocab.hpp"
#include "p2bot/error.hpp"
#include "p2bot/nn/autograd.hpp"
#include "p2bot/nn/checkpoint.hpp"
#include "p2bot/nn/sequence_model.hpp"
#include "p2bot/transmitter/layout.hpp"

namespace p2bot::transmitter {

using nn::Index;

// -mean_t log softmax(logits_t)[target_t]; logits holds one row per target.
template <typename T>
typename nn::Graph<T>::Var masked_mean_nll(nn::Graph<T>& g, typename nn::Graph<T>::Var target_logits,
                                           const std::vector<int>& targets) {
  if (targets.empty()) throw InvalidArgument("mle_loss: layout has no target tokens");
  std::vector<std::pair<Index, Index>> at;
  for (std::size_t i = 0; i < targets.size(); ++i) at.emplace_back(static_cast<Index>(i), targets[i]);
  return g.scale(g.mean(g.pick(g.log_softmax_rows(target_logits), std::move(at))), T(-1));
}

// Two-way softmax cross-entropy with the gold response as the positive.
template <typename T>
typename nn::Graph<T>::Var pairwise_nup_loss(nn::Graph<T>& g, typename nn::Graph<T>::Var gold_logit,
                                             typename nn::Graph<T>::Var distractor_logit) {
  auto both = g.concat_cols({gold_logit, distractor_logit});
  return g.scale(g.pick(g.log_softmax_rows(both), {{0, 0}}), T(-1));
}

// Generator with a next-utterance classifier on the [CLS] hidden state.
// p(y = 1) for a single candidate is sigmoid(logit - null_bias), i.e. a
// two-way softmax against a learned null score.
template <typename T>
class Transmitter {
 public:
  using G = nn::Graph<T>;
  using Var = typename G::Var;

  static constexpr const char* kKind = "transmitter";

  Transmitter() = default;

  Transmitter(nn::SequenceModelConfig config, std::uint64_t seed)
      : lm_(config, seed),
        nup_w_("nup.weight", config.model_dim, 1),
        nup_b_("nup.bias", 1, 1),
        null_bias_("nup.null_bias", 1, 1) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> normal(0.0, 0.02);
    for (Index i = 0; i < nup_w_.value.size(); ++i) nup_w_.value.data()[i] = static_cast<T>(normal(rng));
  }

  const nn::SequenceModelConfig& config() const { return lm_.config(); }
  nn::SequenceModel<T>& lm() { return lm_; }
  const nn::SequenceModel<T>& lm() const { return lm_; }

  std::vector<nn::Parameter<T>*> parameters() {
    auto out = lm_.parameters();
    out.push_back(&nup_w_);
    out.push_back(&nup_b_);
    out.push_back(&null_bias_);
    return out;
  }
  std::vector<const nn::Parameter<T>*> parameters() const {
    auto out = lm_.parameters();
    out.push_back(&nup_w_);
    out.push_back(&nup_b_);
    out.push_back(&null_bias_);
    return out;
  }

  LayoutOptions layout_options() const { return {config().max_positions, true, true, 0}; }

  Var hidden(G& g, const TokenLayout& layout) { return lm_.hidden(g, layout.token_ids, layout.segment_ids); }

  // log p(token_i | tokens_<i) for every masked-in position, as a column.
  Var target_log_probs(G& g, Var hidden, const TokenLayout& layout) {
    std::vector<Index> rows;
    std::vector<std::pair<Index, Index>> at;
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (!layout.loss_mask[i]) continue;
      if (i == 0) throw InvalidArgument("loss_mask cannot cover position 0");
      at.emplace_back(static_cast<Index>(rows.size()), layout.token_ids[i]);
      rows.push_back(static_cast<Index>(i - 1));
    }
    if (rows.empty()) throw InvalidArgument("mle_loss: layout has no target tokens");
    auto logits = lm_.logits(g, g.gather_rows(hidden, std::move(rows)));
    return g.pick(g.log_softmax_rows(logits), std::move(at));
  }

  Var mle_loss(G& g, Var hidden, const TokenLayout& layout) {
    return g.scale(g.mean(target_log_probs(g, hidden, layout)), T(-1));
  }
  Var mle_loss(G& g, const TokenLayout& layout) { return mle_loss(g, hidden(g, layout), layout); }

  Var cls_logit(G& g, Var hidden, const TokenLayout& layout) {
    if (layout.cls_position < 0 || layout.token_ids[static_cast<std::size_t>(layout.cls_position)] != Vocab::kCls) {
      throw InvalidArgument("layout does not end in [CLS]");
    }
    auto h = g.select_row(hidden, layout.cls_position);
    return g.add(g.matmul(h, g.param(nup_w_)), g.param(nup_b_));
  }
  Var cls_logit(G& g, const TokenLayout& layout) { return cls_logit(g, hidden(g, layout), layout); }

  Var nup_loss(G& g, const TokenLayout& gold, const TokenLayout& distractor) {
    return pairwise_nup_loss(g, cls_logit(g, gold), cls_logit(g, distractor));
  }

  // log p(y = 1) from a classifier logit.
  Var nup_log_prob(G& g, Var logit) { return g.log_sigmoid(g.sub(logit, g.param(null_bias_))); }

  // Fits the null score on detached classifier logits:
  //   -log sigmoid(gold - b) - log sigmoid(b - distractor)
  Var null_bias_loss(G& g, T gold_logit, T distractor_logit) {
    auto b = g.param(null_bias_);
    auto pos = g.log_sigmoid(g.sub(g.scalar_constant(gold_logit), b));
    auto neg = g.log_sigmoid(g.sub(b, g.scalar_constant(distractor_logit)));
    return g.scale(g.add(pos, neg), T(-1));
  }

  // ---- inference helpers (no tape) ----

  T nup_logprob(const TokenLayout& layout) const {
    G g(false);
    auto& self = mut();
    return self.nup_log_prob(g, self.cls_logit(g, layout))->scalar();
  }

  T classifier_logit(const TokenLayout& layout) const {
    G g(false);
    return mut().cls_logit(g, layout)->scalar();
  }

  // Per-target log-probabilities of the masked-in tokens.
  std::vector<T> token_log_probs(const TokenLayout& layout) const {
    G g(false);
    auto& self = mut();
    auto lp = self.target_log_probs(g, self.hidden(g, layout), layout);
    return std::vector<T>(lp->value().data(), lp->value().data() + lp->value().size());
  }

  // Log-distribution of the token following the whole layout.
  std::vector<T> next_token_log_probs(const TokenLayout& layout) const {
    G g(false);
    auto& self = mut();
    auto h = self.hidden(g, layout);
    auto last = g.select_row(h, static_cast<Index>(layout.size()) - 1);
    auto lp = g.log_softmax_rows(self.lm_.logits(g, last));
    return std::vector<T>(lp->value().data(), lp->value().data() + lp->value().size());
  }

  nn::CheckpointData to_checkpoint(const Vocab& vocab) const {
    nn::CheckpointData ck;
    ck.kind = kKind;
    ck.config = nn::config_to_json(config());
    ck.vocab = vocab.tokens();
    ck.vocab_hash = vocab.hash();
    nn::store_parameters<T>(ck, parameters(), "");
    return ck;
  }

  static Transmitter from_checkpoint(const nn::CheckpointData& ck) {
    if (ck.kind != kKind) throw FormatError("checkpoint holds a '" + ck.kind + "', expected a transmitter");
    Transmitter m(nn::config_from_json(ck.config), 0);
    nn::restore_parameters<T>(ck, m.parameters(), "");
    return m;
  }

 private:
  Transmitter& mut() const { return const_cast<Transmitter&>(*this); }

  nn::SequenceModel<T> lm_;
  nn::Parameter<T> nup_w_;
  nn::Parameter<T> nup_b_;
  nn::Parameter<T> null_bias_;
};

template <typename T>
void save_transmitter(const Transmitter<T>& model, const Vocab& vocab, const std::string& path) {
  nn::write_checkpoint_file(path, model.to_checkpoint(vocab));
}

// Loads model and vocabulary. When `expected` is given its hash must match.
template <typename T>
std::pair<Transmitter<T>, Vocab> load_transmitter(const std::string& path, const Vocab* expected = nullptr) {
  auto ck = nn::read_checkpoint_file(path);
  Vocab vocab = nn::vocab_from_checkpoint(ck, expected);
  auto model = Transmitter<T>::from_checkpoint(ck);
  if (model.config().vocab_size != vocab.size()) throw FormatError("checkpoint vocab size disagrees with model config");
  return {std::move(model), std::move(vocab)};
}

}  // namespace p2bot::transmitter
