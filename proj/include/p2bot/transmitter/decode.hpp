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

// Response decoding: beam search with combined LM / classifier ranking, and
// multinomial sampling for self-play.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "p2bot/error.hpp"
#include "p2bot/transmitter/layout.hpp"
#include "p2bot/transmitter/model.hpp"

namespace p2bot::transmitter {

enum class DecodeMode { kBeamRank, kMultinomial };

inline DecodeMode parse_decode_mode(std::string_view name) {
  if (name == "beam_rank") return DecodeMode::kBeamRank;
  if (name == "multinomial") return DecodeMode::kMultinomial;
  throw InvalidArgument("unknown decode mode '" + std::string(name) + "'");
}

struct DecodeParams {
  int beam_size = 2;
  int max_steps = 32;
  double alpha = 0.1;
  DecodeMode mode = DecodeMode::kBeamRank;
  // Beam search never ends a response before this many tokens.
  int min_tokens = 1;

  void validate() const {
    if (beam_size < 1) throw InvalidArgument("beam_size must be >= 1");
    if (max_steps < 1) throw InvalidArgument("max_steps must be >= 1");
    if (alpha < 0 || alpha > 1) throw InvalidArgument("alpha must lie in [0, 1]");
  }
};

// length counts every generated token including a final [EOS].
struct ScoredCandidate {
  std::vector<int> tokens;
  double lm_logprob = 0;
  int length = 0;
  double nup_logprob = 0;
  bool finished = false;

  double normalized_lm() const { return lm_logprob / static_cast<double>(length); }
  double combined(double alpha) const { return alpha * normalized_lm() + (1 - alpha) * nup_logprob; }

  // Tokens without the trailing [EOS].
  std::vector<int> response() const {
    std::vector<int> out = tokens;
    if (!out.empty() && out.back() == Vocab::kEos) out.pop_back();
    return out;
  }
};

inline double combined_score(double lm_logprob, int length, double nup_logprob, double alpha) {
  return alpha * lm_logprob / static_cast<double>(length) + (1 - alpha) * nup_logprob;
}

// Index of the highest combined score; the earliest index wins ties.
inline std::size_t select_candidate(const std::vector<ScoredCandidate>& candidates, double alpha) {
  if (candidates.empty()) throw InvalidArgument("select_candidate: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i].combined(alpha) > candidates[best].combined(alpha)) best = i;
  }
  return best;
}

struct DecodeResult {
  std::vector<ScoredCandidate> candidates;
  std::size_t selected = 0;

  const ScoredCandidate& best() const { return candidates.at(selected); }
};

inline TokenLayout with_response(const TokenLayout& prompt, const std::vector<int>& tokens) {
  TokenLayout out = extend(prompt, tokens);
  out.cls_position = static_cast<int>(out.size());
  out.token_ids.push_back(Vocab::kCls);
  out.segment_ids.push_back(kResponseSegment);
  out.loss_mask.push_back(0);
  return out;
}

template <typename T>
TokenLayout decoding_prompt(const Transmitter<T>& model, const EncodedContext& ctx, int max_steps) {
  LayoutOptions opt = model.layout_options();
  opt.reserve = max_steps + 1;
  return build_input(ctx, std::nullopt, opt);
}

// Scores `tokens` (which may end in [EOS]) as a continuation of `prompt` with
// one forward pass: summed LM log-probability and classifier log p(y = 1).
template <typename T>
ScoredCandidate score_response(const Transmitter<T>& model, const TokenLayout& prompt, std::vector<int> tokens) {
  if (tokens.empty()) throw InvalidArgument("score_response: empty response");
  ScoredCandidate c;
  c.finished = tokens.back() == Vocab::kEos;
  TokenLayout layout = with_response(prompt, tokens);
  nn::Graph<T> g(false);
  auto& m = const_cast<Transmitter<T>&>(model);
  auto h = m.hidden(g, layout);
  auto lp = m.target_log_probs(g, h, layout);
  c.lm_logprob = static_cast<double>(lp->value().sum());
  c.nup_logprob = static_cast<double>(m.nup_log_prob(g, m.cls_logit(g, h, layout))->scalar());
  c.length = static_cast<int>(tokens.size());
  c.tokens = std::move(tokens);
  return c;
}

template <typename T>
DecodeResult decode_beam(const Transmitter<T>& model, const EncodedContext& ctx, const DecodeParams& params) {
  params.validate();
  if (params.mode != DecodeMode::kBeamRank) throw InvalidArgument("decode_beam requires beam_rank mode");
  const TokenLayout prompt = decoding_prompt(model, ctx, params.max_steps);

  struct Beam {
    std::vector<int> tokens;
    double logprob = 0;
  };
  std::vector<Beam> live = {Beam{}};
  std::vector<Beam> finished;
  for (int step = 0; step < params.max_steps && !live.empty(); ++step) {
    struct Expansion {
      std::size_t beam;
      int token;
      double logprob;
    };
    std::vector<Expansion> pool;
    for (std::size_t b = 0; b < live.size(); ++b) {
      auto lp = model.next_token_log_probs(extend(prompt, live[b].tokens));
      if (step < params.min_tokens) lp[Vocab::kEos] = -std::numeric_limits<T>::infinity();
      std::vector<int> order(lp.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(params.beam_size), order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](int a, int c) { return lp[a] > lp[c] || (lp[a] == lp[c] && a < c); });
      for (std::size_t i = 0; i < k; ++i) {
        pool.push_back({b, order[i], live[b].logprob + static_cast<double>(lp[order[i]])});
      }
    }
    std::stable_sort(pool.begin(), pool.end(),
                     [](const Expansion& a, const Expansion& b) { return a.logprob > b.logprob; });
    pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(params.beam_size)));
    std::vector<Beam> next;
    for (const auto& e : pool) {
      Beam nb{live[e.beam].tokens, e.logprob};
      nb.tokens.push_back(e.token);
      (e.token == Vocab::kEos ? finished : next).push_back(std::move(nb));
    }
    live = std::move(next);
  }

  DecodeResult result;
  for (auto* group : {&finished, &live}) {
    for (auto& b : *group) {
      ScoredCandidate c = score_response(model, prompt, b.tokens);
      result.candidates.push_back(std::move(c));
    }
  }
  result.selected = select_candidate(result.candidates, params.alpha);
  return result;
}

struct Sample {
  std::vector<int> tokens;  // ends in [EOS] when terminated
  std::vector<double> log_probs;
  bool terminated = false;

  std::vector<int> response() const {
    std::vector<int> out = tokens;
    if (terminated) out.pop_back();
    return out;
  }
};

// One draw from the distribution given by log-probabilities.
template <typename T, typename Rng>
int draw_token(std::span<const T> log_probs, Rng& rng) {
  std::vector<double> probs(log_probs.size());
  for (std::size_t i = 0; i < log_probs.size(); ++i) probs[i] = std::exp(static_cast<double>(log_probs[i]));
  std::discrete_distribution<int> dist(probs.begin(), probs.end());
  return dist(rng);
}

// Draws tokens from the full output distribution until [EOS] or max_steps.
template <typename T, typename Rng>
Sample sample_multinomial(const Transmitter<T>& model, const EncodedContext& ctx, const DecodeParams& params,
                          Rng& rng) {
  params.validate();
  if (params.mode != DecodeMode::kMultinomial) throw InvalidArgument("sample_multinomial requires multinomial mode");
  const TokenLayout prompt = decoding_prompt(model, ctx, params.max_steps);
  Sample s;
  for (int step = 0; step < params.max_steps; ++step) {
    auto lp = model.next_token_log_probs(extend(prompt, s.tokens));
    const int tok = draw_token(std::span<const T>(lp), rng);
    s.tokens.push_back(tok);
    s.log_probs.push_back(static_cast<double>(lp[static_cast<std::size_t>(tok)]));
    if (tok == Vocab::kEos) {
      s.terminated = true;
      break;
    }
  }
  return s;
}

}  // namespace p2bot::transmitter
