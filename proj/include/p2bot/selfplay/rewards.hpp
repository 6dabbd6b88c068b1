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

// Shaped rewards for self-play: language style, discourse coherence and
// discounted mutual persona perception, combined into one scalar per turn.

#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "p2bot/error.hpp"
#include "p2bot/transmitter/layout.hpp"
#include "p2bot/transmitter/model.hpp"

namespace p2bot::selfplay {

struct RewardWeights {
  double language_style = 0.4;
  double coherence = 0.1;
  double persona_perception = 0.5;
};

// Length-normalized log-likelihood of an utterance.
inline double reward_language_style(std::span<const double> token_log_probs) {
  if (token_log_probs.empty()) throw InvalidArgument("reward_language_style: empty utterance");
  return std::accumulate(token_log_probs.begin(), token_log_probs.end(), 0.0) /
         static_cast<double>(token_log_probs.size());
}

// Same, scored by a frozen transmitter used as an unconditional LM: the
// utterance is evaluated with an empty persona and no history. `tokens` ends
// in [EOS] when the utterance terminated.
template <typename T>
double reward_language_style(const transmitter::Transmitter<T>& lm, const std::vector<int>& tokens) {
  transmitter::LayoutOptions opt = lm.layout_options();
  opt.append_eos = false;
  opt.append_cls = false;
  const auto layout = transmitter::build_input(transmitter::EncodedContext{}, tokens, opt);
  std::vector<double> lps;
  for (T v : lm.token_log_probs(layout)) lps.push_back(static_cast<double>(v));
  return reward_language_style(lps);
}

// log p(y = 1 | state, utterance) from a frozen next-utterance head.
template <typename T>
double reward_coherence(const transmitter::Transmitter<T>& head, const transmitter::EncodedContext& state,
                        const std::vector<int>& tokens) {
  transmitter::LayoutOptions opt = head.layout_options();
  const bool terminated = !tokens.empty() && tokens.back() == corpus::Vocab::kEos;
  std::vector<int> body(tokens.begin(), tokens.end() - (terminated ? 1 : 0));
  opt.append_eos = terminated;
  return static_cast<double>(head.nup_logprob(transmitter::build_input(state, body, opt)));
}

// Discounted perception return of every agent turn. agent[k] = r(a_{k+1})
// and user[k] = r(x*_{k+1}) for k = 0..N-1 (user[0], the dataset starter,
// never enters the sum):
//   R3(a_n) = r(a_n) + sum_{k>n} gamma^(2(k-n)-1) r(x*_k) + gamma^(2(k-n)) r(a_k)
// evaluated backwards as R3_n = r(a_n) + gamma r(x*_{n+1}) + gamma^2 R3_{n+1}.
inline std::vector<double> persona_perception_returns(std::span<const double> agent, std::span<const double> user,
                                                      double gamma) {
  if (agent.size() != user.size()) throw InvalidArgument("persona perception: agent/user turn counts differ");
  const std::size_t n = agent.size();
  std::vector<double> out(n);
  double next = 0;
  for (std::size_t i = n; i-- > 0;) {
    out[i] = agent[i];
    if (i + 1 < n) out[i] += gamma * user[i + 1] + gamma * gamma * next;
    next = out[i];
  }
  return out;
}

// R3 of agent turn n (1-based).
inline double reward_persona_perception(std::span<const double> agent, std::span<const double> user, std::size_t n,
                                        double gamma) {
  if (n < 1 || n > agent.size()) throw InvalidArgument("reward_persona_perception: turn index out of range");
  return persona_perception_returns(agent, user, gamma)[n - 1];
}

inline double total_reward(double r1, double r2, double r3, const RewardWeights& w) {
  return w.language_style * r1 + w.coherence * r2 + w.persona_perception * r3;
}

// R - mean(R) over the mini-batch.
inline std::vector<double> batch_advantages(std::span<const double> rewards) {
  if (rewards.empty()) throw InvalidArgument("batch_advantages: empty batch");
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back(r - mean);
  return out;
}

}  // namespace p2bot::selfplay
