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

// Self-play between a frozen user transmitter and a learnable agent, and
// REINFORCE fine-tuning of the agent with a mini-batch mean baseline.

#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "p2bot/corpus/episode.hpp"
#include "p2bot/nn/adam.hpp"
#include "p2bot/receiver/receiver.hpp"
#include "p2bot/selfplay/rewards.hpp"
#include "p2bot/transmitter/decode.hpp"
#include "p2bot/transmitter/model.hpp"

namespace p2bot::selfplay {

using corpus::Vocab;
using transmitter::EncodedContext;
using transmitter::Transmitter;

struct SelfPlayConfig {
  int num_dialogues = 2000;
  int turns = 3;
  double gamma = 0.5;
  RewardWeights lambdas;
  nn::OptimizerConfig optimizer{1e-6};
  int batch_size = 8;
  std::uint64_t seed = 0;
  // Decoding of the frozen user (beam 2, alpha 0.1).
  transmitter::DecodeParams user_decode;
  int agent_max_steps = 32;
  // Receiver aggregation temperature for perception scores.
  double perception_tau = 0.5;

  void validate() const {
    if (gamma < 0 || gamma > 1) throw InvalidArgument("gamma must lie in [0, 1]");
    if (lambdas.language_style < 0 || lambdas.coherence < 0 || lambdas.persona_perception < 0) {
      throw InvalidArgument("reward weights must be >= 0");
    }
    if (turns < 1) throw InvalidArgument("turns must be >= 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (num_dialogues < 0) throw InvalidArgument("num_dialogues must be >= 0");
  }

  transmitter::DecodeParams agent_decode() const {
    transmitter::DecodeParams p;
    p.mode = transmitter::DecodeMode::kMultinomial;
    p.max_steps = agent_max_steps;
    return p;
  }
};

// utterances = x*_1, a_1, x*_2, a_2, ..., x*_N, a_N (tokens without [EOS]).
struct Trajectory {
  corpus::Persona persona_a;
  corpus::Persona persona_b;
  std::vector<std::vector<int>> utterances;
  std::vector<transmitter::Sample> agent_samples;
  std::vector<EncodedContext> agent_states;

  std::size_t turns() const { return agent_samples.size(); }
  const std::vector<int>& user_utterance(std::size_t k) const { return utterances.at(2 * k); }
  const std::vector<int>& agent_utterance(std::size_t k) const { return utterances.at(2 * k + 1); }
};

struct TurnReward {
  double r1 = 0;
  double r2 = 0;
  double r3 = 0;
  double total = 0;
};

struct RewardBreakdown {
  std::vector<TurnReward> turns;
  std::vector<double> agent_perception;  // r(a_n)
  std::vector<double> user_perception;   // r(x*_n)
};

inline EncodedContext context_for(const std::vector<int>& persona, const std::vector<std::vector<int>>& history) {
  EncodedContext ctx;
  ctx.persona = persona;
  ctx.history = history;
  return ctx;
}

inline std::vector<int> persona_tokens(const Vocab& vocab, const corpus::Persona& p) {
  return transmitter::encode_context(vocab, p.profiles, {}).persona;
}

// The starter x*_1 comes from the episode; the agent samples, the user
// decodes with beam search and combined ranking.
template <typename T, typename Rng>
Trajectory simulate_dialogue(const Transmitter<T>& user, const Transmitter<T>& agent, const Vocab& vocab,
                             const corpus::DialogueEpisode& episode, const SelfPlayConfig& config, Rng& rng) {
  if (episode.turns.empty() || episode.persona_a.empty()) {
    throw InvalidArgument("simulate_dialogue: episode needs a starter utterance and persona A");
  }
  Trajectory tr;
  tr.persona_a = episode.persona_a;
  tr.persona_b = episode.persona_b;
  const auto pa = persona_tokens(vocab, episode.persona_a);
  const auto pb = persona_tokens(vocab, episode.persona_b);
  const auto agent_params = config.agent_decode();
  tr.utterances.push_back(vocab.encode(episode.turns.front().text));
  for (int n = 0; n < config.turns; ++n) {
    auto state = context_for(pb, tr.utterances);
    auto sample = transmitter::sample_multinomial(agent, state, agent_params, rng);
    tr.utterances.push_back(sample.response());
    tr.agent_samples.push_back(std::move(sample));
    tr.agent_states.push_back(std::move(state));
    if (n + 1 < config.turns) {
      auto reply = transmitter::decode_beam(user, context_for(pa, tr.utterances), config.user_decode);
      tr.utterances.push_back(reply.best().response());
    }
  }
  return tr;
}

// Receiver access for perception scores, with the receiver's own vocabulary.
template <typename T>
struct PerceptionScorer {
  const receiver::Receiver<T>& model;
  const Vocab& receiver_vocab;
  const Vocab& transmitter_vocab;
  double tau;

  std::vector<int> translate(const std::vector<int>& tokens) const {
    if (receiver_vocab.hash() == transmitter_vocab.hash()) return tokens;
    return receiver_vocab.encode(transmitter_vocab.decode(tokens));
  }

  receiver::MatrixD persona(const corpus::Persona& p) const {
    return model.encode_matrix(receiver::Side::kPersona, receiver::encode_sentences(receiver_vocab, p.profiles));
  }

  // Empty utterances reveal nothing and score 0.
  double score(const std::vector<int>& utterance, const receiver::MatrixD& persona_encoding) const {
    auto tokens = translate(utterance);
    if (tokens.empty()) return 0.0;
    return receiver::Receiver<T>::perception_score(model.encode_matrix(receiver::Side::kImpression, {tokens}),
                                                   persona_encoding, tau);
  }
};

// `frozen` supplies both the unconditional LM (R1) and the next-utterance
// head (R2); the receiver supplies R3.
template <typename T>
RewardBreakdown compute_rewards(const Trajectory& tr, const Transmitter<T>& frozen, const PerceptionScorer<T>& scorer,
                                const SelfPlayConfig& config) {
  RewardBreakdown out;
  const auto wa = scorer.persona(tr.persona_a);
  const auto wb = scorer.persona(tr.persona_b);
  for (std::size_t k = 0; k < tr.turns(); ++k) {
    out.user_perception.push_back(scorer.score(tr.user_utterance(k), wa));
    out.agent_perception.push_back(scorer.score(tr.agent_utterance(k), wb));
  }
  const auto r3 = persona_perception_returns(out.agent_perception, out.user_perception, config.gamma);
  for (std::size_t k = 0; k < tr.turns(); ++k) {
    TurnReward t;
    t.r1 = reward_language_style(frozen, tr.agent_samples[k].tokens);
    t.r2 = reward_coherence(frozen, tr.agent_states[k], tr.agent_samples[k].tokens);
    t.r3 = r3[k];
    t.total = total_reward(t.r1, t.r2, t.r3, config.lambdas);
    out.turns.push_back(t);
  }
  return out;
}

// -scale * sum_i advantage_i * logprob_i: descending it ascends the
// REINFORCE estimate of the expected reward.
template <typename T>
typename nn::Graph<T>::Var reinforce_surrogate(nn::Graph<T>& g, const std::vector<typename nn::Graph<T>::Var>& log_probs,
                                               const std::vector<double>& advantages, double scale) {
  std::vector<T> w;
  for (double a : advantages) w.push_back(static_cast<T>(-a * scale));
  return g.weighted_sum(log_probs, std::move(w));
}

// Re-evaluates log p(sampled tokens) under the agent and applies one Adam
// step. advantages[i][k] belongs to agent turn k of trajectory i; the
// gradient is averaged over trajectories.
template <typename T>
void reinforce_step(Transmitter<T>& agent, const std::vector<Trajectory>& batch,
                    const std::vector<std::vector<double>>& advantages, nn::Adam<T>& opt, int max_steps) {
  if (batch.size() != advantages.size()) throw InvalidArgument("reinforce_step: advantage/trajectory count mismatch");
  if (batch.empty()) throw InvalidArgument("reinforce_step: empty batch");
  opt.zero_grad();
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& tr = batch[i];
    if (advantages[i].size() != tr.turns()) throw InvalidArgument("reinforce_step: advantage shape mismatch");
    for (std::size_t k = 0; k < tr.turns(); ++k) {
      nn::Graph<T> g(true);
      const auto prompt = transmitter::decoding_prompt(agent, tr.agent_states[k], max_steps);
      const auto layout = transmitter::extend(prompt, tr.agent_samples[k].tokens);
      auto lp = g.sum(agent.target_log_probs(g, agent.hidden(g, layout), layout));
      g.backward(reinforce_surrogate<T>(g, {lp}, {advantages[i][k]}, scale));
    }
  }
  opt.step();
}

struct BatchLog {
  int batch = 0;
  double r1 = 0;
  double r2 = 0;
  double r3 = 0;
  double reward = 0;
  double cycle_rate = 0;

  nlohmann::json to_json() const {
    return {{"batch", batch}, {"r1", r1}, {"r2", r2}, {"r3", r3}, {"r", reward}, {"cycle_rate", cycle_rate}};
  }
};

// A dialogue cycles when the agent repeats one of its earlier utterances.
inline bool has_cycle(const Trajectory& tr) {
  for (std::size_t k = 1; k < tr.turns(); ++k) {
    for (std::size_t j = 0; j < k; ++j) {
      if (tr.agent_utterance(k) == tr.agent_utterance(j)) return true;
    }
  }
  return false;
}

// Runs num_dialogues / batch_size mini-batches. Each dialogue re-draws its
// starter episode. user, frozen and the receiver are never modified.
template <typename T>
std::vector<BatchLog> finetune(Transmitter<T>& agent, const Transmitter<T>& user, const Transmitter<T>& frozen,
                               const PerceptionScorer<T>& scorer, const Vocab& vocab,
                               const std::vector<corpus::DialogueEpisode>& episodes, const SelfPlayConfig& config,
                               const std::function<void(const BatchLog&)>& on_batch = {}) {
  config.validate();
  std::vector<const corpus::DialogueEpisode*> starters;
  for (const auto& e : episodes) {
    if (!e.turns.empty() && !e.persona_a.empty()) starters.push_back(&e);
  }
  if (starters.empty()) throw InvalidArgument("finetune: no episode offers a starter utterance with persona A");
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, starters.size() - 1);
  nn::Adam<T> opt(agent.parameters(), config.optimizer);

  std::vector<BatchLog> log;
  const int num_batches = config.num_dialogues / config.batch_size;
  for (int b = 0; b < num_batches; ++b) {
    std::vector<Trajectory> batch;
    std::vector<RewardBreakdown> rewards;
    std::vector<double> flat;
    BatchLog entry;
    entry.batch = b;
    for (int i = 0; i < config.batch_size; ++i) {
      batch.push_back(simulate_dialogue(user, agent, vocab, *starters[pick(rng)], config, rng));
      rewards.push_back(compute_rewards(batch.back(), frozen, scorer, config));
      for (const auto& t : rewards.back().turns) {
        flat.push_back(t.total);
        entry.r1 += t.r1;
        entry.r2 += t.r2;
        entry.r3 += t.r3;
        entry.reward += t.total;
      }
      entry.cycle_rate += has_cycle(batch.back()) ? 1.0 : 0.0;
    }
    const auto adv = batch_advantages(flat);
    std::vector<std::vector<double>> per_traj;
    std::size_t at = 0;
    for (const auto& tr : batch) {
      per_traj.emplace_back(adv.begin() + static_cast<std::ptrdiff_t>(at),
                            adv.begin() + static_cast<std::ptrdiff_t>(at + tr.turns()));
      at += tr.turns();
    }
    reinforce_step(agent, batch, per_traj, opt, config.agent_max_steps);

    const double n = static_cast<double>(flat.size());
    entry.r1 /= n;
    entry.r2 /= n;
    entry.r3 /= n;
    entry.reward /= n;
    entry.cycle_rate /= static_cast<double>(config.batch_size);
    log.push_back(entry);
    if (on_batch) on_batch(entry);
  }
  return log;
}

}  // namespace p2bot::selfplay
