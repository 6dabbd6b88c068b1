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
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "p2bot/corpus/episode.hpp"
#include "p2bot/corpus/probe.hpp"
#include "p2bot/nn/adam.hpp"
#include "p2bot/receiver/receiver.hpp"

namespace p2bot::receiver {

struct ReceiverTrainConfig {
  nn::SequenceModelConfig encoder;
  nn::OptimizerConfig optimizer;
  ReceiverLossParams loss;
  int epochs = 1;
  int batch_size = 8;
  int min_freq = 1;
  std::uint64_t seed = 0;
};

struct ReceiverExample {
  Sentences impression;
  std::size_t persona = 0;  // index into ReceiverDataset::personas
};

struct ReceiverDataset {
  std::vector<Sentences> personas;
  std::vector<std::string> persona_ids;
  std::vector<ReceiverExample> examples;
};

// One example per episode: the utterances of the probed speaker (A when its
// persona is known) paired with that speaker's persona.
inline ReceiverDataset make_receiver_dataset(const std::vector<corpus::DialogueEpisode>& episodes, const Vocab& vocab) {
  ReceiverDataset ds;
  std::map<std::string, std::size_t> index;
  for (const auto& p : corpus::distinct_personas(episodes)) {
    index[p.id] = ds.personas.size();
    ds.personas.push_back(encode_sentences(vocab, p.profiles));
    ds.persona_ids.push_back(p.id);
  }
  for (const auto& e : episodes) {
    const auto who = corpus::probed_speaker(e);
    auto utterances = e.utterances_of(who);
    if (utterances.empty()) continue;
    ds.examples.push_back({encode_sentences(vocab, utterances), index.at(e.persona_of(who).id)});
  }
  return ds;
}

struct ReceiverTrainLog {
  std::vector<double> batch_loss;
  std::vector<double> tau;
};

// Each example draws a fresh distractor persona; tau anneals linearly across
// all optimizer steps of the run.
template <typename T>
ReceiverTrainLog train_receiver(Receiver<T>& model, const ReceiverDataset& data, const ReceiverTrainConfig& config,
                                const std::function<void(std::size_t, double, double)>& on_batch = {}) {
  config.loss.validate();
  if (data.personas.size() < 2) throw InvalidArgument("train_receiver: need at least 2 personas for distractors");
  if (data.examples.empty()) throw InvalidArgument("train_receiver: no training examples");
  if (config.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  nn::Adam<T> opt(model.parameters(), config.optimizer);
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> other(0, data.personas.size() - 2);
  std::vector<std::size_t> order(data.examples.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  const std::int64_t batches_per_epoch = static_cast<std::int64_t>((order.size() + bs - 1) / bs);
  const std::int64_t total_steps = batches_per_epoch * config.epochs;

  ReceiverTrainLog log;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += bs, ++step) {
      const std::size_t end = std::min(order.size(), start + bs);
      const double tau = tau_schedule(step, std::max<std::int64_t>(total_steps - 1, 0), config.loss);
      const T inv = T(1) / static_cast<T>(end - start);
      double batch_loss = 0;
      opt.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const ReceiverExample& ex = data.examples[order[i]];
        std::size_t z = other(rng);
        if (z >= ex.persona) ++z;
        nn::Graph<T> g(true);
        auto loss = model.loss(g, ex.impression, data.personas[ex.persona], data.personas[z], config.loss, tau);
        batch_loss += static_cast<double>(loss->scalar());
        g.backward(g.scale(loss, inv));
      }
      opt.step();
      batch_loss /= static_cast<double>(end - start);
      log.batch_loss.push_back(batch_loss);
      log.tau.push_back(tau);
      if (on_batch) on_batch(static_cast<std::size_t>(step), batch_loss, tau);
    }
  }
  return log;
}

template <typename T>
struct ReceiverRun {
  Receiver<T> model;
  Vocab vocab;
  ReceiverTrainLog log;
};

template <typename T>
ReceiverRun<T> train_receiver(const std::vector<corpus::DialogueEpisode>& episodes, ReceiverTrainConfig config,
                              const std::function<void(std::size_t, double, double)>& on_batch = {}) {
  Vocab vocab = corpus::build_vocab(episodes, config.min_freq);
  config.encoder.vocab_size = vocab.size();
  Receiver<T> model(config.encoder, config.seed);
  auto log = train_receiver(model, make_receiver_dataset(episodes, vocab), config, on_batch);
  return {std::move(model), std::move(vocab), std::move(log)};
}

}  // namespace p2bot::receiver
