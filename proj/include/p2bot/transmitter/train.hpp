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
#include <numeric>
#include <random>
#include <vector>

#include "p2bot/corpus/episode.hpp"
#include "p2bot/corpus/instances.hpp"
#include "p2bot/nn/adam.hpp"
#include "p2bot/transmitter/layout.hpp"
#include "p2bot/transmitter/model.hpp"

namespace p2bot::transmitter {

struct SupervisedConfig {
  nn::SequenceModelConfig model;
  nn::OptimizerConfig optimizer;  // learning rate 6.25e-5
  int epochs = 2;
  int batch_size = 8;
  double mle_weight = 1.0;
  double nup_weight = 1.0;
  int min_freq = 1;
  corpus::ResponderSides sides = corpus::ResponderSides::kBoth;
  std::uint64_t seed = 0;
  // Linearly decays the learning rate to 0 over the run.
  bool linear_decay = false;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0;
  double mle = 0;
  double nup = 0;
};

struct EncodedInstance {
  TokenLayout gold;
  TokenLayout distractor;
};

inline EncodedInstance encode_instance(const corpus::TrainingInstance& inst, const Vocab& vocab,
                                       const LayoutOptions& options) {
  auto ctx = encode_context(vocab, inst.persona.profiles, inst.history);
  return {build_input(ctx, vocab.encode(inst.gold), options), build_input(ctx, vocab.encode(inst.distractor), options)};
}

// Joint objective of one instance: w_mle * MLE + w_nup * NUP, plus the
// null-score calibration term (which only moves the null bias).
template <typename T>
struct JointLoss {
  typename nn::Graph<T>::Var total;
  double mle;
  double nup;
};

template <typename T>
JointLoss<T> joint_loss(nn::Graph<T>& g, Transmitter<T>& model, const EncodedInstance& inst,
                        const SupervisedConfig& config) {
  auto h = model.hidden(g, inst.gold);
  auto mle = model.mle_loss(g, h, inst.gold);
  auto gold_logit = model.cls_logit(g, h, inst.gold);
  auto distractor_logit = model.cls_logit(g, inst.distractor);
  auto nup = pairwise_nup_loss(g, gold_logit, distractor_logit);
  auto total = g.add(g.scale(mle, static_cast<T>(config.mle_weight)), g.scale(nup, static_cast<T>(config.nup_weight)));
  total = g.add(total, model.null_bias_loss(g, gold_logit->scalar(), distractor_logit->scalar()));
  return {total, static_cast<double>(mle->scalar()), static_cast<double>(nup->scalar())};
}

using EpochData = std::function<std::vector<EncodedInstance>(int epoch)>;

// Mini-batch Adam over shuffled instances; `data_for` supplies the instances
// of each epoch (all epochs must have the same count). Returns one log entry
// per epoch.
template <typename T>
std::vector<EpochLog> train_transmitter(Transmitter<T>& model, const EpochData& data_for, const SupervisedConfig& config,
                                        const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (config.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  nn::Adam<T> opt(model.parameters(), config.optimizer);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order;
  std::vector<EpochLog> log;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<EncodedInstance> data = data_for(epoch);
    if (data.empty()) throw InvalidArgument("train_transmitter: no training instances");
    if (order.empty()) {
      order.resize(data.size());
      std::iota(order.begin(), order.end(), 0);
    }
    if (order.size() != data.size()) throw InvalidArgument("train_transmitter: instance count changed between epochs");
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog entry{epoch, 0, 0, 0};
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);
    const double total_steps = static_cast<double>(config.epochs) * static_cast<double>((order.size() + bs - 1) / bs);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      if (config.linear_decay) {
        opt.set_learning_rate(config.optimizer.learning_rate *
                              (1.0 - static_cast<double>(opt.steps()) / total_steps));
      }
      const T inv = T(1) / static_cast<T>(end - start);
      opt.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        nn::Graph<T> g(true);
        auto loss = joint_loss(g, model, data[order[i]], config);
        entry.loss += static_cast<double>(loss.total->scalar());
        entry.mle += loss.mle;
        entry.nup += loss.nup;
        g.backward(g.scale(loss.total, inv));
      }
      opt.step();
    }
    const double n = static_cast<double>(data.size());
    entry.loss /= n;
    entry.mle /= n;
    entry.nup /= n;
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return log;
}

// Fixed instances for every epoch.
template <typename T>
std::vector<EpochLog> train_transmitter(Transmitter<T>& model, const std::vector<EncodedInstance>& data,
                                        const SupervisedConfig& config,
                                        const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (data.empty()) throw InvalidArgument("train_transmitter: no training instances");
  return train_transmitter(model, EpochData([&](int) { return data; }), config, on_epoch);
}

template <typename T>
struct SupervisedRun {
  Transmitter<T> model;
  Vocab vocab;
  std::vector<EpochLog> log;
};

// Builds vocabulary and instances from the corpus, then trains from scratch.
// Distractors are re-drawn every epoch.
template <typename T>
SupervisedRun<T> train_supervised(const std::vector<corpus::DialogueEpisode>& episodes, SupervisedConfig config,
                                  const std::function<void(const EpochLog&)>& on_epoch = {}) {
  Vocab vocab = corpus::build_vocab(episodes, config.min_freq);
  config.model.vocab_size = vocab.size();
  config.model.causal = true;
  if (corpus::make_instances(episodes, config.seed, config.sides).empty()) {
    throw InvalidArgument("train_supervised: corpus yields no training instances");
  }
  Transmitter<T> model(config.model, config.seed);
  const auto options = model.layout_options();
  auto data_for = [&](int epoch) {
    std::vector<EncodedInstance> data;
    for (const auto& inst : corpus::make_instances(episodes, config.seed + static_cast<std::uint64_t>(epoch), config.sides)) {
      data.push_back(encode_instance(inst, vocab, options));
    }
    return data;
  };
  auto log = train_transmitter(model, EpochData(data_for), config, on_epoch);
  return {std::move(model), std::move(vocab), std::move(log)};
}

}  // namespace p2bot::transmitter
