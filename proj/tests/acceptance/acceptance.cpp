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

// Acceptance oracles. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. A criterion's runtime bound is part of
// its pass condition.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "p2bot/corpus/probe.hpp"
#include "p2bot/corpus/synthetic.hpp"
#include "p2bot/metrics/evaluate.hpp"
#include "p2bot/metrics/metrics.hpp"
#include "p2bot/nn/grad_check.hpp"
#include "p2bot/receiver/receiver.hpp"
#include "p2bot/receiver/train.hpp"
#include "p2bot/selfplay/rewards.hpp"
#include "p2bot/selfplay/selfplay.hpp"
#include "p2bot/transmitter/train.hpp"

namespace {

using namespace p2bot;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double time_limit_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Discounted perception return against a direct double loop over the sum.
Outcome perception_return_oracle() {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  double worst = 0;
  int cases = 0;
  for (double gamma : {0.0, 0.3, 0.5, 1.0}) {
    for (int v = 0; v < 100; ++v) {
      for (std::size_t len = 1; len <= 6; ++len) {
        std::vector<double> agent(len), user(len);
        for (auto& x : agent) x = normal(rng);
        for (auto& x : user) x = normal(rng);
        const auto fast = selfplay::persona_perception_returns(agent, user, gamma);
        for (std::size_t n = 1; n <= len; ++n) {
          double brute = agent[n - 1];
          for (std::size_t k = n + 1; k <= len; ++k) {
            const double d = static_cast<double>(k - n);
            brute += std::pow(gamma, 2 * d - 1) * user[k - 1] + std::pow(gamma, 2 * d) * agent[k - 1];
          }
          worst = std::max(worst, std::abs(fast[n - 1] - brute));
          ++cases;
        }
      }
    }
  }
  return {worst <= 1e-9, std::to_string(cases) + " cases, max |diff| " + fmt("%.3g", worst)};
}

Outcome agg_limit_suite() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(-1, 1);
  bool constant_exact = true;
  for (double c : {-2.5, 0.0, 0.7, 13.0}) {
    for (double tau : {1e-3, 0.5, 1.0, 1e6}) constant_exact &= receiver::agg(std::vector<double>(5, c), tau) == c;
  }
  double mean_gap = 0;
  double max_gap = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> row(2 + t % 7);
    for (auto& x : row) x = unit(rng);
    double mean = 0;
    for (double x : row) mean += x;
    mean /= static_cast<double>(row.size());
    mean_gap = std::max(mean_gap, std::abs(receiver::agg(row, 1e6) - mean));
    // Separated rows: the maximum leads the runner-up by at least 0.25.
    std::sort(row.begin(), row.end());
    row.back() = row[row.size() - 2] + 0.25 + 0.5 * (unit(rng) + 1);
    max_gap = std::max(max_gap, std::abs(receiver::agg(row, 1e-2) - row.back()));
  }
  const double hand = receiver::agg(std::vector<double>{1, 3}, 1.0);
  const bool pass = constant_exact && mean_gap <= 1e-6 && max_gap <= 1e-3 && std::abs(hand - 2.7616) <= 1e-3;
  return {pass, std::string("constant ") + (constant_exact ? "exact" : "inexact") + ", tau=1e6 vs mean " +
                    fmt("%.3g", mean_gap) + ", tau=1e-2 vs max " + fmt("%.3g", max_gap) + ", (1,3) " +
                    fmt("%.5f", hand)};
}

// Two-armed softmax bandit, rewards (1, 0). Per-sample gradients of the
// REINFORCE surrogate against the analytic policy gradient.
Outcome reinforce_bandit() {
  const int n = 10000;
  nn::Parameter<double> theta("theta", 1, 2);
  theta.value << 0.4, -0.1;
  const double p0 = 1.0 / (1.0 + std::exp(-0.5));
  const double analytic[2] = {p0 * (1 - p0), -p0 * (1 - p0)};
  std::mt19937_64 rng(3);
  std::bernoulli_distribution first(p0);
  std::vector<int> actions(n);
  std::vector<double> rewards(n);
  for (int i = 0; i < n; ++i) {
    actions[i] = first(rng) ? 0 : 1;
    rewards[i] = actions[i] == 0 ? 1.0 : 0.0;
  }
  bool pass = true;
  std::ostringstream detail;
  for (bool baseline : {false, true}) {
    const auto adv = baseline ? selfplay::batch_advantages(rewards) : rewards;
    double sum[2] = {0, 0}, sq[2] = {0, 0};
    for (int i = 0; i < n; ++i) {
      theta.zero_grad();
      nn::Graph<double> g(true);
      auto lp = g.pick(g.log_softmax_rows(g.param(theta)), {{0, actions[i]}});
      g.backward(selfplay::reinforce_surrogate<double>(g, {lp}, {adv[i]}, 1.0));
      for (int j = 0; j < 2; ++j) {
        const double est = -theta.grad(0, j);
        sum[j] += est;
        sq[j] += est * est;
      }
    }
    detail << (baseline ? "; with baseline" : "without baseline");
    for (int j = 0; j < 2; ++j) {
      const double mean = sum[j] / n;
      const double sigma = std::sqrt((sq[j] / n - mean * mean) / n);
      const double z = std::abs(mean - analytic[j]) / sigma;
      pass &= z <= 3.0;
      detail << " d" << j << " " << fmt("%.4f", mean) << " vs " << fmt("%.4f", analytic[j]) << " (" << fmt("%.2f", z)
             << " sigma)";
    }
  }
  return {pass, detail.str()};
}

nn::SequenceModelConfig small_config(int vocab, bool causal, int dim = 16, int layers = 2, int heads = 2) {
  nn::SequenceModelConfig c;
  c.num_layers = layers;
  c.model_dim = dim;
  c.num_heads = heads;
  c.max_positions = 64;
  c.vocab_size = vocab;
  c.causal = causal;
  return c;
}

Outcome gradient_verification() {
  using GD = nn::Graph<double>;
  using GF = nn::Graph<float>;
  const std::size_t probes = 300;
  const double eps = 1e-5;
  const transmitter::EncodedContext ctx{{10, 11, 5}, {{12, 8}}};
  auto layouts = [&](const auto& m) {
    return std::pair{transmitter::build_input(ctx, std::vector<int>{13, 14, 7}, m.layout_options()),
                     transmitter::build_input(ctx, std::vector<int>{9, 6}, m.layout_options())};
  };
  transmitter::Transmitter<double> td(small_config(16, true), 4);
  transmitter::Transmitter<float> tf(small_config(16, true), 4);
  const auto [gold, other] = layouts(td);

  receiver::ReceiverLossParams rp;
  rp.margin = 5.0;  // keeps the hinge active so the loss is smooth at the probe point
  rp.l1_weight = 0.05;
  const receiver::Sentences imp = {{7, 8, 9}, {10, 11}}, real = {{12, 13}, {14}, {9, 15}}, fake = {{8, 8}, {11, 12, 13}};
  receiver::Receiver<double> rd(small_config(16, false), 3);
  receiver::Receiver<float> rf(small_config(16, false), 3);

  double d[3], f[3];
  d[0] = nn::grad_check<double>([&](GD& g) { return td.mle_loss(g, gold); }, td.parameters(), probes, eps, 1)
             .max_relative_error;
  d[1] = nn::grad_check<double>([&](GD& g) { return td.nup_loss(g, gold, other); }, td.parameters(), probes, eps, 2)
             .max_relative_error;
  d[2] = nn::grad_check<double>([&](GD& g) { return rd.loss(g, imp, real, fake, rp, 0.7); }, rd.parameters(), probes,
                                eps, 3)
             .max_relative_error;
  f[0] = nn::grad_check_mixed<float, double>([&](GF& g) { return tf.mle_loss(g, gold); }, tf.parameters(),
                                             [&](GD& g) { return td.mle_loss(g, gold); }, td.parameters(), probes, eps, 1)
             .max_relative_error;
  f[1] = nn::grad_check_mixed<float, double>([&](GF& g) { return tf.nup_loss(g, gold, other); }, tf.parameters(),
                                             [&](GD& g) { return td.nup_loss(g, gold, other); }, td.parameters(),
                                             probes, eps, 2)
             .max_relative_error;
  f[2] = nn::grad_check_mixed<float, double>([&](GF& g) { return rf.loss(g, imp, real, fake, rp, 0.7); },
                                             rf.parameters(),
                                             [&](GD& g) { return rd.loss(g, imp, real, fake, rp, 0.7); },
                                             rd.parameters(), probes, eps, 3)
             .max_relative_error;
  bool pass = true;
  std::ostringstream detail;
  const char* names[3] = {"mle", "nup", "receiver"};
  for (int i = 0; i < 3; ++i) {
    pass &= d[i] < 1e-4 && f[i] < 1e-2;
    detail << (i ? "; " : "") << names[i] << " double " << fmt("%.2e", d[i]) << " float " << fmt("%.2e", f[i]);
  }
  return {pass, detail.str()};
}

Outcome metric_oracles() {
  const double f1 = metrics::word_f1("i like dogs", "i like cats");
  const double ppl = metrics::perplexity(std::vector<double>{std::log(2.0), std::log(8.0)});
  const double bleu = metrics::bleu4("a b c d", "a b c d e");
  const double mrr = metrics::mrr({{"x", "a", "b", "y"}}, {{"x", "y"}});
  const bool pass = std::abs(f1 - 2.0 / 3.0) <= 1e-12 && std::abs(ppl - 4.0) <= 1e-12 &&
                    std::abs(bleu - 0.7788) <= 1e-4 && std::abs(mrr - 0.625) <= 1e-12;
  return {pass, "f1 " + fmt("%.6f", f1) + ", ppl " + fmt("%.6f", ppl) + ", bleu4 " + fmt("%.6f", bleu) + ", mrr " +
                    fmt("%.6f", mrr)};
}

// 10k probe items over a 64-persona corpus, scored by a uniform random
// receiver.
Outcome random_probe_baseline() {
  corpus::SyntheticOptions so;
  so.num_dialogues = 10000;
  so.num_candidates = 0;
  const auto episodes = corpus::generate_synthetic(64, 1, 4, so);
  const auto set = corpus::build_probe_set(episodes, 31, 5);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  const double hits = metrics::probe_hits_at_1(set, [&](const corpus::ProbeItem&, std::size_t) { return u(rng); });
  return {std::abs(hits - 0.031) <= 0.01 && set.items.size() == 10000 && set.items[0].candidates().size() == 32,
          std::to_string(set.items.size()) + " trials, 32 candidates, hits@1 " + fmt("%.4f", hits)};
}

// Held-out dialogues: the last fifth of a 64-persona, 1280-dialogue corpus.
Outcome receiver_training_oracle() {
  corpus::SyntheticOptions so;
  so.num_dialogues = 1280;
  so.num_candidates = 0;
  const auto all = corpus::generate_synthetic(64, 3, 21, so);
  const std::size_t cut = all.size() * 4 / 5;
  const std::vector<corpus::DialogueEpisode> train(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cut));
  const std::vector<corpus::DialogueEpisode> held(all.begin() + static_cast<std::ptrdiff_t>(cut), all.end());
  const auto vocab = corpus::build_vocab(all, 1);

  receiver::ReceiverTrainConfig c;
  c.encoder = small_config(vocab.size(), false, 32, 1, 2);
  c.optimizer.learning_rate = 1e-3;
  c.epochs = 20;
  c.batch_size = 8;
  c.seed = 1;
  receiver::Receiver<float> model(c.encoder, c.seed);
  receiver::train_receiver(model, receiver::make_receiver_dataset(train, vocab), c);

  const double tau = c.loss.inference_tau;
  const auto probe = metrics::probe_receiver(model, vocab, corpus::build_probe_set(held, 31, 5), tau);

  const auto personas = corpus::distinct_personas(all);
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> pick(0, personas.size() - 1);
  auto c_score = [&](const receiver::MatrixD& h, const corpus::Persona& p) {
    return receiver::cumulative_score(
        receiver::relevance_matrix(
            h, model.encode_matrix(receiver::Side::kPersona, receiver::encode_sentences(vocab, p.profiles))),
        tau);
  };
  std::size_t wins = 0;
  for (const auto& e : held) {
    const auto who = corpus::probed_speaker(e);
    const auto h =
        model.encode_matrix(receiver::Side::kImpression, receiver::encode_sentences(vocab, e.utterances_of(who)));
    const auto& truth = e.persona_of(who);
    const corpus::Persona* z = nullptr;
    do {
      z = &personas[pick(rng)];
    } while (z->id == truth.id);
    wins += c_score(h, truth) > c_score(h, *z) ? 1 : 0;
  }
  const double rate = static_cast<double>(wins) / static_cast<double>(held.size());
  return {probe.hits_at_1 >= 0.5 && rate >= 0.9,
          "64 personas, probe hits@1 " + fmt("%.4f", probe.hits_at_1) + " (mrr " + fmt("%.4f", probe.mrr) + ") over " +
              std::to_string(probe.items) + " held-out items, cA > cZ on " + fmt("%.4f", rate) + " of " +
              std::to_string(held.size()) + " held-out dialogues"};
}

// 8 dialogues x 2 exchanges = 16 responding instances; candidate lists are
// 20-way, drawn from a 40-dialogue corpus.
Outcome transmitter_overfit_oracle() {
  const auto all = corpus::generate_synthetic(40, 2, 11);
  const std::vector<corpus::DialogueEpisode> episodes(all.begin(), all.begin() + 8);
  transmitter::SupervisedConfig c;
  c.model = small_config(0, true, 32, 2, 4);
  c.model.max_positions = 128;
  c.optimizer.learning_rate = 3e-3;
  c.linear_decay = true;
  c.epochs = 150;
  c.batch_size = 4;
  c.seed = 1;
  c.sides = corpus::ResponderSides::kBOnly;
  const auto instances = corpus::make_instances(episodes, c.seed, c.sides);
  const auto run = transmitter::train_supervised<float>(episodes, c);
  metrics::EvalOptions o;
  o.generate = false;
  const auto report = metrics::evaluate_transmitter(run.model, run.vocab, episodes, o);
  std::size_t list_size = episodes[0].candidates[0].responses.size();
  const double hits = report.hits_at_1.value_or(0.0);
  return {instances.size() == 16 && list_size == 20 && report.ppl < 1.5 && hits == 1.0,
          std::to_string(instances.size()) + " instances, " + std::to_string(c.epochs) + " epochs, ppl " +
              fmt("%.4f", report.ppl) + ", hits@1 " + fmt("%.4f", hits) + " (" + std::to_string(list_size) +
              "-way)"};
}

// A transmitter and a receiver pretrained on a 64-persona synthetic corpus;
// five seeds of 200-dialogue fine-tuning from the same starting point.
Outcome selfplay_improvement_oracle() {
  const auto episodes = corpus::generate_synthetic(64, 3, 31);
  transmitter::SupervisedConfig tc;
  tc.model = small_config(0, true, 32, 2, 4);
  tc.model.max_positions = 128;
  tc.optimizer.learning_rate = 3e-3;
  tc.linear_decay = true;
  tc.epochs = 10;
  tc.seed = 1;
  const auto pre = transmitter::train_supervised<float>(episodes, tc);

  corpus::SyntheticOptions so;
  so.num_dialogues = 1280;
  so.num_candidates = 0;
  receiver::ReceiverTrainConfig rc;
  rc.encoder = small_config(pre.vocab.size(), false, 32, 1, 2);
  rc.optimizer.learning_rate = 1e-3;
  rc.epochs = 20;
  rc.seed = 1;
  receiver::Receiver<float> rec(rc.encoder, rc.seed);
  receiver::train_receiver(rec, receiver::make_receiver_dataset(corpus::generate_synthetic(64, 3, 31, so), pre.vocab),
                           rc);
  const selfplay::PerceptionScorer<float> scorer{rec, pre.vocab, pre.vocab, rc.loss.inference_tau};

  int improved = 0;
  std::ostringstream detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    transmitter::Transmitter<float> agent = pre.model;
    selfplay::SelfPlayConfig c;
    c.num_dialogues = 200;
    c.batch_size = 8;
    c.seed = seed;
    c.optimizer.learning_rate = 3e-3;
    const auto log = selfplay::finetune(agent, pre.model, pre.model, scorer, pre.vocab, episodes, c);
    const std::size_t q = log.size() / 4;
    double first = 0, last = 0;
    for (std::size_t i = 0; i < q; ++i) {
      first += log[i].r3;
      last += log[log.size() - 1 - i].r3;
    }
    first /= static_cast<double>(q);
    last /= static_cast<double>(q);
    improved += last > first ? 1 : 0;
    detail << (seed > 1 ? "; " : "") << "seed " << seed << " R3 " << fmt("%.3f", first) << " -> " << fmt("%.3f", last);
  }
  return {improved >= 4, std::to_string(improved) + "/5 seeds improve (" + detail.str() + ")"};
}

Outcome hinge_zero_property() {
  const receiver::ReceiverLossParams p;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-5, 5), gap(0, 3);
  int nonzero = 0;
  int checked = 0;
  for (int i = 0; i < 100000; ++i) {
    const double cz = u(rng);
    double ca = cz + p.margin + gap(rng);
    if (ca - cz < p.margin) continue;  // rounding in the sum
    nonzero += receiver::hinge_term(ca, cz, p) != 0.0 ? 1 : 0;
    ++checked;
  }
  // The boundary itself and the graph form.
  nonzero += receiver::hinge_term(p.margin, 0.0, p) != 0.0 ? 1 : 0;
  nn::Graph<double> g(false);
  receiver::MatrixD ua = receiver::MatrixD::Constant(2, 3, p.margin + 0.2);
  receiver::MatrixD uz = receiver::MatrixD::Constant(2, 3, 0.0);
  const double with_graph = receiver::receiver_loss<double>(g, g.constant(ua), g.constant(uz), p, 0.5)->scalar();
  const double l1_only = p.l1_weight * (ua.cwiseAbs().sum() + uz.cwiseAbs().sum());
  const bool graph_zero = with_graph == l1_only;
  return {nonzero == 0 && graph_zero, std::to_string(checked + 1) + " pairs with cA - cZ >= " + fmt("%.1f", p.margin) +
                                          ", nonzero hinge " + std::to_string(nonzero) +
                                          ", graph loss equals L1 term: " + (graph_zero ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"discounted perception return matches brute force", 1, perception_return_oracle},
      {"agg limit suite", 1, agg_limit_suite},
      {"REINFORCE bandit gradient within 3 sigma", 30, reinforce_bandit},
      {"finite-difference gradient verification", 120, gradient_verification},
      {"metric oracles", 1, metric_oracles},
      {"random receiver probe baseline", 10, random_probe_baseline},
      {"receiver training oracle", 600, receiver_training_oracle},
      {"transmitter overfit oracle", 300, transmitter_overfit_oracle},
      {"self-play improvement oracle", 1200, selfplay_improvement_oracle},
      {"hinge zero property", 1, hinge_zero_property},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = Clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    const bool in_time = secs < c.time_limit_s;
    const bool pass = out.pass && in_time;
    failed += pass ? 0 : 1;
    std::cout << (pass ? "PASS" : "FAIL") << "  " << c.name << ": " << out.detail << " [" << fmt("%.2f", secs)
              << " s, limit " << fmt("%.0f", c.time_limit_s) << " s" << (in_time ? "" : ", over limit") << "]"
              << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
