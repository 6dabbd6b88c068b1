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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "p2bot/corpus/instances.hpp"
#include "p2bot/nn/grad_check.hpp"
#include "p2bot/transmitter/decode.hpp"
#include "p2bot/transmitter/layout.hpp"
#include "p2bot/transmitter/model.hpp"
#include "p2bot/transmitter/train.hpp"

namespace p2bot::transmitter {
namespace {

using corpus::Vocab;
using nn::Matrix;

constexpr int kPs = Vocab::kPersonaStart;
constexpr int kSep = Vocab::kSep;
constexpr int kEos = Vocab::kEos;
constexpr int kCls = Vocab::kCls;

TEST(Layout, EmptyHistory) {
  EncodedContext ctx{{10, 11}, {}};
  const auto l = build_input(ctx, std::vector<int>{20, 21, 22}, {});
  EXPECT_EQ(l.token_ids, (std::vector<int>{kPs, 10, 11, kSep, 20, 21, 22, kEos, kCls}));
  EXPECT_EQ(l.loss_mask, (std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1, 0}));
  EXPECT_EQ(l.target_count(), 4);
  EXPECT_EQ(l.cls_position, 8);
  EXPECT_EQ(l.response_start, 4);

  LayoutOptions bare;
  bare.append_eos = false;
  bare.append_cls = false;
  EXPECT_EQ(build_input(ctx, std::vector<int>{20, 21, 22}, bare).token_ids,
            (std::vector<int>{kPs, 10, 11, kSep, 20, 21, 22}));
}

TEST(Layout, HistorySeparatorsAndSegments) {
  EncodedContext ctx{{10}, {{30, 31}, {40}, {50, 51}}};
  const auto l = build_input(ctx, std::vector<int>{20}, {});
  EXPECT_EQ(l.token_ids, (std::vector<int>{kPs, 10, kSep, 30, 31, kSep, 40, kSep, 50, 51, kSep, 20, kEos, kCls}));
  // Last history entry is the partner's; speakers alternate backwards.
  EXPECT_EQ(l.segment_ids, (std::vector<int>{0, 0, 0, 1, 1, 1, 2, 2, 1, 1, 1, 3, 3, 3}));
  EXPECT_EQ(std::count(l.token_ids.begin(), l.token_ids.end(), kCls), 1);
  const auto prompt = build_input(ctx, std::nullopt, {});
  EXPECT_EQ(prompt.token_ids.back(), kSep);
  EXPECT_EQ(prompt.target_count(), 0);
  EXPECT_EQ(prompt.cls_position, -1);
}

TEST(Layout, TruncationDropsOldestHistoryFirst) {
  EncodedContext ctx{{10, 11, 12}, {{30, 31, 32}, {40, 41}, {50}}};
  LayoutOptions opt;
  opt.max_positions = 5 + 2 + 3 + 3;  // [PS] p [SEP] + response/EOS/CLS + room for two turns
  const auto l = build_input(ctx, std::vector<int>{20}, opt);
  EXPECT_EQ(l.dropped_history, 1u);
  EXPECT_EQ(l.token_ids, (std::vector<int>{kPs, 10, 11, 12, kSep, 40, 41, kSep, 50, kSep, 20, kEos, kCls}));
  opt.max_positions = 6;
  EXPECT_THROW(build_input(ctx, std::vector<int>{20}, opt), InvalidArgument);
}

TEST(Layout, ExtendAppendsResponseTokens) {
  const auto prompt = build_input(EncodedContext{{10}, {}}, std::nullopt, {});
  const auto l = extend(prompt, {20, 21});
  EXPECT_EQ(l.token_ids, (std::vector<int>{kPs, 10, kSep, 20, 21}));
  EXPECT_EQ(l.loss_mask, (std::vector<int>{0, 0, 0, 1, 1}));
  EXPECT_EQ(with_response(prompt, {20}).token_ids.back(), kCls);
}

using GD = nn::Graph<double>;

TEST(MleLoss, HandEvaluations) {
  GD g(false);
  Matrix<double> logits(2, 2);
  logits << std::log(0.5), std::log(0.5), std::log(0.25), std::log(0.75);
  EXPECT_NEAR(masked_mean_nll(g, g.constant(logits), {0, 0})->scalar(), (std::log(2.0) + std::log(4.0)) / 2, 1e-12);
  EXPECT_NEAR(masked_mean_nll(g, g.constant(Matrix<double>::Zero(3, 100)), {5, 9, 99})->scalar(), std::log(100.0),
              1e-12);
  Matrix<double> certain = Matrix<double>::Constant(2, 10, -1e3);
  certain(0, 3) = 0;
  certain(1, 4) = 0;
  EXPECT_NEAR(masked_mean_nll(g, g.constant(certain), {3, 4})->scalar(), 0.0, 1e-12);
  EXPECT_THROW(masked_mean_nll(g, g.constant(certain), {}), InvalidArgument);
}

TEST(NupLoss, HandEvaluations) {
  GD g(false);
  auto loss = [&](double a, double b) {
    return pairwise_nup_loss(g, g.scalar_constant(a), g.scalar_constant(b))->scalar();
  };
  EXPECT_NEAR(loss(0.3, 0.3), std::log(2.0), 1e-12);
  EXPECT_NEAR(loss(2.0, 0.0), std::log1p(std::exp(-2.0)), 1e-12);
  EXPECT_LT(loss(60.0, 0.0), 1e-20);
}

Transmitter<double> tiny_transmitter(int vocab = 16, std::uint64_t seed = 1) {
  return Transmitter<double>(testing::tiny_config(vocab), seed);
}

TEST(Transmitter, MissingClsAndEmptyMaskAreErrors) {
  auto m = tiny_transmitter();
  const auto prompt = build_input(EncodedContext{{10}, {}}, std::nullopt, m.layout_options());
  GD g(false);
  EXPECT_THROW(m.mle_loss(g, prompt), InvalidArgument);
  EXPECT_THROW(m.cls_logit(g, prompt), InvalidArgument);
  LayoutOptions no_cls = m.layout_options();
  no_cls.append_cls = false;
  EXPECT_THROW(m.classifier_logit(build_input(EncodedContext{{10}, {}}, std::vector<int>{11}, no_cls)),
               InvalidArgument);
}

TEST(Transmitter, NupLogProbNormalization) {
  auto m = tiny_transmitter();
  GD g(false);
  EXPECT_NEAR(m.nup_log_prob(g, g.scalar_constant(0.0))->scalar(), std::log(0.5), 1e-12);
  double prev = -1e9;
  for (double logit : {-3.0, -1.0, 0.0, 0.5, 4.0}) {
    const double lp = m.nup_log_prob(g, g.scalar_constant(logit))->scalar();
    EXPECT_GT(lp, prev);
    EXPECT_LE(lp, 0.0);
    prev = lp;
  }
}

TEST(Transmitter, MleLossMatchesTokenLogProbs) {
  auto m = tiny_transmitter();
  const auto layout = build_input(EncodedContext{{10, 11}, {{12}}}, std::vector<int>{13, 14}, m.layout_options());
  const auto lps = m.token_log_probs(layout);
  ASSERT_EQ(lps.size(), 3u);
  GD g(false);
  EXPECT_NEAR(m.mle_loss(g, layout)->scalar(), -(lps[0] + lps[1] + lps[2]) / 3, 1e-12);
}

struct LossPair {
  TokenLayout gold;
  TokenLayout other;
};

template <typename T>
LossPair loss_inputs(const Transmitter<T>& m) {
  const EncodedContext ctx{{10, 11}, {{12, 8}}};
  return {build_input(ctx, std::vector<int>{13, 14}, m.layout_options()),
          build_input(ctx, std::vector<int>{9}, m.layout_options())};
}

TEST(Transmitter, GradientsMatchFiniteDifferencesDouble) {
  Transmitter<double> m(testing::tiny_config(16), 4);
  const auto in = loss_inputs(m);
  const auto mle =
      nn::grad_check<double>([&](GD& g) { return m.mle_loss(g, in.gold); }, m.parameters(), 150, 1e-5, 1);
  const auto nup =
      nn::grad_check<double>([&](GD& g) { return m.nup_loss(g, in.gold, in.other); }, m.parameters(), 150, 1e-5, 2);
  EXPECT_LT(mle.max_relative_error, 1e-4);
  EXPECT_LT(nup.max_relative_error, 1e-4);
}

TEST(Transmitter, GradientsMatchFiniteDifferencesFloat) {
  using GF = nn::Graph<float>;
  Transmitter<float> mf(testing::tiny_config(16), 4);
  Transmitter<double> md(testing::tiny_config(16), 4);
  const auto in = loss_inputs(mf);
  const auto mle = nn::grad_check_mixed<float, double>(
      [&](GF& g) { return mf.mle_loss(g, in.gold); }, mf.parameters(), [&](GD& g) { return md.mle_loss(g, in.gold); },
      md.parameters(), 150, 1e-5, 1);
  const auto nup = nn::grad_check_mixed<float, double>(
      [&](GF& g) { return mf.nup_loss(g, in.gold, in.other); }, mf.parameters(),
      [&](GD& g) { return md.nup_loss(g, in.gold, in.other); }, md.parameters(), 150, 1e-5, 2);
  EXPECT_LT(mle.max_relative_error, 1e-2);
  EXPECT_LT(nup.max_relative_error, 1e-2);
}

TEST(Selection, LengthNormalizationPrefersLowerPerTokenCost) {
  ScoredCandidate a{{1, 2}, -4.0, 2, -0.5, true};
  ScoredCandidate b{{1, 2, 3, 4, 5}, -5.0, 5, -0.5, true};
  EXPECT_EQ(select_candidate({a, b}, 1.0), 1u);
  // Doubling a candidate's per-token profile leaves its score unchanged.
  ScoredCandidate a2{{1, 2, 1, 2}, -8.0, 4, -0.5, true};
  EXPECT_DOUBLE_EQ(a.combined(1.0), a2.combined(1.0));
}

TEST(Selection, CombinedScoreHandEvaluation) {
  ScoredCandidate a{{1}, -1.0, 1, -0.1, true};
  ScoredCandidate b{{1}, -0.5, 1, -1.5, true};
  EXPECT_NEAR(a.combined(0.1), -0.19, 1e-12);
  EXPECT_NEAR(b.combined(0.1), -1.4, 1e-12);
  EXPECT_NEAR(combined_score(-1.0, 1, -0.1, 0.1), -0.19, 1e-12);
  EXPECT_EQ(select_candidate({a, b}, 0.1), 0u);
  EXPECT_EQ(select_candidate({b, a}, 0.1), 1u);
}

TEST(Selection, AlphaOneIsLengthNormalizedArgmax) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScoredCandidate> cands;
    std::size_t best = 0;
    for (int i = 0; i < 6; ++i) {
      const int len = 1 + trial % 7 + i;
      cands.push_back({std::vector<int>(static_cast<std::size_t>(len), 7), u(rng) * len, len, u(rng), true});
      if (cands.back().normalized_lm() > cands[best].normalized_lm()) best = cands.size() - 1;
    }
    EXPECT_EQ(select_candidate(cands, 1.0), best);
  }
}

TEST(Selection, TiesKeepFirstIndex) {
  ScoredCandidate a{{1}, -1.0, 1, -1.0, true};
  EXPECT_EQ(select_candidate({a, a, a}, 0.1), 0u);
  EXPECT_THROW(select_candidate({}, 0.1), InvalidArgument);
}

std::vector<int> greedy(const Transmitter<double>& m, const EncodedContext& ctx, int max_steps) {
  const auto prompt = decoding_prompt(m, ctx, max_steps);
  std::vector<int> out;
  for (int s = 0; s < max_steps; ++s) {
    auto lp = m.next_token_log_probs(extend(prompt, out));
    if (s == 0) lp[kEos] = -std::numeric_limits<double>::infinity();
    out.push_back(static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin()));
    if (out.back() == kEos) break;
  }
  return out;
}

TEST(BeamSearch, BeamOneIsGreedy) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto m = tiny_transmitter(16, seed);
    const EncodedContext ctx{{10, 11}, {{12}}};
    DecodeParams p;
    p.beam_size = 1;
    p.max_steps = 8;
    const auto r = decode_beam(m, ctx, p);
    ASSERT_EQ(r.candidates.size(), 1u);
    EXPECT_EQ(r.best().tokens, greedy(m, ctx, 8));
  }
}

TEST(BeamSearch, CandidatesCarryConsistentScores) {
  auto m = tiny_transmitter(16, 5);
  const EncodedContext ctx{{10, 11}, {{12}}};
  DecodeParams p;
  p.beam_size = 3;
  p.max_steps = 6;
  const auto r = decode_beam(m, ctx, p);
  ASSERT_FALSE(r.candidates.empty());
  const auto prompt = decoding_prompt(m, ctx, p.max_steps);
  for (const auto& c : r.candidates) {
    EXPECT_LE(c.length, p.max_steps);
    EXPECT_EQ(c.length, static_cast<int>(c.tokens.size()));
    EXPECT_EQ(c.finished, c.tokens.back() == kEos);
    const auto again = score_response(m, prompt, c.tokens);
    EXPECT_NEAR(again.lm_logprob, c.lm_logprob, 1e-9);
    EXPECT_NEAR(again.nup_logprob, c.nup_logprob, 1e-9);
  }
  EXPECT_EQ(r.selected, select_candidate(r.candidates, p.alpha));
  EXPECT_NE(r.candidates.front().tokens.front(), kEos);
}

TEST(Sampling, DrawTokenMatchesDistribution) {
  const std::vector<double> lp = {std::log(0.5), std::log(0.3), std::log(0.2)};
  std::mt19937_64 rng(17);
  const int n = 10000;
  std::array<int, 3> counts{};
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(draw_token(std::span<const double>(lp), rng))];
  for (std::size_t k = 0; k < 3; ++k) {
    const double p = std::exp(lp[k]);
    const double sigma = std::sqrt(p * (1 - p) / n);
    EXPECT_LE(std::abs(counts[k] / static_cast<double>(n) - p), 3 * sigma) << k;
  }
}

TEST(Sampling, ReproducibleAndConsistentWithForward) {
  auto m = tiny_transmitter(16, 6);
  const EncodedContext ctx{{10, 11}, {{12}}};
  DecodeParams p;
  p.mode = DecodeMode::kMultinomial;
  p.max_steps = 10;
  std::mt19937_64 r1(5), r2(5);
  const auto s1 = sample_multinomial(m, ctx, p, r1);
  const auto s2 = sample_multinomial(m, ctx, p, r2);
  EXPECT_EQ(s1.tokens, s2.tokens);
  EXPECT_LE(s1.tokens.size(), 10u);
  EXPECT_EQ(s1.tokens.size(), s1.log_probs.size());
  EXPECT_EQ(s1.terminated, s1.tokens.back() == kEos);
  const auto lps = m.token_log_probs(extend(decoding_prompt(m, ctx, p.max_steps), s1.tokens));
  ASSERT_EQ(lps.size(), s1.log_probs.size());
  for (std::size_t i = 0; i < lps.size(); ++i) EXPECT_NEAR(lps[i], s1.log_probs[i], 1e-6);
  p.mode = DecodeMode::kBeamRank;
  EXPECT_THROW(sample_multinomial(m, ctx, p, r1), InvalidArgument);
}

TEST(Sampling, OneHotDistributionsReproduceGreedy) {
  auto m = tiny_transmitter(16, 7);
  // A huge final gain makes every next-token distribution one-hot.
  for (auto* p : m.parameters()) {
    if (p->name == "ln_f.gain") p->value.setConstant(1e4);
  }
  const EncodedContext ctx{{10, 11}, {{12}}};
  DecodeParams p;
  p.mode = DecodeMode::kMultinomial;
  p.max_steps = 8;
  p.min_tokens = 0;
  std::mt19937_64 rng(1);
  const auto s = sample_multinomial(m, ctx, p, rng);
  const auto prompt = decoding_prompt(m, ctx, p.max_steps);
  std::vector<int> g;
  for (int step = 0; step < p.max_steps; ++step) {
    const auto lp = m.next_token_log_probs(extend(prompt, g));
    g.push_back(static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin()));
    if (g.back() == kEos) break;
  }
  EXPECT_EQ(s.tokens, g);
}

TEST(Checkpoint, TransmitterRoundTrip) {
  const auto episodes = testing::small_corpus(4, 2, 1);
  const Vocab vocab = corpus::build_vocab(episodes, 1);
  Transmitter<float> m(testing::tiny_config(vocab.size()), 3);
  const auto path = (std::filesystem::temp_directory_path() / "p2bot_test_transmitter.ckpt").string();
  save_transmitter(m, vocab, path);
  auto [loaded, lvocab] = load_transmitter<float>(path, &vocab);
  EXPECT_EQ(lvocab.tokens(), vocab.tokens());
  const auto layout = build_input(EncodedContext{{10, 11}, {{12}}}, std::vector<int>{13, 14}, m.layout_options());
  EXPECT_EQ(m.token_log_probs(layout), loaded.token_log_probs(layout));
  EXPECT_EQ(m.classifier_logit(layout), loaded.classifier_logit(layout));
  EXPECT_EQ(nn::parameter_fingerprint(m), nn::parameter_fingerprint(loaded));

  const Vocab other({"zzz"}, 1);
  EXPECT_THROW(load_transmitter<float>(path, &other), FormatError);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() - 40);
  EXPECT_THROW(load_transmitter<float>(path), FormatError);
  std::filesystem::remove(path);
}

class OverfitTransmitter : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    episodes_ = new std::vector<corpus::DialogueEpisode>(corpus::generate_synthetic(2, 2, 9));
    SupervisedConfig c;
    c.model = testing::tiny_config(0);
    c.model.model_dim = 32;
    c.model.num_heads = 4;
    c.optimizer.learning_rate = 3e-3;
    c.epochs = 60;
    c.batch_size = 4;
    c.seed = 2;
    run_ = new SupervisedRun<float>(train_supervised<float>(*episodes_, c));
  }
  static void TearDownTestSuite() {
    delete run_;
    delete episodes_;
  }
  static std::vector<corpus::DialogueEpisode>* episodes_;
  static SupervisedRun<float>* run_;
};

std::vector<corpus::DialogueEpisode>* OverfitTransmitter::episodes_ = nullptr;
SupervisedRun<float>* OverfitTransmitter::run_ = nullptr;

TEST_F(OverfitTransmitter, LossDecreasesEarly) {
  const auto& log = run_->log;
  ASSERT_GE(log.size(), 3u);
  EXPECT_GE(log[0].loss, log[1].loss);
  EXPECT_GE(log[1].loss, log[2].loss);
  EXPECT_LT(log.back().mle, 0.2);
}

TEST_F(OverfitTransmitter, GoldOutscoresDistractorUnderClassifier) {
  const auto& m = run_->model;
  const auto instances = corpus::make_instances(*episodes_, 77);
  int wins = 0;
  for (const auto& inst : instances) {
    const auto enc = encode_instance(inst, run_->vocab, m.layout_options());
    wins += m.nup_logprob(enc.gold) > m.nup_logprob(enc.distractor) ? 1 : 0;
  }
  EXPECT_EQ(wins, static_cast<int>(instances.size()));
}

TEST_F(OverfitTransmitter, ReloadReproducesEvalLoss) {
  const auto path = (std::filesystem::temp_directory_path() / "p2bot_test_overfit.ckpt").string();
  save_transmitter(run_->model, run_->vocab, path);
  auto [loaded, vocab] = load_transmitter<float>(path, &run_->vocab);
  const auto inst = corpus::make_instances(*episodes_, 1).front();
  const auto enc = encode_instance(inst, vocab, loaded.layout_options());
  nn::Graph<float> g1(false), g2(false);
  EXPECT_EQ(run_->model.mle_loss(g1, enc.gold)->scalar(), loaded.mle_loss(g2, enc.gold)->scalar());
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace p2bot::transmitter
