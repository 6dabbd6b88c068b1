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

// Corpus-level evaluation of a transmitter and persona probing of a receiver.

#pragma once

#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "p2bot/corpus/episode.hpp"
#include "p2bot/corpus/probe.hpp"
#include "p2bot/metrics/metrics.hpp"
#include "p2bot/receiver/receiver.hpp"
#include "p2bot/transmitter/decode.hpp"
#include "p2bot/transmitter/model.hpp"

namespace p2bot::metrics {

enum class RankMode { kCombined, kClassifier };

struct EvalOptions {
  transmitter::DecodeParams decode;
  RankMode rank = RankMode::kCombined;
  corpus::Speaker responder = corpus::Speaker::kB;
  bool generate = true;
  bool keep_rows = false;
};

struct EvalRow {
  std::size_t episode = 0;
  std::size_t turn = 0;
  std::string gold;
  std::string hypothesis;
  double nll = 0;
  std::size_t tokens = 0;
  double f1 = 0;
  double bleu4 = 0;
  int hit = -1;  // -1 when the turn has no candidates
};

struct EvalReport {
  std::optional<double> hits_at_1;
  double ppl = 0;
  double f1 = 0;
  double bleu4 = 0;
  std::size_t responses = 0;
  std::size_t tokens = 0;
  std::size_t ranked = 0;
  std::vector<std::string> warnings;
  std::vector<EvalRow> rows;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"ppl", ppl},       {"f1", f1},         {"bleu4", bleu4},
                        {"responses", responses}, {"tokens", tokens}, {"ranked", ranked},
                        {"warnings", warnings}};
    j["hits_at_1"] = hits_at_1 ? nlohmann::json(*hits_at_1) : nlohmann::json(nullptr);
    return j;
  }
};

inline nlohmann::json row_to_json(const EvalRow& r) {
  return {{"episode", r.episode}, {"turn", r.turn}, {"gold", r.gold},   {"hypothesis", r.hypothesis},
          {"nll", r.nll},         {"tokens", r.tokens}, {"f1", r.f1}, {"bleu4", r.bleu4},
          {"hit", r.hit}};
}

// Ranking score of one candidate response under the chosen mode.
template <typename T>
double candidate_score(const transmitter::Transmitter<T>& model, const transmitter::TokenLayout& prompt,
                       std::vector<int> tokens, RankMode mode, double alpha) {
  tokens.push_back(corpus::Vocab::kEos);
  auto c = transmitter::score_response(model, prompt, std::move(tokens));
  return mode == RankMode::kCombined ? c.combined(alpha) : c.nup_logprob;
}

template <typename T>
EvalReport evaluate_transmitter(const transmitter::Transmitter<T>& model, const corpus::Vocab& vocab,
                                const std::vector<corpus::DialogueEpisode>& episodes, const EvalOptions& options = {}) {
  EvalReport report;
  std::vector<double> nlls;
  double f1_sum = 0;
  double bleu_sum = 0;
  std::size_t hits = 0;
  bool missing_candidates = false;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    const auto& persona = ep.persona_of(options.responder);
    if (persona.empty()) continue;
    std::size_t b_index = 0;
    for (std::size_t t = 0; t < ep.turns.size(); ++t) {
      if (ep.turns[t].speaker != options.responder) continue;
      const corpus::CandidateSet* cands = nullptr;
      if (options.responder == corpus::Speaker::kB) {
        if (b_index < ep.candidates.size()) cands = &ep.candidates[b_index];
        ++b_index;
      }
      std::vector<std::string> history;
      for (std::size_t h = 0; h < t; ++h) history.push_back(ep.turns[h].text);
      const auto ctx = transmitter::encode_context(vocab, persona.profiles, history);

      EvalRow row;
      row.episode = e;
      row.turn = t;
      row.gold = corpus::normalize(ep.turns[t].text);
      const auto gold_layout = transmitter::build_input(ctx, vocab.encode(ep.turns[t].text), model.layout_options());
      for (T lp : model.token_log_probs(gold_layout)) {
        nlls.push_back(-static_cast<double>(lp));
        row.nll -= static_cast<double>(lp);
        ++row.tokens;
      }
      if (options.generate) {
        auto decoded = transmitter::decode_beam(model, ctx, options.decode);
        row.hypothesis = vocab.decode(decoded.best().tokens);
        row.f1 = word_f1(row.hypothesis, row.gold);
        row.bleu4 = bleu4(row.hypothesis, row.gold);
        f1_sum += row.f1;
        bleu_sum += row.bleu4;
      }
      if (cands != nullptr) {
        std::vector<std::vector<int>> encoded;
        std::size_t longest = 0;
        for (const auto& r : cands->responses) {
          encoded.push_back(vocab.encode(r));
          longest = std::max(longest, encoded.back().size());
        }
        const auto prompt = transmitter::decoding_prompt(model, ctx, static_cast<int>(longest) + 1);
        std::vector<double> scores;
        for (auto& c : encoded) scores.push_back(candidate_score(model, prompt, c, options.rank, options.decode.alpha));
        row.hit = hits_at_1(scores, static_cast<std::size_t>(cands->gold_index));
        hits += static_cast<std::size_t>(row.hit);
        ++report.ranked;
      } else {
        missing_candidates = true;
      }
      ++report.responses;
      if (options.keep_rows) report.rows.push_back(std::move(row));
    }
  }
  if (report.responses == 0) throw InvalidArgument("evaluate_transmitter: no responses to evaluate");
  report.tokens = nlls.size();
  report.ppl = perplexity(nlls);
  if (options.generate) {
    report.f1 = f1_sum / static_cast<double>(report.responses);
    report.bleu4 = bleu_sum / static_cast<double>(report.responses);
  }
  if (report.ranked > 0) {
    report.hits_at_1 = static_cast<double>(hits) / static_cast<double>(report.ranked);
  }
  if (missing_candidates) {
    report.warnings.push_back(report.ranked == 0 ? "no candidate lists: hits@1 omitted"
                                                 : "some turns lack candidate lists: hits@1 covers ranked turns only");
  }
  return report;
}

struct ProbeReport {
  double hits_at_1 = 0;
  double mrr = 0;
  std::size_t items = 0;
};

// Hits@1 of an arbitrary scorer(item, candidate index) over a probe set.
template <typename Scorer>
double probe_hits_at_1(const corpus::ProbeSet& set, Scorer&& scorer) {
  if (set.items.empty()) throw InvalidArgument("probe: empty probe set");
  std::size_t hits = 0;
  for (const auto& item : set.items) {
    const std::size_t n = item.distractors.size() + 1;
    std::vector<double> scores(n);
    for (std::size_t c = 0; c < n; ++c) scores[c] = scorer(item, c);
    hits += static_cast<std::size_t>(hits_at_1(scores, item.gold_index));
  }
  return static_cast<double>(hits) / static_cast<double>(set.items.size());
}

// Personas are ranked by cumulative score c; for MRR every profile sentence
// of every candidate is ranked by its mean relevance to the utterances, and
// the true persona's sentences are the relevant items.
template <typename T>
ProbeReport probe_receiver(const receiver::Receiver<T>& model, const corpus::Vocab& vocab, const corpus::ProbeSet& set,
                           double tau) {
  if (set.items.empty()) throw InvalidArgument("probe: empty probe set");
  std::map<std::string, receiver::MatrixD> persona_cache;
  auto persona_encoding = [&](const corpus::Persona& p) -> const receiver::MatrixD& {
    auto it = persona_cache.find(p.id);
    if (it == persona_cache.end()) {
      it = persona_cache
               .emplace(p.id, model.encode_matrix(receiver::Side::kPersona, receiver::encode_sentences(vocab, p.profiles)))
               .first;
    }
    return it->second;
  };

  std::size_t hits = 0;
  std::vector<std::vector<std::string>> ranked_lists;
  std::vector<std::set<std::string>> relevant_sets;
  for (const auto& item : set.items) {
    const auto h = model.encode_matrix(receiver::Side::kImpression, receiver::encode_sentences(vocab, item.utterances));
    const auto candidates = item.candidates();
    std::vector<double> scores;
    std::vector<std::pair<double, std::string>> sentences;
    std::set<std::string> relevant;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const auto u = receiver::relevance_matrix(h, persona_encoding(candidates[c]));
      scores.push_back(receiver::cumulative_score(u, tau));
      for (nn::Index k = 0; k < u.cols(); ++k) {
        const std::string key = std::to_string(c) + ":" + std::to_string(k);
        sentences.emplace_back(u.col(k).mean(), key);
        if (c == item.gold_index) relevant.insert(key);
      }
    }
    hits += static_cast<std::size_t>(hits_at_1(scores, item.gold_index));
    std::stable_sort(sentences.begin(), sentences.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> ranked;
    for (auto& s : sentences) ranked.push_back(std::move(s.second));
    ranked_lists.push_back(std::move(ranked));
    relevant_sets.push_back(std::move(relevant));
  }
  ProbeReport report;
  report.items = set.items.size();
  report.hits_at_1 = static_cast<double>(hits) / static_cast<double>(set.items.size());
  report.mrr = mrr(ranked_lists, relevant_sets);
  return report;
}

}  // namespace p2bot::metrics
