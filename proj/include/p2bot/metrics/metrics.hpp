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

// Automatic evaluation metrics.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "p2bot/corpus/text.hpp"
#include "p2bot/error.hpp"

namespace p2bot::metrics {

// 1 when the gold candidate ranks first; among equal scores the earliest
// index ranks first.
inline int hits_at_1(std::span<const double> scores, std::size_t gold_index) {
  if (gold_index >= scores.size()) throw InvalidArgument("hits_at_1: gold index out of range");
  const double g = scores[gold_index];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i < gold_index && scores[i] >= g) return 0;
    if (i > gold_index && scores[i] > g) return 0;
  }
  return 1;
}

// exp(mean negative log-likelihood), natural log.
inline double perplexity(std::span<const double> token_nlls) {
  if (token_nlls.empty()) throw InvalidArgument("perplexity: no tokens");
  double total = 0;
  for (double v : token_nlls) {
    if (!std::isfinite(v)) throw InvalidArgument("perplexity: non-finite NLL");
    total += v;
  }
  return std::exp(total / static_cast<double>(token_nlls.size()));
}

// Normalized tokens without punctuation, as used for F1.
inline std::vector<std::string> f1_tokens(const std::string& text) {
  std::vector<std::string> out;
  for (auto& t : corpus::tokenize(text)) {
    if (!corpus::is_punctuation_token(t)) out.push_back(std::move(t));
  }
  return out;
}

inline double word_f1(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  std::map<std::string, int> ref_counts;
  for (const auto& t : ref) ++ref_counts[t];
  int overlap = 0;
  for (const auto& t : hyp) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(hyp.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
  return 2 * p * r / (p + r);
}

inline double word_f1(const std::string& hyp, const std::string& ref) { return word_f1(f1_tokens(hyp), f1_tokens(ref)); }

// Cumulative 4-gram BLEU: geometric mean of clipped 1..4-gram precisions times
// the brevity penalty. Orders 2..4 with zero matches use add-one smoothing;
// zero unigram matches give 0.
inline double bleu4(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  double log_sum = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::vector<std::string>, int> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[{ref.begin() + i, ref.begin() + i + n}];
    int matches = 0;
    int total = 0;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
      ++total;
      auto it = ref_counts.find({hyp.begin() + i, hyp.begin() + i + n});
      if (it != ref_counts.end() && it->second > 0) {
        --it->second;
        ++matches;
      }
    }
    double p;
    if (matches > 0) {
      p = static_cast<double>(matches) / total;
    } else if (n == 1) {
      return 0.0;
    } else {
      p = 1.0 / (total + 1);
    }
    log_sum += std::log(p) / 4.0;
  }
  const double c = static_cast<double>(hyp.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum);
}

inline double bleu4(const std::string& hyp, const std::string& ref) {
  return bleu4(corpus::tokenize(hyp), corpus::tokenize(ref));
}

// Reciprocal rank averaged over the relevant items of each list, then over
// lists. Relevant items absent from the ranking contribute 0.
inline double mrr(const std::vector<std::vector<std::string>>& ranked_lists,
                  const std::vector<std::set<std::string>>& relevant_sets) {
  if (ranked_lists.size() != relevant_sets.size()) throw InvalidArgument("mrr: list count mismatch");
  if (ranked_lists.empty()) throw InvalidArgument("mrr: no lists");
  double total = 0;
  for (std::size_t i = 0; i < ranked_lists.size(); ++i) {
    const auto& rel = relevant_sets[i];
    if (rel.empty()) throw InvalidArgument("mrr: empty relevant set");
    double sum = 0;
    for (std::size_t r = 0; r < ranked_lists[i].size(); ++r) {
      if (rel.contains(ranked_lists[i][r])) sum += 1.0 / static_cast<double>(r + 1);
    }
    total += sum / static_cast<double>(rel.size());
  }
  return total / static_cast<double>(ranked_lists.size());
}

}  // namespace p2bot::metrics
