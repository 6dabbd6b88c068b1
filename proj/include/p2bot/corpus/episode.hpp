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
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "p2bot/corpus/text.hpp"
#include "p2bot/corpus/vocab.hpp"
#include "p2bot/error.hpp"

namespace p2bot::corpus {

enum class Speaker { kA, kB };

inline char speaker_char(Speaker s) { return s == Speaker::kA ? 'A' : 'B'; }

struct Persona {
  std::string id;
  std::vector<std::string> profiles;

  bool empty() const { return profiles.empty(); }
  friend bool operator==(const Persona&, const Persona&) = default;
};

// Stable identifier derived from the normalized profile text.
inline std::string persona_id(const std::vector<std::string>& profiles) {
  std::uint64_t h = fnv1a("persona");
  for (const auto& p : profiles) h = fnv1a(normalize(p) + "\n", h);
  char buf[20];
  std::snprintf(buf, sizeof(buf), "p%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline Persona make_persona(std::vector<std::string> profiles) {
  Persona p;
  p.id = persona_id(profiles);
  p.profiles = std::move(profiles);
  return p;
}

inline void validate_persona(const Persona& p) {
  if (p.profiles.empty()) throw FormatError("persona has no profile sentences");
  for (const auto& s : p.profiles) {
    if (tokenize(s).empty()) throw FormatError("persona has an empty profile sentence");
  }
}

struct Turn {
  Speaker speaker;
  std::string text;
  friend bool operator==(const Turn&, const Turn&) = default;
};

// Ranked-retrieval candidates for one responding turn; exactly one entry is gold.
struct CandidateSet {
  std::vector<std::string> responses;
  int gold_index = 0;
  friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

// One conversation. persona_a may be empty when the source omits the
// partner persona (ParlAI "self" files); persona_b is always present.
// `candidates` is either empty or holds one set per B turn.
struct DialogueEpisode {
  Persona persona_a;
  Persona persona_b;
  std::vector<Turn> turns;
  std::vector<CandidateSet> candidates;

  const Persona& persona_of(Speaker s) const { return s == Speaker::kA ? persona_a : persona_b; }

  std::vector<std::string> utterances_of(Speaker s) const {
    std::vector<std::string> out;
    for (const auto& t : turns) {
      if (t.speaker == s) out.push_back(t.text);
    }
    return out;
  }

  std::size_t num_b_turns() const {
    return static_cast<std::size_t>(
        std::count_if(turns.begin(), turns.end(), [](const Turn& t) { return t.speaker == Speaker::kB; }));
  }

  friend bool operator==(const DialogueEpisode&, const DialogueEpisode&) = default;
};

// Throws FormatError naming the violated rule.
inline void validate_episode(const DialogueEpisode& e) {
  if (!e.persona_a.empty()) validate_persona(e.persona_a);
  validate_persona(e.persona_b);
  for (std::size_t i = 0; i < e.turns.size(); ++i) {
    const Speaker expected = i % 2 == 0 ? Speaker::kA : Speaker::kB;
    if (e.turns[i].speaker != expected) {
      throw FormatError("turn order: turn " + std::to_string(i) + " must be spoken by " +
                        speaker_char(expected));
    }
  }
  if (!e.candidates.empty()) {
    if (e.candidates.size() != e.num_b_turns()) {
      throw FormatError("candidates: expected one candidate set per B turn");
    }
    std::size_t k = 0;
    for (const auto& t : e.turns) {
      if (t.speaker != Speaker::kB) continue;
      const CandidateSet& c = e.candidates[k++];
      if (c.gold_index < 0 || c.gold_index >= static_cast<int>(c.responses.size())) {
        throw FormatError("candidates: gold index out of range");
      }
      if (c.responses[static_cast<std::size_t>(c.gold_index)] != t.text ||
          std::count(c.responses.begin(), c.responses.end(), t.text) != 1) {
        throw FormatError("candidates: gold response must appear exactly once");
      }
    }
  }
}

// Distinct non-empty personas in first-seen order.
inline std::vector<Persona> distinct_personas(const std::vector<DialogueEpisode>& episodes) {
  std::vector<Persona> out;
  std::map<std::string, bool> seen;
  for (const auto& e : episodes) {
    for (const Persona* p : {&e.persona_a, &e.persona_b}) {
      if (p->empty() || seen.contains(p->id)) continue;
      seen[p->id] = true;
      out.push_back(*p);
    }
  }
  return out;
}

// Every persona sentence, utterance and candidate string of the corpus.
template <typename Fn>
void for_each_text(const std::vector<DialogueEpisode>& episodes, Fn&& fn) {
  for (const auto& e : episodes) {
    for (const auto& s : e.persona_a.profiles) fn(s);
    for (const auto& s : e.persona_b.profiles) fn(s);
    for (const auto& t : e.turns) fn(t.text);
    for (const auto& c : e.candidates) {
      for (const auto& r : c.responses) fn(r);
    }
  }
}

// Tokens with corpus frequency >= min_freq, ordered by descending frequency
// then lexicographically.
inline Vocab build_vocab(const std::vector<DialogueEpisode>& episodes, int min_freq) {
  if (min_freq < 1) throw InvalidArgument("min_freq must be >= 1");
  if (episodes.empty()) throw InvalidArgument("build_vocab: no episodes");
  std::map<std::string, int> counts;
  for_each_text(episodes, [&](const std::string& s) {
    for (auto& t : tokenize(s)) ++counts[t];
  });
  std::vector<std::pair<std::string, int>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq && !std::count(Vocab::kReserved.begin(), Vocab::kReserved.end(), tok)) {
      kept.emplace_back(tok, n);
    }
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return Vocab(tokens, min_freq);
}

}  // namespace p2bot::corpus
