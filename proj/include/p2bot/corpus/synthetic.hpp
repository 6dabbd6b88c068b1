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

// Deterministic templated corpora whose utterances reveal persona slots.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "p2bot/corpus/episode.hpp"
#include "p2bot/error.hpp"

namespace p2bot::corpus {

struct SyntheticOptions {
  // Dialogues to generate; 0 means one per persona.
  int num_dialogues = 0;
  // Candidate list size per B turn (gold included); 0 disables candidates.
  int num_candidates = 20;
};

namespace synthetic {

struct Slot {
  std::string_view statement;  // profile / answer prefix
  std::string_view question;   // A's follow-up question
  std::vector<std::string_view> values;
};

inline const std::array<Slot, 5>& slots() {
  static const std::array<Slot, 5> kSlots = {{
      {"i like", "what do you like ?",
       {"hiking", "painting", "chess", "swimming", "cooking", "dancing", "fishing", "gardening", "reading",
        "running", "singing", "skiing", "surfing", "knitting", "cycling", "camping"}},
      {"my job is", "what is your job ?",
       {"teacher", "nurse", "pilot", "chef", "farmer", "lawyer", "doctor", "baker", "plumber", "writer",
        "dentist", "banker", "artist", "soldier", "driver", "engineer"}},
      {"i live in", "where do you live ?",
       {"paris", "tokyo", "texas", "canada", "london", "berlin", "ohio", "sydney", "boston", "miami", "rome",
        "denver", "dublin", "seattle", "chicago", "madrid"}},
      {"i have a", "do you have a pet ?",
       {"dog", "cat", "parrot", "hamster", "rabbit", "turtle", "horse", "snake", "goldfish", "lizard", "pony",
        "ferret"}},
      {"my favorite food is", "what food do you love ?",
       {"pizza", "sushi", "tacos", "pasta", "burgers", "curry", "salad", "steak", "noodles", "soup", "pancakes",
        "waffles", "cheese", "chicken", "rice", "bread"}},
  }};
  return kSlots;
}

inline std::size_t uniform(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace synthetic

// `turns_per_dialogue` counts exchanges, so each episode holds twice as many
// utterances. Same arguments give byte-identical output.
inline std::vector<DialogueEpisode> generate_synthetic(int num_personas, int turns_per_dialogue,
                                                       std::uint64_t seed, SyntheticOptions options = {}) {
  using synthetic::uniform;
  if (num_personas < 2) throw InvalidArgument("generate_synthetic: num_personas must be >= 2");
  if (turns_per_dialogue < 1) throw InvalidArgument("generate_synthetic: turns_per_dialogue must be >= 1");
  const auto& slots = synthetic::slots();
  std::mt19937_64 rng(seed);

  // Persona = one value per slot; distinct value tuples.
  std::vector<std::array<std::size_t, 5>> choices;
  std::set<std::array<std::size_t, 5>> seen;
  std::vector<Persona> personas;
  while (static_cast<int>(personas.size()) < num_personas) {
    std::array<std::size_t, 5> pick{};
    for (std::size_t s = 0; s < slots.size(); ++s) pick[s] = uniform(rng, slots[s].values.size());
    if (!seen.insert(pick).second) continue;
    std::vector<std::size_t> order = {0, 1, 2, 3, 4};
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::string> profiles;
    for (std::size_t s : order) {
      profiles.push_back(std::string(slots[s].statement) + " " + std::string(slots[s].values[pick[s]]) + " .");
    }
    choices.push_back(pick);
    personas.push_back(make_persona(std::move(profiles)));
  }

  static constexpr std::array<std::string_view, 3> kOpeners = {"hi !", "hello !", "hey there !"};
  static constexpr std::array<std::string_view, 3> kAcks = {"", "cool .", "nice ."};

  const int num_dialogues = options.num_dialogues > 0 ? options.num_dialogues : num_personas;
  std::vector<DialogueEpisode> episodes;
  std::vector<std::size_t> partner_of;
  for (int d = 0; d < num_dialogues; ++d) {
    const std::size_t a = static_cast<std::size_t>(d) % personas.size();
    std::size_t b = uniform(rng, personas.size() - 1);
    if (b >= a) ++b;
    DialogueEpisode e;
    e.persona_a = personas[a];
    e.persona_b = personas[b];
    std::vector<std::size_t> order = {0, 1, 2, 3, 4};
    std::shuffle(order.begin(), order.end(), rng);
    for (int t = 0; t < turns_per_dialogue; ++t) {
      const std::size_t s = order[static_cast<std::size_t>(t) % order.size()];
      const auto& slot = slots[s];
      std::string a_text;
      if (t == 0) a_text = std::string(kOpeners[uniform(rng, kOpeners.size())]) + " ";
      a_text += std::string(slot.statement) + " " + std::string(slot.values[choices[a][s]]) + " . " +
                std::string(slot.question);
      std::string b_text(kAcks[uniform(rng, kAcks.size())]);
      if (!b_text.empty()) b_text += " ";
      b_text += std::string(slot.statement) + " " + std::string(slot.values[choices[b][s]]) + " .";
      e.turns.push_back({Speaker::kA, std::move(a_text)});
      e.turns.push_back({Speaker::kB, std::move(b_text)});
    }
    episodes.push_back(std::move(e));
  }

  if (options.num_candidates > 1) {
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      std::vector<std::string> pool;
      for (std::size_t j = 0; j < episodes.size(); ++j) {
        if (j == i) continue;
        for (const auto& t : episodes[j].turns) {
          if (t.speaker == Speaker::kB) pool.push_back(t.text);
        }
      }
      std::sort(pool.begin(), pool.end());
      pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
      for (const auto& t : episodes[i].turns) {
        if (t.speaker != Speaker::kB) continue;
        std::vector<std::string> others;
        for (const auto& p : pool) {
          if (p != t.text) others.push_back(p);
        }
        std::shuffle(others.begin(), others.end(), rng);
        others.resize(std::min<std::size_t>(others.size(), static_cast<std::size_t>(options.num_candidates - 1)));
        CandidateSet c;
        c.gold_index = static_cast<int>(uniform(rng, others.size() + 1));
        c.responses = std::move(others);
        c.responses.insert(c.responses.begin() + c.gold_index, t.text);
        episodes[i].candidates.push_back(std::move(c));
      }
    }
  }
  return episodes;
}

}  // namespace p2bot::corpus
