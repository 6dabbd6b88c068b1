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

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "p2bot/corpus/episode.hpp"
#include "p2bot/error.hpp"

namespace p2bot::corpus {

struct TrainingInstance {
  Persona persona;
  std::vector<std::string> history;
  std::string gold;
  std::string distractor;
  std::size_t episode = 0;
  std::size_t turn = 0;
};

enum class ResponderSides { kBoth, kBOnly, kAOnly };

inline bool responds(Speaker who, ResponderSides sides) {
  return sides == ResponderSides::kBoth || (sides == ResponderSides::kBOnly) == (who == Speaker::kB);
}

// One instance per responding turn. A turn that carries a candidate list
// draws its distractor uniformly from the non-gold candidates; other turns
// draw from the responding-side utterances of the other episodes, rejecting
// strings equal to the gold. Turns whose speaker has no persona are skipped.
inline std::vector<TrainingInstance> make_instances(const std::vector<DialogueEpisode>& episodes,
                                                    std::uint64_t distractor_seed,
                                                    ResponderSides sides = ResponderSides::kBoth) {
  if (episodes.size() < 2) throw InvalidArgument("make_instances: no distractor pool (need >= 2 episodes)");
  std::vector<std::pair<std::size_t, const std::string*>> pool;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    for (const auto& t : episodes[i].turns) {
      if (responds(t.speaker, sides)) pool.emplace_back(i, &t.text);
    }
  }
  if (pool.empty()) throw InvalidArgument("make_instances: no distractor pool (no responding turns)");
  std::mt19937_64 rng(distractor_seed);
  std::uniform_int_distribution<std::size_t> draw(0, pool.size() - 1);

  std::vector<TrainingInstance> out;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    std::size_t b_index = 0;
    for (std::size_t t = 0; t < ep.turns.size(); ++t) {
      const Speaker who = ep.turns[t].speaker;
      const CandidateSet* cands = nullptr;
      if (who == Speaker::kB) {
        if (b_index < ep.candidates.size()) cands = &ep.candidates[b_index];
        ++b_index;
      }
      if (!responds(who, sides)) continue;
      const Persona& persona = ep.persona_of(who);
      if (persona.empty()) continue;
      TrainingInstance inst;
      inst.persona = persona;
      for (std::size_t h = 0; h < t; ++h) inst.history.push_back(ep.turns[h].text);
      inst.gold = ep.turns[t].text;
      inst.episode = e;
      inst.turn = t;
      if (cands != nullptr) {
        std::vector<const std::string*> others;
        for (const auto& r : cands->responses) {
          if (r != inst.gold) others.push_back(&r);
        }
        if (!others.empty()) {
          inst.distractor = *others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
          out.push_back(std::move(inst));
          continue;
        }
      }
      for (int attempt = 0;; ++attempt) {
        if (attempt > 10000) throw InvalidArgument("make_instances: no distractor differs from the gold response");
        const auto& [src, text] = pool[draw(rng)];
        if (src != e && *text != inst.gold) {
          inst.distractor = *text;
          break;
        }
      }
      out.push_back(std::move(inst));
    }
  }
  return out;
}

}  // namespace p2bot::corpus
