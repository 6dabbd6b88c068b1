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
#include <random>
#include <string>
#include <vector>

#include "p2bot/corpus/episode.hpp"
#include "p2bot/error.hpp"

namespace p2bot::corpus {

// One probing instance: what a speaker said, and the persona it belongs to
// hidden among distractors.
struct ProbeItem {
  std::vector<std::string> utterances;
  Persona true_persona;
  std::vector<Persona> distractors;
  // Position of the true persona within candidates().
  std::size_t gold_index = 0;

  std::vector<Persona> candidates() const {
    std::vector<Persona> out = distractors;
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(gold_index), true_persona);
    return out;
  }
};

struct ProbeSet {
  std::vector<ProbeItem> items;
};

// The speaker whose persona is probed: A when known, otherwise B.
inline Speaker probed_speaker(const DialogueEpisode& e) { return e.persona_a.empty() ? Speaker::kB : Speaker::kA; }

inline ProbeSet build_probe_set(const std::vector<DialogueEpisode>& episodes, std::size_t num_distractors,
                                std::uint64_t seed) {
  const auto personas = distinct_personas(episodes);
  if (personas.size() < num_distractors + 1) {
    throw InvalidArgument("build_probe_set: requires at least " + std::to_string(num_distractors + 1) +
                          " distinct personas, found " + std::to_string(personas.size()));
  }
  std::mt19937_64 rng(seed);
  ProbeSet set;
  for (const auto& e : episodes) {
    const Speaker who = probed_speaker(e);
    ProbeItem item;
    item.utterances = e.utterances_of(who);
    if (item.utterances.empty()) continue;
    item.true_persona = e.persona_of(who);
    std::vector<const Persona*> pool;
    for (const auto& p : personas) {
      if (p.id != item.true_persona.id) pool.push_back(&p);
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t i = 0; i < num_distractors; ++i) item.distractors.push_back(*pool[i]);
    item.gold_index = std::uniform_int_distribution<std::size_t>(0, num_distractors)(rng);
    set.items.push_back(std::move(item));
  }
  return set;
}

}  // namespace p2bot::corpus
