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

// Corpus readers and the JSONL writer.
//
// ParlAI text format: every line starts with a 1-based index that resets to 1
// at each episode boundary. Persona lines read "<i> your persona: <text>"
// (the responder, speaker B) or "<i> partner's persona: <text>" (speaker A).
// Exchange lines read "<i> <A utterance>\t<B response>[\t<reward>\t<c1|c2|...>]".
//
// JSONL format: one object per episode with keys persona_a, persona_b (lists
// of strings), turns (list of {speaker, text}) and an optional candidates
// list of {responses, gold} objects, one per B turn.

#pragma once

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "p2bot/corpus/episode.hpp"
#include "p2bot/error.hpp"

namespace p2bot::corpus {

enum class CorpusFormat { kParlaiText, kJsonl };

inline CorpusFormat parse_format(std::string_view name) {
  if (name == "parlai_text") return CorpusFormat::kParlaiText;
  if (name == "jsonl") return CorpusFormat::kJsonl;
  throw InvalidArgument("unknown corpus format '" + std::string(name) + "'");
}

namespace detail {

[[noreturn]] inline void fail(std::size_t line, const std::string& rule) {
  throw FormatError("line " + std::to_string(line) + ": " + rule);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t at = s.find(sep, start);
    out.emplace_back(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return out;
}

inline void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

inline void finish_episode(DialogueEpisode& e, std::vector<std::string>& a, std::vector<std::string>& b,
                           std::vector<DialogueEpisode>& out, std::size_t line) {
  e.persona_a = a.empty() ? Persona{} : make_persona(a);
  if (b.empty()) fail(line, "episode has no 'your persona:' lines");
  e.persona_b = make_persona(b);
  try {
    validate_episode(e);
  } catch (const FormatError& err) {
    fail(line, err.what());
  }
  out.push_back(std::move(e));
  e = DialogueEpisode{};
  a.clear();
  b.clear();
}

inline std::vector<DialogueEpisode> parse_parlai(std::istream& in) {
  std::vector<DialogueEpisode> out;
  DialogueEpisode cur;
  std::vector<std::string> persona_a;
  std::vector<std::string> persona_b;
  bool open = false;
  int last_index = 0;
  std::size_t start_line = 0;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    strip_cr(raw);
    if (raw.find_first_not_of(" \t") == std::string::npos) continue;
    int idx = 0;
    auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), idx);
    if (ec != std::errc() || ptr == raw.data() + raw.size() || *ptr != ' ' || idx < 1) {
      fail(lineno, "line must start with a positive index followed by a space");
    }
    std::string_view body(ptr + 1, static_cast<std::size_t>(raw.data() + raw.size() - (ptr + 1)));
    if (idx == 1) {
      if (open) finish_episode(cur, persona_a, persona_b, out, start_line);
      open = true;
      start_line = lineno;
    } else if (!open || idx != last_index + 1) {
      fail(lineno, "index must increase by one within an episode");
    }
    last_index = idx;

    constexpr std::string_view kSelf = "your persona:";
    constexpr std::string_view kPartner = "partner's persona:";
    if (body.starts_with(kSelf) || body.starts_with(kPartner)) {
      if (!cur.turns.empty()) fail(lineno, "persona lines must precede the dialogue");
      const bool self = body.starts_with(kSelf);
      std::string text(body.substr(self ? kSelf.size() : kPartner.size()));
      text.erase(0, text.find_first_not_of(' '));
      if (tokenize(text).empty()) fail(lineno, "empty persona sentence");
      (self ? persona_b : persona_a).push_back(std::move(text));
      continue;
    }

    auto fields = split(body, '\t');
    if (fields.size() < 2) fail(lineno, "exchange line needs '<utterance>\\t<response>'");
    const std::string& utterance = fields[0];
    const std::string& response = fields[1];
    if (tokenize(utterance).empty()) fail(lineno, "turn order: speaker B cannot speak before speaker A");
    if (tokenize(response).empty()) fail(lineno, "empty response");
    cur.turns.push_back({Speaker::kA, utterance});
    cur.turns.push_back({Speaker::kB, response});
    if (fields.size() >= 4 && !fields[3].empty()) {
      CandidateSet c;
      c.responses = split(fields[3], '|');
      auto hits = std::count(c.responses.begin(), c.responses.end(), response);
      if (hits != 1) fail(lineno, "candidates must contain the gold response exactly once");
      c.gold_index = static_cast<int>(std::find(c.responses.begin(), c.responses.end(), response) -
                                      c.responses.begin());
      if (cur.candidates.size() + 1 != cur.num_b_turns()) {
        fail(lineno, "candidates must be given for every exchange of an episode or for none");
      }
      cur.candidates.push_back(std::move(c));
    } else if (!cur.candidates.empty()) {
      fail(lineno, "candidates must be given for every exchange of an episode or for none");
    }
  }
  if (open) finish_episode(cur, persona_a, persona_b, out, start_line);
  return out;
}

inline Speaker parse_speaker(const nlohmann::json& j, std::size_t lineno) {
  if (!j.is_string()) fail(lineno, "speaker must be \"A\" or \"B\"");
  const auto s = j.get<std::string>();
  if (s == "A") return Speaker::kA;
  if (s == "B") return Speaker::kB;
  fail(lineno, "speaker must be \"A\" or \"B\"");
}

inline std::vector<std::string> string_list(const nlohmann::json& j, std::size_t lineno, const char* key) {
  if (!j.contains(key)) return {};
  const auto& v = j.at(key);
  if (!v.is_array()) fail(lineno, std::string(key) + " must be a list of strings");
  std::vector<std::string> out;
  for (const auto& s : v) {
    if (!s.is_string()) fail(lineno, std::string(key) + " must be a list of strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

inline DialogueEpisode episode_from_json(const nlohmann::json& j, std::size_t lineno) {
  if (!j.is_object()) fail(lineno, "record must be a JSON object");
  DialogueEpisode e;
  auto a = string_list(j, lineno, "persona_a");
  auto b = string_list(j, lineno, "persona_b");
  if (!a.empty()) e.persona_a = make_persona(std::move(a));
  if (b.empty()) fail(lineno, "persona_b must list at least one profile");
  e.persona_b = make_persona(std::move(b));
  if (!j.contains("turns") || !j.at("turns").is_array()) fail(lineno, "turns must be a list");
  for (const auto& t : j.at("turns")) {
    if (!t.is_object() || !t.contains("text") || !t.at("text").is_string() || !t.contains("speaker")) {
      fail(lineno, "turn must be {speaker, text}");
    }
    e.turns.push_back({parse_speaker(t.at("speaker"), lineno), t.at("text").get<std::string>()});
  }
  if (j.contains("candidates") && !j.at("candidates").is_null()) {
    for (const auto& c : j.at("candidates")) {
      if (!c.is_object() || !c.contains("gold") || !c.at("gold").is_number_integer()) {
        fail(lineno, "candidate set must be {responses, gold}");
      }
      e.candidates.push_back({string_list(c, lineno, "responses"), c.at("gold").get<int>()});
    }
  }
  try {
    validate_episode(e);
  } catch (const FormatError& err) {
    fail(lineno, err.what());
  }
  return e;
}

inline std::vector<DialogueEpisode> parse_jsonl(std::istream& in) {
  std::vector<DialogueEpisode> out;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    strip_cr(raw);
    if (raw.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error& err) {
      fail(lineno, std::string("invalid JSON: ") + err.what());
    }
    out.push_back(episode_from_json(j, lineno));
  }
  return out;
}

}  // namespace detail

inline std::vector<DialogueEpisode> parse_corpus(std::istream& in, CorpusFormat format) {
  return format == CorpusFormat::kParlaiText ? detail::parse_parlai(in) : detail::parse_jsonl(in);
}

inline std::vector<DialogueEpisode> parse_corpus(const std::string& text, CorpusFormat format) {
  std::istringstream in(text);
  return parse_corpus(in, format);
}

inline nlohmann::json episode_to_json(const DialogueEpisode& e) {
  nlohmann::json j;
  j["persona_a"] = e.persona_a.profiles;
  j["persona_b"] = e.persona_b.profiles;
  j["turns"] = nlohmann::json::array();
  for (const auto& t : e.turns) {
    j["turns"].push_back({{"speaker", std::string(1, speaker_char(t.speaker))}, {"text", t.text}});
  }
  if (!e.candidates.empty()) {
    j["candidates"] = nlohmann::json::array();
    for (const auto& c : e.candidates) j["candidates"].push_back({{"gold", c.gold_index}, {"responses", c.responses}});
  }
  return j;
}

inline std::string serialize_episode(const DialogueEpisode& e) { return episode_to_json(e).dump(); }

inline void write_jsonl(std::ostream& out, const std::vector<DialogueEpisode>& episodes) {
  for (const auto& e : episodes) out << serialize_episode(e) << '\n';
}

inline std::string to_jsonl(const std::vector<DialogueEpisode>& episodes) {
  std::ostringstream out;
  write_jsonl(out, episodes);
  return out.str();
}

}  // namespace p2bot::corpus
