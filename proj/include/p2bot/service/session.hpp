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

// Chat sessions: a bot persona, alternating human/bot history and one
// perception row (utterance x profile relevance) per utterance. Every
// mutation is appended to a per-session JSONL log from which the session can
// be rebuilt.

#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "p2bot/corpus/episode.hpp"
#include "p2bot/error.hpp"
#include "p2bot/receiver/receiver.hpp"
#include "p2bot/transmitter/decode.hpp"
#include "p2bot/transmitter/model.hpp"

namespace p2bot::service {

using nlohmann::json;
using Row = std::vector<double>;

// Shared, read-only inference state.
template <typename T>
class Engine {
 public:
  Engine(transmitter::Transmitter<T> transmitter, corpus::Vocab transmitter_vocab, receiver::Receiver<T> receiver,
         corpus::Vocab receiver_vocab, std::vector<corpus::Persona> personas = {},
         transmitter::DecodeParams decode = {})
      : transmitter_(std::move(transmitter)),
        tvocab_(std::move(transmitter_vocab)),
        receiver_(std::move(receiver)),
        rvocab_(std::move(receiver_vocab)),
        personas_(std::move(personas)),
        decode_(decode) {
    decode_.validate();
  }

  const std::vector<corpus::Persona>& personas() const { return personas_; }
  const transmitter::DecodeParams& decode_params() const { return decode_; }

  std::string reply(const corpus::Persona& bot, const std::vector<std::string>& history) const {
    auto ctx = transmitter::encode_context(tvocab_, bot.profiles, history);
    return tvocab_.decode(transmitter::decode_beam(transmitter_, ctx, decode_).best().response());
  }

  // H_n W^T / sqrt(d) for one utterance; an utterance with no tokens gets a
  // zero row.
  Row perception_row(const std::string& text, const corpus::Persona& persona) const {
    const auto tokens = rvocab_.encode(text);
    if (tokens.empty()) return Row(persona.profiles.size(), 0.0);
    const auto u = receiver::relevance_matrix(
        receiver_.encode_matrix(receiver::Side::kImpression, {tokens}),
        receiver_.encode_matrix(receiver::Side::kPersona, receiver::encode_sentences(rvocab_, persona.profiles)));
    return Row(u.data(), u.data() + u.cols());
  }

 private:
  transmitter::Transmitter<T> transmitter_;
  corpus::Vocab tvocab_;
  receiver::Receiver<T> receiver_;
  corpus::Vocab rvocab_;
  std::vector<corpus::Persona> personas_;
  transmitter::DecodeParams decode_;
};

enum class Role { kHuman, kBot };

inline std::string role_name(Role r) { return r == Role::kHuman ? "human" : "bot"; }

inline Role parse_role(const std::string& s) {
  if (s == "human") return Role::kHuman;
  if (s == "bot") return Role::kBot;
  throw FormatError("unknown role '" + s + "'");
}

struct Message {
  Role role;
  std::string text;
  friend bool operator==(const Message&, const Message&) = default;
};

struct Session {
  std::string id;
  corpus::Persona bot_persona;
  std::optional<corpus::Persona> human_persona;
  std::vector<Message> history;
  std::vector<Row> perception;        // against the bot persona
  std::vector<Row> human_perception;  // against the human persona, when given
  std::string created;

  std::vector<std::string> texts() const {
    std::vector<std::string> out;
    for (const auto& m : history) out.push_back(m.text);
    return out;
  }

  friend bool operator==(const Session&, const Session&) = default;
};

inline json persona_json(const std::optional<corpus::Persona>& p) {
  return p ? json(p->profiles) : json(nullptr);
}

inline json session_to_json(const Session& s) {
  json history = json::array();
  for (const auto& m : s.history) history.push_back({{"role", role_name(m.role)}, {"text", m.text}});
  return {{"id", s.id},
          {"bot_persona", s.bot_persona.profiles},
          {"human_persona", persona_json(s.human_persona)},
          {"history", history},
          {"created", s.created}};
}

inline json perception_to_json(const Session& s) {
  json out = {{"profiles", s.bot_persona.profiles}, {"utterances", s.texts()}, {"rows", s.perception}};
  if (s.human_persona) {
    out["human_profiles"] = s.human_persona->profiles;
    out["human_rows"] = s.human_perception;
  }
  return out;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

inline corpus::Persona persona_from_spec(const json& spec) {
  if (!spec.is_array()) throw InvalidArgument("persona must be an array of profile sentences");
  std::vector<std::string> profiles;
  for (const auto& s : spec) {
    if (!s.is_string()) throw InvalidArgument("persona entries must be strings");
    profiles.push_back(s.get<std::string>());
  }
  auto p = corpus::make_persona(std::move(profiles));
  try {
    corpus::validate_persona(p);
  } catch (const FormatError& e) {
    throw InvalidArgument(e.what());
  }
  return p;
}

struct CreateRequest {
  std::optional<corpus::Persona> bot_persona;  // random from the corpus when absent
  std::optional<corpus::Persona> human_persona;

  static CreateRequest from_json(const json& body) {
    if (!body.is_object()) throw InvalidArgument("request body must be a JSON object");
    CreateRequest r;
    if (body.contains("persona") && !body["persona"].is_null()) r.bot_persona = persona_from_spec(body["persona"]);
    if (body.contains("human_persona") && !body["human_persona"].is_null()) {
      r.human_persona = persona_from_spec(body["human_persona"]);
    }
    return r;
  }
};

struct Exchange {
  std::string reply;
  Row human_row;
  Row bot_row;
};

// Replays one session log. Perception rows are taken from the log, so the
// rebuilt session does not depend on the models.
inline Session replay_session(std::istream& in) {
  Session s;
  bool created = false;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json ev;
    try {
      ev = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("session log line " + std::to_string(n) + ": " + e.what());
    }
    const auto event = ev.at("event").get<std::string>();
    const auto& payload = ev.at("payload");
    if (event == "created") {
      s.id = ev.at("session").get<std::string>();
      s.bot_persona = corpus::make_persona(payload.at("bot_persona").get<std::vector<std::string>>());
      if (!payload.at("human_persona").is_null()) {
        s.human_persona = corpus::make_persona(payload.at("human_persona").get<std::vector<std::string>>());
      }
      s.created = payload.at("created").get<std::string>();
      created = true;
    } else if (event == "message") {
      if (!created) throw FormatError("session log line " + std::to_string(n) + ": message before creation");
      s.history.push_back({parse_role(payload.at("role").get<std::string>()), payload.at("text").get<std::string>()});
      s.perception.push_back(payload.at("perception").get<Row>());
      if (s.human_persona) s.human_perception.push_back(payload.at("human_perception").get<Row>());
    } else {
      throw FormatError("session log line " + std::to_string(n) + ": unknown event '" + event + "'");
    }
  }
  if (!created) throw FormatError("session log has no creation event");
  return s;
}

// Thread-safe session registry. Operations on one session are serialized;
// different sessions proceed concurrently against the shared engine.
template <typename T>
class SessionStore {
 public:
  // An empty log_dir disables logging.
  explicit SessionStore(std::shared_ptr<const Engine<T>> engine, std::string log_dir = {},
                        std::uint64_t seed = std::random_device{}())
      : engine_(std::move(engine)), log_dir_(std::move(log_dir)), rng_(seed) {
    if (!log_dir_.empty()) std::filesystem::create_directories(log_dir_);
  }

  Session create(const CreateRequest& req = {}) {
    Session s;
    {
      std::unique_lock lock(registry_mu_);
      if (req.bot_persona) {
        s.bot_persona = *req.bot_persona;
      } else {
        const auto& pool = engine_->personas();
        if (pool.empty()) throw InvalidArgument("no personas available: pass one explicitly or load a corpus");
        s.bot_persona = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng_)];
      }
      do {
        std::ostringstream id;
        id << std::hex << rng_();
        s.id = "s" + id.str();
      } while (sessions_.count(s.id) != 0);
      s.human_persona = req.human_persona;
      s.created = utc_timestamp();
      sessions_.emplace(s.id, std::make_shared<Entry>(s));
    }
    log(s.id, "created",
        {{"bot_persona", s.bot_persona.profiles},
         {"human_persona", persona_json(s.human_persona)},
         {"random_persona", !req.bot_persona.has_value()},
         {"created", s.created}});
    return s;
  }

  Exchange post_message(const std::string& id, const std::string& text) {
    if (corpus::tokenize(text).empty()) throw InvalidArgument("text must not be empty");
    auto entry = find(id);
    std::lock_guard lock(entry->mu);
    Session& s = entry->session;
    Exchange ex;
    ex.human_row = engine_->perception_row(text, s.bot_persona);
    append(s, {Role::kHuman, text}, ex.human_row);
    ex.reply = engine_->reply(s.bot_persona, s.texts());
    ex.bot_row = engine_->perception_row(ex.reply, s.bot_persona);
    append(s, {Role::kBot, ex.reply}, ex.bot_row);
    return ex;
  }

  Session get(const std::string& id) const {
    auto entry = find(id);
    std::lock_guard lock(entry->mu);
    return entry->session;
  }

  std::vector<std::string> ids() const {
    std::shared_lock lock(registry_mu_);
    std::vector<std::string> out;
    for (const auto& [k, v] : sessions_) out.push_back(k);
    return out;
  }

  // Loads every *.jsonl log in the log directory; returns the count.
  std::size_t restore() {
    if (log_dir_.empty()) return 0;
    std::size_t n = 0;
    for (const auto& f : std::filesystem::directory_iterator(log_dir_)) {
      if (f.path().extension() != ".jsonl") continue;
      std::ifstream in(f.path());
      Session s = replay_session(in);
      const std::string id = s.id;
      std::unique_lock lock(registry_mu_);
      sessions_[id] = std::make_shared<Entry>(std::move(s));
      ++n;
    }
    return n;
  }

  std::string log_path(const std::string& id) const { return (std::filesystem::path(log_dir_) / (id + ".jsonl")).string(); }

 private:
  struct Entry {
    explicit Entry(Session s) : session(std::move(s)) {}
    mutable std::mutex mu;
    Session session;
  };

  std::shared_ptr<Entry> find(const std::string& id) const {
    std::shared_lock lock(registry_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("unknown session '" + id + "'");
    return it->second;
  }

  void append(Session& s, Message m, const Row& row) {
    json payload = {{"role", role_name(m.role)}, {"text", m.text}, {"perception", row}};
    if (s.human_persona) {
      s.human_perception.push_back(engine_->perception_row(m.text, *s.human_persona));
      payload["human_perception"] = s.human_perception.back();
    }
    s.history.push_back(std::move(m));
    s.perception.push_back(row);
    log(s.id, "message", payload);
  }

  void log(const std::string& id, const std::string& event, const json& payload) const {
    if (log_dir_.empty()) return;
    std::ofstream out(log_path(id), std::ios::app);
    if (!out) throw Error("cannot open session log " + log_path(id));
    out << json{{"ts", utc_timestamp()}, {"session", id}, {"event", event}, {"payload", payload}}.dump() << '\n';
  }

  std::shared_ptr<const Engine<T>> engine_;
  std::string log_dir_;
  mutable std::shared_mutex registry_mu_;
  std::mt19937_64 rng_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace p2bot::service
