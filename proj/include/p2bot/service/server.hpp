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

// HTTP JSON API over a SessionStore.
//   POST /sessions                    {persona?, human_persona?} -> session
//   POST /sessions/{id}/messages      {text} -> reply and the two new rows
//   GET  /sessions/{id}/perception    -> utterance x profile matrix
//   GET  /sessions/{id}               -> session

#pragma once

#include <functional>
#include <memory>
#include <string>

#include "json.hpp"
#include "p2bot/error.hpp"
#include "p2bot/service/session.hpp"

// After Eigen: glibc's resolv.h defines a `_res` macro.
#include "httplib.h"

namespace p2bot::service {

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

// Maps library errors onto HTTP statuses.
inline void guarded(httplib::Response& res, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const NotFound& e) {
    send_error(res, 404, e.what());
  } catch (const InvalidArgument& e) {
    send_error(res, 400, e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, std::string("malformed JSON: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

inline json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

template <typename T>
void register_routes(httplib::Server& server, std::shared_ptr<SessionStore<T>> store) {
  server.Post("/sessions", [store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 201, session_to_json(store->create(CreateRequest::from_json(parse_body(req))))); });
  });
  server.Post(R"(/sessions/([^/]+)/messages)", [store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
        throw InvalidArgument("body must be {\"text\": string}");
      }
      const auto ex = store->post_message(req.matches[1], body["text"].get<std::string>());
      send_json(res, 200, {{"reply", ex.reply}, {"rows", {ex.human_row, ex.bot_row}}});
    });
  });
  server.Get(R"(/sessions/([^/]+)/perception)", [store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, perception_to_json(store->get(req.matches[1]))); });
  });
  server.Get(R"(/sessions/([^/]+))", [store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, session_to_json(store->get(req.matches[1]))); });
  });
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
}

}  // namespace p2bot::service
