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

#include <stdexcept>
#include <string>

namespace p2bot {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Raised for malformed input data (corpus files, checkpoints, requests).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Raised when a caller violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Raised by lookups on missing entities (sessions, personas).
class NotFound : public Error {
 public:
  using Error::Error;
};

}  // namespace p2bot
