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

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "p2bot/corpus/text.hpp"
#include "p2bot/error.hpp"

namespace p2bot::corpus {

// Token <-> id map. The reserved tokens always occupy ids 0..6 in this order.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;
  static constexpr int kCls = 3;
  static constexpr int kPersonaStart = 4;
  static constexpr int kSep = 5;
  static constexpr int kMask = 6;
  static constexpr int kNumReserved = 7;

  static constexpr std::array<std::string_view, kNumReserved> kReserved = {
      "[PAD]", "[UNK]", "[EOS]", "[CLS]", "[PS]", "[SEP]", "[MASK]"};

  Vocab() : Vocab(std::vector<std::string>{}, 1) {}

  // `tokens` lists the non-reserved entries in id order.
  Vocab(const std::vector<std::string>& tokens, int min_freq) : min_freq_(min_freq) {
    for (auto r : kReserved) insert(std::string(r));
    for (const auto& t : tokens) {
      if (index_.contains(t)) throw FormatError("duplicate vocabulary entry: " + t);
      insert(t);
    }
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  int min_freq() const { return min_freq_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  int id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(std::string_view token) const { return index_.contains(std::string(token)); }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw InvalidArgument("token id out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::vector<int> encode(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& t : tokenize(text)) ids.push_back(id(t));
    return ids;
  }

  // Joins tokens with single spaces. Stops at [EOS]; other reserved ids except
  // [UNK] are dropped.
  std::string decode(std::span<const int> ids) const {
    std::vector<std::string> parts;
    for (int i : ids) {
      if (i == kEos) break;
      if (i < kNumReserved && i != kUnk) continue;
      parts.push_back(token(i));
    }
    return join(parts);
  }

  std::uint64_t hash() const {
    std::uint64_t h = fnv1a("p2bot-vocab-v1");
    for (const auto& t : tokens_) {
      h = fnv1a(t, h);
      h = fnv1a("\n", h);
    }
    return h;
  }

 private:
  void insert(std::string t) {
    index_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(t));
  }

  int min_freq_ = 1;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace p2bot::corpus
