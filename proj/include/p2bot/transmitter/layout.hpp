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

#include <optional>
#include <string>
#include <vector>

#include "p2bot/corpus/episode.hpp"
#include "p2bot/corpus/vocab.hpp"
#include "p2bot/error.hpp"

namespace p2bot::transmitter {

using corpus::Vocab;

enum Segment : int { kPersonaSegment = 0, kPartnerSegment = 1, kSelfSegment = 2, kResponseSegment = 3 };

// Token-level context: the responder's persona and the dialogue so far.
struct EncodedContext {
  std::vector<int> persona;               // all profile sentences, concatenated
  std::vector<std::vector<int>> history;  // oldest first; the last entry is the partner's
};

inline EncodedContext encode_context(const Vocab& vocab, const std::vector<std::string>& persona,
                                     const std::vector<std::string>& history) {
  EncodedContext ctx;
  for (const auto& p : persona) {
    auto ids = vocab.encode(p);
    ctx.persona.insert(ctx.persona.end(), ids.begin(), ids.end());
  }
  for (const auto& h : history) ctx.history.push_back(vocab.encode(h));
  return ctx;
}

// Assembled model input:
//   [PS] persona [SEP] h_1 [SEP] ... h_k [SEP] response [EOS] [CLS]
// loss_mask marks the response tokens and [EOS]; [CLS] is the position read
// by the next-utterance classifier.
struct TokenLayout {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;
  std::vector<int> loss_mask;
  int cls_position = -1;
  int response_start = 0;
  std::size_t dropped_history = 0;

  std::size_t size() const { return token_ids.size(); }
  int target_count() const {
    int n = 0;
    for (int m : loss_mask) n += m;
    return n;
  }
};

struct LayoutOptions {
  int max_positions = 256;
  bool append_eos = true;
  bool append_cls = true;
  // Positions kept free after the layout (room for decoding).
  int reserve = 0;
};

// Without a response the layout ends after the last [SEP] and is a decoding
// prompt. History is truncated oldest-first; the persona is never cut.
inline TokenLayout build_input(const EncodedContext& ctx, const std::optional<std::vector<int>>& response,
                               const LayoutOptions& options) {
  const bool has_response = response.has_value();
  const std::size_t tail = has_response ? response->size() + (options.append_eos ? 1 : 0) +
                                              (options.append_cls ? 1 : 0)
                                        : 0;
  const std::size_t fixed = 2 + ctx.persona.size() + tail + static_cast<std::size_t>(options.reserve);
  if (fixed > static_cast<std::size_t>(options.max_positions)) {
    throw InvalidArgument("persona and response alone need " + std::to_string(fixed) +
                          " positions, exceeding max_positions " + std::to_string(options.max_positions));
  }
  std::size_t budget = static_cast<std::size_t>(options.max_positions) - fixed;
  std::size_t first = ctx.history.size();
  while (first > 0 && ctx.history[first - 1].size() + 1 <= budget) {
    budget -= ctx.history[first - 1].size() + 1;
    --first;
  }

  TokenLayout out;
  out.dropped_history = first;
  auto push = [&](int tok, int seg, int mask) {
    out.token_ids.push_back(tok);
    out.segment_ids.push_back(seg);
    out.loss_mask.push_back(mask);
  };
  push(Vocab::kPersonaStart, kPersonaSegment, 0);
  for (int t : ctx.persona) push(t, kPersonaSegment, 0);
  push(Vocab::kSep, kPersonaSegment, 0);
  const std::size_t k = ctx.history.size();
  for (std::size_t i = first; i < k; ++i) {
    const int seg = (k - 1 - i) % 2 == 0 ? kPartnerSegment : kSelfSegment;
    for (int t : ctx.history[i]) push(t, seg, 0);
    push(Vocab::kSep, seg, 0);
  }
  out.response_start = static_cast<int>(out.token_ids.size());
  if (has_response) {
    for (int t : *response) push(t, kResponseSegment, 1);
    if (options.append_eos) push(Vocab::kEos, kResponseSegment, 1);
    if (options.append_cls) {
      out.cls_position = static_cast<int>(out.token_ids.size());
      push(Vocab::kCls, kResponseSegment, 0);
    }
  }
  return out;
}

// Prompt followed by generated tokens, all in the response segment.
inline TokenLayout extend(const TokenLayout& prompt, const std::vector<int>& generated) {
  TokenLayout out = prompt;
  for (int t : generated) {
    out.token_ids.push_back(t);
    out.segment_ids.push_back(kResponseSegment);
    out.loss_mask.push_back(1);
  }
  return out;
}

}  // namespace p2bot::transmitter
