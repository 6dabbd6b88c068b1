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

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "helpers.hpp"
#include "p2bot/corpus/episode.hpp"
#include "p2bot/corpus/instances.hpp"
#include "p2bot/corpus/parse.hpp"
#include "p2bot/corpus/probe.hpp"
#include "p2bot/corpus/synthetic.hpp"
#include "p2bot/corpus/text.hpp"
#include "p2bot/corpus/vocab.hpp"

namespace p2bot::corpus {
namespace {

TEST(Text, TokenizeLowercasesAndSplitsPunctuation) {
  EXPECT_EQ(tokenize("Hi, I'm  FINE!"), (std::vector<std::string>{"hi", ",", "i", "'", "m", "fine", "!"}));
  EXPECT_TRUE(tokenize("   \t ").empty());
  EXPECT_EQ(normalize("Hello ,world"), "hello , world");
  EXPECT_TRUE(is_punctuation_token("?"));
  EXPECT_FALSE(is_punctuation_token("a"));
}

DialogueEpisode episode_with_text(const std::string& a, const std::string& b) {
  DialogueEpisode e;
  e.persona_b = make_persona({"i am x ."});
  e.turns = {{Speaker::kA, a}, {Speaker::kB, b}};
  return e;
}

TEST(Vocab, ReservedTokensComeFirst) {
  const Vocab v = build_vocab({episode_with_text("", "")}, 1);
  ASSERT_GE(v.size(), Vocab::kNumReserved);
  EXPECT_EQ(v.token(Vocab::kPad), "[PAD]");
  EXPECT_EQ(v.token(Vocab::kUnk), "[UNK]");
  EXPECT_EQ(v.token(Vocab::kEos), "[EOS]");
  EXPECT_EQ(v.token(Vocab::kCls), "[CLS]");
  EXPECT_EQ(v.token(Vocab::kPersonaStart), "[PS]");
  EXPECT_EQ(v.token(Vocab::kSep), "[SEP]");
  EXPECT_EQ(v.token(Vocab::kMask), "[MASK]");
}

TEST(Vocab, MinFreqThreshold) {
  const Vocab v = build_vocab({episode_with_text("a a b", "")}, 2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
  EXPECT_EQ(v.encode("a b"), (std::vector<int>{v.id("a"), Vocab::kUnk}));
  EXPECT_THROW(build_vocab({episode_with_text("a", "b")}, 0), InvalidArgument);
  EXPECT_THROW(build_vocab({}, 1), InvalidArgument);
}

TEST(Vocab, RoundTripsEveryCorpusSentence) {
  const auto episodes = testing::small_corpus();
  const Vocab v = build_vocab(episodes, 1);
  for_each_text(episodes, [&](const std::string& s) { EXPECT_EQ(v.decode(v.encode(s)), normalize(s)); });
}

TEST(Vocab, BijectiveOverEntries) {
  const Vocab v = build_vocab(testing::small_corpus(), 1);
  std::set<std::string> seen;
  for (int i = 0; i < v.size(); ++i) {
    EXPECT_EQ(v.id(v.token(i)), i);
    EXPECT_TRUE(seen.insert(v.token(i)).second);
  }
  EXPECT_THROW(Vocab({"a", "a"}, 1), FormatError);
}

TEST(Vocab, DecodeStopsAtEosAndSkipsMarkers) {
  const Vocab v({"hello", "world"}, 1);
  EXPECT_EQ(v.decode(std::vector<int>{Vocab::kPersonaStart, v.id("hello"), Vocab::kSep, Vocab::kUnk, Vocab::kEos,
                                      v.id("world")}),
            "hello [UNK]");
}

TEST(Vocab, HashTracksContent) {
  EXPECT_EQ(Vocab({"a", "b"}, 1).hash(), Vocab({"a", "b"}, 1).hash());
  EXPECT_NE(Vocab({"a", "b"}, 1).hash(), Vocab({"b", "a"}, 1).hash());
}

TEST(Episode, ValidationRules) {
  auto e = episode_with_text("hi", "hello");
  EXPECT_NO_THROW(validate_episode(e));
  auto swapped = e;
  std::swap(swapped.turns[0].speaker, swapped.turns[1].speaker);
  try {
    validate_episode(swapped);
    FAIL();
  } catch (const FormatError& err) {
    EXPECT_NE(std::string(err.what()).find("turn order"), std::string::npos);
  }
  auto bad_persona = e;
  bad_persona.persona_b = make_persona({"  "});
  EXPECT_THROW(validate_episode(bad_persona), FormatError);
  auto cands = e;
  cands.candidates = {{{"x", "y"}, 0}};
  EXPECT_THROW(validate_episode(cands), FormatError);
  cands.candidates = {{{"x", "hello", "hello"}, 1}};
  EXPECT_THROW(validate_episode(cands), FormatError);
  cands.candidates = {{{"x", "hello"}, 1}};
  EXPECT_NO_THROW(validate_episode(cands));
}

constexpr const char* kParlai =
    "1 your persona: i like dogs .\n"
    "2 your persona: i live in ohio .\n"
    "3 hi there !\thello , i like dogs .\t\tbye .|hello , i like dogs .|what ?\n"
    "1 partner's persona: i am a chef .\n"
    "2 your persona: i have a cat .\n"
    "3 hello\thi\n"
    "4 how are you ?\tgood\n";

TEST(ParseParlai, PersonaLinesAndExchanges) {
  const auto episodes = parse_corpus(std::string(kParlai), CorpusFormat::kParlaiText);
  ASSERT_EQ(episodes.size(), 2u);
  const auto& e = episodes[0];
  EXPECT_EQ(e.persona_b.profiles.size(), 2u);
  EXPECT_TRUE(e.persona_a.empty());
  ASSERT_EQ(e.turns.size(), 2u);
  EXPECT_EQ(e.turns[0].speaker, Speaker::kA);
  EXPECT_EQ(e.turns[1].text, "hello , i like dogs .");
  ASSERT_EQ(e.candidates.size(), 1u);
  EXPECT_EQ(e.candidates[0].gold_index, 1);
  EXPECT_EQ(episodes[1].persona_a.profiles, std::vector<std::string>{"i am a chef ."});
  EXPECT_EQ(episodes[1].turns.size(), 4u);
  EXPECT_TRUE(parse_corpus(std::string(), CorpusFormat::kParlaiText).empty());
}

void expect_line_error(const std::string& text, CorpusFormat f, const std::string& line, const std::string& rule) {
  try {
    parse_corpus(text, f);
    FAIL() << "expected a FormatError for: " << text;
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(line), std::string::npos) << msg;
    EXPECT_NE(msg.find(rule), std::string::npos) << msg;
  }
}

TEST(ParseParlai, ErrorsNameLineAndRule) {
  expect_line_error("1 your persona: a .\n2 \thello\n", CorpusFormat::kParlaiText, "line 2", "turn order");
  expect_line_error("1 your persona: a .\n3 hi\tyo\n", CorpusFormat::kParlaiText, "line 2", "index");
  expect_line_error("x hi\tyo\n", CorpusFormat::kParlaiText, "line 1", "index");
  expect_line_error("1 your persona: a .\n2 hi\n", CorpusFormat::kParlaiText, "line 2", "response");
  expect_line_error("1 your persona: a .\n2 hi\tyo\t\tx|y\n", CorpusFormat::kParlaiText, "line 2", "exactly once");
}

TEST(ParseJsonl, MatchesParlaiOnSameContent) {
  const std::string jsonl =
      R"({"persona_a": [], "persona_b": ["i like dogs .", "i live in ohio ."], "turns": [)"
      R"({"speaker": "A", "text": "hi there !"}, {"speaker": "B", "text": "hello , i like dogs ."}], )"
      R"("candidates": [{"responses": ["bye .", "hello , i like dogs .", "what ?"], "gold": 1}]})";
  const auto a = parse_corpus(jsonl, CorpusFormat::kJsonl);
  const auto b = parse_corpus(std::string(kParlai), CorpusFormat::kParlaiText);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0], b[0]);
}

TEST(ParseJsonl, FourAlternatingTurnsBothFormats) {
  const std::string parlai =
      "1 partner's persona: i am a chef .\n2 your persona: i have a cat .\n3 hello\thi\n4 how are you ?\tgood\n";
  const std::string jsonl =
      R"({"persona_a": ["i am a chef ."], "persona_b": ["i have a cat ."], "turns": [)"
      R"({"speaker": "A", "text": "hello"}, {"speaker": "B", "text": "hi"}, )"
      R"({"speaker": "A", "text": "how are you ?"}, {"speaker": "B", "text": "good"}]})";
  EXPECT_EQ(parse_corpus(parlai, CorpusFormat::kParlaiText), parse_corpus(jsonl, CorpusFormat::kJsonl));
}

TEST(ParseJsonl, ErrorsNameLineAndRule) {
  const std::string ok = R"({"persona_b": ["p ."], "turns": [{"speaker": "A", "text": "x"}]})";
  expect_line_error(ok + "\nnot json\n", CorpusFormat::kJsonl, "line 2", "");
  expect_line_error(R"({"persona_b": ["p ."], "turns": [{"speaker": "B", "text": "x"}]})", CorpusFormat::kJsonl,
                    "line 1", "turn order");
  expect_line_error(R"({"persona_b": ["p ."], "turns": [{"speaker": "C", "text": "x"}]})", CorpusFormat::kJsonl,
                    "line 1", "speaker");
  EXPECT_THROW(parse_format("csv"), InvalidArgument);
}

TEST(ParseJsonl, SerializeRoundTripIsExact) {
  const auto episodes = testing::small_corpus(6, 3, 11);
  const std::string text = to_jsonl(episodes);
  const auto parsed = parse_corpus(text, CorpusFormat::kJsonl);
  EXPECT_EQ(parsed, episodes);
  EXPECT_EQ(to_jsonl(parsed), text);
}

TEST(Synthetic, DeterministicPerSeed) {
  EXPECT_EQ(to_jsonl(generate_synthetic(10, 3, 7)), to_jsonl(generate_synthetic(10, 3, 7)));
  EXPECT_NE(to_jsonl(generate_synthetic(10, 3, 7)), to_jsonl(generate_synthetic(10, 3, 8)));
  EXPECT_THROW(generate_synthetic(1, 3, 7), InvalidArgument);
}

TEST(Synthetic, ShapeAndValidity) {
  const auto episodes = generate_synthetic(2, 3, 1);
  for (const auto& e : episodes) {
    EXPECT_EQ(e.turns.size(), 6u);
    EXPECT_NO_THROW(validate_episode(e));
    EXPECT_EQ(e.persona_a.profiles.size(), 5u);
  }
  const auto many = generate_synthetic(40, 3, 2);
  EXPECT_EQ(distinct_personas(many).size(), 40u);
  for (const auto& e : many) {
    for (const auto& c : e.candidates) EXPECT_EQ(c.responses.size(), 20u);
  }
}

// Every utterance names a value from its speaker's own persona.
TEST(Synthetic, UtterancesShareContentWithOwnPersona) {
  static const std::set<std::string> kFunction = {"i", "like", "my", "job", "is", "live", "in", "have", "a",
                                                  "favorite", "food", ".", "?", "!", ",", "hi", "hello", "hey",
                                                  "there", "cool", "nice", "what", "do", "you", "your", "where",
                                                  "pet", "love"};
  for (const auto& e : generate_synthetic(12, 5, 3)) {
    for (const auto& t : e.turns) {
      std::set<std::string> persona_words;
      for (const auto& p : e.persona_of(t.speaker).profiles) {
        for (const auto& w : tokenize(p)) {
          if (!kFunction.contains(w)) persona_words.insert(w);
        }
      }
      bool shared = false;
      for (const auto& w : tokenize(t.text)) shared = shared || persona_words.contains(w);
      EXPECT_TRUE(shared) << t.text;
    }
  }
}

TEST(Instances, CountsAndDistractors) {
  auto episodes = generate_synthetic(2, 3, 4);
  const auto both = make_instances(episodes, 1);
  EXPECT_EQ(both.size(), 12u);
  const auto b_only = make_instances(episodes, 1, ResponderSides::kBOnly);
  EXPECT_EQ(b_only.size(), 6u);
  for (const auto& inst : both) {
    EXPECT_NE(inst.distractor, inst.gold);
    EXPECT_EQ(inst.history.size(), inst.turn);
  }
  const auto again = make_instances(episodes, 1);
  for (std::size_t i = 0; i < both.size(); ++i) EXPECT_EQ(both[i].distractor, again[i].distractor);
  EXPECT_THROW(make_instances({episodes[0]}, 1), InvalidArgument);
}

TEST(Instances, CandidateListsSupplyDistractors) {
  const auto episodes = testing::small_corpus(12, 2, 4);
  for (const auto& inst : make_instances(episodes, 3, ResponderSides::kBOnly)) {
    const auto& cands = episodes[inst.episode].candidates[inst.turn / 2].responses;
    EXPECT_NE(std::find(cands.begin(), cands.end(), inst.distractor), cands.end());
    EXPECT_NE(inst.distractor, inst.gold);
  }
}

TEST(Instances, CountEqualsRespondingTurns) {
  const auto episodes = testing::small_corpus(9, 4, 5);
  std::size_t turns = 0;
  for (const auto& e : episodes) turns += e.turns.size();
  EXPECT_EQ(make_instances(episodes, 0).size(), turns);
}

TEST(Probe, ThirtyTwoCandidatesWithTruePersonaOnce) {
  const auto episodes = generate_synthetic(32, 3, 6);
  const auto set = build_probe_set(episodes, 31, 1);
  ASSERT_EQ(set.items.size(), episodes.size());
  for (const auto& item : set.items) {
    const auto cands = item.candidates();
    ASSERT_EQ(cands.size(), 32u);
    std::set<std::string> ids;
    for (const auto& c : cands) ids.insert(c.id);
    EXPECT_EQ(ids.size(), 32u);  // every other persona appears as a distractor
    EXPECT_EQ(cands[item.gold_index].id, item.true_persona.id);
  }
  const auto again = build_probe_set(episodes, 31, 1);
  for (std::size_t i = 0; i < set.items.size(); ++i) {
    EXPECT_EQ(set.items[i].gold_index, again.items[i].gold_index);
    EXPECT_EQ(set.items[i].distractors, again.items[i].distractors);
  }
}

TEST(Probe, InsufficientPersonasNamesRequiredCount) {
  try {
    build_probe_set(generate_synthetic(10, 2, 1), 31, 0);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("32"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace p2bot::corpus
