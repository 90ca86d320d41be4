// Copyright 2026 The dialret Authors
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

#include <algorithm>
#include <sstream>
#include <string>

#include "dialret/corpus.hpp"
#include "dialret/rng.hpp"

using namespace dialret;

namespace {

const char* kSmall =
    R"({"type":"context","id":"c1","utterances":[{"text":"my wifi is down","speaker":"seeker","turn":0}]})" "\n"
    R"({"type":"context","id":"c2","utterances":[{"text":"a b","speaker":"unknown","turn":0},{"text":"c d e f","speaker":"unknown","turn":1}]})" "\n"
    R"({"type":"response","id":"r1","text":"restart the router"})" "\n"
    R"({"type":"response","id":"r2","text":"x"})" "\n"
    R"({"type":"response","id":"r3","text":"reinstall the driver"})" "\n"
    R"({"type":"pair","context_id":"c1","response_id":"r1","split":"train"})" "\n"
    R"({"type":"pair","context_id":"c2","response_id":"r2","split":"test"})" "\n";

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return parse_dataset(in);
}

std::string error_message(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

DialogueContext make_ctx(std::vector<std::pair<Speaker, std::string>> utts) {
  DialogueContext c{"c", {}};
  std::size_t t = 0;
  for (auto& [s, text] : utts) c.utterances.push_back({text, s, t++});
  return c;
}

}  // namespace

TEST(LoadDataset, CountsAndOrder) {
  const auto ds = parse(kSmall);
  EXPECT_EQ(ds.responses.size(), 3u);
  EXPECT_EQ(ds.split(Split::train).contexts.size(), 1u);
  EXPECT_EQ(ds.split(Split::test).contexts.size(), 1u);
  EXPECT_TRUE(ds.split(Split::valid).contexts.empty());
  EXPECT_EQ(ds.responses[0].id, "r1");
  EXPECT_EQ(ds.split(Split::test).pairs[0].positive_response_id, "r2");
  ASSERT_NE(ds.find_context("c2"), nullptr);
  EXPECT_EQ(ds.find_context("c2")->utterances.size(), 2u);
}

TEST(LoadDataset, DanglingResponseNamesIdAndLine) {
  std::string bad = kSmall;
  bad += R"({"type":"pair","context_id":"c1","response_id":"r9","split":"train"})" "\n";
  const auto msg = error_message(bad);
  EXPECT_NE(msg.find("r9"), std::string::npos);
  EXPECT_NE(msg.find("line 8"), std::string::npos);
}

TEST(LoadDataset, EmptyFile) {
  EXPECT_EQ(error_message(""), "empty split");
  EXPECT_EQ(error_message("\n\n"), "empty split");
}

TEST(LoadDataset, MalformedRecordReportsLine) {
  const auto msg = error_message(std::string(kSmall) + "{not json\n");
  EXPECT_NE(msg.find("line 8"), std::string::npos);
  EXPECT_NE(error_message(R"({"type":"response","id":"r1"})" "\n").find("line 1"), std::string::npos);
}

TEST(LoadDataset, DuplicateIds) {
  std::string dup = kSmall;
  dup += R"({"type":"response","id":"r1","text":"again"})" "\n";
  try {
    parse(dup);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "duplicate_id");
    EXPECT_EQ(e.kind(), ErrorKind::data);
  }
}

TEST(LoadDataset, InvariantViolations) {
  // empty response text
  EXPECT_THROW(parse(R"({"type":"response","id":"r1","text":"  "})" "\n"), Error);
  // second positive for one context
  std::string two = kSmall;
  two += R"({"type":"pair","context_id":"c1","response_id":"r3","split":"train"})" "\n";
  EXPECT_THROW(parse(two), Error);
  // decreasing turn index
  EXPECT_THROW(parse(R"({"type":"context","id":"c","utterances":[{"text":"a","turn":2},{"text":"b","turn":1}]})" "\n"
                     R"({"type":"response","id":"r","text":"x"})" "\n"
                     R"({"type":"pair","context_id":"c","response_id":"r","split":"test"})" "\n"),
               Error);
  // context without a pair
  EXPECT_THROW(parse(std::string(kSmall) + R"({"type":"context","id":"c3","utterances":[{"text":"q"}]})" "\n"), Error);
  // unknown speaker
  EXPECT_THROW(parse(R"({"type":"context","id":"c","utterances":[{"text":"a","speaker":"bot"}]})" "\n"), Error);
}

TEST(LoadDataset, RoundTripsThroughSerialization) {
  const auto ds = parse(kSmall);
  std::ostringstream out;
  write_dataset(ds, out);
  const auto again = parse(out.str());
  EXPECT_EQ(ds, again);
  std::ostringstream out2;
  write_dataset(again, out2);
  EXPECT_EQ(out.str(), out2.str());
}

TEST(ConcatContext, SingleUtterance) {
  EXPECT_EQ(concat_context(make_ctx({{Speaker::unknown, "hi"}})), "hi");
}

TEST(ConcatContext, UnknownSpeakersAlternate) {
  EXPECT_EQ(concat_context(make_ctx({{Speaker::unknown, "a"}, {Speaker::unknown, "b"}, {Speaker::unknown, "c"}})),
            "a [U] b [T] c");
}

TEST(ConcatContext, SpeakerChanges) {
  EXPECT_EQ(concat_context(make_ctx({{Speaker::seeker, "q1"}, {Speaker::provider, "a1"}, {Speaker::seeker, "q2"}})),
            "q1 [T] a1 [T] q2");
  EXPECT_EQ(concat_context(make_ctx({{Speaker::seeker, "q1"}, {Speaker::seeker, "q1b"}, {Speaker::provider, "a1"}})),
            "q1 [U] q1b [T] a1");
}

TEST(ConcatContext, EveryUtteranceOnceInOrderWithTauMinusOneSeparators) {
  Rng rng(11);
  const Speaker speakers[] = {Speaker::seeker, Speaker::provider, Speaker::unknown};
  for (int trial = 0; trial < 200; ++trial) {
    const auto tau = 1 + rng.below(8);
    std::vector<std::pair<Speaker, std::string>> utts;
    for (std::size_t i = 0; i < tau; ++i)
      utts.push_back({speakers[rng.below(3)], "utt" + std::to_string(i) + " w" + std::to_string(rng.below(50))});
    const auto ctx = make_ctx(utts);
    const auto s = concat_context(ctx);
    std::size_t pos = 0;
    for (const auto& u : ctx.utterances) {
      const auto found = s.find(u.text, pos);
      ASSERT_NE(found, std::string::npos);
      pos = found + u.text.size();
    }
    std::size_t seps = 0;
    for (std::size_t i = 0; i + 2 < s.size(); ++i)
      if (s.compare(i, 3, "[U]") == 0 || s.compare(i, 3, "[T]") == 0) ++seps;
    EXPECT_EQ(seps, tau - 1);
  }
}

TEST(CorpusStats, HandCounted) {
  const auto ds = parse(kSmall);
  const auto stats = corpus_stats(ds);
  // test split: context "a b" + "c d e f", response "x"
  EXPECT_DOUBLE_EQ(stats.splits.at(Split::test).avg_context_words, 6.0);
  EXPECT_DOUBLE_EQ(stats.splits.at(Split::test).avg_response_words, 1.0);
  EXPECT_FALSE(stats.splits.contains(Split::valid));
  EXPECT_EQ(stats.collection_size, 3u);
  EXPECT_DOUBLE_EQ(stats.collection_avg_response_words, (3.0 + 1.0 + 3.0) / 3.0);
}

TEST(CorpusStats, AveragesOverContexts) {
  SplitData data;
  data.contexts = {make_ctx({{Speaker::unknown, "a b"}}), make_ctx({{Speaker::unknown, "c d e f"}})};
  data.contexts[1].id = "c2";
  data.pairs = {{"c", "r"}, {"c2", "r"}};
  Corpus responses({{"r", "x"}});
  const auto s = split_stats(data, responses);
  EXPECT_DOUBLE_EQ(s.avg_context_words, 3.0);
  EXPECT_DOUBLE_EQ(s.avg_response_words, 1.0);
  EXPECT_THROW(split_stats(SplitData{}, responses), Error);
}

TEST(CorpusStats, PermutationInvariant) {
  Rng rng(3);
  SplitData data;
  std::vector<ResponseDoc> docs;
  for (int i = 0; i < 30; ++i) {
    std::string text;
    for (std::uint64_t w = 0; w <= rng.below(9); ++w) text += "w" + std::to_string(w) + " ";
    docs.push_back({"r" + std::to_string(i), text});
    data.contexts.push_back(make_ctx({{Speaker::unknown, text + text}}));
    data.contexts.back().id = "c" + std::to_string(i);
    data.pairs.push_back({"c" + std::to_string(i), "r" + std::to_string(i)});
  }
  const Corpus corpus(docs);
  const auto base = split_stats(data, corpus);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::size_t> perm(data.contexts.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    SplitData shuffled;
    for (auto p : perm) {
      shuffled.contexts.push_back(data.contexts[p]);
      shuffled.pairs.push_back(data.pairs[p]);
    }
    const auto s = split_stats(shuffled, corpus);
    EXPECT_NEAR(s.avg_context_words, base.avg_context_words, 1e-12);
    EXPECT_NEAR(s.avg_response_words, base.avg_response_words, 1e-12);
  }
}
