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


#pragma once

// Dialogue dataset model: contexts (query side), the response collection
// (document side) and one positive pair per context. Loaded from and saved
// to the corpus JSONL format.

#include <array>
#include <cstddef>
#include <fstream>
#include <initializer_list>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dialret/error.hpp"
#include "dialret/text.hpp"

namespace dialret {

enum class Speaker { seeker, provider, unknown };

inline std::string_view to_string(Speaker s) {
  switch (s) {
    case Speaker::seeker: return "seeker";
    case Speaker::provider: return "provider";
    case Speaker::unknown: return "unknown";
  }
  return "unknown";
}

inline std::optional<Speaker> parse_speaker(std::string_view s) {
  if (s == "seeker") return Speaker::seeker;
  if (s == "provider") return Speaker::provider;
  if (s == "unknown") return Speaker::unknown;
  return std::nullopt;
}

enum class Split { train, valid, test };

inline constexpr std::array<Split, 3> kAllSplits{Split::train, Split::valid, Split::test};

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "test";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  return std::nullopt;
}

struct Utterance {
  std::string text;
  Speaker speaker = Speaker::unknown;
  std::size_t turn_index = 0;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct DialogueContext {
  std::string id;
  std::vector<Utterance> utterances;

  friend bool operator==(const DialogueContext&, const DialogueContext&) = default;
};

struct ResponseDoc {
  std::string id;
  std::string text;

  friend bool operator==(const ResponseDoc&, const ResponseDoc&) = default;
};

struct ExamplePair {
  std::string context_id;
  std::string positive_response_id;

  friend bool operator==(const ExamplePair&, const ExamplePair&) = default;
};

/// Ordered response collection with unique ids. `expansion_tag` is empty for
/// an original collection and names the generator once expansions have been
/// appended.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<ResponseDoc> docs, std::string expansion_tag = {})
      : expansion_tag_(std::move(expansion_tag)) {
    docs_.reserve(docs.size());
    for (auto& d : docs) add(std::move(d));
  }

  Corpus(std::initializer_list<ResponseDoc> docs) : Corpus(std::vector<ResponseDoc>(docs)) {}

  void add(ResponseDoc doc) {
    if (doc.id.empty()) throw data_error("empty_id", "response with empty id");
    if (trim_view(doc.text).empty())
      throw data_error("empty_text", "response " + doc.id + " has empty text");
    auto [it, inserted] = by_id_.emplace(doc.id, docs_.size());
    if (!inserted) throw data_error("duplicate_id", "duplicate response id " + doc.id);
    docs_.push_back(std::move(doc));
  }

  const ResponseDoc* find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &docs_[it->second];
  }

  std::optional<std::size_t> position(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<ResponseDoc>& docs() const noexcept { return docs_; }
  std::size_t size() const noexcept { return docs_.size(); }
  bool empty() const noexcept { return docs_.empty(); }
  auto begin() const noexcept { return docs_.begin(); }
  auto end() const noexcept { return docs_.end(); }
  const ResponseDoc& operator[](std::size_t i) const { return docs_[i]; }

  const std::string& expansion_tag() const noexcept { return expansion_tag_; }
  bool is_expanded() const noexcept { return !expansion_tag_.empty(); }

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.docs_ == b.docs_ && a.expansion_tag_ == b.expansion_tag_;
  }

 private:
  static std::string_view trim_view(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n\f\v");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n\f\v");
    return s.substr(first, last - first + 1);
  }

  std::vector<ResponseDoc> docs_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::string expansion_tag_;
};

struct SplitData {
  std::vector<DialogueContext> contexts;
  std::vector<ExamplePair> pairs;  // aligned with contexts

  friend bool operator==(const SplitData&, const SplitData&) = default;
};

/// The response collection is shared by all splits: first-stage retrieval
/// always ranks the whole collection.
struct Dataset {
  Corpus responses;
  std::map<Split, SplitData> splits;

  const SplitData& split(Split s) const {
    static const SplitData empty;
    auto it = splits.find(s);
    return it == splits.end() ? empty : it->second;
  }

  const DialogueContext* find_context(std::string_view id) const {
    for (const auto& [_, data] : splits)
      for (const auto& c : data.contexts)
        if (c.id == id) return &c;
    return nullptr;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Joins utterances with single spaces around separators. The separator
/// after utterance k is "[T]" when the speaker changes and "[U]" when it does
/// not. Boundaries touching an unknown speaker fall back to alternation
/// ("[U]" after even k, "[T]" after odd k, 0-based).
inline std::string concat_context(const DialogueContext& ctx) {
  std::string out;
  const auto& us = ctx.utterances;
  for (std::size_t k = 0; k < us.size(); ++k) {
    if (k > 0) {
      const auto& prev = us[k - 1];
      const auto& cur = us[k];
      std::string_view sep;
      if (prev.speaker == Speaker::unknown || cur.speaker == Speaker::unknown) {
        sep = (k - 1) % 2 == 0 ? kUtteranceSep : kTurnSep;
      } else {
        sep = prev.speaker != cur.speaker ? kTurnSep : kUtteranceSep;
      }
      out += ' ';
      out += sep;
      out += ' ';
    }
    out += us[k].text;
  }
  return out;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(first, last - first + 1));
}

inline std::string at_line(std::size_t line) { return " (line " + std::to_string(line) + ")"; }

inline const nlohmann::json& require_field(const nlohmann::json& j, const char* key,
                                           nlohmann::json::value_t type, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw data_error("malformed_record", std::string("missing field '") + key + "'" + at_line(line));
  const bool ok = type == nlohmann::json::value_t::number_integer
                      ? it->is_number_integer()
                      : it->type() == type;
  if (!ok) throw data_error("malformed_record", std::string("field '") + key + "' has wrong type" + at_line(line));
  return *it;
}

}  // namespace detail

/// Parses corpus JSONL from a stream. Errors name the offending line.
inline Dataset parse_dataset(std::istream& in) {
  using nlohmann::json;
  using vt = json::value_t;

  struct PendingContext {
    DialogueContext ctx;
    std::size_t line;
  };
  struct PendingPair {
    ExamplePair pair;
    Split split;
    std::size_t line;
  };

  Dataset ds;
  std::vector<PendingContext> contexts;
  std::unordered_map<std::string, std::size_t> context_pos;
  std::vector<PendingPair> pairs;

  std::string line;
  std::size_t lineno = 0;
  std::size_t records = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    ++records;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw data_error("malformed_record", std::string("invalid JSON: ") + e.what() + detail::at_line(lineno));
    }
    if (!j.is_object()) throw data_error("malformed_record", "record is not an object" + detail::at_line(lineno));
    const auto type = detail::require_field(j, "type", vt::string, lineno).get<std::string>();
    if (type == "context") {
      DialogueContext ctx;
      ctx.id = detail::require_field(j, "id", vt::string, lineno).get<std::string>();
      if (ctx.id.empty()) throw data_error("malformed_record", "empty context id" + detail::at_line(lineno));
      const auto& utts = detail::require_field(j, "utterances", vt::array, lineno);
      if (utts.empty()) throw data_error("malformed_record", "context " + ctx.id + " has no utterances" + detail::at_line(lineno));
      for (std::size_t i = 0; i < utts.size(); ++i) {
        const auto& u = utts[i];
        if (!u.is_object()) throw data_error("malformed_record", "utterance is not an object" + detail::at_line(lineno));
        Utterance utt;
        utt.text = detail::require_field(u, "text", vt::string, lineno).get<std::string>();
        if (detail::trim(utt.text).empty())
          throw data_error("malformed_record", "empty utterance in context " + ctx.id + detail::at_line(lineno));
        if (auto sp = u.find("speaker"); sp != u.end()) {
          if (!sp->is_string()) throw data_error("malformed_record", "speaker must be a string" + detail::at_line(lineno));
          auto parsed = parse_speaker(sp->get<std::string>());
          if (!parsed) throw data_error("malformed_record", "unknown speaker '" + sp->get<std::string>() + "'" + detail::at_line(lineno));
          utt.speaker = *parsed;
        }
        if (auto t = u.find("turn"); t != u.end()) {
          if (!t->is_number_integer() || t->get<long long>() < 0)
            throw data_error("malformed_record", "turn must be a non-negative integer" + detail::at_line(lineno));
          utt.turn_index = t->get<std::size_t>();
        } else {
          utt.turn_index = i;
        }
        if (!ctx.utterances.empty() && utt.turn_index < ctx.utterances.back().turn_index)
          throw data_error("malformed_record", "turn index decreases in context " + ctx.id + detail::at_line(lineno));
        ctx.utterances.push_back(std::move(utt));
      }
      if (context_pos.contains(ctx.id)) throw data_error("duplicate_id", "duplicate context id " + ctx.id + detail::at_line(lineno));
      context_pos.emplace(ctx.id, contexts.size());
      contexts.push_back({std::move(ctx), lineno});
    } else if (type == "response") {
      ResponseDoc doc;
      doc.id = detail::require_field(j, "id", vt::string, lineno).get<std::string>();
      doc.text = detail::require_field(j, "text", vt::string, lineno).get<std::string>();
      try {
        ds.responses.add(std::move(doc));
      } catch (const Error& e) {
        throw Error(e.kind(), e.code() == "empty_text" ? "malformed_record" : e.code(), e.what() + detail::at_line(lineno));
      }
    } else if (type == "pair") {
      PendingPair p;
      p.pair.context_id = detail::require_field(j, "context_id", vt::string, lineno).get<std::string>();
      p.pair.positive_response_id = detail::require_field(j, "response_id", vt::string, lineno).get<std::string>();
      const auto split = detail::require_field(j, "split", vt::string, lineno).get<std::string>();
      auto parsed = parse_split(split);
      if (!parsed) throw data_error("malformed_record", "unknown split '" + split + "'" + detail::at_line(lineno));
      p.split = *parsed;
      p.line = lineno;
      pairs.push_back(std::move(p));
    } else {
      throw data_error("malformed_record", "unknown record type '" + type + "'" + detail::at_line(lineno));
    }
  }
  if (records == 0 || pairs.empty()) throw data_error("empty_split", "empty split");

  std::vector<int> paired(contexts.size(), 0);
  for (auto& p : pairs) {
    auto it = context_pos.find(p.pair.context_id);
    if (it == context_pos.end())
      throw data_error("dangling_reference", "pair references unknown context id " + p.pair.context_id + detail::at_line(p.line));
    if (!ds.responses.find(p.pair.positive_response_id))
      throw data_error("dangling_reference", "pair references unknown response id " + p.pair.positive_response_id + detail::at_line(p.line));
    if (paired[it->second]++ > 0)
      throw data_error("multiple_positives", "context " + p.pair.context_id + " has more than one positive" + detail::at_line(p.line));
    auto& split = ds.splits[p.split];
    split.contexts.push_back(contexts[it->second].ctx);
    split.pairs.push_back(std::move(p.pair));
  }
  for (std::size_t i = 0; i < contexts.size(); ++i)
    if (paired[i] == 0)
      throw data_error("unpaired_context", "context " + contexts[i].ctx.id + " has no pair" + detail::at_line(contexts[i].line));
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("missing_file", "cannot open dataset " + path);
  return parse_dataset(in);
}

/// Writes responses first, then per split its contexts followed by its pairs.
inline void write_dataset(const Dataset& ds, std::ostream& out) {
  using nlohmann::ordered_json;
  for (const auto& d : ds.responses) {
    ordered_json j;
    j["type"] = "response";
    j["id"] = d.id;
    j["text"] = d.text;
    out << j.dump() << '\n';
  }
  for (const auto& [split, data] : ds.splits) {
    for (const auto& c : data.contexts) {
      ordered_json j;
      j["type"] = "context";
      j["id"] = c.id;
      j["utterances"] = ordered_json::array();
      for (const auto& u : c.utterances) {
        ordered_json ju;
        ju["text"] = u.text;
        ju["speaker"] = std::string(to_string(u.speaker));
        ju["turn"] = u.turn_index;
        j["utterances"].push_back(std::move(ju));
      }
      out << j.dump() << '\n';
    }
    for (const auto& p : data.pairs) {
      ordered_json j;
      j["type"] = "pair";
      j["context_id"] = p.context_id;
      j["response_id"] = p.positive_response_id;
      j["split"] = std::string(to_string(split));
      out << j.dump() << '\n';
    }
  }
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("io_error", "cannot write " + path);
  write_dataset(ds, out);
}

struct SplitStats {
  std::size_t num_contexts = 0;
  double avg_context_words = 0.0;
  double avg_response_words = 0.0;  // over the split's positive responses
};

struct StatsReport {
  std::map<Split, SplitStats> splits;
  std::size_t collection_size = 0;
  double collection_avg_response_words = 0.0;
};

/// Word counts use the stats tokenizer; context length sums all utterances
/// and excludes separators.
inline SplitStats split_stats(const SplitData& data, const Corpus& responses) {
  if (data.contexts.empty()) throw data_error("empty_split", "empty split");
  SplitStats s;
  s.num_contexts = data.contexts.size();
  double ctx_words = 0.0;
  for (const auto& c : data.contexts)
    for (const auto& u : c.utterances) ctx_words += static_cast<double>(word_count(u.text));
  double resp_words = 0.0;
  for (const auto& p : data.pairs)
    resp_words += static_cast<double>(word_count(responses.find(p.positive_response_id)->text));
  s.avg_context_words = ctx_words / static_cast<double>(data.contexts.size());
  s.avg_response_words = resp_words / static_cast<double>(data.pairs.size());
  return s;
}

/// Statistics for every non-empty split plus the whole collection.
inline StatsReport corpus_stats(const Dataset& ds) {
  StatsReport r;
  for (const auto& [split, data] : ds.splits)
    if (!data.contexts.empty()) r.splits.emplace(split, split_stats(data, ds.responses));
  if (r.splits.empty() || ds.responses.empty()) throw data_error("empty_split", "empty split");
  r.collection_size = ds.responses.size();
  double words = 0.0;
  for (const auto& d : ds.responses) words += static_cast<double>(word_count(d.text));
  r.collection_avg_response_words = words / static_cast<double>(ds.responses.size());
  return r;
}

}  // namespace dialret
