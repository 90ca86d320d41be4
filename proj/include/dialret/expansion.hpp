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

// Response expansion: append generated contexts (or last utterances) to
// responses before indexing, plus statistics on what the expansions add.

#include <fstream>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dialret/corpus.hpp"
#include "dialret/error.hpp"
#include "dialret/text.hpp"

namespace dialret {

struct ExpansionRecord {
  std::string response_id;
  std::vector<std::string> predictions;
  std::string generator_tag;

  friend bool operator==(const ExpansionRecord&, const ExpansionRecord&) = default;
};

inline std::vector<ExpansionRecord> parse_expansions(std::istream& in) {
  std::vector<ExpansionRecord> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw data_error("malformed_record", std::string("invalid JSON: ") + e.what() + detail::at_line(lineno));
    }
    using vt = nlohmann::json::value_t;
    ExpansionRecord r;
    r.response_id = detail::require_field(j, "response_id", vt::string, lineno).get<std::string>();
    const auto& preds = detail::require_field(j, "predictions", vt::array, lineno);
    for (const auto& p : preds) {
      if (!p.is_string()) throw data_error("malformed_record", "prediction is not a string" + detail::at_line(lineno));
      r.predictions.push_back(p.get<std::string>());
    }
    if (r.predictions.empty())
      throw data_error("malformed_record", "record for " + r.response_id + " has no predictions" + detail::at_line(lineno));
    if (auto t = j.find("generator_tag"); t != j.end()) {
      if (!t->is_string()) throw data_error("malformed_record", "generator_tag must be a string" + detail::at_line(lineno));
      r.generator_tag = t->get<std::string>();
    }
    if (!seen.insert(r.response_id).second)
      throw data_error("duplicate_id", "second expansion record for " + r.response_id + detail::at_line(lineno));
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<ExpansionRecord> load_expansions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("missing_file", "cannot open expansion file " + path);
  return parse_expansions(in);
}

inline void write_expansions(std::ostream& out, std::span<const ExpansionRecord> records) {
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["response_id"] = r.response_id;
    j["predictions"] = r.predictions;
    j["generator_tag"] = r.generator_tag;
    out << j.dump() << '\n';
  }
}

enum class ReexpandPolicy {
  reject,        // throw if the corpus already carries expansions
  append_again,  // append a second round on top of the existing text
};

/// Returns a new corpus where each response with a record becomes
/// `text + " " + join(first num_predictions predictions, " ")`.
inline Corpus apply_expansions(const Corpus& corpus, std::span<const ExpansionRecord> records,
                               std::size_t num_predictions = 3,
                               ReexpandPolicy policy = ReexpandPolicy::reject) {
  if (num_predictions == 0) throw config_error("bad_num_predictions", "num_predictions must be >= 1");
  if (corpus.is_expanded() && policy == ReexpandPolicy::reject)
    throw data_error("already_expanded", "corpus already expanded with '" + corpus.expansion_tag() + "'");
  std::unordered_map<std::string, const ExpansionRecord*> by_id;
  std::set<std::string> tags;
  for (const auto& r : records) {
    if (!corpus.find(r.response_id))
      throw data_error("dangling_reference", "expansion references unknown response id " + r.response_id);
    by_id[r.response_id] = &r;
    tags.insert(r.generator_tag.empty() ? std::string("expanded") : r.generator_tag);
  }
  std::string tag = corpus.expansion_tag();
  for (const auto& t : tags) {
    if (!tag.empty()) tag += '+';
    tag += t;
  }
  if (tag.empty()) tag = "expanded";

  std::vector<ResponseDoc> docs;
  docs.reserve(corpus.size());
  for (const auto& d : corpus) {
    ResponseDoc nd = d;
    if (auto it = by_id.find(d.id); it != by_id.end()) {
      const auto& preds = it->second->predictions;
      const std::size_t take = std::min(num_predictions, preds.size());
      for (std::size_t i = 0; i < take; ++i) {
        nd.text += ' ';
        nd.text += preds[i];
      }
    }
    docs.push_back(std::move(nd));
  }
  return Corpus(std::move(docs), tag);
}

struct ExpansionStats {
  double avg_aug_length = 0.0;  // words appended per expanded response
  double pct_new_words = 0.0;   // macro average over expanded responses
  std::size_t num_expanded = 0;
};

/// Compares each expanded response with its original. A token of the
/// appended part is new when it does not occur in the original response
/// (stats tokenizer, so lowercased and unstemmed). Responses whose text is
/// unchanged are not counted.
inline ExpansionStats expansion_stats(const Corpus& original, const Corpus& expanded) {
  if (original.size() != expanded.size()) throw data_error("id_mismatch", "corpora differ in size");
  ExpansionStats s;
  double len_sum = 0.0;
  double pct_sum = 0.0;
  for (const auto& o : original) {
    const auto* e = expanded.find(o.id);
    if (!e) throw data_error("id_mismatch", "response " + o.id + " missing from expanded corpus");
    if (e->text.size() < o.text.size() || e->text.compare(0, o.text.size(), o.text) != 0)
      throw data_error("id_mismatch", "expanded response " + o.id + " does not extend its original");
    const auto appended = stats_tokenize(std::string_view(e->text).substr(o.text.size()));
    if (appended.empty()) continue;
    const auto orig_tokens = stats_tokenize(o.text);
    const std::unordered_set<std::string> vocab(orig_tokens.begin(), orig_tokens.end());
    std::size_t fresh = 0;
    for (const auto& t : appended)
      if (!vocab.contains(t)) ++fresh;
    len_sum += static_cast<double>(appended.size());
    pct_sum += 100.0 * static_cast<double>(fresh) / static_cast<double>(appended.size());
    ++s.num_expanded;
  }
  if (s.num_expanded > 0) {
    s.avg_aug_length = len_sum / static_cast<double>(s.num_expanded);
    s.pct_new_words = pct_sum / static_cast<double>(s.num_expanded);
  }
  return s;
}

}  // namespace dialret
