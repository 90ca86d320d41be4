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

// Inverted index and Okapi BM25 retrieval over the response collection.
//
//   score(q, d) = sum_t w_t * idf(t) * tf(t,d) * (k1 + 1)
//                 / (tf(t,d) + k1 * (1 - b + b * |d| / avgdl))
//   idf(t)      = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
//
// The idf variant is the non-negative one used by Lucene, so every score is
// >= 0. Plain queries weight each token occurrence by 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dialret/corpus.hpp"
#include "dialret/error.hpp"
#include "dialret/ranking.hpp"
#include "dialret/text.hpp"

namespace dialret {

struct BM25Params {
  double k1 = 0.9;
  double b = 0.4;

  void validate() const {
    if (!(k1 >= 0.0) || !std::isfinite(k1)) throw config_error("bad_bm25", "k1 must be >= 0");
    if (!(b >= 0.0 && b <= 1.0)) throw config_error("bad_bm25", "b must be in [0,1]");
  }
};

struct Posting {
  std::uint32_t doc = 0;  // position in the collection
  std::uint32_t tf = 0;

  friend bool operator==(const Posting&, const Posting&) = default;
};

struct TermCount {
  std::string term;
  std::uint32_t tf = 0;

  friend bool operator==(const TermCount&, const TermCount&) = default;
};

struct WeightedTerm {
  std::string term;
  double weight = 1.0;

  friend bool operator==(const WeightedTerm&, const WeightedTerm&) = default;
};

/// Immutable after build. Postings are ordered by collection position, and
/// `doc_terms` holds each document's term counts sorted by term.
class InvertedIndex {
 public:
  std::size_t doc_count() const noexcept { return doc_ids_.size(); }
  double avg_doc_length() const noexcept { return avg_doc_length_; }
  const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
  const std::vector<std::uint32_t>& doc_lengths() const noexcept { return doc_lengths_; }
  const std::vector<TermCount>& doc_terms(std::size_t doc) const { return doc_terms_[doc]; }
  std::size_t vocabulary_size() const noexcept { return postings_.size(); }

  const std::vector<Posting>& postings(const std::string& term) const {
    static const std::vector<Posting> none;
    auto it = postings_.find(term);
    return it == postings_.end() ? none : it->second;
  }

  std::optional<std::size_t> position(const std::string& doc_id) const {
    auto it = doc_pos_.find(doc_id);
    if (it == doc_pos_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t df(const std::string& term) const { return postings(term).size(); }

  double idf(const std::string& term) const {
    const double n = static_cast<double>(doc_count());
    const double df_t = static_cast<double>(df(term));
    return std::log(1.0 + (n - df_t + 0.5) / (df_t + 0.5));
  }

  friend bool operator==(const InvertedIndex&, const InvertedIndex&) = default;

  friend InvertedIndex build_index(const Corpus& corpus, const Analyzer& analyzer);

 private:
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::vector<std::string> doc_ids_;
  std::unordered_map<std::string, std::size_t> doc_pos_;
  std::vector<std::uint32_t> doc_lengths_;
  std::vector<std::vector<TermCount>> doc_terms_;
  double avg_doc_length_ = 0.0;
};

inline InvertedIndex build_index(const Corpus& corpus, const Analyzer& analyzer) {
  if (corpus.empty()) throw data_error("empty_corpus", "cannot index an empty corpus");
  InvertedIndex idx;
  idx.doc_ids_.reserve(corpus.size());
  idx.doc_lengths_.reserve(corpus.size());
  idx.doc_terms_.reserve(corpus.size());
  std::uint64_t total = 0;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto tokens = analyzer(corpus[d].text);
    std::map<std::string, std::uint32_t> counts;
    for (const auto& t : tokens) ++counts[t];
    std::vector<TermCount> terms;
    terms.reserve(counts.size());
    for (const auto& [term, tf] : counts) {
      idx.postings_[term].push_back({static_cast<std::uint32_t>(d), tf});
      terms.push_back({term, tf});
    }
    idx.doc_pos_.emplace(corpus[d].id, d);
    idx.doc_ids_.push_back(corpus[d].id);
    idx.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
    idx.doc_terms_.push_back(std::move(terms));
    total += tokens.size();
  }
  idx.avg_doc_length_ = static_cast<double>(total) / static_cast<double>(corpus.size());
  return idx;
}

/// Collapses repeated tokens into one weighted term (weight = occurrence
/// count), keeping first-occurrence order.
inline std::vector<WeightedTerm> plain_query(std::span<const std::string> tokens) {
  std::vector<WeightedTerm> q;
  std::unordered_map<std::string, std::size_t> pos;
  for (const auto& t : tokens) {
    auto [it, inserted] = pos.emplace(t, q.size());
    if (inserted) {
      q.push_back({t, 1.0});
    } else {
      q[it->second].weight += 1.0;
    }
  }
  return q;
}

/// The per-term BM25 contribution before the query weight.
inline double bm25_term_score(double idf, double tf, double doc_len, double avgdl,
                              const BM25Params& p) {
  const double norm = avgdl > 0.0 ? doc_len / avgdl : 0.0;
  return idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * norm));
}

/// Scores every document (term-at-a-time, in query order).
inline std::vector<double> bm25_score_all(const InvertedIndex& index,
                                          std::span<const WeightedTerm> query,
                                          const BM25Params& params) {
  std::vector<double> acc(index.doc_count(), 0.0);
  const auto& lengths = index.doc_lengths();
  const double avgdl = index.avg_doc_length();
  for (const auto& qt : query) {
    if (qt.weight == 0.0) continue;
    const auto& plist = index.postings(qt.term);
    if (plist.empty()) continue;
    const double idf = index.idf(qt.term);
    for (const auto& p : plist)
      acc[p.doc] += qt.weight * bm25_term_score(idf, p.tf, lengths[p.doc], avgdl, params);
  }
  return acc;
}

/// Top-k documents by (score desc, doc_id asc). Zero-score documents are
/// omitted, so an empty or fully out-of-vocabulary query yields no entries.
inline ScoredList bm25_search(const InvertedIndex& index, std::span<const WeightedTerm> query,
                              const BM25Params& params, std::size_t k,
                              std::string query_id = {}) {
  if (k == 0) throw config_error("bad_k", "k must be >= 1");
  ScoredList out;
  out.query_id = std::move(query_id);
  if (query.empty()) return out;
  out.entries = top_k(bm25_score_all(index, query, params), index.doc_ids(), k, true);
  return out;
}

}  // namespace dialret
