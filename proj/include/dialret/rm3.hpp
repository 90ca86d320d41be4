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

// RM3 pseudo-relevance feedback for dialogue contexts.
//
// First pass: BM25 with the analyzed context, depth fb_docs. Feedback
// documents are weighted by their first-pass scores normalized to sum 1.
// Relevance model: p(t) = sum_d w_d * tf(t,d) / |d|, truncated to the
// fb_terms heaviest terms (ties by term) and renormalized. Final query:
// alpha * p_orig(t) + (1 - alpha) * p(t), where p_orig is the context's
// term-frequency distribution; the second pass is BM25 with those weights.

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dialret/error.hpp"
#include "dialret/eval.hpp"
#include "dialret/sparse.hpp"

namespace dialret {

struct RM3Params {
  std::size_t fb_docs = 10;
  std::size_t fb_terms = 10;
  double orig_weight = 0.5;  // alpha

  void validate() const {
    if (fb_docs == 0) throw config_error("bad_rm3", "fb_docs must be >= 1");
    if (fb_terms == 0) throw config_error("bad_rm3", "fb_terms must be >= 1");
    if (!(orig_weight >= 0.0 && orig_weight <= 1.0)) throw config_error("bad_rm3", "alpha must be in [0,1]");
  }
};

/// Sorted by weight descending, ties by term ascending; weights sum to 1.
inline std::vector<WeightedTerm> build_relevance_model(const InvertedIndex& index,
                                                       const ScoredList& first_pass,
                                                       std::size_t fb_docs, std::size_t fb_terms) {
  if (first_pass.entries.empty()) throw data_error("empty_first_pass", "relevance model needs feedback documents");
  const std::size_t depth = std::min(fb_docs, first_pass.entries.size());
  double score_sum = 0.0;
  for (std::size_t i = 0; i < depth; ++i) score_sum += first_pass.entries[i].score;

  std::map<std::string, double> weights;
  for (std::size_t i = 0; i < depth; ++i) {
    const auto& entry = first_pass.entries[i];
    const auto pos = index.position(entry.doc_id);
    if (!pos) throw data_error("unknown_doc", "feedback document " + entry.doc_id + " not in index");
    const double len = index.doc_lengths()[*pos];
    if (len == 0.0) continue;
    const double doc_weight = score_sum > 0.0 ? entry.score / score_sum : 1.0 / static_cast<double>(depth);
    for (const auto& tc : index.doc_terms(*pos)) weights[tc.term] += doc_weight * tc.tf / len;
  }

  std::vector<WeightedTerm> model;
  model.reserve(weights.size());
  for (auto& [term, w] : weights) model.push_back({term, w});
  std::stable_sort(model.begin(), model.end(),
                   [](const WeightedTerm& a, const WeightedTerm& b) { return a.weight > b.weight; });
  if (model.size() > fb_terms) model.resize(fb_terms);
  double total = 0.0;
  for (const auto& t : model) total += t.weight;
  for (auto& t : model) t.weight /= total;
  return model;
}

/// Term-frequency distribution of the context tokens, first-occurrence order.
inline std::vector<WeightedTerm> original_query_model(std::span<const std::string> tokens) {
  auto q = plain_query(tokens);
  for (auto& t : q) t.weight /= static_cast<double>(tokens.size());
  return q;
}

/// Interpolated query: original terms first, then new feedback terms in
/// model order. Zero-weight terms are dropped.
inline std::vector<WeightedTerm> interpolate_query(std::span<const WeightedTerm> original,
                                                   std::span<const WeightedTerm> model, double alpha) {
  std::vector<WeightedTerm> out;
  std::unordered_map<std::string, std::size_t> pos;
  for (const auto& t : original) {
    pos.emplace(t.term, out.size());
    out.push_back({t.term, alpha * t.weight});
  }
  for (const auto& t : model) {
    const double w = (1.0 - alpha) * t.weight;
    auto [it, inserted] = pos.emplace(t.term, out.size());
    if (inserted) {
      out.push_back({t.term, w});
    } else {
      out[it->second].weight += w;
    }
  }
  std::erase_if(out, [](const WeightedTerm& t) { return !(t.weight > 0.0); });
  return out;
}

/// Expanded query for a context. Returns the plain normalized query when the
/// first pass retrieves nothing.
inline std::vector<WeightedTerm> rm3_expand(const InvertedIndex& index, std::span<const std::string> tokens,
                                            const RM3Params& params, const BM25Params& bm25 = {}) {
  params.validate();
  auto original = original_query_model(tokens);
  if (original.empty()) return original;
  const auto first = bm25_search(index, plain_query(tokens), bm25, params.fb_docs);
  if (first.entries.empty()) return original;
  const auto model = build_relevance_model(index, first, params.fb_docs, params.fb_terms);
  return interpolate_query(original, model, params.orig_weight);
}

/// An empty first pass leaves the query unexpanded, so the result equals
/// plain BM25 (which is then empty as well).
inline ScoredList rm3_search(const InvertedIndex& index, std::span<const std::string> tokens,
                             const RM3Params& params, std::size_t k, const BM25Params& bm25 = {},
                             std::string query_id = {}) {
  return bm25_search(index, rm3_expand(index, tokens, params, bm25), bm25, k, std::move(query_id));
}

struct RM3Grid {
  std::vector<std::size_t> fb_docs{5, 10, 20};
  std::vector<std::size_t> fb_terms{5, 10, 20};
  std::vector<double> alphas{0.3, 0.5, 0.7, 0.9};
};

struct SweepRow {
  RM3Params params;
  double recall_at_1 = 0.0;
  double recall_at_10 = 0.0;
};

struct AnalyzedQuery {
  std::string id;
  std::vector<std::string> tokens;
};

/// Evaluates every grid point in (fb_docs, fb_terms, alpha) lexicographic order.
inline std::vector<SweepRow> rm3_sweep(const InvertedIndex& index, const std::vector<AnalyzedQuery>& queries,
                                       const Qrels& qrels, const RM3Grid& grid, const BM25Params& bm25 = {}) {
  std::vector<SweepRow> rows;
  for (auto docs : grid.fb_docs)
    for (auto terms : grid.fb_terms)
      for (auto alpha : grid.alphas) {
        RM3Params p{docs, terms, alpha};
        Run run;
        for (const auto& q : queries) run[q.id] = rm3_search(index, q.tokens, p, 10, bm25, q.id);
        const auto rep = recall_at_k(run, qrels, {1, 10}, index.doc_count());
        rows.push_back({p, rep.mean[0], rep.mean[1]});
      }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "fb_docs,fb_terms,alpha,R@1,R@10\n";
  for (const auto& r : rows)
    out << r.params.fb_docs << ',' << r.params.fb_terms << ',' << format_double(r.params.orig_weight) << ','
        << format_double(r.recall_at_1) << ',' << format_double(r.recall_at_10) << '\n';
}

}  // namespace dialret
