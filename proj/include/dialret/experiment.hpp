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

// Building blocks shared by the pipeline and the command line: queries and
// qrels from a split, sparse and dense retrievers, re-ranking validation sets
// and training examples.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dialret/corpus.hpp"
#include "dialret/dense.hpp"
#include "dialret/eval.hpp"
#include "dialret/negatives.hpp"
#include "dialret/rm3.hpp"
#include "dialret/sparse.hpp"
#include "dialret/trainer.hpp"

namespace dialret {

/// Context text for lexical retrieval: utterances joined by spaces, without
/// the turn separators.
inline std::string sparse_query_text(const DialogueContext& ctx) {
  std::string out;
  for (const auto& u : ctx.utterances) {
    if (!out.empty()) out += ' ';
    out += u.text;
  }
  return out;
}

inline Qrels split_qrels(const SplitData& data) {
  Qrels q;
  for (const auto& p : data.pairs) q[p.context_id].insert(p.positive_response_id);
  return q;
}

inline const std::string& positive_of(const SplitData& data, std::string_view context_id) {
  for (const auto& p : data.pairs)
    if (p.context_id == context_id) return p.positive_response_id;
  throw data_error("unpaired_context", "context " + std::string(context_id) + " has no positive");
}

inline const std::string& text_of(const Corpus& collection, std::string_view id) {
  const auto* doc = collection.find(id);
  if (!doc) throw data_error("dangling_reference", "response " + std::string(id) + " is not in the collection");
  return doc->text;
}

inline std::vector<AnalyzedQuery> analyzed_queries(const SplitData& data, const Analyzer& analyzer) {
  std::vector<AnalyzedQuery> out;
  for (const auto& c : data.contexts) out.push_back({c.id, analyzer(sparse_query_text(c))});
  return out;
}

inline std::vector<ScoredList> sparse_runs(const InvertedIndex& index, std::span<const AnalyzedQuery> queries,
                                           const BM25Params& params, std::size_t k) {
  std::vector<ScoredList> out;
  for (const auto& q : queries) {
    const auto terms = plain_query(q.tokens);
    out.push_back(bm25_search(index, terms, params, k, q.id));
  }
  return out;
}

inline std::vector<ScoredList> rm3_runs(const InvertedIndex& index, std::span<const AnalyzedQuery> queries,
                                        const RM3Params& rm3, const BM25Params& params, std::size_t k) {
  std::vector<ScoredList> out;
  for (const auto& q : queries) out.push_back(rm3_search(index, q.tokens, rm3, k, params, q.id));
  return out;
}

/// Vocabulary over every context and response in the dataset.
inline ToyEncoder init_encoder(const Dataset& ds, std::size_t dim, double scale, std::uint64_t seed) {
  std::vector<std::string> texts;
  for (const auto& r : ds.responses.docs()) texts.push_back(r.text);
  for (const auto& [_, data] : ds.splits)
    for (const auto& c : data.contexts) texts.push_back(concat_context(c));
  ToyEncoder enc(ToyEncoder::build_vocab(texts), dim);
  enc.init_normal(seed, scale);
  return enc;
}

inline EmbeddingStore encode_responses(const ToyEncoder& enc, const Corpus& responses, std::string provenance) {
  std::vector<TextItem> items;
  items.reserve(responses.size());
  for (const auto& r : responses.docs()) items.push_back({r.id, r.text});
  return encode_store(enc, items, std::move(provenance));
}

inline std::vector<ScoredList> dense_runs(const ToyEncoder& enc, const EmbeddingStore& responses,
                                          const SplitData& data, std::size_t k) {
  std::vector<ScoredList> out;
  for (const auto& c : data.contexts) out.push_back(dense_search(responses, enc.encode(concat_context(c)), k, c.id));
  return out;
}

/// Zero-shot runs from precomputed context and response embeddings.
inline std::vector<ScoredList> dense_runs(const EmbeddingStore& contexts, const EmbeddingStore& responses,
                                          const SplitData& data, std::size_t k) {
  if (contexts.dim() != responses.dim())
    throw data_error("dim_mismatch", "context and response embeddings differ in dimension");
  std::vector<ScoredList> out;
  for (const auto& c : data.contexts) {
    if (!contexts.contains(c.id)) throw data_error("missing_embedding", "no embedding for context " + c.id);
    out.push_back(dense_search(responses, contexts.find(c.id), k, c.id));
  }
  return out;
}

struct SparseRetriever {
  const InvertedIndex* index;
  const Analyzer* analyzer;
  BM25Params params;

  ScoredList operator()(const DialogueContext& ctx, std::size_t k) const {
    const auto tokens = (*analyzer)(sparse_query_text(ctx));
    const auto terms = plain_query(tokens);
    return bm25_search(*index, terms, params, k, ctx.id);
  }
};

struct DenseRetriever {
  const ToyEncoder* encoder;
  const EmbeddingStore* responses;

  ScoredList operator()(const DialogueContext& ctx, std::size_t k) const {
    return dense_search(*responses, encoder->encode(concat_context(ctx)), k, ctx.id);
  }
};

template <typename Retriever>
std::vector<NegativeSet> mine_negatives(const SplitData& data, const Corpus& collection, const SamplerSpec& spec,
                                        Retriever&& retriever) {
  spec.validate(collection.size());
  std::vector<NegativeSet> out;
  out.reserve(data.pairs.size());
  for (const auto& c : data.contexts) out.push_back(sample_negatives(spec, c, positive_of(data, c.id), retriever, collection));
  return out;
}

/// Positive plus the negatives `spec` draws for each context. With the
/// default random spec this is positive plus `size - 1` random negatives.
template <typename Retriever>
std::vector<RerankQuery> rerank_queries(const SplitData& data, const Corpus& collection, const SamplerSpec& spec,
                                        Retriever&& retriever) {
  std::vector<RerankQuery> out;
  for (const auto& c : data.contexts) {
    const auto& pos = positive_of(data, c.id);
    RerankQuery q{c.id, concat_context(c), pos, {{pos, text_of(collection, pos)}}};
    for (const auto& id : sample_negatives(spec, c, pos, retriever, collection).negative_ids)
      q.candidates.push_back({id, text_of(collection, id)});
    out.push_back(std::move(q));
  }
  return out;
}

inline std::vector<RerankQuery> rerank_queries(const SplitData& data, const Corpus& collection, std::uint64_t seed,
                                               std::size_t size = 10) {
  if (size < 2) throw config_error("bad_rerank_size", "re-ranking sets need at least 2 candidates");
  const SamplerSpec spec{SamplerKind::random, size - 1, size - 1, size - 1, seed};
  return rerank_queries(data, collection, spec, [](const DialogueContext&, std::size_t) { return ScoredList{}; });
}

inline std::vector<TrainExample> train_examples(const SplitData& data, const Corpus& collection,
                                                std::span<const NegativeSet> negatives) {
  std::unordered_map<std::string, const NegativeSet*> by_ctx;
  for (const auto& n : negatives) by_ctx.emplace(n.context_id, &n);
  std::vector<TrainExample> out;
  for (const auto& c : data.contexts) {
    const auto& pos = positive_of(data, c.id);
    TrainExample ex{c.id, concat_context(c), text_of(collection, pos), {}};
    if (auto it = by_ctx.find(c.id); it != by_ctx.end())
      for (const auto& id : it->second->negative_ids) ex.negative_texts.push_back(text_of(collection, id));
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace dialret
