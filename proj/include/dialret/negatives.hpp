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

// Negative sampling for bi-encoder training.
//
// random     uniform without replacement over the collection minus the
//            positive; seeded per context from (seed, context id).
// sparse_top
// dense_top  the retriever's top-n after removing the positive.
// denoised   the retriever's top-k after removing the positive, keep the
//            bottom window (ranks k-m+1..k), then the first n of it.
//
// Retrieval-based samplers ask for one extra document so the positive can be
// removed without shrinking the list. When a ranking comes back short the
// window is taken from the bottom of what was returned, and any remaining
// slots are filled with random negatives.

#include <algorithm>
#include <cstdint>
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
#include "dialret/ranking.hpp"
#include "dialret/rng.hpp"

namespace dialret {

enum class SamplerKind { random, sparse_top, dense_top, denoised };

inline std::string_view to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::random: return "random";
    case SamplerKind::sparse_top: return "sparse_top";
    case SamplerKind::dense_top: return "dense_top";
    case SamplerKind::denoised: return "denoised";
  }
  return "random";
}

inline std::optional<SamplerKind> parse_sampler_kind(std::string_view s) {
  if (s == "random") return SamplerKind::random;
  if (s == "sparse_top") return SamplerKind::sparse_top;
  if (s == "dense_top") return SamplerKind::dense_top;
  if (s == "denoised") return SamplerKind::denoised;
  return std::nullopt;
}

struct SamplerSpec {
  SamplerKind kind = SamplerKind::random;
  std::size_t n = 10;
  std::size_t depth = 100;  // k, denoised only
  std::size_t window = 10;  // m, denoised only
  std::uint64_t seed = 0;

  void validate(std::size_t collection_size) const {
    if (n == 0) throw config_error("bad_sampler", "n must be >= 1");
    if (n >= collection_size)
      throw data_error("insufficient_candidates", "need n < collection size (n=" + std::to_string(n) +
                                                      ", collection=" + std::to_string(collection_size) + ")");
    if (kind == SamplerKind::denoised) {
      if (window > depth) throw config_error("bad_sampler", "window m must be <= depth k");
      if (n > window) throw config_error("bad_sampler", "n must be <= window m for denoised sampling");
    }
  }

  std::string tag() const {
    std::string t(to_string(kind));
    if (kind == SamplerKind::denoised) t += ":k" + std::to_string(depth) + ":m" + std::to_string(window);
    return t;
  }
};

struct NegativeSet {
  std::string context_id;
  std::vector<std::string> negative_ids;
  std::string sampler_tag;

  friend bool operator==(const NegativeSet&, const NegativeSet&) = default;
};

namespace detail {

/// Appends uniformly drawn collection ids until `out` holds `n`, skipping the
/// positive and anything already taken.
inline void fill_random(std::vector<std::string>& out, std::size_t n, const Corpus& collection,
                        const std::string& positive_id, std::uint64_t seed) {
  std::unordered_set<std::string> taken(out.begin(), out.end());
  taken.insert(positive_id);
  std::vector<std::size_t> pool;
  pool.reserve(collection.size());
  for (std::size_t i = 0; i < collection.size(); ++i)
    if (!taken.contains(collection[i].id)) pool.push_back(i);
  Rng rng(seed);
  // partial Fisher-Yates
  for (std::size_t i = 0; i < pool.size() && out.size() < n; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
    out.push_back(collection[pool[i]].id);
  }
  if (out.size() < n) throw data_error("insufficient_candidates", "not enough candidates for " + std::to_string(n) + " negatives");
}

}  // namespace detail

/// `retriever(ctx, k)` must return a ScoredList of up to k collection ids.
template <typename Retriever>
NegativeSet sample_negatives(const SamplerSpec& spec, const DialogueContext& ctx, const std::string& positive_id,
                             Retriever&& retriever, const Corpus& collection) {
  spec.validate(collection.size());
  NegativeSet out{ctx.id, {}, spec.tag()};
  const auto seed = derive_seed(spec.seed, ctx.id);
  if (spec.kind == SamplerKind::random) {
    detail::fill_random(out.negative_ids, spec.n, collection, positive_id, seed);
    return out;
  }

  const std::size_t depth = spec.kind == SamplerKind::denoised ? spec.depth : spec.n;
  const ScoredList ranking = retriever(ctx, depth + 1);
  std::vector<std::string> ranked;
  ranked.reserve(depth);
  for (const auto& e : ranking.entries) {
    if (e.doc_id == positive_id) continue;
    if (ranked.size() == depth) break;
    ranked.push_back(e.doc_id);
  }
  if (spec.kind == SamplerKind::denoised) {
    const std::size_t m = std::min(spec.window, ranked.size());
    ranked.erase(ranked.begin(), ranked.end() - static_cast<std::ptrdiff_t>(m));
  }
  if (ranked.size() > spec.n) ranked.resize(spec.n);
  out.negative_ids = std::move(ranked);
  if (out.negative_ids.size() < spec.n) detail::fill_random(out.negative_ids, spec.n, collection, positive_id, seed);
  return out;
}

/// Acceptable responses per positive id (e.g. planted duplicates).
using EquivalenceMap = std::unordered_map<std::string, std::set<std::string>>;

/// Fraction of all sampled negatives that are acceptable for their context.
/// `positive_of` maps context id to its positive response id.
inline double false_negative_rate(std::span<const NegativeSet> negsets,
                                  const std::unordered_map<std::string, std::string>& positive_of,
                                  const EquivalenceMap& equivalence) {
  std::size_t total = 0;
  std::size_t hits = 0;
  for (const auto& ns : negsets) {
    total += ns.negative_ids.size();
    auto p = positive_of.find(ns.context_id);
    if (p == positive_of.end()) continue;
    auto eq = equivalence.find(p->second);
    if (eq == equivalence.end()) continue;
    for (const auto& id : ns.negative_ids)
      if (eq->second.contains(id)) ++hits;
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

inline void write_negatives(std::ostream& out, std::span<const NegativeSet> sets) {
  for (const auto& s : sets) {
    nlohmann::ordered_json j;
    j["context_id"] = s.context_id;
    j["negative_ids"] = s.negative_ids;
    j["sampler_tag"] = s.sampler_tag;
    out << j.dump() << '\n';
  }
}

inline std::vector<NegativeSet> parse_negatives(std::istream& in) {
  std::vector<NegativeSet> out;
  std::string line;
  std::size_t lineno = 0;
  using vt = nlohmann::json::value_t;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw data_error("malformed_record", std::string("invalid JSON: ") + e.what() + detail::at_line(lineno));
    }
    NegativeSet s;
    s.context_id = detail::require_field(j, "context_id", vt::string, lineno).get<std::string>();
    for (const auto& id : detail::require_field(j, "negative_ids", vt::array, lineno)) {
      if (!id.is_string()) throw data_error("malformed_record", "negative id is not a string" + detail::at_line(lineno));
      s.negative_ids.push_back(id.get<std::string>());
    }
    s.sampler_tag = detail::require_field(j, "sampler_tag", vt::string, lineno).get<std::string>();
    out.push_back(std::move(s));
  }
  return out;
}

inline void save_negatives(const std::string& path, std::span<const NegativeSet> sets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("io_error", "cannot write " + path);
  write_negatives(out, sets);
}

inline std::vector<NegativeSet> load_negatives(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("missing_file", "cannot open negatives file " + path);
  return parse_negatives(in);
}

}  // namespace dialret
