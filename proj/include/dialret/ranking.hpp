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

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

namespace dialret {

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;

  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// A ranking for one query, ordered by (score desc, doc_id asc).
struct ScoredList {
  std::string query_id;
  std::vector<ScoredDoc> entries;

  friend bool operator==(const ScoredList&, const ScoredList&) = default;
};

/// The declared total order on ranked entries.
inline bool ranks_before(double score_a, const std::string& id_a, double score_b,
                         const std::string& id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

/// Selects the top-k of `scores` (indexed like `ids`). With `drop_zero`,
/// documents scoring <= 0 are left out.
inline std::vector<ScoredDoc> top_k(const std::vector<double>& scores,
                                    const std::vector<std::string>& ids, std::size_t k,
                                    bool drop_zero) {
  std::vector<std::size_t> cand;
  cand.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!drop_zero || scores[i] > 0.0) cand.push_back(i);
  auto cmp = [&](std::size_t a, std::size_t b) {
    return ranks_before(scores[a], ids[a], scores[b], ids[b]);
  };
  const std::size_t take = std::min(k, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(), cmp);
  std::vector<ScoredDoc> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({ids[cand[i]], scores[cand[i]]});
  return out;
}

}  // namespace dialret
