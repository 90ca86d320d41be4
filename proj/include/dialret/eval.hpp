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

// Run files, qrels, Recall@K over the full collection, re-ranking MAP and
// the paired Student t-test with Bonferroni correction.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dialret/error.hpp"
#include "dialret/ranking.hpp"

namespace dialret {

using Qrels = std::map<std::string, std::set<std::string>>;

/// Runs keyed by query id.
using Run = std::map<std::string, ScoredList>;

/// Shortest decimal string that round-trips the double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& what, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw data_error("malformed_record", "bad " + what + " '" + s + "' (line " + std::to_string(line) + ")");
  return v;
}

inline long long parse_int(const std::string& s, const std::string& what, std::size_t line) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw data_error("malformed_record", "bad " + what + " '" + s + "' (line " + std::to_string(line) + ")");
  return v;
}

}  // namespace detail

/// 6-column TREC run lines: `qid Q0 docid rank score tag`, ranks from 1.
inline void write_run(std::ostream& out, const std::vector<ScoredList>& lists, std::string_view tag) {
  for (const auto& l : lists)
    for (std::size_t r = 0; r < l.entries.size(); ++r)
      out << l.query_id << " Q0 " << l.entries[r].doc_id << ' ' << (r + 1) << ' '
          << format_double(l.entries[r].score) << ' ' << tag << '\n';
}

inline void save_run(const std::string& path, const std::vector<ScoredList>& lists, std::string_view tag) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("io_error", "cannot write " + path);
  write_run(out, lists, tag);
}

/// Entries are ordered by the rank column.
inline Run parse_run(std::istream& in) {
  std::map<std::string, std::vector<std::pair<long long, ScoredDoc>>> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto f = detail::split_ws(line);
    if (f.empty()) continue;
    if (f.size() != 6) throw data_error("malformed_record", "run line needs 6 columns (line " + std::to_string(lineno) + ")");
    const auto rank = detail::parse_int(f[3], "rank", lineno);
    const auto score = detail::parse_double(f[4], "score", lineno);
    raw[f[0]].push_back({rank, ScoredDoc{f[2], score}});
  }
  Run run;
  for (auto& [qid, rows] : raw) {
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    ScoredList l;
    l.query_id = qid;
    for (auto& r : rows) l.entries.push_back(std::move(r.second));
    run.emplace(qid, std::move(l));
  }
  return run;
}

inline Run load_run(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("missing_file", "cannot open run " + path);
  return parse_run(in);
}

inline Run to_run(const std::vector<ScoredList>& lists) {
  Run run;
  for (const auto& l : lists) run[l.query_id] = l;
  return run;
}

/// 4-column qrels: `qid 0 docid relevance`; relevance > 0 counts as relevant.
inline Qrels parse_qrels(std::istream& in) {
  Qrels q;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto f = detail::split_ws(line);
    if (f.empty()) continue;
    if (f.size() != 4) throw data_error("malformed_record", "qrels line needs 4 columns (line " + std::to_string(lineno) + ")");
    if (detail::parse_int(f[3], "relevance", lineno) > 0) q[f[0]].insert(f[2]);
  }
  if (q.empty()) throw data_error("empty_qrels", "qrels contain no relevant documents");
  return q;
}

inline Qrels load_qrels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("missing_file", "cannot open qrels " + path);
  return parse_qrels(in);
}

inline void write_qrels(std::ostream& out, const Qrels& qrels) {
  for (const auto& [qid, docs] : qrels)
    for (const auto& d : docs) out << qid << " 0 " << d << " 1\n";
}

/// Per-query R@K indicators for each cutoff, in qrels query order.
struct EvalReport {
  std::vector<std::size_t> ks;
  std::vector<std::string> query_ids;
  std::vector<std::vector<double>> per_query;  // [k index][query index]
  std::vector<double> mean;                    // [k index]
  std::size_t n = 0;                           // candidate pool size

  const std::vector<double>& values_at(std::size_t k) const {
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (ks[i] == k) return per_query[i];
    throw config_error("bad_k", "cutoff " + std::to_string(k) + " not evaluated");
  }

  double mean_at(std::size_t k) const {
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (ks[i] == k) return mean[i];
    throw config_error("bad_k", "cutoff " + std::to_string(k) + " not evaluated");
  }
};

/// A query missing from the run contributes 0 at every cutoff.
inline EvalReport recall_at_k(const Run& run, const Qrels& qrels, std::vector<std::size_t> ks,
                              std::size_t pool_size = 0) {
  for (auto k : ks)
    if (k == 0) throw config_error("bad_k", "cutoffs must be >= 1");
  EvalReport rep;
  rep.ks = std::move(ks);
  rep.n = pool_size;
  rep.per_query.assign(rep.ks.size(), {});
  rep.mean.assign(rep.ks.size(), 0.0);
  for (const auto& [qid, relevant] : qrels) {
    rep.query_ids.push_back(qid);
    std::size_t first_hit = std::numeric_limits<std::size_t>::max();
    if (auto it = run.find(qid); it != run.end()) {
      const auto& entries = it->second.entries;
      for (std::size_t r = 0; r < entries.size(); ++r)
        if (relevant.contains(entries[r].doc_id)) {
          first_hit = r;
          break;
        }
    }
    for (std::size_t i = 0; i < rep.ks.size(); ++i)
      rep.per_query[i].push_back(first_hit < rep.ks[i] ? 1.0 : 0.0);
  }
  for (std::size_t i = 0; i < rep.ks.size(); ++i) {
    double sum = 0.0;
    for (double v : rep.per_query[i]) sum += v;
    rep.mean[i] = rep.per_query[i].empty() ? 0.0 : sum / static_cast<double>(rep.per_query[i].size());
  }
  return rep;
}

/// A small candidate pool for the re-ranking task.
struct RerankSet {
  std::string query_id;
  std::vector<ScoredDoc> candidates;
};

/// 1-based rank of `doc_id` in `candidates` under (score desc, doc_id asc).
inline std::size_t rank_of(const std::vector<ScoredDoc>& candidates, const std::string& doc_id) {
  const ScoredDoc* target = nullptr;
  for (const auto& c : candidates)
    if (c.doc_id == doc_id) target = &c;
  if (!target) return 0;
  std::size_t rank = 1;
  for (const auto& c : candidates)
    if (&c != target && ranks_before(c.score, c.doc_id, target->score, target->doc_id)) ++rank;
  return rank;
}

/// With a single relevant document MAP is the mean reciprocal rank.
inline double rerank_map(const std::vector<RerankSet>& sets, const Qrels& qrels) {
  if (sets.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : sets) {
    auto it = qrels.find(s.query_id);
    if (it == qrels.end() || it->second.size() != 1)
      throw data_error("missing_positive", "re-ranking set " + s.query_id + " has no single positive in qrels");
    const auto rank = rank_of(s.candidates, *it->second.begin());
    if (rank == 0) throw data_error("missing_positive", "re-ranking set " + s.query_id + " lacks its positive");
    sum += 1.0 / static_cast<double>(rank);
  }
  return sum / static_cast<double>(sets.size());
}

// ---------------------------------------------------------------------------
// Student t distribution.
//
// The two-sided tail is P(|T| >= t) = I_x(df/2, 1/2) with x = df/(df + t^2),
// where I is the regularized incomplete beta function. I_x(a,b) is evaluated
// with the modified Lentz continued fraction, using the symmetry
// I_x(a,b) = 1 - I_{1-x}(b,a) when x > (a+1)/(a+b+2). The fraction stops once
// a step changes the value by less than 1e-15 relative.

inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);

  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  double f = 1.0;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  f = d;
  for (int m = 1; m <= 10000; ++m) {
    const double mm = m;
    // even step
    double num = mm * (b - mm) * x / ((a + 2.0 * mm - 1.0) * (a + 2.0 * mm));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    f *= d * c;
    // odd step
    num = -(a + mm) * (a + b + mm) * x / ((a + 2.0 * mm) * (a + 2.0 * mm + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::fabs(delta - 1.0) < eps) break;
  }
  return std::exp(log_front) * f / a;
}

/// P(T <= t) for Student's t with `df` degrees of freedom.
inline double student_t_cdf(double t, double df) {
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t >= 0 ? 1.0 - tail : tail;
}

/// Two-sided p value.
inline double student_t_two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

struct SignificanceResult {
  std::string system_a;
  std::string system_b;
  std::string metric;
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  double adjusted_alpha = 0.05;
  bool significant = false;
};

/// Paired two-sided t-test on per-query differences a - b. The significance
/// level is divided by `num_comparisons` (Bonferroni).
inline SignificanceResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b,
                                       double alpha = 0.05, std::size_t num_comparisons = 1) {
  if (a.size() != b.size()) throw data_error("length_mismatch", "paired samples differ in length");
  if (a.size() < 2) throw data_error("too_few_samples", "paired t-test needs at least 2 queries");
  if (num_comparisons == 0) throw config_error("bad_comparisons", "num_comparisons must be >= 1");
  SignificanceResult r;
  r.adjusted_alpha = alpha / static_cast<double>(num_comparisons);
  const auto n = static_cast<double>(a.size());
  r.df = n - 1.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  bool all_zero = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) all_zero = false;
    ss += (d - mean) * (d - mean);
  }
  if (all_zero) {
    r.t = 0.0;
    r.p = 1.0;
    r.significant = false;
    return r;
  }
  const double sd = std::sqrt(ss / r.df);
  if (sd == 0.0) {
    r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
  } else {
    r.t = mean / (sd / std::sqrt(n));
    r.p = student_t_two_sided_p(r.t, r.df);
  }
  r.significant = r.p < r.adjusted_alpha;
  return r;
}

}  // namespace dialret
