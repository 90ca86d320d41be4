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

// Fine-tuning of the toy bi-encoder with the in-batch cross-entropy loss
// (MultipleNegativesRankingLoss).
//
// For a batch of B contexts with aligned positives, the columns of the score
// matrix S are the B positives followed by every explicit negative in the
// batch, and S[i][j] = dot(encode(context_i), encode(column_j)).
//
//   softmax_full : J = -(1/B) sum_i [ S[i][i] - log sum_j      exp(S[i][j]) ]
//   paper_literal: J = -(1/B) sum_i [ S[i][i] - log sum_{j!=i} exp(S[i][j]) ]
//
// Optimizer: AdamW (decoupled weight decay). The learning rate warms up
// linearly over the first warmup_fraction * total_steps steps,
//   lr(t) = lr * min(1, t / warmup_steps)   for step t = 1, 2, ...
// and then stays constant.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "dialret/dense.hpp"
#include "dialret/error.hpp"
#include "dialret/eval.hpp"
#include "dialret/rng.hpp"

namespace dialret {

enum class LossVariant { softmax_full, paper_literal };

inline std::string_view to_string(LossVariant v) {
  return v == LossVariant::softmax_full ? "softmax_full" : "paper_literal";
}

inline std::optional<LossVariant> parse_loss_variant(std::string_view s) {
  if (s == "softmax_full") return LossVariant::softmax_full;
  if (s == "paper_literal") return LossVariant::paper_literal;
  return std::nullopt;
}

enum class Optimizer { adamw, sgd };

inline std::string_view to_string(Optimizer o) { return o == Optimizer::adamw ? "adamw" : "sgd"; }

inline std::optional<Optimizer> parse_optimizer(std::string_view s) {
  if (s == "adamw") return Optimizer::adamw;
  if (s == "sgd") return Optimizer::sgd;
  return std::nullopt;
}

struct TrainConfig {
  std::size_t batch_size = 5;
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  std::size_t total_steps = 10000;
  double warmup_fraction = 0.10;
  std::size_t eval_every = 100;
  std::uint64_t seed = 0;
  LossVariant loss_variant = LossVariant::softmax_full;
  Optimizer optimizer = Optimizer::adamw;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (batch_size == 0) throw config_error("bad_train_config", "batch_size must be >= 1");
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0))
      throw config_error("bad_train_config", "warmup_fraction must be in [0,1]");
    if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0))
      throw config_error("bad_train_config", "learning_rate and weight_decay must be >= 0");
    if (eval_every == 0) throw config_error("bad_train_config", "eval_every must be >= 1");
  }

  double lr_at(std::size_t step) const {
    const auto warmup = static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(total_steps)));
    if (warmup == 0 || step >= warmup) return learning_rate;
    return learning_rate * static_cast<double>(step) / static_cast<double>(warmup);
  }
};

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows = init.size();
    cols = rows ? init.begin()->size() : 0;
    for (const auto& row : init) {
      if (row.size() != cols) throw data_error("ragged_matrix", "matrix rows differ in length");
      data.insert(data.end(), row.begin(), row.end());
    }
  }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct TrainBatch {
  std::vector<std::string> contexts;
  std::vector<std::string> positives;                // aligned with contexts
  std::vector<std::vector<std::string>> negatives;   // optional, aligned when present

  std::size_t size() const noexcept { return contexts.size(); }

  void validate() const {
    if (contexts.empty()) throw data_error("empty_batch", "batch has no contexts");
    if (positives.size() != contexts.size() || (!negatives.empty() && negatives.size() != contexts.size()))
      throw data_error("misaligned_batch", "batch contexts, positives and negatives are not aligned");
  }
};

/// Token ids of a batch: one list per context and one per score column.
struct EncodedBatch {
  std::vector<std::vector<std::uint32_t>> queries;
  std::vector<std::vector<std::uint32_t>> columns;
};

inline EncodedBatch encode_batch(const ToyEncoder& enc, const TrainBatch& batch) {
  batch.validate();
  EncodedBatch eb;
  for (const auto& c : batch.contexts) eb.queries.push_back(enc.token_ids(c));
  for (const auto& p : batch.positives) eb.columns.push_back(enc.token_ids(p));
  for (const auto& negs : batch.negatives)
    for (const auto& n : negs) eb.columns.push_back(enc.token_ids(n));
  return eb;
}

namespace detail {

inline Matrix score_matrix(const std::vector<std::vector<double>>& q, const std::vector<std::vector<double>>& c) {
  Matrix s(q.size(), c.size());
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j) s(i, j) = dot(std::span<const double>(q[i]), std::span<const double>(c[j]));
  return s;
}

}  // namespace detail

inline Matrix batch_scores(const ToyEncoder& enc, const EncodedBatch& eb) {
  std::vector<std::vector<double>> q, c;
  for (const auto& ids : eb.queries) q.push_back(enc.encode_ids(ids));
  for (const auto& ids : eb.columns) c.push_back(enc.encode_ids(ids));
  return detail::score_matrix(q, c);
}

/// S[i][j] = f(context_i, column_j); columns are the positives, then all
/// explicit negatives in batch order.
inline Matrix batch_scores(const ToyEncoder& enc, const TrainBatch& batch) {
  return batch_scores(enc, encode_batch(enc, batch));
}

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;  // dJ/dS
};

/// Loss and its gradient with respect to S. Row i's positive is column i.
inline LossAndGrad mnrl_loss_and_grad(const Matrix& s, LossVariant variant) {
  if (s.cols == 0 || s.rows == 0) throw data_error("degenerate_batch", "score matrix is empty");
  if (s.cols < s.rows) throw data_error("degenerate_batch", "fewer columns than rows");
  if (variant == LossVariant::paper_literal && s.cols < 2) throw data_error("degenerate_batch", "degenerate batch");
  LossAndGrad out{0.0, Matrix(s.rows, s.cols)};
  const double inv_b = 1.0 / static_cast<double>(s.rows);
  for (std::size_t i = 0; i < s.rows; ++i) {
    const bool skip_self = variant == LossVariant::paper_literal;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < s.cols; ++j)
      if (!(skip_self && j == i)) mx = std::max(mx, s(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < s.cols; ++j)
      if (!(skip_self && j == i)) z += std::exp(s(i, j) - mx);
    const double lse = mx + std::log(z);
    out.loss += inv_b * (lse - s(i, i));
    for (std::size_t j = 0; j < s.cols; ++j) {
      double g = (skip_self && j == i) ? 0.0 : std::exp(s(i, j) - lse);
      if (j == i) g -= 1.0;
      out.grad(i, j) = inv_b * g;
    }
  }
  return out;
}

inline double mnrl_loss(const Matrix& s, LossVariant variant = LossVariant::softmax_full) {
  return mnrl_loss_and_grad(s, variant).loss;
}

/// Loss of the batch and the gradient with respect to the embedding table
/// (dense, same layout as the table).
inline double batch_loss_and_table_grad(const ToyEncoder& enc, const EncodedBatch& eb, LossVariant variant,
                                        std::vector<double>& table_grad) {
  const std::size_t d = enc.dim();
  std::vector<std::vector<double>> q, c;
  for (const auto& ids : eb.queries) q.push_back(enc.encode_ids(ids));
  for (const auto& ids : eb.columns) c.push_back(enc.encode_ids(ids));
  const auto lg = mnrl_loss_and_grad(detail::score_matrix(q, c), variant);

  table_grad.assign(enc.table().size(), 0.0);
  auto scatter = [&](const std::vector<std::uint32_t>& ids, const std::vector<double>& g) {
    if (ids.empty()) return;
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (auto id : ids)
      for (std::size_t k = 0; k < d; ++k) table_grad[id * d + k] += inv * g[k];
  };
  std::vector<double> g(d);
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t j = 0; j < c.size(); ++j)
      for (std::size_t k = 0; k < d; ++k) g[k] += lg.grad(i, j) * c[j][k];
    scatter(eb.queries[i], g);
  }
  for (std::size_t j = 0; j < c.size(); ++j) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < q.size(); ++i)
      for (std::size_t k = 0; k < d; ++k) g[k] += lg.grad(i, j) * q[i][k];
    scatter(eb.columns[j], g);
  }
  return lg.loss;
}

/// Largest relative error between the analytic table gradient and central
/// finite differences, over every parameter in a row touched by the batch.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
inline double gradient_check(const ToyEncoder& encoder, const TrainBatch& batch, LossVariant variant,
                             double epsilon) {
  if (!(epsilon > 0.0)) throw config_error("bad_epsilon", "epsilon must be > 0");
  ToyEncoder enc = encoder;
  const auto eb = encode_batch(enc, batch);
  std::vector<double> analytic;
  batch_loss_and_table_grad(enc, eb, variant, analytic);

  std::set<std::uint32_t> rows;
  for (const auto& ids : eb.queries) rows.insert(ids.begin(), ids.end());
  for (const auto& ids : eb.columns) rows.insert(ids.begin(), ids.end());

  double worst = 0.0;
  auto& table = enc.table();
  for (auto r : rows) {
    for (std::size_t k = 0; k < enc.dim(); ++k) {
      const std::size_t p = r * enc.dim() + k;
      const double saved = table[p];
      table[p] = saved + epsilon;
      const double up = mnrl_loss(batch_scores(enc, eb), variant);
      table[p] = saved - epsilon;
      const double down = mnrl_loss(batch_scores(enc, eb), variant);
      table[p] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double denom = std::max({std::fabs(analytic[p]), std::fabs(numeric), 1e-6});
      worst = std::max(worst, std::fabs(analytic[p] - numeric) / denom);
    }
  }
  return worst;
}

struct TrainExample {
  std::string context_id;
  std::string context_text;  // concatenated context
  std::string positive_text;
  std::vector<std::string> negative_texts;
};

/// One validation query: a small candidate pool containing its positive.
struct RerankQuery {
  std::string query_id;
  std::string context_text;
  std::string positive_id;
  std::vector<TextItem> candidates;
};

struct EvalPoint {
  std::size_t step = 0;
  double map = 0.0;

  friend bool operator==(const EvalPoint&, const EvalPoint&) = default;
};

struct TrainHistory {
  std::vector<double> losses;  // losses[t-1] is the loss at step t
  std::vector<EvalPoint> evals;
  std::size_t selected_step = 0;

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  ToyEncoder encoder;
  TrainHistory history;
};

/// Re-ranking MAP of `enc` on the validation queries.
inline double rerank_map(const ToyEncoder& enc, std::span<const RerankQuery> queries) {
  std::vector<RerankSet> sets;
  Qrels qrels;
  for (const auto& q : queries) {
    const auto qv = enc.encode(q.context_text);
    RerankSet s{q.query_id, {}};
    for (const auto& c : q.candidates) s.candidates.push_back({c.id, dot(std::span<const double>(qv), std::span<const double>(enc.encode(c.text)))});
    sets.push_back(std::move(s));
    qrels[q.query_id] = {q.positive_id};
  }
  return rerank_map(sets, qrels);
}

/// Trains a copy of `encoder`. Batches are consecutive slices of a per-epoch
/// shuffle of the examples; a leftover slice shorter than B is dropped. The
/// returned encoder holds the parameters of the evaluation step with the
/// highest validation MAP (earliest on ties), or the final parameters when
/// nothing was evaluated.
inline TrainResult train(const ToyEncoder& encoder, std::span<const TrainExample> examples,
                         std::span<const RerankQuery> valid, const TrainConfig& config) {
  config.validate();
  TrainResult result{encoder, {}};
  if (config.total_steps == 0) return result;
  if (examples.empty()) throw data_error("empty_training_set", "no training examples");

  ToyEncoder& enc = result.encoder;
  const std::size_t batch = std::min(config.batch_size, examples.size());
  std::vector<std::vector<std::uint32_t>> ctx_ids, pos_ids;
  std::vector<std::vector<std::vector<std::uint32_t>>> neg_ids;
  for (const auto& ex : examples) {
    ctx_ids.push_back(enc.token_ids(ex.context_text));
    pos_ids.push_back(enc.token_ids(ex.positive_text));
    std::vector<std::vector<std::uint32_t>> negs;
    for (const auto& n : ex.negative_texts) negs.push_back(enc.token_ids(n));
    neg_ids.push_back(std::move(negs));
  }

  Rng order_rng(derive_seed(config.seed, "batch-order"));
  std::vector<std::size_t> order(examples.size());
  std::size_t cursor = order.size();

  std::vector<double> grad;
  std::vector<double> m1(enc.table().size(), 0.0), m2(enc.table().size(), 0.0);
  double beta1_pow = 1.0, beta2_pow = 1.0;
  std::optional<std::vector<double>> best_table;
  double best_map = -1.0;

  auto evaluate = [&](std::size_t step) {
    if (valid.empty()) return;
    const double map = rerank_map(enc, valid);
    result.history.evals.push_back({step, map});
    if (map > best_map) {
      best_map = map;
      best_table = enc.table();
      result.history.selected_step = step;
    }
  };

  for (std::size_t step = 1; step <= config.total_steps; ++step) {
    if (cursor + batch > order.size()) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      order_rng.shuffle(order);
      cursor = 0;
    }
    EncodedBatch eb;
    for (std::size_t b = 0; b < batch; ++b) {
      const auto ex = order[cursor + b];
      eb.queries.push_back(ctx_ids[ex]);
      eb.columns.push_back(pos_ids[ex]);
    }
    for (std::size_t b = 0; b < batch; ++b)
      for (const auto& n : neg_ids[order[cursor + b]]) eb.columns.push_back(n);
    cursor += batch;

    const double loss = batch_loss_and_table_grad(enc, eb, config.loss_variant, grad);
    if (!std::isfinite(loss))
      throw numeric_error("non_finite_loss", "non-finite training loss at step " + std::to_string(step));
    result.history.losses.push_back(loss);

    const double lr = config.lr_at(step);
    beta1_pow *= config.beta1;
    beta2_pow *= config.beta2;
    auto& table = enc.table();
    if (config.optimizer == Optimizer::sgd) {
      for (std::size_t p = 0; p < table.size(); ++p) table[p] -= lr * (grad[p] + config.weight_decay * table[p]);
    } else {
      for (std::size_t p = 0; p < table.size(); ++p) {
        m1[p] = config.beta1 * m1[p] + (1.0 - config.beta1) * grad[p];
        m2[p] = config.beta2 * m2[p] + (1.0 - config.beta2) * grad[p] * grad[p];
        const double mhat = m1[p] / (1.0 - beta1_pow);
        const double vhat = m2[p] / (1.0 - beta2_pow);
        table[p] -= lr * (mhat / (std::sqrt(vhat) + config.adam_eps) + config.weight_decay * table[p]);
      }
    }

    if (step % config.eval_every == 0 || step == config.total_steps) evaluate(step);
  }
  if (best_table) {
    enc.table() = std::move(*best_table);
  } else {
    result.history.selected_step = config.total_steps;
  }
  return result;
}

/// CSV with one row per step; `map` is filled on evaluation steps.
inline void write_history_csv(std::ostream& out, const TrainHistory& h) {
  out << "step,loss,map\n";
  std::size_t e = 0;
  for (std::size_t t = 1; t <= h.losses.size(); ++t) {
    out << t << ',' << format_double(h.losses[t - 1]) << ',';
    if (e < h.evals.size() && h.evals[e].step == t) out << format_double(h.evals[e++].map);
    out << '\n';
  }
}

}  // namespace dialret
