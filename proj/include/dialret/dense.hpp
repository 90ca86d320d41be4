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

// Dense bi-encoder retrieval: embedding stores, the "DEMB" file format,
// exhaustive dot-product search and a trainable mean-pooling toy encoder.
//
// DEMB layout (all integers little-endian):
//   "DEMB" | u32 version=1 | u32 dim | u64 count | u32 len + provenance bytes
//   then count x ( u32 len + id bytes | dim x f32 )

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dialret/error.hpp"
#include "dialret/ranking.hpp"
#include "dialret/rng.hpp"
#include "dialret/text.hpp"

namespace dialret {

/// Dot product accumulated in double. Throws on dimension mismatch.
template <typename A, typename B>
double dot(std::span<const A> u, std::span<const B> r) {
  if (u.size() != r.size())
    throw data_error("dim_mismatch", "dimension mismatch: " + std::to_string(u.size()) + " vs " + std::to_string(r.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += static_cast<double>(u[i]) * static_cast<double>(r[i]);
  return s;
}

inline double score(std::span<const double> u, std::span<const double> r) { return dot(u, r); }

/// Fixed-dimension float vectors keyed by unique id, in insertion order.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(std::uint32_t dim, std::string provenance) : dim_(dim), provenance_(std::move(provenance)) {}

  template <typename T>
  void add(std::string id, std::span<const T> values) {
    if (values.size() != dim_)
      throw data_error("dim_mismatch", "vector for " + id + " has dimension " + std::to_string(values.size()) +
                                           ", store has " + std::to_string(dim_));
    for (auto v : values)
      if (!std::isfinite(static_cast<double>(v))) throw data_error("non_finite", "vector for " + id + " is not finite");
    auto [it, inserted] = pos_.emplace(id, ids_.size());
    if (!inserted) throw data_error("duplicate_id", "duplicate embedding id " + id);
    ids_.push_back(std::move(id));
    for (auto v : values) data_.push_back(static_cast<float>(v));
  }

  template <typename T>
  void add(std::string id, const std::vector<T>& values) {
    add(std::move(id), std::span<const T>(values));
  }

  std::uint32_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  const std::string& provenance() const noexcept { return provenance_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  std::span<const float> vector(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  std::span<const float> find(std::string_view id) const {
    auto it = pos_.find(std::string(id));
    if (it == pos_.end()) return {};
    return vector(it->second);
  }

  bool contains(std::string_view id) const { return pos_.contains(std::string(id)); }

  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
    return a.dim_ == b.dim_ && a.provenance_ == b.provenance_ && a.ids_ == b.ids_ && a.data_ == b.data_;
  }

 private:
  std::uint32_t dim_ = 0;
  std::string provenance_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> pos_;
  std::vector<float> data_;
};

/// Exhaustive top-k by (dot desc, doc_id asc). Zero scores are kept.
template <typename T>
ScoredList dense_search(const EmbeddingStore& store, std::span<const T> query, std::size_t k,
                        std::string query_id = {}) {
  if (store.empty()) throw data_error("empty_store", "cannot search an empty embedding store");
  if (query.size() != store.dim())
    throw data_error("dim_mismatch", "query dimension " + std::to_string(query.size()) + " vs store " + std::to_string(store.dim()));
  if (k == 0) throw config_error("bad_k", "k must be >= 1");
  std::vector<double> scores(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) scores[i] = dot(query, store.vector(i));
  return ScoredList{std::move(query_id), top_k(scores, store.ids(), k, false)};
}

template <typename T>
ScoredList dense_search(const EmbeddingStore& store, const std::vector<T>& query, std::size_t k,
                        std::string query_id = {}) {
  return dense_search(store, std::span<const T>(query), k, std::move(query_id));
}

namespace detail {

inline constexpr char kDembMagic[4] = {'D', 'E', 'M', 'B'};
inline constexpr std::uint32_t kDembVersion = 1;

template <typename U>
void put_le(std::ostream& out, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U)))
    throw data_error("truncated_file", std::string("embedding file truncated while reading ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

inline void put_string(std::ostream& out, std::string_view s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, const char* what) {
  const auto len = get_le<std::uint32_t>(in, what);
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), len))
    throw data_error("truncated_file", std::string("embedding file truncated while reading ") + what);
  return s;
}

}  // namespace detail

inline void write_embeddings(std::ostream& out, const EmbeddingStore& store) {
  out.write(detail::kDembMagic, 4);
  detail::put_le<std::uint32_t>(out, detail::kDembVersion);
  detail::put_le<std::uint32_t>(out, store.dim());
  detail::put_le<std::uint64_t>(out, store.size());
  detail::put_string(out, store.provenance());
  for (std::size_t i = 0; i < store.size(); ++i) {
    detail::put_string(out, store.ids()[i]);
    for (float f : store.vector(i)) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
}

inline EmbeddingStore read_embeddings(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw data_error("truncated_file", "embedding file truncated while reading magic");
  if (std::memcmp(magic, detail::kDembMagic, 4) != 0) throw data_error("bad_magic", "not a DEMB embedding file");
  const auto version = detail::get_le<std::uint32_t>(in, "version");
  if (version != detail::kDembVersion)
    throw data_error("bad_version", "unsupported DEMB version " + std::to_string(version));
  const auto dim = detail::get_le<std::uint32_t>(in, "dim");
  const auto count = detail::get_le<std::uint64_t>(in, "count");
  EmbeddingStore store(dim, detail::get_string(in, "provenance"));
  std::vector<float> values(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    auto id = detail::get_string(in, "record id");
    for (auto& f : values) f = std::bit_cast<float>(detail::get_le<std::uint32_t>(in, "vector"));
    store.add(std::move(id), std::span<const float>(values));
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw data_error("count_mismatch", "embedding file holds more records than its header count " + std::to_string(count));
  return store;
}

inline void save_embeddings(const EmbeddingStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("io_error", "cannot write " + path);
  write_embeddings(out, store);
}

inline EmbeddingStore load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("missing_file", "cannot open embedding file " + path);
  return read_embeddings(in);
}

/// Bag-of-tokens encoder: a text is the mean of its known tokens' rows.
/// Unknown tokens are skipped; a text with no known token encodes to zero.
class ToyEncoder {
 public:
  ToyEncoder() = default;

  /// Vocabulary in the given order; rows start at zero.
  ToyEncoder(std::vector<std::string> vocab, std::size_t dim) : vocab_(std::move(vocab)), dim_(dim) {
    for (std::size_t i = 0; i < vocab_.size(); ++i)
      if (!index_.emplace(vocab_[i], i).second) throw data_error("duplicate_id", "duplicate vocab token " + vocab_[i]);
    table_.assign(vocab_.size() * dim_, 0.0);
  }

  /// Sorted unique encoder tokens of `texts`.
  static std::vector<std::string> build_vocab(std::span<const std::string> texts) {
    std::vector<std::string> v;
    for (const auto& t : texts)
      for (auto& tok : encoder_tokenize(t)) v.push_back(std::move(tok));
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }

  /// Entries drawn i.i.d. from N(0, scale^2).
  void init_normal(std::uint64_t seed, double scale) {
    Rng rng(seed);
    for (auto& w : table_) w = scale * rng.normal();
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t vocab_size() const noexcept { return vocab_.size(); }
  const std::vector<std::string>& vocab() const noexcept { return vocab_; }
  std::vector<double>& table() noexcept { return table_; }
  const std::vector<double>& table() const noexcept { return table_; }

  std::span<const double> row(std::size_t i) const { return {table_.data() + i * dim_, dim_}; }
  std::span<double> row(std::size_t i) { return {table_.data() + i * dim_, dim_}; }

  /// Row indices of the known tokens of `text`, in order.
  std::vector<std::uint32_t> token_ids(std::string_view text) const {
    std::vector<std::uint32_t> ids;
    for (const auto& tok : encoder_tokenize(text)) {
      auto it = index_.find(tok);
      if (it != index_.end()) ids.push_back(static_cast<std::uint32_t>(it->second));
    }
    return ids;
  }

  std::vector<double> encode_ids(std::span<const std::uint32_t> ids) const {
    std::vector<double> out(dim_, 0.0);
    if (ids.empty()) return out;
    for (auto id : ids) {
      const auto r = row(id);
      for (std::size_t c = 0; c < dim_; ++c) out[c] += r[c];
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (auto& v : out) v *= inv;
    return out;
  }

  std::vector<double> encode(std::string_view text) const { return encode_ids(token_ids(text)); }

  friend bool operator==(const ToyEncoder& a, const ToyEncoder& b) {
    return a.vocab_ == b.vocab_ && a.dim_ == b.dim_ && a.table_ == b.table_;
  }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t dim_ = 0;
  std::vector<double> table_;
};

inline std::vector<double> encode(const ToyEncoder& enc, std::string_view text) { return enc.encode(text); }

struct TextItem {
  std::string id;
  std::string text;
};

inline EmbeddingStore encode_store(const ToyEncoder& enc, std::span<const TextItem> items, std::string provenance) {
  EmbeddingStore store(static_cast<std::uint32_t>(enc.dim()), std::move(provenance));
  for (const auto& it : items) store.add(it.id, enc.encode(it.text));
  return store;
}

/// Checkpoint = DEMB file whose ids are the vocabulary tokens (row order) and
/// a vocab listing with one token per line. Rows are stored as float32.
inline void save_checkpoint(const ToyEncoder& enc, const std::string& path_prefix, const std::string& tag) {
  EmbeddingStore store(static_cast<std::uint32_t>(enc.dim()), "toy-encoder:" + tag);
  for (std::size_t i = 0; i < enc.vocab_size(); ++i) store.add(enc.vocab()[i], enc.row(i));
  save_embeddings(store, path_prefix + ".demb");
  std::ofstream vocab(path_prefix + ".vocab", std::ios::binary);
  if (!vocab) throw data_error("io_error", "cannot write " + path_prefix + ".vocab");
  for (const auto& t : enc.vocab()) vocab << t << '\n';
}

inline ToyEncoder load_checkpoint(const std::string& path_prefix) {
  const auto store = load_embeddings(path_prefix + ".demb");
  std::ifstream vocab_in(path_prefix + ".vocab", std::ios::binary);
  if (!vocab_in) throw data_error("missing_file", "cannot open " + path_prefix + ".vocab");
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(vocab_in, line)) vocab.push_back(line);
  if (vocab != store.ids()) throw data_error("vocab_mismatch", "checkpoint vocab listing disagrees with embedding ids");
  ToyEncoder enc(vocab, store.dim());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto src = store.vector(i);
    auto dst = enc.row(i);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c];
  }
  return enc;
}

}  // namespace dialret
