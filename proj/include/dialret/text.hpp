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
#include <cctype>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dialret/error.hpp"
#include "dialret/porter.hpp"

namespace dialret {

namespace detail {

inline bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

inline bool is_ascii_lower_alpha(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

}  // namespace detail

/// Splits on every byte that is not an ASCII letter/digit. Bytes >= 0x80 are
/// kept as word characters so UTF-8 words survive intact.
inline std::vector<std::string> split_words(std::string_view text, bool lowercase) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (detail::is_word_byte(c)) {
      cur.push_back(lowercase && c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Surface tokenizer for corpus statistics: lowercase, split on
/// non-alphanumerics, no stemming, no stopwords.
inline std::vector<std::string> stats_tokenize(std::string_view text) {
  return split_words(text, true);
}

inline std::size_t word_count(std::string_view text) { return stats_tokenize(text).size(); }

/// Stopwords shipped in data/stopwords.txt (the Lucene English stop set).
inline const std::set<std::string, std::less<>>& default_stopwords() {
  static const std::set<std::string, std::less<>> words{
      "a",    "an",   "and",   "are",  "as",    "at",   "be",    "but",   "by",
      "for",  "if",   "in",    "into", "is",    "it",   "no",    "not",   "of",
      "on",   "or",   "such",  "that", "the",   "their", "then", "there", "these",
      "they", "this", "to",    "was",  "will",  "with"};
  return words;
}

/// One word per line; blank lines and lines starting with '#' are skipped.
inline std::set<std::string, std::less<>> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("missing_file", "cannot open stopword file " + path);
  std::set<std::string, std::less<>> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    words.insert(line);
  }
  return words;
}

/// Index-side text analysis: tokenize, optionally lowercase, drop stopwords,
/// then optionally Porter-stem. Only pure lowercase ASCII words are stemmed.
struct Analyzer {
  bool lowercase = true;
  bool stem = true;
  std::set<std::string, std::less<>> stopwords = default_stopwords();

  std::vector<std::string> operator()(std::string_view text) const {
    auto words = split_words(text, lowercase);
    std::vector<std::string> out;
    out.reserve(words.size());
    for (auto& w : words) {
      if (stopwords.contains(w)) continue;
      if (stem && detail::is_ascii_lower_alpha(w)) {
        out.push_back(porter_stem(w));
      } else {
        out.push_back(std::move(w));
      }
    }
    return out;
  }
};

inline std::vector<std::string> analyze(const Analyzer& analyzer, std::string_view text) {
  return analyzer(text);
}

/// Context separator tokens kept verbatim by the dense tokenizer.
inline constexpr std::string_view kUtteranceSep = "[U]";
inline constexpr std::string_view kTurnSep = "[T]";

/// Tokenizer for the toy dense encoder: separator tokens survive as-is,
/// everything else goes through the stats tokenizer.
inline std::vector<std::string> encoder_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t next = pos;
    std::size_t sep_len = 0;
    for (; next < text.size(); ++next) {
      const auto rest = text.substr(next);
      if (rest.starts_with(kUtteranceSep) || rest.starts_with(kTurnSep)) {
        sep_len = 3;
        break;
      }
    }
    for (auto& w : stats_tokenize(text.substr(pos, next - pos))) out.push_back(std::move(w));
    if (sep_len != 0) out.emplace_back(text.substr(next, sep_len));
    pos = next + sep_len;
  }
  return out;
}

}  // namespace dialret
