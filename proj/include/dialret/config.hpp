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

// Experiment configuration: one JSON document, schema version 1.
//
//   {
//     "version": 1,
//     "dataset": "dataset.json",
//     "seed": 42,
//     "output_dir": "out",
//     "analyzer":   {"lowercase": true, "stem": true, "stopwords": "default"},
//     "bm25":       {"k1": 0.9, "b": 0.4},
//     "rm3":        {"fb_docs": 10, "fb_terms": 10, "alpha": 0.5},
//     "expansion":  {"file": "expansions.jsonl", "num_predictions": 3},
//     "zero_shot":  {"contexts": "contexts.demb", "responses": "responses.demb"},
//     "encoder":    {"dim": 256, "init_scale": 1.0, "checkpoint": ""},
//     "samplers":   [{"kind": "random", "n": 10},
//                    {"kind": "denoised", "n": 10, "depth": 100, "window": 10}],
//     "train":      {"batch_size": 5, "learning_rate": 2e-5, "weight_decay": 0.01,
//                    "total_steps": 10000, "warmup_fraction": 0.1, "eval_every": 100,
//                    "loss": "softmax_full", "optimizer": "adamw"},
//     "validation": {"negatives": "sparse_top", "size": 10},
//     "eval":       {"split": "test", "ks": [1, 10], "depth": 100, "alpha": 0.05}
//   }
//
// Only "version" and "dataset" are required. "rm3", "expansion" and
// "zero_shot" switch on their report rows when present; "samplers" lists one
// fine-tuned model per entry. Relative paths resolve against the directory of
// the config file. Unknown keys are rejected.
//
// Seeds: every stage seeds from derive_seed(seed, stage) with stages
// "encoder-init", "validation", "negatives:<tag>" and "train:<tag>".

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dialret/corpus.hpp"
#include "dialret/error.hpp"
#include "dialret/negatives.hpp"
#include "dialret/rm3.hpp"
#include "dialret/sparse.hpp"
#include "dialret/text.hpp"
#include "dialret/trainer.hpp"

namespace dialret {

inline constexpr int kConfigVersion = 1;

struct AnalyzerConfig {
  bool lowercase = true;
  bool stem = true;
  std::string stopwords = "default";  // "default", "none" or a file path

  Analyzer build() const {
    Analyzer a;
    a.lowercase = lowercase;
    a.stem = stem;
    if (stopwords == "none") {
      a.stopwords.clear();
    } else if (stopwords != "default") {
      a.stopwords = load_stopwords(stopwords);
    }
    return a;
  }
};

struct ExpansionConfig {
  std::string file;
  std::size_t num_predictions = 3;
};

struct ZeroShotConfig {
  std::string contexts;
  std::string responses;
};

struct EncoderConfig {
  std::size_t dim = 256;
  double init_scale = 1.0;
  std::string checkpoint;  // path prefix; empty means random init
};

struct ValidationConfig {
  SamplerKind negatives = SamplerKind::sparse_top;  // random or sparse_top
  std::size_t size = 10;                            // candidates per query
};

struct EvalConfig {
  Split split = Split::test;
  std::vector<std::size_t> ks{1, 10};
  std::size_t depth = 100;  // run file length
  double alpha = 0.05;
};

struct ExperimentConfig {
  std::string dataset;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  AnalyzerConfig analyzer;
  BM25Params bm25;
  std::optional<RM3Params> rm3;
  std::optional<ExpansionConfig> expansion;
  std::optional<ZeroShotConfig> zero_shot;
  EncoderConfig encoder;
  std::vector<SamplerSpec> samplers;
  TrainConfig train;
  ValidationConfig validation;
  EvalConfig eval;

  void validate() const {
    if (dataset.empty()) throw config_error("missing_field", "config needs a dataset path");
    bm25.validate();
    if (rm3) rm3->validate();
    if (expansion && expansion->num_predictions == 0)
      throw config_error("bad_num_predictions", "num_predictions must be >= 1");
    if (encoder.dim == 0) throw config_error("bad_encoder", "encoder dim must be >= 1");
    if (!(encoder.init_scale >= 0.0)) throw config_error("bad_encoder", "init_scale must be >= 0");
    train.validate();
    std::set<std::string> tags;
    for (const auto& s : samplers)
      if (!tags.insert(s.tag()).second) throw config_error("duplicate_sampler", "sampler " + s.tag() + " listed twice");
    if (validation.negatives != SamplerKind::random && validation.negatives != SamplerKind::sparse_top)
      throw config_error("bad_validation", "validation negatives must be random or sparse_top");
    if (validation.size < 2) throw config_error("bad_validation", "validation size must be >= 2");
    if (eval.ks.empty()) throw config_error("bad_k", "eval needs at least one cutoff");
    for (auto k : eval.ks)
      if (k == 0 || k > eval.depth) throw config_error("bad_k", "cutoffs must be in [1, depth]");
    if (!(eval.alpha > 0.0 && eval.alpha < 1.0)) throw config_error("bad_alpha", "alpha must be in (0,1)");
  }
};

namespace detail {

using nlohmann::ordered_json;

inline void check_keys(const ordered_json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw config_error("bad_config", std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw config_error("unknown_key", "unknown key '" + key + "' in " + std::string(where));
  }
}

template <typename T>
void read(const ordered_json& j, const char* key, T& out, std::string_view where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw config_error("bad_type", std::string(where) + "." + key + " has the wrong type");
  }
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

inline SamplerKind sampler_kind_or_throw(const std::string& s) {
  auto k = parse_sampler_kind(s);
  if (!k) throw config_error("bad_sampler", "unknown sampler kind '" + s + "'");
  return *k;
}

}  // namespace detail

/// Relative paths resolve against `base_dir` (empty leaves them as given).
inline ExperimentConfig parse_config(const nlohmann::ordered_json& j, const std::filesystem::path& base_dir = {}) {
  using detail::read;
  detail::check_keys(j, "config", {"version", "dataset", "seed", "output_dir", "analyzer", "bm25", "rm3", "expansion",
                                   "zero_shot", "encoder", "samplers", "train", "validation", "eval"});
  if (!j.contains("version")) throw config_error("missing_field", "config needs a version");
  int version = 0;
  read(j, "version", version, "config");
  if (version != kConfigVersion)
    throw config_error("bad_version", "unsupported config version " + std::to_string(version));

  ExperimentConfig c;
  read(j, "dataset", c.dataset, "config");
  read(j, "seed", c.seed, "config");
  read(j, "output_dir", c.output_dir, "config");
  if (j.contains("analyzer")) {
    const auto& a = j["analyzer"];
    detail::check_keys(a, "analyzer", {"lowercase", "stem", "stopwords"});
    read(a, "lowercase", c.analyzer.lowercase, "analyzer");
    read(a, "stem", c.analyzer.stem, "analyzer");
    read(a, "stopwords", c.analyzer.stopwords, "analyzer");
  }
  if (j.contains("bm25")) {
    const auto& b = j["bm25"];
    detail::check_keys(b, "bm25", {"k1", "b"});
    read(b, "k1", c.bm25.k1, "bm25");
    read(b, "b", c.bm25.b, "bm25");
  }
  if (j.contains("rm3") && !j["rm3"].is_null()) {
    const auto& r = j["rm3"];
    detail::check_keys(r, "rm3", {"fb_docs", "fb_terms", "alpha"});
    RM3Params p;
    read(r, "fb_docs", p.fb_docs, "rm3");
    read(r, "fb_terms", p.fb_terms, "rm3");
    read(r, "alpha", p.orig_weight, "rm3");
    c.rm3 = p;
  }
  if (j.contains("expansion") && !j["expansion"].is_null()) {
    const auto& e = j["expansion"];
    detail::check_keys(e, "expansion", {"file", "num_predictions"});
    ExpansionConfig x;
    read(e, "file", x.file, "expansion");
    read(e, "num_predictions", x.num_predictions, "expansion");
    if (x.file.empty()) throw config_error("missing_field", "expansion needs a file");
    c.expansion = x;
  }
  if (j.contains("zero_shot") && !j["zero_shot"].is_null()) {
    const auto& z = j["zero_shot"];
    detail::check_keys(z, "zero_shot", {"contexts", "responses"});
    ZeroShotConfig x;
    read(z, "contexts", x.contexts, "zero_shot");
    read(z, "responses", x.responses, "zero_shot");
    if (x.contexts.empty() || x.responses.empty())
      throw config_error("missing_field", "zero_shot needs contexts and responses");
    c.zero_shot = x;
  }
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    detail::check_keys(e, "encoder", {"dim", "init_scale", "checkpoint"});
    read(e, "dim", c.encoder.dim, "encoder");
    read(e, "init_scale", c.encoder.init_scale, "encoder");
    read(e, "checkpoint", c.encoder.checkpoint, "encoder");
  }
  if (j.contains("samplers")) {
    if (!j["samplers"].is_array()) throw config_error("bad_type", "samplers must be an array");
    for (const auto& s : j["samplers"]) {
      detail::check_keys(s, "sampler", {"kind", "n", "depth", "window"});
      std::string kind;
      read(s, "kind", kind, "sampler");
      SamplerSpec spec;
      spec.kind = detail::sampler_kind_or_throw(kind);
      read(s, "n", spec.n, "sampler");
      read(s, "depth", spec.depth, "sampler");
      read(s, "window", spec.window, "sampler");
      c.samplers.push_back(spec);
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    detail::check_keys(t, "train", {"batch_size", "learning_rate", "weight_decay", "total_steps", "warmup_fraction",
                                    "eval_every", "loss", "optimizer"});
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "learning_rate", c.train.learning_rate, "train");
    read(t, "weight_decay", c.train.weight_decay, "train");
    read(t, "total_steps", c.train.total_steps, "train");
    read(t, "warmup_fraction", c.train.warmup_fraction, "train");
    read(t, "eval_every", c.train.eval_every, "train");
    std::string loss(to_string(c.train.loss_variant)), opt(to_string(c.train.optimizer));
    read(t, "loss", loss, "train");
    read(t, "optimizer", opt, "train");
    auto lv = parse_loss_variant(loss);
    if (!lv) throw config_error("bad_train_config", "unknown loss '" + loss + "'");
    auto ov = parse_optimizer(opt);
    if (!ov) throw config_error("bad_train_config", "unknown optimizer '" + opt + "'");
    c.train.loss_variant = *lv;
    c.train.optimizer = *ov;
  }
  if (j.contains("validation")) {
    const auto& v = j["validation"];
    detail::check_keys(v, "validation", {"negatives", "size"});
    std::string kind(to_string(c.validation.negatives));
    read(v, "negatives", kind, "validation");
    c.validation.negatives = detail::sampler_kind_or_throw(kind);
    read(v, "size", c.validation.size, "validation");
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    detail::check_keys(e, "eval", {"split", "ks", "depth", "alpha"});
    std::string split(to_string(c.eval.split));
    read(e, "split", split, "eval");
    auto s = parse_split(split);
    if (!s) throw config_error("bad_split", "unknown split '" + split + "'");
    c.eval.split = *s;
    read(e, "ks", c.eval.ks, "eval");
    read(e, "depth", c.eval.depth, "eval");
    read(e, "alpha", c.eval.alpha, "eval");
  }

  c.dataset = detail::resolve(base_dir, c.dataset);
  c.output_dir = detail::resolve(base_dir, c.output_dir);
  if (c.analyzer.stopwords != "default" && c.analyzer.stopwords != "none")
    c.analyzer.stopwords = detail::resolve(base_dir, c.analyzer.stopwords);
  if (c.expansion) c.expansion->file = detail::resolve(base_dir, c.expansion->file);
  if (c.zero_shot) {
    c.zero_shot->contexts = detail::resolve(base_dir, c.zero_shot->contexts);
    c.zero_shot->responses = detail::resolve(base_dir, c.zero_shot->responses);
  }
  c.encoder.checkpoint = detail::resolve(base_dir, c.encoder.checkpoint);
  c.validate();
  return c;
}

inline nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["version"] = kConfigVersion;
  j["dataset"] = c.dataset;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["analyzer"] = {{"lowercase", c.analyzer.lowercase}, {"stem", c.analyzer.stem}, {"stopwords", c.analyzer.stopwords}};
  j["bm25"] = {{"k1", c.bm25.k1}, {"b", c.bm25.b}};
  if (c.rm3) j["rm3"] = {{"fb_docs", c.rm3->fb_docs}, {"fb_terms", c.rm3->fb_terms}, {"alpha", c.rm3->orig_weight}};
  if (c.expansion) j["expansion"] = {{"file", c.expansion->file}, {"num_predictions", c.expansion->num_predictions}};
  if (c.zero_shot) j["zero_shot"] = {{"contexts", c.zero_shot->contexts}, {"responses", c.zero_shot->responses}};
  j["encoder"] = {{"dim", c.encoder.dim}, {"init_scale", c.encoder.init_scale}, {"checkpoint", c.encoder.checkpoint}};
  j["samplers"] = nlohmann::ordered_json::array();
  for (const auto& s : c.samplers)
    j["samplers"].push_back({{"kind", to_string(s.kind)}, {"n", s.n}, {"depth", s.depth}, {"window", s.window}});
  j["train"] = {{"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"weight_decay", c.train.weight_decay},
                {"total_steps", c.train.total_steps},
                {"warmup_fraction", c.train.warmup_fraction},
                {"eval_every", c.train.eval_every},
                {"loss", to_string(c.train.loss_variant)},
                {"optimizer", to_string(c.train.optimizer)}};
  j["validation"] = {{"negatives", to_string(c.validation.negatives)}, {"size", c.validation.size}};
  j["eval"] = {{"split", to_string(c.eval.split)}, {"ks", c.eval.ks}, {"depth", c.eval.depth}, {"alpha", c.eval.alpha}};
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("missing_file", "cannot open config " + path);
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error("bad_json", "config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j, std::filesystem::path(path).parent_path());
}

inline void save_config(const ExperimentConfig& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("io_error", "cannot write " + path);
  out << config_to_json(c).dump(2) << '\n';
}

}  // namespace dialret
