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

// End-to-end experiment: sparse baselines, query and document expansion,
// zero-shot and fine-tuned dense retrieval, evaluated on one split and
// written as a grouped report.
//
// Output directory layout:
//   config.json                 resolved configuration
//   qrels/<split>.qrels
//   runs/<system>.run           TREC run files
//   negatives/<system>.jsonl    mined training negatives
//   checkpoints/<system>.demb   fine-tuned encoders (+ .vocab)
//   history/<system>.csv        step,loss,map
//   expansion_stats.csv
//   report.csv, report.txt      recall per system and cutoff
//   significance.csv            paired t-tests against BM25, Bonferroni

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dialret/config.hpp"
#include "dialret/experiment.hpp"
#include "dialret/expansion.hpp"

namespace dialret {

struct SystemResult {
  std::string group;  // row label, e.g. "(0)"
  std::string name;   // file stem, e.g. "bm25"
  std::string label;  // human readable
  EvalReport report;
};

struct PipelineResult {
  std::vector<SystemResult> systems;
  std::vector<SignificanceResult> significance;
  std::optional<ExpansionStats> expansion;
};

/// File-name-safe sampler tag: "denoised:k100:m10" -> "denoised_k100_m10".
inline std::string safe_name(std::string s) {
  std::replace(s.begin(), s.end(), ':', '_');
  return s;
}

/// Training order: the random sampler first, since it provides the miner for
/// dense samplers. A random sampler is added when a dense one needs it.
inline std::vector<SamplerSpec> training_order(std::vector<SamplerSpec> samplers) {
  const bool needs_miner = std::any_of(samplers.begin(), samplers.end(), [](const SamplerSpec& s) {
    return s.kind == SamplerKind::dense_top || s.kind == SamplerKind::denoised;
  });
  auto it = std::find_if(samplers.begin(), samplers.end(), [](const SamplerSpec& s) { return s.kind == SamplerKind::random; });
  if (it != samplers.end()) {
    std::rotate(samplers.begin(), it, it + 1);
  } else if (needs_miner) {
    samplers.insert(samplers.begin(), SamplerSpec{});
  }
  return samplers;
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("io_error", "cannot write " + path.string());
  out << text;
}

inline std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace detail

inline void write_significance_csv(std::ostream& out, const std::vector<SignificanceResult>& rows) {
  out << "system_a,system_b,metric,t,df,p,adjusted_alpha,significant\n";
  for (const auto& r : rows)
    out << r.system_a << ',' << r.system_b << ',' << r.metric << ',' << format_double(r.t) << ','
        << format_double(r.df) << ',' << format_double(r.p) << ',' << format_double(r.adjusted_alpha) << ','
        << (r.significant ? 1 : 0) << '\n';
}

inline void write_report_csv(std::ostream& out, const PipelineResult& res, const std::vector<std::size_t>& ks) {
  out << "group,system";
  for (auto k : ks) out << ",R@" << k;
  out << '\n';
  for (const auto& s : res.systems) {
    out << s.group << ',' << s.name;
    for (auto k : ks) out << ',' << format_double(s.report.mean_at(k));
    out << '\n';
  }
}

/// Aligned table. "+" / "-" mark a significant gain / loss against BM25.
inline void write_report_text(std::ostream& out, const PipelineResult& res, const std::vector<std::size_t>& ks,
                              std::string_view dataset_name) {
  auto mark = [&](const std::string& system, std::size_t k) -> std::string {
    for (const auto& r : res.significance)
      if (r.system_a == system && r.metric == "R@" + std::to_string(k) && r.significant) return r.t > 0 ? "+" : "-";
    return " ";
  };
  std::size_t width = 6;
  for (const auto& s : res.systems) width = std::max(width, s.group.size() + 1 + s.label.size());
  out << "Dataset: " << dataset_name << '\n';
  std::string header = "System";
  header.resize(width, ' ');
  out << header;
  for (auto k : ks) {
    std::string col = "R@" + std::to_string(k);
    col.insert(0, 9 - std::min<std::size_t>(9, col.size()), ' ');
    out << "  " << col;
  }
  out << '\n' << std::string(width + ks.size() * 11, '-') << '\n';
  for (const auto& s : res.systems) {
    std::string name = s.group + " " + s.label;
    name.resize(width, ' ');
    out << name;
    for (auto k : ks) out << "  " << std::string(2, ' ') << detail::fixed4(s.report.mean_at(k)) << mark(s.name, k);
    out << '\n';
  }
  if (res.expansion) {
    out << "\nExpansion: avg length " << detail::fixed4(res.expansion->avg_aug_length) << " words, "
        << detail::fixed4(res.expansion->pct_new_words) << "% new words over " << res.expansion->num_expanded
        << " responses\n";
  }
}

/// Runs every configured stage and writes the artifacts listed above. The
/// result is a pure function of the config and its input files.
inline PipelineResult run_pipeline(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  config.validate();
  const fs::path out = config.output_dir;
  for (const char* sub : {"qrels", "runs", "negatives", "checkpoints", "history"}) fs::create_directories(out / sub);
  save_config(config, (out / "config.json").string());

  const Dataset ds = load_dataset(config.dataset);
  const SplitData& eval_split = ds.split(config.eval.split);
  if (eval_split.contexts.empty())
    throw data_error("empty_split", "evaluation split " + std::string(to_string(config.eval.split)) + " is empty");
  const Qrels qrels = split_qrels(eval_split);
  {
    std::ofstream q(out / "qrels" / (std::string(to_string(config.eval.split)) + ".qrels"), std::ios::binary);
    write_qrels(q, qrels);
  }

  const Analyzer analyzer = config.analyzer.build();
  const InvertedIndex index = build_index(ds.responses, analyzer);
  const auto queries = analyzed_queries(eval_split, analyzer);
  const std::size_t depth = config.eval.depth;

  PipelineResult res;
  auto add = [&](std::string group, std::string name, std::string label, const std::vector<ScoredList>& runs) {
    save_run((out / "runs" / (name + ".run")).string(), runs, name);
    res.systems.push_back({std::move(group), name, std::move(label),
                           recall_at_k(to_run(runs), qrels, config.eval.ks, ds.responses.size())});
  };

  add("(0)", "bm25", "BM25", sparse_runs(index, queries, config.bm25, depth));
  if (config.rm3) add("(1)", "bm25_rm3", "BM25 + RM3", rm3_runs(index, queries, *config.rm3, config.bm25, depth));
  if (config.expansion) {
    const auto records = load_expansions(config.expansion->file);
    const Corpus expanded = apply_expansions(ds.responses, records, config.expansion->num_predictions);
    res.expansion = expansion_stats(ds.responses, expanded);
    std::ostringstream st;
    st << "avg_aug_length,pct_new_words,num_expanded\n"
       << format_double(res.expansion->avg_aug_length) << ',' << format_double(res.expansion->pct_new_words) << ','
       << res.expansion->num_expanded << '\n';
    detail::write_text(out / "expansion_stats.csv", st.str());
    const InvertedIndex expanded_index = build_index(expanded, analyzer);
    add("(2)", "bm25_expanded", "BM25 + expansion " + expanded.expansion_tag(),
        sparse_runs(expanded_index, queries, config.bm25, depth));
  }
  if (config.zero_shot) {
    const auto ctx = load_embeddings(config.zero_shot->contexts);
    const auto resp = load_embeddings(config.zero_shot->responses);
    add("(3a)", "dense_zeroshot", "dense zero-shot " + resp.provenance(), dense_runs(ctx, resp, eval_split, depth));
  }

  if (!config.samplers.empty()) {
    const ToyEncoder initial = config.encoder.checkpoint.empty()
                                   ? init_encoder(ds, config.encoder.dim, config.encoder.init_scale,
                                                  derive_seed(config.seed, "encoder-init"))
                                   : load_checkpoint(config.encoder.checkpoint);
    const SparseRetriever sparse{&index, &analyzer, config.bm25};
    std::vector<RerankQuery> valid;
    if (!ds.split(Split::valid).contexts.empty()) {
      const std::size_t n = config.validation.size - 1;
      const SamplerSpec vspec{config.validation.negatives, n, n, n, derive_seed(config.seed, "validation")};
      valid = rerank_queries(ds.split(Split::valid), ds.responses, vspec, sparse);
    }
    const SplitData& train_split = ds.split(Split::train);
    if (train_split.contexts.empty()) throw data_error("empty_split", "training split is empty");

    std::optional<ToyEncoder> miner;
    std::optional<EmbeddingStore> miner_store;
    char letter = 'b';
    for (SamplerSpec spec : training_order(config.samplers)) {
      const std::string tag = spec.tag();
      const std::string name = "dense_" + safe_name(tag);
      spec.seed = derive_seed(config.seed, "negatives:" + tag);
      std::vector<NegativeSet> negs;
      if (spec.kind == SamplerKind::dense_top || spec.kind == SamplerKind::denoised) {
        negs = mine_negatives(train_split, ds.responses, spec, DenseRetriever{&*miner, &*miner_store});
      } else {
        negs = mine_negatives(train_split, ds.responses, spec, sparse);
      }
      save_negatives((out / "negatives" / (name + ".jsonl")).string(), negs);

      TrainConfig tc = config.train;
      tc.seed = derive_seed(config.seed, "train:" + tag);
      const auto examples = train_examples(train_split, ds.responses, negs);
      auto trained = train(initial, examples, valid, tc);
      save_checkpoint(trained.encoder, (out / "checkpoints" / name).string(), tag);
      {
        std::ofstream h(out / "history" / (name + ".csv"), std::ios::binary);
        write_history_csv(h, trained.history);
      }
      const auto store = encode_responses(trained.encoder, ds.responses, "toy-encoder:" + tag);
      add(std::string("(3") + letter++ + ")", name, "dense fine-tuned, " + tag + " negatives",
          dense_runs(trained.encoder, store, eval_split, depth));
      if (spec.kind == SamplerKind::random && !miner) {
        miner = std::move(trained.encoder);
        miner_store = store;
      }
    }
  }

  // a t-test needs at least two queries
  if (qrels.size() >= 2) {
    const std::size_t comparisons = res.systems.size() > 1 ? res.systems.size() - 1 : 1;
    const auto& base = res.systems.front();
    for (std::size_t s = 1; s < res.systems.size(); ++s)
      for (auto k : config.eval.ks) {
        auto r = paired_ttest(res.systems[s].report.values_at(k), base.report.values_at(k), config.eval.alpha,
                              comparisons);
        r.system_a = res.systems[s].name;
        r.system_b = base.name;
        r.metric = "R@" + std::to_string(k);
        res.significance.push_back(std::move(r));
      }
  }

  std::ostringstream csv, txt, sig;
  write_report_csv(csv, res, config.eval.ks);
  write_report_text(txt, res, config.eval.ks, fs::path(config.dataset).filename().string());
  write_significance_csv(sig, res.significance);
  detail::write_text(out / "report.csv", csv.str());
  detail::write_text(out / "report.txt", txt.str());
  detail::write_text(out / "significance.csv", sig.str());
  return res;
}

}  // namespace dialret
