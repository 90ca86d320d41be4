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


// dialret command line. Every subcommand reads an experiment config
// (--config) and/or flags, writes its artifacts under the output directory
// and exits with 0 on success, 2 on config errors, 3 on data errors and 4 on
// numeric failures. Errors print one line: "error: <code>: <message>".
//
// Output directory precedence: --output-dir, then $DIALRET_OUTPUT_DIR, then
// the config's output_dir.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dialret/config.hpp"
#include "dialret/experiment.hpp"
#include "dialret/expansion.hpp"
#include "dialret/pipeline.hpp"

namespace fs = std::filesystem;
using namespace dialret;

namespace {

struct Common {
  std::string config;
  std::string dataset;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config (JSON)");
  cmd->add_option("--dataset", c.dataset, "Dataset file; overrides the config");
  cmd->add_option("--output-dir", c.output_dir, "Output directory; overrides config and DIALRET_OUTPUT_DIR");
  cmd->add_option("--seed", c.seed, "Top-level seed; overrides the config");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config.empty()) cfg = load_config(c.config);
  if (!c.dataset.empty()) cfg.dataset = c.dataset;
  if (c.seed) cfg.seed = *c.seed;
  if (const char* env = std::getenv("DIALRET_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
  if (!c.output_dir.empty()) cfg.output_dir = c.output_dir;
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  return cfg;
}

fs::path ensure_dir(const fs::path& p) {
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("io_error", "cannot write " + path.string());
  out << text;
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(item, &used);
      if (used != item.size() || v == 0) throw std::invalid_argument(item);
      ks.push_back(v);
    } catch (const std::logic_error&) {
      throw config_error("bad_k", "bad cutoff list '" + s + "'");
    }
  }
  if (ks.empty()) throw config_error("bad_k", "empty cutoff list");
  return ks;
}

Split split_or_default(const std::string& s, Split fallback) {
  if (s.empty()) return fallback;
  auto parsed = parse_split(s);
  if (!parsed) throw config_error("bad_split", "unknown split '" + s + "'");
  return *parsed;
}

SamplerSpec sampler_from_flags(const std::string& kind, std::size_t n, std::size_t depth, std::size_t window,
                               const ExperimentConfig& cfg) {
  auto k = parse_sampler_kind(kind);
  if (!k) throw config_error("bad_sampler", "unknown sampler kind '" + kind + "'");
  SamplerSpec spec{*k, n, depth, window, 0};
  for (const auto& s : cfg.samplers)
    if (s.kind == *k) spec = s;
  spec.seed = derive_seed(cfg.seed, "negatives:" + spec.tag());
  return spec;
}

ToyEncoder encoder_for(const ExperimentConfig& cfg, const Dataset& ds, const std::string& checkpoint) {
  if (!checkpoint.empty()) return load_checkpoint(checkpoint);
  if (!cfg.encoder.checkpoint.empty()) return load_checkpoint(cfg.encoder.checkpoint);
  return init_encoder(ds, cfg.encoder.dim, cfg.encoder.init_scale, derive_seed(cfg.seed, "encoder-init"));
}

std::vector<NegativeSet> mine(const ExperimentConfig& cfg, const Dataset& ds, const SamplerSpec& spec,
                              const std::string& miner_checkpoint) {
  const Analyzer analyzer = cfg.analyzer.build();
  const auto& train_split = ds.split(Split::train);
  if (train_split.contexts.empty()) throw data_error("empty_split", "training split is empty");
  if (spec.kind == SamplerKind::dense_top || spec.kind == SamplerKind::denoised) {
    if (miner_checkpoint.empty())
      throw config_error("missing_flag", "dense samplers need --miner <checkpoint prefix>");
    const ToyEncoder miner = load_checkpoint(miner_checkpoint);
    const auto store = encode_responses(miner, ds.responses, "miner");
    return mine_negatives(train_split, ds.responses, spec, DenseRetriever{&miner, &store});
  }
  const InvertedIndex index = build_index(ds.responses, analyzer);
  return mine_negatives(train_split, ds.responses, spec, SparseRetriever{&index, &analyzer, cfg.bm25});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse and dense response retrieval for dialogues"};
  app.require_subcommand(1);

  Common common;
  std::size_t k = 0;
  std::string split_name, out_file, expansions_file, checkpoint, miner, negatives_file, run_file, run_b, qrels_file,
      ks_text = "1,10", sampler_kind = "random";
  std::size_t num_predictions = 3, n = 10, depth = 100, window = 10, comparisons = 1;
  std::optional<std::size_t> steps;
  double alpha = 0.05;
  bool use_rm3 = false;

  auto* ingest = app.add_subcommand("ingest", "Validate a dataset and write it normalized with per-split qrels");
  add_common(ingest, common);

  auto* index_cmd = app.add_subcommand("index", "Build the BM25 index and write its statistics");
  add_common(index_cmd, common);

  auto* search = app.add_subcommand("search", "BM25 (or BM25+RM3) retrieval for a split");
  add_common(search, common);
  search->add_option("--k", k, "Results per query")->required();
  search->add_option("--split", split_name, "Query split (default: eval split)");
  search->add_flag("--rm3", use_rm3, "Expand queries with RM3");
  search->add_option("--expansions", expansions_file, "Search the expanded collection");
  search->add_option("--num-predictions", num_predictions, "Predictions appended per response");
  search->add_option("--out", out_file, "Run file (default: <out>/runs/<system>.run)");

  auto* sweep = app.add_subcommand("rm3-sweep", "Grid over fb_docs, fb_terms and alpha");
  add_common(sweep, common);
  sweep->add_option("--split", split_name, "Query split (default: valid)");

  auto* expand = app.add_subcommand("expand", "Apply document expansions and report their statistics");
  add_common(expand, common);
  expand->add_option("--expansions", expansions_file, "Expansion records (JSONL)");
  expand->add_option("--num-predictions", num_predictions, "Predictions appended per response");

  auto* stats = app.add_subcommand("stats", "Dataset statistics per split");
  add_common(stats, common);

  auto* embed = app.add_subcommand("embed", "Encode contexts and responses with the toy encoder");
  add_common(embed, common);
  embed->add_option("--checkpoint", checkpoint, "Encoder checkpoint prefix (default: config or random init)");

  auto* sample = app.add_subcommand("sample-negatives", "Mine training negatives");
  add_common(sample, common);
  sample->add_option("--sampler", sampler_kind, "random | sparse_top | dense_top | denoised");
  sample->add_option("--n", n, "Negatives per context");
  sample->add_option("--depth", depth, "Retrieval depth k (denoised)");
  sample->add_option("--window", window, "Bottom window m (denoised)");
  sample->add_option("--miner", miner, "Checkpoint used by dense samplers");

  auto* train_cmd = app.add_subcommand("train", "Fine-tune the toy encoder");
  add_common(train_cmd, common);
  train_cmd->add_option("--sampler", sampler_kind, "Negative sampler used when --negatives is not given");
  train_cmd->add_option("--negatives", negatives_file, "Precomputed negatives file");
  train_cmd->add_option("--miner", miner, "Checkpoint used by dense samplers");
  train_cmd->add_option("--checkpoint", checkpoint, "Initial encoder checkpoint prefix");
  train_cmd->add_option("--steps", steps, "Training steps; overrides the config");

  auto* evaluate = app.add_subcommand("evaluate", "Recall@K of a run file");
  evaluate->add_option("--run", run_file, "Run file")->required();
  evaluate->add_option("--qrels", qrels_file, "Qrels file")->required();
  evaluate->add_option("--k", ks_text, "Comma separated cutoffs");

  auto* signif = app.add_subcommand("significance", "Paired t-test of two runs on Recall@K");
  signif->add_option("--run-a", run_file, "Run file of system A")->required();
  signif->add_option("--run-b", run_b, "Run file of system B")->required();
  signif->add_option("--qrels", qrels_file, "Qrels file")->required();
  signif->add_option("--k", k, "Cutoff")->required();
  signif->add_option("--alpha", alpha, "Significance level before correction");
  signif->add_option("--comparisons", comparisons, "Bonferroni: number of comparisons");

  auto* pipeline = app.add_subcommand("pipeline", "Run every configured experiment and write the report");
  add_common(pipeline, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::config);
  }

  try {
    if (*evaluate) {
      const auto ks = parse_ks(ks_text);
      const auto report = recall_at_k(load_run(run_file), load_qrels(qrels_file), ks);
      for (std::size_t i = 0; i < ks.size(); ++i) std::cout << "R@" << ks[i] << '\t' << format_double(report.mean[i]) << '\n';
      return 0;
    }
    if (*signif) {
      const auto qrels = load_qrels(qrels_file);
      const auto a = recall_at_k(load_run(run_file), qrels, {k});
      const auto b = recall_at_k(load_run(run_b), qrels, {k});
      auto r = paired_ttest(a.values_at(k), b.values_at(k), alpha, comparisons);
      r.system_a = fs::path(run_file).stem().string();
      r.system_b = fs::path(run_b).stem().string();
      r.metric = "R@" + std::to_string(k);
      write_significance_csv(std::cout, {r});
      return 0;
    }

    const ExperimentConfig cfg = resolve(common);
    const fs::path out = cfg.output_dir;

    if (*pipeline) {
      run_pipeline(cfg);
      std::ifstream report(out / "report.txt");
      std::cout << report.rdbuf();
      return 0;
    }

    const Dataset ds = load_dataset(cfg.dataset);

    if (*ingest) {
      save_dataset(ds, (out / "dataset.json").string());
      ensure_dir(out / "qrels");
      for (const auto& [split, data] : ds.splits) {
        if (data.contexts.empty()) continue;
        std::ofstream q(out / "qrels" / (std::string(to_string(split)) + ".qrels"), std::ios::binary);
        write_qrels(q, split_qrels(data));
        std::cout << to_string(split) << '\t' << data.contexts.size() << " contexts\n";
      }
      std::cout << "responses\t" << ds.responses.size() << '\n';
    } else if (*index_cmd) {
      const InvertedIndex index = build_index(ds.responses, cfg.analyzer.build());
      nlohmann::ordered_json j{{"documents", index.doc_count()},
                               {"avg_doc_length", index.avg_doc_length()},
                               {"vocabulary_size", index.vocabulary_size()},
                               {"analyzer", config_to_json(cfg)["analyzer"]}};
      write_file(out / "index.json", j.dump(2) + "\n");
      std::cout << j.dump(2) << '\n';
    } else if (*search) {
      const Split split = split_or_default(split_name, cfg.eval.split);
      const Analyzer analyzer = cfg.analyzer.build();
      Corpus collection = ds.responses;
      std::string system = "bm25";
      if (!expansions_file.empty()) {
        collection = apply_expansions(collection, load_expansions(expansions_file), num_predictions);
        system += "_expanded";
      }
      const InvertedIndex index = build_index(collection, analyzer);
      const auto queries = analyzed_queries(ds.split(split), analyzer);
      if (queries.empty()) throw data_error("empty_split", "split " + std::string(to_string(split)) + " is empty");
      std::vector<ScoredList> runs;
      if (use_rm3) {
        runs = rm3_runs(index, queries, cfg.rm3.value_or(RM3Params{}), cfg.bm25, k);
        system += "_rm3";
      } else {
        runs = sparse_runs(index, queries, cfg.bm25, k);
      }
      const fs::path path = out_file.empty() ? ensure_dir(out / "runs") / (system + ".run") : fs::path(out_file);
      save_run(path.string(), runs, system);
      std::cout << path.string() << '\n';
    } else if (*sweep) {
      const Split split = split_or_default(split_name, Split::valid);
      const Analyzer analyzer = cfg.analyzer.build();
      const InvertedIndex index = build_index(ds.responses, analyzer);
      const auto& data = ds.split(split);
      if (data.contexts.empty()) throw data_error("empty_split", "split " + std::string(to_string(split)) + " is empty");
      const auto rows = rm3_sweep(index, analyzed_queries(data, analyzer), split_qrels(data), RM3Grid{}, cfg.bm25);
      std::ostringstream csv;
      write_sweep_csv(csv, rows);
      write_file(out / "rm3_sweep.csv", csv.str());
      std::cout << csv.str();
    } else if (*expand) {
      std::string file = expansions_file;
      std::size_t num = num_predictions;
      if (file.empty() && cfg.expansion) {
        file = cfg.expansion->file;
        if (expand->count("--num-predictions") == 0) num = cfg.expansion->num_predictions;
      }
      if (file.empty()) throw config_error("missing_flag", "expand needs --expansions or an expansion config");
      Dataset expanded = ds;
      expanded.responses = apply_expansions(ds.responses, load_expansions(file), num);
      const auto st = expansion_stats(ds.responses, expanded.responses);
      save_dataset(expanded, (out / "expanded_dataset.json").string());
      std::ostringstream csv;
      csv << "avg_aug_length,pct_new_words,num_expanded\n"
          << format_double(st.avg_aug_length) << ',' << format_double(st.pct_new_words) << ',' << st.num_expanded
          << '\n';
      write_file(out / "expansion_stats.csv", csv.str());
      std::cout << csv.str();
    } else if (*stats) {
      const auto report = corpus_stats(ds);
      std::ostringstream csv;
      csv << "split,contexts,avg_context_words,avg_response_words\n";
      for (const auto& [split, s] : report.splits)
        csv << to_string(split) << ',' << s.num_contexts << ',' << format_double(s.avg_context_words) << ','
            << format_double(s.avg_response_words) << '\n';
      csv << "collection," << report.collection_size << ",," << format_double(report.collection_avg_response_words)
          << '\n';
      write_file(out / "stats.csv", csv.str());
      std::cout << csv.str();
    } else if (*embed) {
      const ToyEncoder enc = encoder_for(cfg, ds, checkpoint);
      const std::string provenance = checkpoint.empty() && cfg.encoder.checkpoint.empty()
                                         ? "toy-encoder:init"
                                         : "toy-encoder:" + fs::path(checkpoint.empty() ? cfg.encoder.checkpoint : checkpoint)
                                                                .filename()
                                                                .string();
      std::vector<TextItem> contexts;
      for (const auto& [_, data] : ds.splits)
        for (const auto& c : data.contexts) contexts.push_back({c.id, concat_context(c)});
      const fs::path dir = ensure_dir(out / "embeddings");
      save_embeddings(encode_store(enc, contexts, provenance), (dir / "contexts.demb").string());
      save_embeddings(encode_responses(enc, ds.responses, provenance), (dir / "responses.demb").string());
      std::cout << (dir / "contexts.demb").string() << '\n' << (dir / "responses.demb").string() << '\n';
    } else if (*sample) {
      const auto spec = sampler_from_flags(sampler_kind, n, depth, window, cfg);
      const auto negs = mine(cfg, ds, spec, miner);
      const fs::path path = ensure_dir(out / "negatives") / ("dense_" + safe_name(spec.tag()) + ".jsonl");
      save_negatives(path.string(), negs);
      std::cout << path.string() << '\n';
    } else if (*train_cmd) {
      const auto spec = sampler_from_flags(sampler_kind, n, depth, window, cfg);
      const auto negs = negatives_file.empty() ? mine(cfg, ds, spec, miner) : load_negatives(negatives_file);
      const ToyEncoder initial = encoder_for(cfg, ds, checkpoint);
      std::vector<RerankQuery> valid;
      if (!ds.split(Split::valid).contexts.empty()) {
        const Analyzer analyzer = cfg.analyzer.build();
        const InvertedIndex index = build_index(ds.responses, analyzer);
        const std::size_t vn = cfg.validation.size - 1;
        const SamplerSpec vspec{cfg.validation.negatives, vn, vn, vn, derive_seed(cfg.seed, "validation")};
        valid = rerank_queries(ds.split(Split::valid), ds.responses, vspec, SparseRetriever{&index, &analyzer, cfg.bm25});
      }
      TrainConfig tc = cfg.train;
      if (steps) tc.total_steps = *steps;
      tc.seed = derive_seed(cfg.seed, "train:" + spec.tag());
      const auto examples = train_examples(ds.split(Split::train), ds.responses, negs);
      const auto result = train(initial, examples, valid, tc);
      const std::string name = "dense_" + safe_name(spec.tag());
      save_checkpoint(result.encoder, (ensure_dir(out / "checkpoints") / name).string(), spec.tag());
      std::ofstream h(ensure_dir(out / "history") / (name + ".csv"), std::ios::binary);
      write_history_csv(h, result.history);
      std::cout << "selected_step\t" << result.history.selected_step << '\n';
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: io_error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::data);
  }
}
