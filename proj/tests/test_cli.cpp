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


#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dialret/eval.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int status;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("dialret_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Result run(const std::string& args, const std::string& env = "") {
  const auto out = scratch() / "stdout.txt";
  const auto err = scratch() / "stderr.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") + DIALRET_CLI + std::string(" ") + args + " >" +
                          out.string() + " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

const std::string kSample = std::string(DIALRET_SOURCE_DIR) + "/data/sample";

/// Three responses, one test query "apple" whose positive is d2.
fs::path fruit_fixture() {
  const auto dir = scratch() / "fruit";
  fs::create_directories(dir);
  std::ofstream(dir / "data.jsonl")
      << R"({"type":"context","id":"q1","utterances":[{"text":"apple","speaker":"seeker"}]})" << '\n'
      << R"({"type":"response","id":"d1","text":"apple banana"})" << '\n'
      << R"({"type":"response","id":"d2","text":"apple apple"})" << '\n'
      << R"({"type":"response","id":"d3","text":"cherry"})" << '\n'
      << R"({"type":"pair","context_id":"q1","response_id":"d2","split":"test"})" << '\n';
  std::ofstream(dir / "config.json") << R"({"version": 1, "dataset": "data.jsonl", "output_dir": "out"})";
  return dir;
}

}  // namespace

TEST(Cli, SearchFruitFixture) {
  const auto dir = fruit_fixture();
  const auto r = run("search --config " + (dir / "config.json").string() + " --k 10");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto runs = dialret::load_run((dir / "out/runs/bm25.run").string());
  const auto& entries = runs.at("q1").entries;
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].doc_id, "d2");
  EXPECT_EQ(entries[1].doc_id, "d1");
}

TEST(Cli, EvaluateCraftedRun) {
  const auto dir = scratch() / "eval";
  fs::create_directories(dir);
  std::ofstream(dir / "r.run") << "q Q0 a 1 3 t\nq Q0 b 2 2 t\nq Q0 pos 3 1 t\n";
  std::ofstream(dir / "q.qrels") << "q 0 pos 1\n";
  const auto r = run("evaluate --run " + (dir / "r.run").string() + " --qrels " + (dir / "q.qrels").string() +
                     " --k 1,10");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(r.out, "R@1\t0\nR@10\t1\n");
}

TEST(Cli, Significance) {
  const auto dir = scratch() / "sig";
  fs::create_directories(dir);
  std::ofstream(dir / "a.run") << "q1 Q0 p1 1 1 a\nq2 Q0 x 1 1 a\nq3 Q0 p3 1 1 a\nq4 Q0 p4 1 1 a\n";
  std::ofstream(dir / "b.run") << "q1 Q0 x 1 1 b\nq2 Q0 x 1 1 b\nq3 Q0 p3 1 1 b\nq4 Q0 x 1 1 b\n";
  std::ofstream(dir / "q.qrels") << "q1 0 p1 1\nq2 0 p2 1\nq3 0 p3 1\nq4 0 p4 1\n";
  const auto r = run("significance --run-a " + (dir / "a.run").string() + " --run-b " + (dir / "b.run").string() +
                     " --qrels " + (dir / "q.qrels").string() + " --k 1 --comparisons 5");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("a,b,R@1,1.73205"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find(",0.01,0\n"), std::string::npos) << r.out;
}

TEST(Cli, ExitCodes) {
  auto r = run("");
  EXPECT_EQ(r.status, 2);
  r = run("search --k 10 --config /nonexistent.json");
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(r.err.rfind("error: missing_file: ", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);

  const auto dir = scratch() / "bad";
  fs::create_directories(dir);
  std::ofstream(dir / "data.jsonl") << R"({"type":"response","id":"d1","text":"x"})" << '\n'
                                    << R"({"type":"pair","context_id":"nope","response_id":"d1","split":"test"})"
                                    << '\n';
  r = run("stats --dataset " + (dir / "data.jsonl").string() + " --output-dir " + (dir / "out").string());
  EXPECT_EQ(r.status, 3);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);

  std::ofstream(dir / "nan.json") << R"({"version": 1, "dataset": ")" << kSample << R"(/dataset.jsonl",
    "encoder": {"init_scale": 1e200}, "train": {"total_steps": 3}})";
  r = run("train --config " + (dir / "nan.json").string() + " --output-dir " + (dir / "out").string());
  EXPECT_EQ(r.status, 4) << r.err;
  EXPECT_EQ(r.err.rfind("error: non_finite_loss: ", 0), 0u) << r.err;

  r = run("sample-negatives --sampler denoised --config " + kSample + "/config.json --output-dir " +
          (dir / "out").string());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("missing_flag"), std::string::npos);
}

TEST(Cli, OutputDirPrecedence) {
  const auto dir = fruit_fixture();
  const auto cfg = (dir / "config.json").string();
  auto r = run("stats --config " + cfg, "DIALRET_OUTPUT_DIR=" + (dir / "env").string());
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "env/stats.csv"));
  r = run("stats --config " + cfg + " --output-dir " + (dir / "flag").string(),
          "DIALRET_OUTPUT_DIR=" + (dir / "env2").string());
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "flag/stats.csv"));
  EXPECT_FALSE(fs::exists(dir / "env2"));
}

TEST(Cli, SubcommandsOnSample) {
  const auto out = scratch() / "sample";
  const std::string base = " --config " + kSample + "/config.json --output-dir " + out.string();
  for (const std::string cmd : {"ingest", "index", "stats", "rm3-sweep", "expand", "embed",
                                "sample-negatives --sampler sparse_top", "train --sampler random --steps 20"}) {
    const auto r = run(cmd + base);
    EXPECT_EQ(r.status, 0) << cmd << ": " << r.err;
  }
  for (const char* f : {"dataset.json", "qrels/train.qrels", "index.json", "stats.csv", "rm3_sweep.csv",
                        "expanded_dataset.json", "expansion_stats.csv", "embeddings/contexts.demb",
                        "embeddings/responses.demb", "negatives/dense_sparse_top.jsonl", "checkpoints/dense_random.demb",
                        "history/dense_random.csv"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(slurp(out / "rm3_sweep.csv").substr(0, 30), "fb_docs,fb_terms,alpha,R@1,R@1");

  const auto mined = run("sample-negatives --sampler denoised --depth 10 --window 5 --n 5 --miner " +
                         (out / "checkpoints/dense_random").string() + base);
  EXPECT_EQ(mined.status, 0) << mined.err;
  EXPECT_TRUE(fs::exists(out / "negatives/dense_denoised_k10_m5.jsonl"));
}

TEST(Cli, PipelineTwiceIsByteIdentical) {
  const std::string cfg = " --config " + kSample + "/config.json";
  const auto a = scratch() / "pa";
  const auto b = scratch() / "pb";
  ASSERT_EQ(run("pipeline" + cfg + " --output-dir " + a.string()).status, 0);
  ASSERT_EQ(run("pipeline" + cfg + " --output-dir " + b.string()).status, 0);
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().filename() == "config.json") continue;
    const auto rel = fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    ++compared;
  }
  EXPECT_GE(compared, 15u);
}
