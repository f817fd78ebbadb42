#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "kucnet/dataset.hpp"
#include "kucnet/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int status = 0;
  std::string out;
};

Outcome run(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(KUCNET_CLI_PATH) + " " + args + " > " + capture.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  Outcome o;
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  o.out = fixtures::read_file(capture);
  return o;
}

const std::string kSmallData = "--users 80 --items 50 --entities 60 --clusters 4 --seed 3";
const std::string kSmallTrain = "--d 8 --d-alpha 3 --K 10 --batch 16 --seed 5";

// Generates a small dataset and trains into <dir>/run; returns the run directory.
fs::path trained_run(const fixtures::TempDir& dir, int epochs = 2) {
  const auto data = dir / "data", out = dir / "run", log = dir / "log.txt";
  EXPECT_EQ(run("gen-synthetic --out " + data.string() + " " + kSmallData, log).status, 0);
  const auto t = run("train --data " + data.string() + " --out " + out.string() + " " + kSmallTrain + " --epochs " + std::to_string(epochs), log);
  EXPECT_EQ(t.status, 0) << t.out;
  return out;
}

}  // namespace

TEST(Cli, EndToEndWithinFiveMinutes) {
  fixtures::TempDir dir;
  const auto data = dir / "data", out = dir / "run", log = dir / "log.txt";
  const auto start = std::chrono::steady_clock::now();
  ASSERT_EQ(run("gen-synthetic --out " + data.string(), log).status, 0);
  const auto pre = run("preprocess-ppr --data " + data.string() + " --out " + out.string(), log);
  ASSERT_EQ(pre.status, 0) << pre.out;
  EXPECT_TRUE(fs::exists(out / "ppr.bin"));
  const auto tr = run("train --data " + data.string() + " --out " + out.string() + " --epochs 2", log);
  ASSERT_EQ(tr.status, 0) << tr.out;
  const auto ev = run("evaluate --out " + out.string(), log);
  ASSERT_EQ(ev.status, 0) << ev.out;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 300.0);
  EXPECT_NE(ev.out.find("recall@20 "), std::string::npos);
  EXPECT_NE(ev.out.find("ndcg@20 "), std::string::npos);
  for (const char* f : {"config.json", "model.ckpt", "train_log.jsonl", "eval.txt", "eval.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
}

TEST(Cli, MissingDatasetFailsWithoutCache) {
  fixtures::TempDir dir;
  const auto out = dir / "run";
  const auto r = run("preprocess-ppr --data " + (dir / "nope").string() + " --out " + out.string(), dir / "log.txt");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.out.find("kucnet: error:"), std::string::npos);
  EXPECT_FALSE(fs::exists(out / "ppr.bin"));
}

TEST(Cli, PreprocessRerunIsNoOp) {
  fixtures::TempDir dir;
  const auto data = dir / "data", out = dir / "run", log = dir / "log.txt";
  ASSERT_EQ(run("gen-synthetic --out " + data.string() + " " + kSmallData, log).status, 0);
  const std::string args = "preprocess-ppr --data " + data.string() + " --out " + out.string();
  ASSERT_EQ(run(args, log).status, 0);
  const auto stamp = fs::last_write_time(out / "ppr.bin");
  const auto bytes = fixtures::read_file(out / "ppr.bin");
  const auto again = run(args, log);
  EXPECT_EQ(again.status, 0);
  EXPECT_NE(again.out.find("nothing to do"), std::string::npos);
  EXPECT_EQ(fs::last_write_time(out / "ppr.bin"), stamp);
  EXPECT_EQ(run(args + " --force", log).status, 0);
  EXPECT_EQ(fixtures::read_file(out / "ppr.bin"), bytes);
}

TEST(Cli, RecommendExcludesTrainingPositives) {
  fixtures::TempDir dir;
  const auto out = trained_run(dir);
  const auto r = run("recommend --out " + out.string() + " --user 4 --top 10", dir / "rec.txt");
  ASSERT_EQ(r.status, 0) << r.out;
  // Rebuild the same split the run used to find user 4's training items.
  const auto config = nlohmann::json::parse(fixtures::read_file(out / "config.json"));
  const auto data = kucnet::load_dataset(config.at("data").get<std::string>());
  kucnet::SplitConfig sc;
  sc.seed = 5;
  const auto split = kucnet::make_split(data, sc);
  const auto known = split.train.items_by_user()[4];
  std::istringstream in(r.out);
  std::size_t rank = 0, expect = 0;
  kucnet::Index item = 0;
  double score = 0;
  std::set<kucnet::Index> seen;
  while (in >> rank >> item >> score) {
    EXPECT_EQ(rank, ++expect);
    EXPECT_FALSE(std::binary_search(known.begin(), known.end(), item));
    EXPECT_TRUE(seen.insert(item).second);
  }
  EXPECT_EQ(expect, 10u);
}

TEST(Cli, ExplainUntrainedModelGivesValidJson) {
  fixtures::TempDir dir;
  const auto out = trained_run(dir, 0);
  const auto r = run("explain --out " + out.string() + " --user 0 --item 1 --threshold 0.5", dir / "ex.txt");
  ASSERT_EQ(r.status, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("schema"), "kucnet.explanation");
  for (const auto& e : j.at("edges")) EXPECT_GE(e.at("weight").get<double>(), 0.5);
  const auto dot = run("explain --out " + out.string() + " --user 0 --item 1 --format dot", dir / "ex.dot");
  ASSERT_EQ(dot.status, 0);
  EXPECT_EQ(dot.out.rfind("digraph explanation {", 0), 0u);
}

TEST(Cli, BadArgumentsExitNonzero) {
  fixtures::TempDir dir;
  const auto out = trained_run(dir, 0);
  EXPECT_NE(run("recommend --out " + out.string() + " --user 100000", dir / "a.txt").status, 0);
  EXPECT_NE(run("train --data x --out y --activation sigmoid", dir / "b.txt").status, 0);
  EXPECT_NE(run("evaluate --out " + (dir / "missing").string(), dir / "c.txt").status, 0);
  EXPECT_NE(run("", dir / "d.txt").status, 0);
}

TEST(Cli, IdenticalRunsGiveIdenticalEvalSummaries) {
  fixtures::TempDir a, b;
  const auto ra = trained_run(a), rb = trained_run(b);
  ASSERT_EQ(run("evaluate --out " + ra.string(), a / "e.txt").status, 0);
  ASSERT_EQ(run("evaluate --out " + rb.string(), b / "e.txt").status, 0);
  EXPECT_EQ(fixtures::read_file(ra / "eval.txt"), fixtures::read_file(rb / "eval.txt"));
  EXPECT_EQ(fixtures::read_file(ra / "model.ckpt"), fixtures::read_file(rb / "model.ckpt"));
}
