#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "kucnet/eval.hpp"
#include "kucnet/split.hpp"
#include "kucnet/synthetic.hpp"
#include "oracles.hpp"

using namespace kucnet;

namespace {

std::vector<Index> iota(Index n, Index from = 0) {
  std::vector<Index> v(n);
  std::iota(v.begin(), v.end(), from);
  return v;
}

struct Synth {
  SyntheticData data;
  DatasetSplit split;
};

Synth synth() {
  Synth s;
  s.data = gen_synthetic({});
  s.split = split_holdout(s.data.interactions, 0.2, 1);
  return s;
}

}  // namespace

TEST(Recall, AllTestItemsInTopN) {
  const std::vector<Index> ranked{4, 2, 9}, test{2, 4};
  EXPECT_EQ(*recall_at_n(ranked, test, 20), 1.0);
}

TEST(Recall, HalfFound) {
  const auto ranked = iota(20);
  const std::vector<Index> test{3, 50};
  EXPECT_EQ(*recall_at_n(ranked, test, 20), 0.5);
}

TEST(Recall, CannotReachOneWhenTestExceedsN) {
  const auto ranked = iota(20);
  const auto test = iota(30);
  EXPECT_NEAR(*recall_at_n(ranked, test, 20), 20.0 / 30.0, 1e-15);
}

TEST(Recall, EmptyTestSetIsExcluded) {
  const auto ranked = iota(5);
  EXPECT_FALSE(recall_at_n(ranked, {}, 20).has_value());
  EXPECT_FALSE(ndcg_at_n(ranked, {}, 20).has_value());
}

TEST(Ndcg, RankOneAndRankTwo) {
  const std::vector<Index> test{7};
  EXPECT_EQ(*ndcg_at_n(std::vector<Index>{7, 1, 2}, test, 20), 1.0);
  EXPECT_NEAR(*ndcg_at_n(std::vector<Index>{1, 7, 2}, test, 20), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(*ndcg_at_n(std::vector<Index>{1, 7, 2}, test, 20), 0.6309, 1e-4);
  EXPECT_EQ(*ndcg_at_n(std::vector<Index>{1, 2, 3}, test, 20), 0.0);
}

TEST(Metrics, MatchNaiveReferenceOnRandomInstances) {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index items = 5 + static_cast<Index>(rng.below(60));
    std::vector<double> scores(items);
    for (auto& s : scores) s = static_cast<double>(rng.below(8));  // many ties
    std::set<Index> test, exclude;
    for (Index i = 0; i < items; ++i) {
      if (rng.bernoulli(0.1)) exclude.insert(i);
      else if (rng.bernoulli(0.2)) test.insert(i);
    }
    if (test.empty()) continue;
    const std::size_t n = 1 + rng.below(25);
    const std::vector<Index> ex(exclude.begin(), exclude.end()), t(test.begin(), test.end());
    const auto ranked = top_n(scores, ex, n);
    const auto full = oracle::full_ranking(scores, exclude);
    ASSERT_EQ(ranked, std::vector<Index>(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(std::min(n, full.size()))));
    EXPECT_NEAR(*recall_at_n(ranked, t, n), oracle::recall(full, test, n), 1e-12);
    EXPECT_NEAR(*ndcg_at_n(ranked, t, n), oracle::ndcg(full, test, n), 1e-12);
  }
}

TEST(TopN, ZeroScoresRankByItemId) {
  const std::vector<double> zeros(10, 0.0);
  const std::vector<Index> positives{0, 3};
  EXPECT_EQ(top_n(zeros, positives, 4), (std::vector<Index>{1, 2, 4, 5}));
}

TEST(Evaluate, PerfectScorerClosedForm) {
  const auto s = synth();
  const auto held = s.split.test.items_by_user();
  const Scorer perfect = [&](Index u) {
    std::vector<double> out(s.split.test.item_count, 0.0);
    for (Index i : held[u]) out[i] = 1.0;
    return out;
  };
  for (std::size_t n : {1u, 2u, 20u}) {
    const auto r = evaluate_scorer(perfect, s.split.train, s.split.test, n);
    double expect = 0;
    std::size_t users = 0;
    for (const auto& t : held) {
      if (t.empty()) continue;
      expect += static_cast<double>(std::min(n, t.size())) / static_cast<double>(t.size());
      ++users;
    }
    EXPECT_NEAR(r.recall, expect / static_cast<double>(users), 1e-12);
    for (const auto& m : r.users) {
      if (held[m.user].size() <= n) {
        EXPECT_NEAR(m.ndcg, 1.0, 1e-12);
      }
    }
  }
}

TEST(Evaluate, RandomScorerWithinThreeSigma) {
  const auto s = synth();
  const auto band = oracle::random_recall_band(s.split.train, s.split.test, 20);
  const auto r = evaluate_scorer(random_scorer(s.split.train.item_count, 5), s.split.train, s.split.test, 20);
  EXPECT_NEAR(r.recall, band.mean, 3 * band.sigma);
}

TEST(Evaluate, MonotoneTransformInvariant) {
  const auto s = synth();
  const auto base = random_scorer(s.split.train.item_count, 8);
  const Scorer warped = [&](Index u) {
    auto v = base(u);
    for (auto& x : v) x = 3 * std::exp(x) + 1;
    return v;
  };
  const auto a = evaluate_scorer(base, s.split.train, s.split.test, 20);
  const auto b = evaluate_scorer(warped, s.split.train, s.split.test, 20);
  EXPECT_EQ(format_report(a), format_report(b));
}

TEST(Evaluate, MeansEqualMeanOfUsers) {
  const auto s = synth();
  const auto r = evaluate_scorer(popularity_scorer(s.split.train), s.split.train, s.split.test, 20);
  double rec = 0, nd = 0;
  for (const auto& m : r.users) {
    rec += m.recall;
    nd += m.ndcg;
  }
  EXPECT_NEAR(r.recall, rec / static_cast<double>(r.users.size()), 1e-12);
  EXPECT_NEAR(r.ndcg, nd / static_cast<double>(r.users.size()), 1e-12);
  EXPECT_EQ(r.users.size() + r.skipped, s.split.test.user_count);
}

TEST(Evaluate, RankingNeverDependsOnTestSet) {
  const auto s = synth();
  std::vector<Index> calls;
  const auto base = random_scorer(s.split.train.item_count, 3);
  const Scorer spy = [&](Index u) {
    calls.push_back(u);
    return base(u);
  };
  auto shuffled = s.split.test;
  for (auto& p : shuffled.pairs) p.item = (p.item + 1) % shuffled.item_count;
  shuffled.normalize();
  evaluate_scorer(spy, s.split.train, s.split.test, 20);
  const auto first = calls;
  calls.clear();
  evaluate_scorer(spy, s.split.train, shuffled, 20);
  // Same users ranked with the same scores: the scorer only ever sees user ids.
  EXPECT_EQ(calls, first);
}

TEST(Evaluate, ThreadCountDoesNotChangeReport) {
  const auto s = synth();
  const auto sc = random_scorer(s.split.train.item_count, 4);
  EXPECT_EQ(format_report(evaluate_scorer(sc, s.split.train, s.split.test, 20, 1)),
            format_report(evaluate_scorer(sc, s.split.train, s.split.test, 20, 3)));
}

TEST(Evaluate, Errors) {
  const auto train = fixtures::interactions(2, 3, {{0, 0}, {1, 1}});
  const auto empty = fixtures::interactions(2, 3, {});
  EXPECT_THROW(evaluate_scorer(popularity_scorer(train), train, empty), EmptyDatasetError);
  const auto other = fixtures::interactions(2, 4, {{0, 3}});
  EXPECT_THROW(evaluate_scorer(popularity_scorer(train), train, other), ConfigError);
  const Scorer wrong = [](Index) { return std::vector<double>(2, 0.0); };
  EXPECT_THROW(evaluate_scorer(wrong, train, fixtures::interactions(2, 3, {{0, 2}})), ContractError);
}

TEST(Evaluate, ReportFormat) {
  EvalReport r;
  r.n = 20;
  r.users = {{0, 0.5, 0.25}, {3, 1.0, 1.0}};
  r.skipped = 1;
  r.recall = 0.75;
  r.ndcg = 0.625;
  EXPECT_EQ(format_report(r),
            "user 0 recall@20 0.500000 ndcg@20 0.250000\n"
            "user 3 recall@20 1.000000 ndcg@20 1.000000\n"
            "users_evaluated 2\nusers_skipped 1\nrecall@20 0.750000\nndcg@20 0.625000\n");
  EXPECT_EQ(to_json(r).at("users_evaluated"), 2);
}

TEST(Baselines, PopularityAndPpr) {
  const auto train = fixtures::interactions(3, 3, {{0, 0}, {1, 0}, {2, 1}});
  EXPECT_EQ(popularity_scorer(train)(0), (std::vector<double>{2, 1, 0}));
  const auto g = build_ckg(train, TripleSet{}, {});
  const auto ppr = ppr_all_users(g);
  const auto s = ppr_scorer(g, ppr)(0);
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(s[i], ppr.scores(0)[g.item_node(i)]);
  EXPECT_EQ(random_scorer(3, 1)(2), random_scorer(3, 1)(2));
  EXPECT_NE(random_scorer(3, 1)(2), random_scorer(3, 1)(1));
}

TEST(ModelRanking, UntrainedZeroEmbeddingsRankByItemId) {
  const auto g = gen_random_ckg(4, 30);
  ModelConfig c;
  c.dim = 4;
  c.attention_dim = 2;
  c.relation_count = g.relation_count();
  auto p = init_params(c, 1);
  for (int l = 1; l <= c.depth; ++l) p.relations(l).setZero();
  const auto ppr = ppr_all_users(g);
  const auto scores = model_scores(p, g, ppr, 0);
  for (double x : scores) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(top_n(scores, {}, 3), (std::vector<Index>{0, 1, 2}));
}

TEST(ModelRanking, EqualsPerPairSubgraphScoring) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = gen_random_ckg(seed, 30);
    ModelConfig c;
    c.dim = 4;
    c.attention_dim = 3;
    c.relation_count = g.relation_count();
    const auto p = init_params(c, seed);
    const auto ppr = ppr_all_users(g);
    InferenceConfig ic;
    ic.selection = EdgeSelection::all;
    const ItemRange items{g.first_item_node(), g.item_count()};
    for (Index u = 0; u < g.user_count(); ++u) {
      const auto all = model_scores(p, g, ppr, u, ic);
      for (Index i = 0; i < g.item_count(); ++i) {
        const auto sub = ui_computation_graph(extract_ui_subgraph(g, g.user_node(u), g.item_node(i), 3));
        const double one = item_scores(forward(sub, p, items), sub)[i];
        EXPECT_NEAR(all[i], one, 1e-9);
      }
    }
  }
}

TEST(ModelRanking, UserOutOfRangeIsIndexError) {
  const auto g = gen_random_ckg(4, 30);
  ModelConfig c;
  c.dim = 2;
  c.attention_dim = 1;
  c.relation_count = g.relation_count();
  const auto ppr = ppr_all_users(g);
  EXPECT_THROW(run_user(ModelParams(c), g, ppr, g.user_count()), IndexError);
}
