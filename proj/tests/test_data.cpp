#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "kucnet/ckg.hpp"
#include "kucnet/dataset.hpp"
#include "kucnet/pipeline.hpp"
#include "kucnet/split.hpp"
#include "kucnet/synthetic.hpp"
#include "oracles.hpp"

using namespace kucnet;
using fixtures::TempDir;
using fixtures::write_file;

TEST(Interactions, ParsesUserWithSeveralItems) {
  TempDir dir;
  write_file(dir / "a.txt", "0 5 7\n");
  const auto s = load_interactions(dir / "a.txt");
  EXPECT_EQ(s.pairs, (std::vector<Interaction>{{0, 5}, {0, 7}}));
}

TEST(Interactions, DropsDuplicatePairs) {
  TempDir dir;
  write_file(dir / "a.txt", "0 5 5\n");
  EXPECT_EQ(load_interactions(dir / "a.txt").pairs, (std::vector<Interaction>{{0, 5}}));
}

TEST(Interactions, CountsFromMaxIds) {
  TempDir dir;
  write_file(dir / "a.txt", "0 1\n1 0 2\n");
  const auto s = load_interactions(dir / "a.txt");
  EXPECT_EQ(s.user_count, 2u);
  EXPECT_EQ(s.item_count, 3u);
  EXPECT_EQ(s.pairs.size(), 3u);
}

TEST(Interactions, HeaderRaisesCounts) {
  TempDir dir;
  write_file(dir / "a.txt", "# users 4 items 9\n0 1\n");
  const auto s = load_interactions(dir / "a.txt");
  EXPECT_EQ(s.user_count, 4u);
  EXPECT_EQ(s.item_count, 9u);
}

TEST(Interactions, MalformedLineReportsLineNumber) {
  TempDir dir;
  write_file(dir / "a.txt", "0 1\n\n1 x\n");
  try {
    load_interactions(dir / "a.txt");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Interactions, EmptyFileIsEmptyDatasetError) {
  TempDir dir;
  write_file(dir / "a.txt", "");
  EXPECT_THROW(load_interactions(dir / "a.txt"), EmptyDatasetError);
}

TEST(Interactions, MissingFileIsIoError) {
  TempDir dir;
  EXPECT_THROW(load_interactions(dir / "nope.txt"), IoError);
}

TEST(Interactions, SaveLoadRoundTrip) {
  TempDir dir;
  const auto s = fixtures::interactions(3, 6, {{0, 1}, {0, 4}, {2, 5}});
  save_interactions(s, dir / "a.txt");
  EXPECT_EQ(load_interactions(dir / "a.txt"), s);
}

TEST(Triples, ParsesOneTriple) {
  TempDir dir;
  write_file(dir / "kg.txt", "3 1 9\n");
  const auto kg = load_kg_triples(dir / "kg.txt");
  ASSERT_EQ(kg.triples.size(), 1u);
  EXPECT_EQ(kg.triples[0], (Triple{3, 1, 9}));
  EXPECT_EQ(kg.entity_count, 10u);
  EXPECT_EQ(kg.relation_count, 2u);
}

TEST(Triples, DuplicatesCollapseKeepingFileOrder) {
  TempDir dir;
  write_file(dir / "kg.txt", "2 0 1\n0 0 1\n2 0 1\n");
  const auto kg = load_kg_triples(dir / "kg.txt");
  EXPECT_EQ(kg.triples, (std::vector<Triple>{{2, 0, 1}, {0, 0, 1}}));
}

TEST(Triples, EmptyFileIsEmptySet) {
  TempDir dir;
  write_file(dir / "kg.txt", "");
  const auto kg = load_kg_triples(dir / "kg.txt");
  EXPECT_TRUE(kg.triples.empty());
  EXPECT_EQ(kg.entity_count, 0u);
  EXPECT_EQ(kg.relation_count, 0u);
}

TEST(Triples, WrongTokenCountReportsLineNumber) {
  TempDir dir;
  write_file(dir / "kg.txt", "0 0 1\n0 1\n");
  try {
    load_kg_triples(dir / "kg.txt");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Ckg, SingleInteractionGivesTwoNodes) {
  const auto g = build_ckg(fixtures::interactions(1, 1, {{0, 0}}), TripleSet{}, {});
  EXPECT_EQ(g.node_count(), 2u);
  EXPECT_EQ(oracle::edge_set(g), (std::set<FullEdge>{{0, 0, 1}, {1, g.reverse(0), 0}}));
}

TEST(Ckg, AlignedItemSharesItsEntityNode) {
  // One item aligned to entity 0, one triple (0, r0, 1): user, item and one entity.
  const auto g = build_ckg(fixtures::interactions(1, 1, {{0, 0}}), fixtures::triples(2, 1, {{0, 0, 1}}),
                           fixtures::identity_alignment(1));
  EXPECT_EQ(g.node_count(), 3u);
  EXPECT_TRUE(g.has_edge(g.item_node(0), g.kg_relation(0), 2));
  EXPECT_TRUE(g.has_edge(2, g.reverse(g.kg_relation(0)), g.item_node(0)));
}

TEST(Ckg, SharedEntityConnectsItemsInTwoHops) {
  const auto g = build_ckg(fixtures::interactions(1, 2, {{0, 0}}), fixtures::triples(3, 1, {{0, 0, 2}, {1, 0, 2}}),
                           fixtures::identity_alignment(2));
  const auto d = oracle::all_pairs(g);
  EXPECT_EQ(d[g.item_node(0)][g.item_node(1)], 2);
  EXPECT_EQ(d[g.user_node(0)][g.item_node(1)], 3);
}

TEST(Ckg, ReverseClosure) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = gen_random_ckg(seed, 30);
    for (const auto& e : oracle::edge_set(g)) {
      EXPECT_TRUE(g.has_edge(e.tail, g.reverse(e.relation), e.head));
      EXPECT_EQ(g.reverse(g.reverse(e.relation)), e.relation);
    }
  }
}

TEST(Ckg, OutEdgesSortedByTailThenRelation) {
  const auto g = gen_random_ckg(7, 40);
  for (NodeId n = 0; n < g.node_count(); ++n) {
    const auto e = g.out_edges(n);
    EXPECT_TRUE(std::is_sorted(e.begin(), e.end(), CollaborativeKG::edge_less));
  }
}

TEST(Ckg, NodeLayoutAndIdRoundTrip) {
  const auto g = gen_random_ckg(3, 40);
  for (NodeId n = 0; n < g.node_count(); ++n) {
    const auto ref = g.node_ref(n);
    EXPECT_EQ(g.node_of(ref), n);
    if (n < g.user_count()) EXPECT_EQ(ref.kind, NodeKind::user);
    else if (n < g.user_count() + g.item_count()) EXPECT_EQ(ref.kind, NodeKind::item);
    else EXPECT_EQ(ref.kind, NodeKind::entity);
  }
}

TEST(Ckg, RelationNames) {
  const auto g = build_ckg(fixtures::interactions(1, 1, {{0, 0}}), fixtures::triples(2, 2, {}), {});
  EXPECT_EQ(g.relation_names(), (std::vector<std::string>{"interact", "r0", "r1", "-interact", "-r0", "-r1"}));
}

TEST(Ckg, TwoItemsOnOneEntityIsAlignmentError) {
  EXPECT_THROW(build_ckg(fixtures::interactions(1, 2, {{0, 0}}), fixtures::triples(2, 1, {}), {{0, 0}, {1, 0}}),
               AlignmentError);
  EXPECT_THROW(build_ckg(fixtures::interactions(1, 2, {{0, 0}}), fixtures::triples(2, 1, {}), {{0, 0}, {0, 1}}),
               AlignmentError);
  EXPECT_THROW(build_ckg(fixtures::interactions(1, 2, {{0, 0}}), fixtures::triples(2, 1, {}), {{0, 5}}),
               AlignmentError);
}

TEST(Ckg, UserAlignmentMergesUserNode) {
  const auto g = build_ckg(fixtures::interactions(1, 1, {{0, 0}}), fixtures::triples(3, 1, {{2, 0, 1}}),
                           {{0, 0}}, {{0, 2}});
  EXPECT_EQ(g.node_count(), 3u);
  EXPECT_TRUE(g.has_edge(g.user_node(0), g.kg_relation(0), g.entity_node(1)));
}

TEST(Ckg, CacheRoundTrip) {
  TempDir dir;
  const auto g = gen_random_ckg(11, 40);
  save_ckg(g, dir / "g.bin");
  EXPECT_EQ(load_ckg(dir / "g.bin"), g);
}

TEST(Ckg, CorruptCacheIsFormatError) {
  TempDir dir;
  write_file(dir / "g.bin", "not a graph");
  EXPECT_THROW(load_ckg(dir / "g.bin"), Error);
}

TEST(Split, NewItemFoldsHoldTwoItemsEach) {
  InteractionSet s;
  s.user_count = 3;
  s.item_count = 10;
  for (Index u = 0; u < 3; ++u) {
    for (Index i = 0; i < 10; ++i) s.pairs.push_back({u, i});
  }
  s.normalize();
  const auto folds = split_new_item(s, 5, 42);
  ASSERT_EQ(folds.size(), 5u);
  for (const auto& f : folds) {
    const auto test_items = f.test.items();
    EXPECT_EQ(test_items.size(), 2u);
    for (Index i : f.train.items()) EXPECT_FALSE(std::binary_search(test_items.begin(), test_items.end(), i));
  }
}

TEST(Split, NewUserFoldsHoldTwoUsersEach) {
  InteractionSet s;
  s.user_count = 10;
  s.item_count = 3;
  for (Index u = 0; u < 10; ++u) s.pairs.push_back({u, u % 3});
  s.normalize();
  for (const auto& f : split_new_user(s, 5, 9)) {
    const auto test_users = f.test.users();
    EXPECT_EQ(test_users.size(), 2u);
    for (Index u : f.train.users()) EXPECT_FALSE(std::binary_search(test_users.begin(), test_users.end(), u));
  }
}

TEST(Split, FoldsPartitionThePairs) {
  InteractionSet s;
  s.user_count = 4;
  s.item_count = 10;
  Rng rng(5);
  while (s.pairs.size() < 20) {
    s.pairs.push_back({static_cast<Index>(rng.below(4)), static_cast<Index>(rng.below(10))});
    s.normalize();
  }
  for (auto folds : {split_new_item(s, 5, 1), split_new_user(s, 4, 1)}) {
    std::multiset<Interaction> seen;
    for (const auto& f : folds) {
      seen.insert(f.test.pairs.begin(), f.test.pairs.end());
      std::set<Interaction> all(f.train.pairs.begin(), f.train.pairs.end());
      all.insert(f.test.pairs.begin(), f.test.pairs.end());
      EXPECT_EQ(all.size(), s.pairs.size());
    }
    EXPECT_EQ(std::vector<Interaction>(seen.begin(), seen.end()), s.pairs);
  }
}

TEST(Split, SameSeedSamePartition) {
  const auto d = gen_synthetic({});
  const auto a = split_new_item(d.interactions, 5, 3), b = split_new_item(d.interactions, 5, 3);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].test, b[k].test);
  EXPECT_EQ(split_holdout(d.interactions, 0.2, 3).test, split_holdout(d.interactions, 0.2, 3).test);
}

TEST(Split, FewerItemsThanFoldsIsConfigError) {
  EXPECT_THROW(split_new_item(fixtures::interactions(1, 3, {{0, 0}}), 5, 1), ConfigError);
}

TEST(Split, HoldoutKeepsEveryTestItemSeenInTraining) {
  const auto d = gen_synthetic({});
  const auto s = split_holdout(d.interactions, 0.2, 1);
  const auto train_items = s.train.items();
  for (const auto& p : s.test.pairs) {
    EXPECT_TRUE(std::binary_search(train_items.begin(), train_items.end(), p.item));
    EXPECT_FALSE(s.train.contains(p.user, p.item));
  }
  EXPECT_EQ(s.train.pairs.size() + s.test.pairs.size(), d.interactions.pairs.size());
  const double share = static_cast<double>(s.test.pairs.size()) / static_cast<double>(d.interactions.pairs.size());
  EXPECT_NEAR(share, 0.2, 0.05);
}

TEST(Synthetic, NoNoiseKeepsEveryPairInCluster) {
  SyntheticConfig c;
  c.noise = 0.0;
  const auto d = gen_synthetic(c);
  for (const auto& p : d.interactions.pairs) EXPECT_EQ(d.user_cluster[p.user], d.item_cluster[p.item]);
  for (const auto& t : d.kg.triples) EXPECT_EQ(d.entity_cluster[t.head], d.entity_cluster[t.tail]);
}

TEST(Synthetic, SameSeedIdenticalFiles) {
  TempDir dir;
  SyntheticConfig c;
  c.seed = 77;
  save_interactions(gen_synthetic(c).interactions, dir / "a.txt");
  save_interactions(gen_synthetic(c).interactions, dir / "b.txt");
  save_kg_triples(gen_synthetic(c).kg, dir / "ka.txt");
  save_kg_triples(gen_synthetic(c).kg, dir / "kb.txt");
  EXPECT_EQ(fixtures::read_file(dir / "a.txt"), fixtures::read_file(dir / "b.txt"));
  EXPECT_EQ(fixtures::read_file(dir / "ka.txt"), fixtures::read_file(dir / "kb.txt"));
}

TEST(Synthetic, ClusterAgreementAtLeastOneMinusNoise) {
  SyntheticConfig c;
  c.users = 20;
  c.items = 100;
  c.entities = 120;
  c.clusters = 4;
  c.min_interactions = c.max_interactions = 10;  // 200 pairs
  c.noise = 0.1;
  const auto d = gen_synthetic(c);
  ASSERT_EQ(d.interactions.pairs.size(), 200u);
  std::size_t agree = 0;
  for (const auto& p : d.interactions.pairs) agree += d.user_cluster[p.user] == d.item_cluster[p.item];
  EXPECT_GE(static_cast<double>(agree) / 200.0, 1.0 - c.noise);
}

TEST(Synthetic, InfeasibleSizesAreConfigErrors) {
  SyntheticConfig c;
  c.clusters = c.items + 1;
  EXPECT_THROW(gen_synthetic(c), ConfigError);
  c = {};
  c.noise = 1.0;
  EXPECT_THROW(gen_synthetic(c), ConfigError);
  c = {};
  c.entities = c.items - 1;
  EXPECT_THROW(gen_synthetic(c), ConfigError);
}

TEST(Pipeline, LoadsDatasetDirectoryWithDefaultAlignment) {
  TempDir dir;
  write_file(dir / "interactions.txt", "0 0 1\n1 1\n");
  write_file(dir / "kg.txt", "0 0 2\n1 0 2\n");
  const auto d = load_dataset(dir.path());
  ASSERT_TRUE(d.interactions.has_value());
  EXPECT_EQ(d.item_alignment, (Alignment{{0, 0}, {1, 1}}));
  const auto g = build_ckg(d, *d.interactions);
  EXPECT_EQ(g.node_count(), 5u);
}

TEST(Pipeline, MissingDirectoryIsIoError) {
  EXPECT_THROW(load_dataset("/nonexistent/kucnet"), IoError);
}

TEST(Pipeline, ValidationSplitFollowsScenario) {
  const auto d = gen_synthetic({});
  const auto outer = split_new_item(d.interactions, 5, 1)[0];
  const auto val = validation_split(outer.train, Scenario::new_item, 0.2, 1);
  const auto train_items = val.train.items();
  for (Index i : val.test.items()) EXPECT_FALSE(std::binary_search(train_items.begin(), train_items.end(), i));
}
