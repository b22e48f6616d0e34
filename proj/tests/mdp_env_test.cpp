#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace kgfc;

namespace {

KnowledgeGraph small_graph() {
  return test::graph_from_text(
      "a\tr\tb\n"
      "a\tr\tc\n"
      "b\ts\tc\n"
      "c\tr\td\n");
}

}  // namespace

TEST(EncodeState, LengthAndInitialLayout) {
  const auto g = small_graph();
  Rng rng(1);
  const auto emb = test::random_embedding(rng, g.entity_count(), g.relation_count(), 20);
  const EnvConfig env;
  const Triple claim{test::ent(g, "a"), test::rel(g, "r"), test::ent(g, "d")};
  const auto sv = encode_state(initial_state(g, claim), emb, env);
  ASSERT_EQ(sv.size(), 360);
  EXPECT_EQ(state_dim(20, 3), 360u);
  for (Eigen::Index i = 120; i < 360; ++i) ASSERT_EQ(sv[i], 0.0) << i;
  for (Eigen::Index k = 0; k < 20; ++k) {
    EXPECT_EQ(sv[k], emb.entity_re(claim.head.value, k));
    EXPECT_EQ(sv[20 + k], emb.entity_im(claim.head.value, k));
    EXPECT_EQ(sv[40 + k], emb.relation_re(claim.relation.value, k));
    EXPECT_EQ(sv[60 + k], emb.relation_im(claim.relation.value, k));
    EXPECT_EQ(sv[80 + k], emb.entity_re(claim.tail.value, k));
    EXPECT_EQ(sv[100 + k], emb.entity_im(claim.tail.value, k));
  }
}

TEST(EncodeState, HopSlotsFollowThePath) {
  const auto g = small_graph();
  Rng rng(2);
  const auto emb = test::random_embedding(rng, g.entity_count(), g.relation_count(), 4);
  const EnvConfig env;
  PathState s{Triple{test::ent(g, "a"), test::rel(g, "r"), test::ent(g, "d")}, {}};
  s.hops.push_back(Hop{test::rel(g, "r"), test::ent(g, "b")});
  s.hops.push_back(Hop{g.self_loop(), test::ent(g, "b")});
  const auto sv = encode_state(s, emb, env);
  const Eigen::Index slot = 8;  // 2 * dim
  // hop 1 relation slot (3), entity slot (4)
  EXPECT_EQ(sv[3 * slot], emb.relation_re(test::rel(g, "r").value, 0));
  EXPECT_EQ(sv[4 * slot + 5], emb.entity_im(test::ent(g, "b").value, 1));
  // hop 2 is a self-loop: relation slot (5) stays zero, entity slot (6) is b
  EXPECT_TRUE(sv.segment(5 * slot, slot).isZero(0));
  EXPECT_EQ(sv[6 * slot], emb.entity_re(test::ent(g, "b").value, 0));
  // hop 3 not taken yet
  EXPECT_TRUE(sv.segment(7 * slot, 2 * slot).isZero(0));
}

TEST(EncodeState, ZeroEmbeddingsEncodeToZero) {
  const auto g = small_graph();
  const auto emb = ComplexEmbedding::zeros(g.entity_count(), g.relation_count(), 3);
  const auto sv = encode_state(PathState{Triple{EntityId{0}, RelationId{0}, EntityId{1}}, {}}, emb, EnvConfig{});
  EXPECT_TRUE(sv.isZero(0));
}

TEST(EncodeState, ClaimIsVisibleInTheState) {
  const auto g = small_graph();
  Rng rng(4);
  const auto emb = test::random_embedding(rng, g.entity_count(), g.relation_count(), 5);
  const EnvConfig env;
  const PathState x = initial_state(g, Triple{test::ent(g, "a"), test::rel(g, "r"), test::ent(g, "c")});
  const PathState y = initial_state(g, Triple{test::ent(g, "a"), test::rel(g, "r"), test::ent(g, "d")});
  EXPECT_EQ(x.current(), y.current());
  EXPECT_EQ(x.step(), 0u);
  const auto sx = encode_state(x, emb, env);
  EXPECT_NE(sx, encode_state(y, emb, env));
  std::size_t nonzero_slots = 0;
  for (Eigen::Index slot = 0; slot < 9; ++slot) nonzero_slots += !sx.segment(slot * 10, 10).isZero(0);
  EXPECT_EQ(nonzero_slots, 3u);
}

TEST(Transition, SelfLoopStaysPut) {
  const auto g = small_graph();
  const auto emb = ComplexEmbedding::zeros(g.entity_count(), g.relation_count(), 3);
  const EnvConfig env;
  const PathState s0 = initial_state(g, Triple{test::ent(g, "a"), test::rel(g, "r"), test::ent(g, "d")});
  const PathState s1 = transition(s0, g.self_loop(), g, emb, env);
  EXPECT_EQ(s1.current(), test::ent(g, "a"));
  EXPECT_EQ(s1.step(), 1u);
}

TEST(Transition, PicksHighestScoringNeighbour) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = test::random_graph(rng, 8, 3, 30);
    const auto emb = test::random_embedding(rng, g.entity_count(), g.relation_count(), 3);
    const EnvConfig env;
    const Triple claim{EntityId{static_cast<std::uint32_t>(rng.uniform_index(8))}, RelationId{0},
                       EntityId{static_cast<std::uint32_t>(rng.uniform_index(8))}};
    const PathState s0 = initial_state(g, claim);
    for (RelationId r : valid_actions(g, claim.head)) {
      const PathState s1 = transition(s0, r, g, emb, env);
      EXPECT_EQ(s1.step(), 1u);
      if (r == g.self_loop()) continue;
      // oracle: scan the raw triple list for every r-neighbour
      double best = -INFINITY;
      EntityId best_id{};
      for (const Triple& t : g.triples()) {
        if (t.head != claim.head || t.relation != r) continue;
        const double s = complex_score(emb, claim.head, claim.relation, t.tail);
        if (s > best || (s == best && t.tail < best_id)) {
          best = s;
          best_id = t.tail;
        }
      }
      EXPECT_EQ(s1.current(), best_id);
    }
  }
}

TEST(Transition, SingleNeighbourIsTakenRegardlessOfScore) {
  const auto g = small_graph();
  Rng rng(5);
  auto emb = test::random_embedding(rng, g.entity_count(), g.relation_count(), 3);
  emb.entity_re.row(test::ent(g, "c").value).setConstant(-10);  // worst possible fit
  const PathState s0 = initial_state(g, Triple{test::ent(g, "b"), test::rel(g, "r"), test::ent(g, "d")});
  EXPECT_EQ(transition(s0, test::rel(g, "s"), g, emb, EnvConfig{}).current(), test::ent(g, "c"));
}

TEST(Transition, TiesGoToLowestId) {
  const auto g = small_graph();
  const auto emb = ComplexEmbedding::zeros(g.entity_count(), g.relation_count(), 3);
  const PathState s0 = initial_state(g, Triple{test::ent(g, "a"), test::rel(g, "r"), test::ent(g, "d")});
  EXPECT_EQ(transition(s0, test::rel(g, "r"), g, emb, EnvConfig{}).current(), test::ent(g, "b"));
}

TEST(Transition, IllegalActionIsAContractError) {
  const auto g = small_graph();
  const auto emb = ComplexEmbedding::zeros(g.entity_count(), g.relation_count(), 3);
  const PathState s0 = initial_state(g, Triple{test::ent(g, "a"), test::rel(g, "r"), test::ent(g, "d")});
  EXPECT_THROW(transition(s0, test::rel(g, "s"), g, emb, EnvConfig{}), ContractError);
  EXPECT_THROW(transition(s0, RelationId{99}, g, emb, EnvConfig{}), ContractError);
}

TEST(Transition, NoStepsLeftIsAContractError) {
  const auto g = small_graph();
  const auto emb = ComplexEmbedding::zeros(g.entity_count(), g.relation_count(), 3);
  const EnvConfig env;
  PathState s = initial_state(g, Triple{test::ent(g, "a"), test::rel(g, "r"), test::ent(g, "d")});
  for (int i = 0; i < 3; ++i) s = transition(s, g.self_loop(), g, emb, env);
  EXPECT_THROW(transition(s, g.self_loop(), g, emb, env), ContractError);
}

TEST(InitialState, RejectsUnknownIds) {
  const auto g = small_graph();
  EXPECT_THROW(initial_state(g, Triple{EntityId{42}, RelationId{0}, EntityId{0}}), ContractError);
}

TEST(Reward, TerminalStateOnTrueTail) {
  const auto g = small_graph();
  const auto emb = ComplexEmbedding::zeros(g.entity_count(), g.relation_count(), 3);
  const EnvConfig env;
  const EntityId a = test::ent(g, "a"), c = test::ent(g, "c"), d = test::ent(g, "d");
  PathState s = initial_state(g, Triple{a, test::rel(g, "r"), d});
  EXPECT_THROW(reward(s, d, env), ContractError);
  s = transition(s, test::rel(g, "r"), g, emb, env);  // a -> b
  s = transition(s, test::rel(g, "s"), g, emb, env);  // b -> c
  EXPECT_THROW(reward(s, c, env), ContractError);
  s = transition(s, test::rel(g, "r"), g, emb, env);  // c -> d
  EXPECT_EQ(reward(s, d, env), 1.0);
  EXPECT_EQ(reward(s, c, env), 0.0);
  EXPECT_TRUE(path_supports_claim(s));
}

TEST(Reward, NegativeSampleRewardedOnTrueTail) {
  const auto g = small_graph();
  const auto emb = ComplexEmbedding::zeros(g.entity_count(), g.relation_count(), 3);
  const EnvConfig env;
  const EntityId a = test::ent(g, "a"), b = test::ent(g, "b");
  // Claim a r c is a corruption; its true tail is b.
  const ClaimSample sample{Triple{a, test::rel(g, "r"), test::ent(g, "c")}, false, b};
  PathState s = initial_state(g, sample.claim);
  s = transition(s, test::rel(g, "r"), g, emb, env);
  s = transition(s, g.self_loop(), g, emb, env);
  s = transition(s, g.self_loop(), g, emb, env);
  EXPECT_EQ(reward(s, sample, env), 1.0);
  EXPECT_FALSE(path_supports_claim(s));
}

TEST(Reward, SelfLoopOnlyPath) {
  const auto g = small_graph();
  const auto emb = ComplexEmbedding::zeros(g.entity_count(), g.relation_count(), 3);
  const EnvConfig env{2};
  const EntityId a = test::ent(g, "a");
  PathState s = initial_state(g, Triple{a, test::rel(g, "r"), a});
  s = transition(s, g.self_loop(), g, emb, env);
  s = transition(s, g.self_loop(), g, emb, env);
  EXPECT_EQ(reward(s, a, env), 1.0);
}
