#include <gtest/gtest.h>

#include <complex>
#include <filesystem>

#include "test_support.hpp"

using namespace kgfc;

namespace {

// Independent oracle: Re(sum_k r_k * h_k * conj(t_k)) with std::complex.
double complex_oracle(const BasicComplexEmbedding<double>& e, std::uint32_t h, std::uint32_t r, std::uint32_t t) {
  std::complex<double> sum = 0.0;
  for (Eigen::Index k = 0; k < e.entity_re.cols(); ++k) {
    const std::complex<double> hv(e.entity_re(h, k), e.entity_im(h, k));
    const std::complex<double> rv(e.relation_re(r, k), e.relation_im(r, k));
    const std::complex<double> tv(e.entity_re(t, k), e.entity_im(t, k));
    sum += rv * hv * std::conj(tv);
  }
  return sum.real();
}

// Scalar-by-scalar recomputation of the loss.
double loss_oracle(const BasicComplexEmbedding<double>& e, const std::vector<LabeledTriple>& batch, double l3) {
  double data = 0.0;
  for (const auto& lt : batch) {
    const double phi = complex_oracle(e, lt.triple.head.value, lt.triple.relation.value, lt.triple.tail.value);
    data += std::log(1.0 + std::exp(-lt.label * phi));
  }
  data /= static_cast<double>(batch.size());
  double reg = 0.0;
  e.for_each_block([&](const auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) reg += std::pow(std::abs(m.data()[i]), 3);
  });
  return data + l3 * reg;
}

std::vector<LabeledTriple> random_batch(Rng& rng, std::size_t entities, std::size_t trained_relations, std::size_t n) {
  std::vector<LabeledTriple> batch;
  for (std::size_t i = 0; i < n; ++i) {
    batch.push_back({Triple{EntityId{static_cast<std::uint32_t>(rng.uniform_index(entities))},
                            RelationId{static_cast<std::uint32_t>(rng.uniform_index(trained_relations))},
                            EntityId{static_cast<std::uint32_t>(rng.uniform_index(entities))}},
                     rng.uniform_index(2) ? 1 : -1});
  }
  return batch;
}

}  // namespace

TEST(ComplexScore, ZeroEmbeddingsScoreZero) {
  const auto e = ComplexEmbedding::zeros(3, 3, 20);
  EXPECT_EQ(complex_score(e, EntityId{0}, RelationId{1}, EntityId{2}), 0.0);
}

TEST(ComplexScore, RealUnitVectors) {
  auto e = BasicComplexEmbedding<double>::zeros(2, 2, 1);
  e.entity_re(0, 0) = 1;
  e.entity_re(1, 0) = 1;
  e.relation_re(0, 0) = 1;
  EXPECT_EQ(complex_score(e, EntityId{0}, RelationId{0}, EntityId{1}), 1.0);
}

TEST(ComplexScore, MatchesComplexArithmeticOracle) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto e = test::random_embedding(rng, 4, 3, 2);
    for (std::uint32_t h = 0; h < 4; ++h) {
      for (std::uint32_t t = 0; t < 4; ++t) {
        EXPECT_NEAR(complex_score(e, EntityId{h}, RelationId{1}, EntityId{t}), complex_oracle(e, h, 1, t), 1e-12);
      }
    }
  }
}

TEST(ComplexScore, RealRelationIsSymmetricComplexRelationIsNot) {
  Rng rng(2);
  auto e = test::random_embedding(rng, 3, 3, 4);
  e.relation_im.row(0).setZero();
  EXPECT_NEAR(complex_score(e, EntityId{0}, RelationId{0}, EntityId{1}),
              complex_score(e, EntityId{1}, RelationId{0}, EntityId{0}), 1e-12);
  EXPECT_GT(std::abs(complex_score(e, EntityId{0}, RelationId{1}, EntityId{1}) -
                     complex_score(e, EntityId{1}, RelationId{1}, EntityId{0})),
            1e-6);
}

TEST(EmbedLoss, LogisticAtZero) {
  const auto e = BasicComplexEmbedding<double>::zeros(2, 2, 3);
  const std::vector<LabeledTriple> batch{{Triple{EntityId{0}, RelationId{0}, EntityId{1}}, +1}};
  EXPECT_NEAR(embed_loss<double>(e, batch, 0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(embed_loss<double>(e, batch, 0.0), 0.693147, 1e-6);
}

TEST(EmbedLoss, CubicRegularizer) {
  auto e = BasicComplexEmbedding<double>::zeros(2, 2, 1);
  e.entity_im(1, 0) = 2.0;
  EXPECT_NEAR(embed_loss<double>(e, {}, 1e-5), 1e-5 * 8, 1e-18);
  e.entity_im(1, 0) = -2.0;
  EXPECT_NEAR(embed_loss<double>(e, {}, 1e-5), 1e-5 * 8, 1e-18);
}

TEST(EmbedLoss, MatchesScalarOracle) {
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto e = test::random_embedding(rng, 5, 4, 3);
    const auto batch = random_batch(rng, 5, 3, 12);
    EXPECT_NEAR(embed_loss<double>(e, batch, 1e-5), loss_oracle(e, batch, 1e-5), 1e-12);
  }
}

TEST(EmbedGrad, MatchesFiniteDifferences) {
  Rng rng(4);
  const auto e = test::random_embedding(rng, 3, 3, 3);  // 3 entities, 2 trained relations + self-loop
  const auto batch = random_batch(rng, 3, 2, 8);
  EXPECT_LT(test::embedding_gradient_error(e, batch, 1e-5), 1e-4);
  EXPECT_LT(test::embedding_gradient_error(e, batch, 0.3), 1e-4);
}

TEST(EmbedGrad, SaturatedLogisticHasNegligibleScoreGradient) {
  auto e = BasicComplexEmbedding<double>::zeros(2, 2, 1);
  e.entity_re(0, 0) = 10;
  e.entity_re(1, 0) = 10;
  e.relation_re(0, 0) = 10;  // score 1000, label +1
  const std::vector<LabeledTriple> batch{{Triple{EntityId{0}, RelationId{0}, EntityId{1}}, +1}};
  const auto g = embed_grad<double>(e, batch, 0.0);
  EXPECT_LT(std::abs(g.entity_re(0, 0)), 1e-300);
  EXPECT_LT(std::abs(g.relation_re(0, 0)), 1e-300);
}

TEST(EmbedGrad, CubicRegularizerGradient) {
  auto e = BasicComplexEmbedding<double>::zeros(2, 2, 1);
  e.relation_re(0, 0) = 2.0;
  const auto g = embed_grad<double>(e, {}, 1e-5);
  EXPECT_NEAR(g.relation_re(0, 0), 1e-5 * 12, 1e-18);
  e.relation_re(0, 0) = -2.0;
  EXPECT_NEAR(embed_grad<double>(e, {}, 1e-5).relation_re(0, 0), -1e-5 * 12, 1e-18);
}

TEST(EmbedGrad, SelfLoopRowsGetNoGradient) {
  Rng rng(5);
  auto e = test::random_embedding(rng, 3, 3, 2);
  e.relation_re(2, 0) = 0.7;  // even if someone wrote into the frozen row
  const std::vector<LabeledTriple> batch{{Triple{EntityId{0}, RelationId{2}, EntityId{1}}, +1}};
  const auto g = embed_grad<double>(e, batch, 1e-3);
  EXPECT_TRUE(g.relation_re.row(2).isZero(0));
  EXPECT_TRUE(g.relation_im.row(2).isZero(0));
}

namespace {

KnowledgeGraph cycle_graph() { return test::graph_from_text("a\tr\tb\nb\tr\tc\nc\tr\ta\n"); }

}  // namespace

TEST(TrainEmbeddings, ZeroEpochsReturnsInitialization) {
  const auto g = cycle_graph();
  EmbedTrainConfig c;
  c.epochs = 0;
  c.seed = 13;
  const auto e = train_embeddings(g, c);
  EXPECT_TRUE(e == init_embeddings(g.entity_count(), g.relation_count(), c.dim, 13));
  EXPECT_LE(e.entity_re.cwiseAbs().maxCoeff(), 0.05f);
  EXPECT_TRUE(e.relation_re.row(static_cast<Eigen::Index>(g.self_loop().value)).isZero(0));
}

TEST(TrainEmbeddings, CycleGraphSeparatesTrueFromFalse) {
  const auto g = cycle_graph();
  EmbedTrainConfig c;
  c.epochs = 200;
  const auto e = train_embeddings(g, c);
  // Exhaustive oracle over all entity x trained-relation x entity triples.
  double true_sum = 0, false_sum = 0;
  std::size_t true_n = 0, false_n = 0;
  for (std::uint32_t h = 0; h < 3; ++h) {
    for (std::uint32_t r = 0; r < g.relation_count() - 1; ++r) {
      for (std::uint32_t t = 0; t < 3; ++t) {
        const Triple tr{EntityId{h}, RelationId{r}, EntityId{t}};
        const double s = complex_score(e, tr.head, tr.relation, tr.tail);
        if (g.contains(tr)) {
          true_sum += s;
          ++true_n;
        } else {
          false_sum += s;
          ++false_n;
        }
      }
    }
  }
  EXPECT_GT(true_sum / static_cast<double>(true_n), false_sum / static_cast<double>(false_n));
}

TEST(TrainEmbeddings, SeededRunsAreBitwiseIdentical) {
  const auto g = test::graph_from_text(test::planted_rule_triples(3, 10, 5));
  EmbedTrainConfig c;
  c.epochs = 5;
  const auto a = train_embeddings(g, c);
  const auto b = train_embeddings(g, c);
  EXPECT_TRUE(a == b);
  test::TempDir dir;
  save_embeddings(a, dir.file("a.emb"));
  save_embeddings(b, dir.file("b.emb"));
  EXPECT_EQ(test::read_file(dir.file("a.emb")), test::read_file(dir.file("b.emb")));
  c.seed = 1;
  EXPECT_FALSE(a == train_embeddings(g, c));
}

TEST(TrainEmbeddings, SelfLoopRowsStayZero) {
  const auto g = test::graph_from_text(test::planted_rule_triples(3, 10, 5));
  EmbedTrainConfig c;
  c.epochs = 20;
  const auto e = train_embeddings(g, c);
  const auto loop = static_cast<Eigen::Index>(g.self_loop().value);
  for (Eigen::Index k = 0; k < e.relation_re.cols(); ++k) {
    EXPECT_EQ(e.relation_re(loop, k), 0.0f);
    EXPECT_EQ(e.relation_im(loop, k), 0.0f);
  }
}

TEST(EmbeddingFile, RoundTripIsBitwiseExact) {
  test::TempDir dir;
  const auto e = init_embeddings(7, 5, 4, 99);
  save_embeddings(e, dir.file("m.emb"));
  EXPECT_TRUE(load_embeddings(dir.file("m.emb")) == e);
  EXPECT_TRUE(load_embeddings(dir.file("m.emb"), EmbeddingShape{7, 5, 4}) == e);
}

TEST(EmbeddingFile, HeaderLayout) {
  test::TempDir dir;
  save_embeddings(init_embeddings(2, 3, 1, 0), dir.file("m.emb"));
  const std::string bytes = test::read_file(dir.file("m.emb"));
  ASSERT_EQ(bytes.size(), 32u + 4u * 2u * (2u + 3u));
  EXPECT_EQ(bytes.substr(0, 4), "CPLX");
  EXPECT_EQ(bytes[4], 1);        // version, little-endian
  EXPECT_EQ(bytes[8], 2);        // entity_count
  EXPECT_EQ(bytes[16], 3);       // relation_count
  EXPECT_EQ(bytes[24], 1);       // dim
}

TEST(EmbeddingFile, TruncatedFileIsAShapeError) {
  test::TempDir dir;
  save_embeddings(init_embeddings(7, 5, 4, 99), dir.file("m.emb"));
  const std::string bytes = test::read_file(dir.file("m.emb"));
  test::write_file(dir.file("t.emb"), bytes.substr(0, bytes.size() - 9));
  try {
    load_embeddings(dir.file("t.emb"));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("shape mismatch"), std::string::npos);
  }
  test::write_file(dir.file("h.emb"), bytes.substr(0, 10));
  EXPECT_THROW(load_embeddings(dir.file("h.emb")), FormatError);
}

TEST(EmbeddingFile, DimensionMismatchNamesBothDims) {
  test::TempDir dir;
  save_embeddings(init_embeddings(7, 5, 20, 1), dir.file("m.emb"));
  try {
    load_embeddings(dir.file("m.emb"), EmbeddingShape{7, 5, 10});
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("dim 20"), std::string::npos) << msg;
    EXPECT_NE(msg.find("dim 10"), std::string::npos) << msg;
  }
}

TEST(EmbeddingFile, BadMagicAndVersion) {
  test::TempDir dir;
  save_embeddings(init_embeddings(2, 2, 2, 1), dir.file("m.emb"));
  std::string bytes = test::read_file(dir.file("m.emb"));
  std::string bad = bytes;
  bad[0] = 'X';
  test::write_file(dir.file("bad.emb"), bad);
  EXPECT_THROW(load_embeddings(dir.file("bad.emb")), FormatError);
  bad = bytes;
  bad[4] = 9;
  test::write_file(dir.file("ver.emb"), bad);
  EXPECT_THROW(load_embeddings(dir.file("ver.emb")), FormatError);
}
