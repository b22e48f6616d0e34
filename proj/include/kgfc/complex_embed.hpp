#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kgfc/adam.hpp"
#include "kgfc/binary_io.hpp"
#include "kgfc/error.hpp"
#include "kgfc/kg_store.hpp"
#include "kgfc/rng.hpp"

namespace kgfc {

/// Complex-valued entity and relation vectors. The last relation row is the
/// self-loop; it stays zero and is never trained.
///
/// Production models use `float` (the on-disk format); `double` instances
/// exist for gradient checking.
template <class Real>
struct BasicComplexEmbedding {
  using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Matrix entity_re;
  Matrix entity_im;
  Matrix relation_re;
  Matrix relation_im;

  static BasicComplexEmbedding zeros(std::size_t entities, std::size_t relations, std::size_t dim) {
    const auto e = static_cast<Eigen::Index>(entities);
    const auto r = static_cast<Eigen::Index>(relations);
    const auto d = static_cast<Eigen::Index>(dim);
    return {Matrix::Zero(e, d), Matrix::Zero(e, d), Matrix::Zero(r, d), Matrix::Zero(r, d)};
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(entity_re.cols()); }
  std::size_t entity_count() const noexcept { return static_cast<std::size_t>(entity_re.rows()); }
  std::size_t relation_count() const noexcept { return static_cast<std::size_t>(relation_re.rows()); }
  RelationId self_loop() const noexcept { return RelationId{static_cast<std::uint32_t>(relation_count() - 1)}; }

  /// Visits the four parameter blocks in file order.
  template <class F>
  void for_each_block(F&& f) {
    f(entity_re);
    f(entity_im);
    f(relation_re);
    f(relation_im);
  }
  template <class F>
  void for_each_block(F&& f) const {
    f(entity_re);
    f(entity_im);
    f(relation_re);
    f(relation_im);
  }

  /// Bitwise equality (distinguishes -0.0 from 0.0, treats identical NaNs as equal).
  friend bool operator==(const BasicComplexEmbedding& a, const BasicComplexEmbedding& b) {
    auto same = [](const Matrix& x, const Matrix& y) {
      return x.rows() == y.rows() && x.cols() == y.cols() &&
             std::memcmp(x.data(), y.data(), sizeof(Real) * static_cast<std::size_t>(x.size())) == 0;
    };
    return same(a.entity_re, b.entity_re) && same(a.entity_im, b.entity_im) &&
           same(a.relation_re, b.relation_re) && same(a.relation_im, b.relation_im);
  }
};

using ComplexEmbedding = BasicComplexEmbedding<float>;

/// Re(<r, h, conj(t)>), accumulated in double.
template <class Real>
double complex_score(const BasicComplexEmbedding<Real>& emb, EntityId head, RelationId relation, EntityId tail) {
  const auto h = static_cast<Eigen::Index>(head.value);
  const auto r = static_cast<Eigen::Index>(relation.value);
  const auto t = static_cast<Eigen::Index>(tail.value);
  const Real* hr = emb.entity_re.row(h).data();
  const Real* hi = emb.entity_im.row(h).data();
  const Real* tr = emb.entity_re.row(t).data();
  const Real* ti = emb.entity_im.row(t).data();
  const Real* rr = emb.relation_re.row(r).data();
  const Real* ri = emb.relation_im.row(r).data();
  double sum = 0.0;
  for (std::size_t k = 0; k < emb.dim(); ++k) {
    const double a = hr[k], b = hi[k], c = tr[k], d = ti[k];
    sum += static_cast<double>(rr[k]) * (a * c + b * d) + static_cast<double>(ri[k]) * (a * d - b * c);
  }
  return sum;
}

struct LabeledTriple {
  Triple triple;
  int label = 1;  // +1 true, -1 corrupted
};

namespace detail {

// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <class Real>
double l3_norm(const BasicComplexEmbedding<Real>& emb) {
  double sum = 0.0;
  emb.for_each_block([&](const auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double p = m.data()[i];
      sum += std::abs(p) * p * p;
    }
  });
  return sum;
}

}  // namespace detail

/// Mean logistic loss log(1 + exp(-y * score)) over the batch plus
/// l3_strength * sum |p|^3 over all parameters.
template <class Real>
double embed_loss(const BasicComplexEmbedding<Real>& emb, std::span<const LabeledTriple> batch, double l3_strength) {
  double data = 0.0;
  for (const LabeledTriple& lt : batch) {
    data += detail::softplus(-lt.label * complex_score(emb, lt.triple.head, lt.triple.relation, lt.triple.tail));
  }
  if (!batch.empty()) data /= static_cast<double>(batch.size());
  return data + l3_strength * detail::l3_norm(emb);
}

/// Analytic gradient of embed_loss. The self-loop rows get zero gradient.
template <class Real>
BasicComplexEmbedding<Real> embed_grad(const BasicComplexEmbedding<Real>& emb, std::span<const LabeledTriple> batch,
                                       double l3_strength) {
  auto grad = BasicComplexEmbedding<Real>::zeros(emb.entity_count(), emb.relation_count(), emb.dim());
  const double inv_n = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
  const std::size_t dim = emb.dim();

  for (const LabeledTriple& lt : batch) {
    const auto h = static_cast<Eigen::Index>(lt.triple.head.value);
    const auto r = static_cast<Eigen::Index>(lt.triple.relation.value);
    const auto t = static_cast<Eigen::Index>(lt.triple.tail.value);
    const double y = lt.label;
    const double phi = complex_score(emb, lt.triple.head, lt.triple.relation, lt.triple.tail);
    // d/dphi softplus(-y phi) = -y sigmoid(-y phi)
    const double g = -y * detail::sigmoid(-y * phi) * inv_n;
    if (g == 0.0) continue;
    const bool train_relation = lt.triple.relation != emb.self_loop();
    for (std::size_t k = 0; k < dim; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double hr = emb.entity_re(h, kk), hi = emb.entity_im(h, kk);
      const double tr = emb.entity_re(t, kk), ti = emb.entity_im(t, kk);
      const double rr = emb.relation_re(r, kk), ri = emb.relation_im(r, kk);
      grad.entity_re(h, kk) += static_cast<Real>(g * (rr * tr + ri * ti));
      grad.entity_im(h, kk) += static_cast<Real>(g * (rr * ti - ri * tr));
      grad.entity_re(t, kk) += static_cast<Real>(g * (rr * hr - ri * hi));
      grad.entity_im(t, kk) += static_cast<Real>(g * (rr * hi + ri * hr));
      if (train_relation) {
        grad.relation_re(r, kk) += static_cast<Real>(g * (hr * tr + hi * ti));
        grad.relation_im(r, kk) += static_cast<Real>(g * (hr * ti - hi * tr));
      }
    }
  }

  if (l3_strength != 0.0) {
    auto add_l3 = [&](const auto& param, auto& out) {
      for (Eigen::Index i = 0; i < param.size(); ++i) {
        const double p = param.data()[i];
        out.data()[i] += static_cast<Real>(3.0 * l3_strength * p * std::abs(p));
      }
    };
    add_l3(emb.entity_re, grad.entity_re);
    add_l3(emb.entity_im, grad.entity_im);
    add_l3(emb.relation_re, grad.relation_re);
    add_l3(emb.relation_im, grad.relation_im);
  }
  const auto loop = static_cast<Eigen::Index>(emb.self_loop().value);
  grad.relation_re.row(loop).setZero();
  grad.relation_im.row(loop).setZero();
  return grad;
}

struct EmbedTrainConfig {
  std::size_t dim = 20;
  std::size_t epochs = 1000;
  std::size_t batch_size = 50;
  double learning_rate = 1e-4;
  double l3_strength = 1e-5;
  std::size_t negatives_per_positive = 10;
  std::uint64_t seed = 0;
  double init_range = 0.05;
};

template <class Real>
struct AdamState {
  BasicComplexEmbedding<Real> first_moment;
  BasicComplexEmbedding<Real> second_moment;
  std::uint64_t step_count = 0;
  AdamHyper hyper;

  static AdamState like(const BasicComplexEmbedding<Real>& emb, double learning_rate) {
    auto zero = BasicComplexEmbedding<Real>::zeros(emb.entity_count(), emb.relation_count(), emb.dim());
    AdamState state{zero, zero, 0, {}};
    state.hyper.learning_rate = learning_rate;
    return state;
  }

  void apply(BasicComplexEmbedding<Real>& params, const BasicComplexEmbedding<Real>& grad) {
    ++step_count;
    auto step = [&](auto& p, const auto& g, auto& m, auto& v) {
      const auto n = static_cast<std::size_t>(p.size());
      adam_update<Real>(std::span(p.data(), n), std::span(g.data(), n), std::span(m.data(), n),
                        std::span(v.data(), n), step_count, hyper);
    };
    step(params.entity_re, grad.entity_re, first_moment.entity_re, second_moment.entity_re);
    step(params.entity_im, grad.entity_im, first_moment.entity_im, second_moment.entity_im);
    step(params.relation_re, grad.relation_re, first_moment.relation_re, second_moment.relation_re);
    step(params.relation_im, grad.relation_im, first_moment.relation_im, second_moment.relation_im);
  }
};

/// Seeded uniform(-range, range) initialization, self-loop row left at zero.
inline ComplexEmbedding init_embeddings(std::size_t entities, std::size_t relations, std::size_t dim,
                                        std::uint64_t seed, double range = 0.05) {
  auto emb = ComplexEmbedding::zeros(entities, relations, dim);
  Rng rng(seed);
  const auto loop = static_cast<Eigen::Index>(emb.self_loop().value);
  auto fill = [&](ComplexEmbedding::Matrix& m, bool is_relation) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (is_relation && i == loop) continue;
      for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = static_cast<float>(rng.uniform(-range, range));
    }
  };
  fill(emb.entity_re, false);
  fill(emb.entity_im, false);
  fill(emb.relation_re, true);
  fill(emb.relation_im, true);
  return emb;
}

struct EmbedEpochRecord {
  std::size_t epoch;
  double mean_loss;
};

/// Mini-batch Adam on the logistic loss. Each positive gets
/// `negatives_per_positive` corruptions of its head or tail (coin flip),
/// resampled while the corruption is itself a known triple.
inline ComplexEmbedding train_embeddings(const KnowledgeGraph& graph, const EmbedTrainConfig& config,
                                         const std::function<void(const EmbedEpochRecord&)>& on_epoch = {}) {
  if (graph.triples().empty()) throw ContractError("train_embeddings: graph has no triples");
  if (config.dim == 0 || config.batch_size == 0) throw ContractError("train_embeddings: dim and batch size must be positive");

  ComplexEmbedding emb =
      init_embeddings(graph.entity_count(), graph.relation_count(), config.dim, config.seed, config.init_range);
  if (config.epochs == 0) return emb;

  AdamState<float> adam = AdamState<float>::like(emb, config.learning_rate);
  // Separate stream so init and sampling draws do not interleave.
  Rng rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<Triple> order(graph.triples().begin(), graph.triples().end());
  std::vector<LabeledTriple> batch;
  constexpr int kMaxCorruptionTries = 32;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) {
        const Triple& pos = order[i];
        batch.push_back({pos, +1});
        for (std::size_t n = 0; n < config.negatives_per_positive; ++n) {
          for (int attempt = 0; attempt < kMaxCorruptionTries; ++attempt) {
            Triple neg = pos;
            const bool corrupt_head = rng.uniform_index(2) == 0;
            const EntityId e{static_cast<std::uint32_t>(rng.uniform_index(graph.entity_count()))};
            (corrupt_head ? neg.head : neg.tail) = e;
            if (!graph.contains(neg)) {
              batch.push_back({neg, -1});
              break;
            }
          }
        }
      }
      const double loss = embed_loss<float>(emb, batch, config.l3_strength);
      if (!std::isfinite(loss)) {
        throw DivergenceError("train_embeddings: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batches));
      }
      adam.apply(emb, embed_grad<float>(emb, batch, config.l3_strength));
      epoch_loss += loss;
      ++batches;
    }
    if (on_epoch) on_epoch({epoch, epoch_loss / static_cast<double>(batches)});
  }
  return emb;
}

// ---- persistence ---------------------------------------------------------

inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

struct EmbeddingShape {
  std::uint64_t entities = 0;
  std::uint64_t relations = 0;
  std::uint64_t dim = 0;
};

inline void save_embeddings(const ComplexEmbedding& emb, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write embedding file: " + path);
  binary::write_magic(out, "CPLX");
  binary::write_le<std::uint32_t>(out, kEmbeddingFormatVersion);
  binary::write_le<std::uint64_t>(out, emb.entity_count());
  binary::write_le<std::uint64_t>(out, emb.relation_count());
  binary::write_le<std::uint64_t>(out, emb.dim());
  emb.for_each_block([&](const ComplexEmbedding::Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) binary::write_f32(out, m.data()[i]);
  });
  if (!out) throw Error("error while writing embedding file: " + path);
}

/// Reads an embedding file; when `expected` is given the header must match it.
inline ComplexEmbedding load_embeddings(const std::string& path, std::optional<EmbeddingShape> expected = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open embedding file: " + path);
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);

  binary::expect_magic(in, "CPLX", path);
  const auto version = binary::read_le<std::uint32_t>(in);
  if (version != kEmbeddingFormatVersion) {
    throw FormatError(path + ": unsupported embedding format version " + std::to_string(version) + " (expected " +
                      std::to_string(kEmbeddingFormatVersion) + ")");
  }
  EmbeddingShape shape;
  shape.entities = binary::read_le<std::uint64_t>(in);
  shape.relations = binary::read_le<std::uint64_t>(in);
  shape.dim = binary::read_le<std::uint64_t>(in);

  if (expected) {
    if (expected->dim != shape.dim) {
      throw FormatError(path + ": embedding dim mismatch: file has dim " + std::to_string(shape.dim) +
                        ", expected dim " + std::to_string(expected->dim));
    }
    if (expected->entities != shape.entities || expected->relations != shape.relations) {
      throw FormatError(path + ": embedding shape mismatch: file has " + std::to_string(shape.entities) +
                        " entities x " + std::to_string(shape.relations) + " relations, expected " +
                        std::to_string(expected->entities) + " x " + std::to_string(expected->relations));
    }
  }
  constexpr std::uint64_t header = 4 + 4 + 3 * 8;
  const std::uint64_t payload = 2 * (shape.entities + shape.relations) * shape.dim * sizeof(float);
  if (shape.dim == 0 || shape.relations == 0 || file_size != header + payload) {
    throw FormatError(path + ": embedding shape mismatch: header declares " + std::to_string(shape.entities) + "x" +
                      std::to_string(shape.relations) + "x" + std::to_string(shape.dim) + " (" +
                      std::to_string(header + payload) + " bytes) but file holds " + std::to_string(file_size) +
                      " bytes");
  }

  auto emb = ComplexEmbedding::zeros(shape.entities, shape.relations, shape.dim);
  emb.for_each_block([&](ComplexEmbedding::Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = binary::read_f32(in);
  });
  return emb;
}

}  // namespace kgfc
