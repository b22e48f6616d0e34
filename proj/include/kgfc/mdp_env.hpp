#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kgfc/complex_embed.hpp"
#include "kgfc/error.hpp"
#include "kgfc/kg_store.hpp"

namespace kgfc {

struct EnvConfig {
  std::size_t max_steps = 3;
};

struct Hop {
  RelationId relation;
  EntityId entity;
  friend auto operator<=>(const Hop&, const Hop&) = default;
};

/// Claim, hops taken so far, and where the agent stands.
struct PathState {
  Triple claim;
  std::vector<Hop> hops;

  std::size_t step() const noexcept { return hops.size(); }
  EntityId current() const noexcept { return hops.empty() ? claim.head : hops.back().entity; }
  friend bool operator==(const PathState&, const PathState&) = default;
};

using StateVector = Eigen::VectorXd;

inline PathState initial_state(const KnowledgeGraph& graph, const Triple& claim) {
  if (!graph.valid(claim)) throw ContractError("initial_state: claim references an unknown id");
  return PathState{claim, {}};
}

/// (claim head, claim relation, claim tail, then max_steps relation/entity
/// pairs) slots of 2*dim reals each.
constexpr std::size_t state_dim(std::size_t embedding_dim, std::size_t max_steps) {
  return (3 + 2 * max_steps) * 2 * embedding_dim;
}

namespace detail {

template <class Matrix>
void put_slot(StateVector& out, std::size_t slot, const Matrix& re, const Matrix& im, std::uint32_t row) {
  const auto dim = static_cast<Eigen::Index>(re.cols());
  const auto base = static_cast<Eigen::Index>(slot) * 2 * dim;
  const auto r = static_cast<Eigen::Index>(row);
  for (Eigen::Index k = 0; k < dim; ++k) {
    out[base + k] = re(r, k);
    out[base + dim + k] = im(r, k);
  }
}

}  // namespace detail

template <class Real>
StateVector encode_state(const PathState& state, const BasicComplexEmbedding<Real>& emb, const EnvConfig& env) {
  StateVector out = StateVector::Zero(static_cast<Eigen::Index>(state_dim(emb.dim(), env.max_steps)));
  detail::put_slot(out, 0, emb.entity_re, emb.entity_im, state.claim.head.value);
  detail::put_slot(out, 1, emb.relation_re, emb.relation_im, state.claim.relation.value);
  detail::put_slot(out, 2, emb.entity_re, emb.entity_im, state.claim.tail.value);
  for (std::size_t i = 0; i < state.hops.size() && i < env.max_steps; ++i) {
    const Hop& hop = state.hops[i];
    // Self-loop relation slot stays zero.
    if (hop.relation != emb.self_loop()) {
      detail::put_slot(out, 3 + 2 * i, emb.relation_re, emb.relation_im, hop.relation.value);
    }
    detail::put_slot(out, 4 + 2 * i, emb.entity_re, emb.entity_im, hop.entity.value);
  }
  return out;
}

/// The neighbour via `action` that best fits as the claim's tail; lowest id
/// wins ties.
template <class Real>
EntityId select_destination(const PathState& state, RelationId action, const KnowledgeGraph& graph,
                            const BasicComplexEmbedding<Real>& emb) {
  if (action == graph.self_loop()) return state.current();
  auto candidates = graph.neighbors(state.current(), action);
  if (candidates.empty()) {
    throw ContractError("transition: relation \"" + graph.relation_label(action) + "\" is not legal at entity \"" +
                        graph.entity_label(state.current()) + "\"");
  }
  EntityId best = candidates.front();
  double best_score = complex_score(emb, state.claim.head, state.claim.relation, best);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double s = complex_score(emb, state.claim.head, state.claim.relation, candidates[i]);
    if (s > best_score) {
      best_score = s;
      best = candidates[i];
    }
  }
  return best;
}

template <class Real>
PathState transition(const PathState& state, RelationId action, const KnowledgeGraph& graph,
                     const BasicComplexEmbedding<Real>& emb, const EnvConfig& env) {
  if (state.step() >= env.max_steps) {
    throw ContractError("transition: episode already used all " + std::to_string(env.max_steps) + " steps");
  }
  if (!graph.valid(action)) throw ContractError("transition: unknown relation id " + std::to_string(action.value));
  PathState next = state;
  next.hops.push_back(Hop{action, select_destination(state, action, graph, emb)});
  return next;
}

/// 1 when the path ends on the ground-truth tail, else 0. Terminal states only.
inline double reward(const PathState& final_state, EntityId true_tail, const EnvConfig& env) {
  if (final_state.step() != env.max_steps) {
    throw ContractError("reward: state is at step " + std::to_string(final_state.step()) + ", terminal step is " +
                        std::to_string(env.max_steps));
  }
  return final_state.current() == true_tail ? 1.0 : 0.0;
}

inline double reward(const PathState& final_state, const ClaimSample& sample, const EnvConfig& env) {
  return reward(final_state, sample.true_tail, env);
}

/// A single path supports the claim iff it ends on the claimed tail.
inline bool path_supports_claim(const PathState& state) { return state.current() == state.claim.tail; }

}  // namespace kgfc
