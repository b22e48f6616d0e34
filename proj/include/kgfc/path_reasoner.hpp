#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgfc/complex_embed.hpp"
#include "kgfc/kg_store.hpp"
#include "kgfc/mdp_env.hpp"
#include "kgfc/policy_net.hpp"

namespace kgfc {

/// prob + score^step with an integer exponent, so odd steps keep the sign.
inline double beam_heuristic(double prob, double score, std::size_t step) {
  double power = 1.0;
  for (std::size_t i = 0; i < step; ++i) power *= score;
  return prob + power;
}

struct BeamEntry {
  PathState state;
  std::vector<double> step_heuristics;
  double cumulative = 0.0;
  // Inputs of the latest step heuristic.
  double last_probability = 0.0;
  double last_score = 0.0;
};

struct EvidentialPath {
  EntityId start;
  std::vector<Hop> hops;
  EntityId final_entity;
  double weight = 0.0;  // heuristic of the final step
  double cumulative = 0.0;
  double final_probability = 0.0;
  double final_score = 0.0;
};

namespace detail {

inline bool beam_before(const BeamEntry& a, const BeamEntry& b) {
  if (a.cumulative != b.cumulative) return a.cumulative > b.cumulative;
  return a.state.hops < b.state.hops;
}

}  // namespace detail

/// Width-limited search over (relation, destination) extensions. Each
/// extension is scored with beam_heuristic(masked policy probability of the
/// relation, score of the destination as the claim's tail, round), and entries
/// are ranked by their cumulative heuristic.
template <class Real>
std::vector<EvidentialPath> beam_search(const Triple& claim, const PolicyParams& params, const KnowledgeGraph& graph,
                                        const BasicComplexEmbedding<Real>& emb, const EnvConfig& env,
                                        std::size_t width) {
  if (width == 0) throw ContractError("beam_search: width must be at least 1");
  std::vector<BeamEntry> beam{BeamEntry{initial_state(graph, claim), {}, 0.0, 0.0, 0.0}};
  std::vector<BeamEntry> next;

  for (std::size_t round = 1; round <= env.max_steps; ++round) {
    next.clear();
    for (const BeamEntry& entry : beam) {
      const EntityId at = entry.state.current();
      const auto legal = valid_actions(graph, at);
      const Eigen::VectorXd masked = mask_renormalize(policy_forward(params, encode_state(entry.state, emb, env)), legal);
      auto extend = [&](RelationId r, EntityId dest) {
        const double prob = masked[r.value];
        const double score = complex_score(emb, claim.head, claim.relation, dest);
        const double h = beam_heuristic(prob, score, round);
        BeamEntry child{entry.state, entry.step_heuristics, entry.cumulative + h, prob, score};
        child.state.hops.push_back(Hop{r, dest});
        child.step_heuristics.push_back(h);
        next.push_back(std::move(child));
      };
      for (RelationId r : legal) {
        if (r == graph.self_loop()) {
          extend(r, at);
        } else {
          for (EntityId dest : graph.neighbors(at, r)) extend(r, dest);
        }
      }
    }
    std::sort(next.begin(), next.end(), detail::beam_before);
    next.erase(std::unique(next.begin(), next.end(),
                           [](const BeamEntry& a, const BeamEntry& b) { return a.state.hops == b.state.hops; }),
               next.end());
    if (next.size() > width) next.resize(width);
    beam.swap(next);
  }

  std::vector<EvidentialPath> paths;
  paths.reserve(beam.size());
  for (const BeamEntry& e : beam) {
    paths.push_back(EvidentialPath{claim.head, e.state.hops, e.state.current(),
                                   e.step_heuristics.empty() ? 0.0 : e.step_heuristics.back(), e.cumulative,
                                   e.last_probability, e.last_score});
  }
  return paths;
}

struct VoteResult {
  EntityId winner;
  std::map<EntityId, double> weights;
};

/// Sums path weights per final entity; the heaviest entity wins, lowest id on ties.
inline VoteResult vote(const std::vector<EvidentialPath>& paths) {
  if (paths.empty()) throw ContractError("vote: no paths");
  VoteResult result;
  for (const EvidentialPath& p : paths) result.weights[p.final_entity] += p.weight;
  auto best = result.weights.begin();
  for (auto it = result.weights.begin(); it != result.weights.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  result.winner = best->first;
  return result;
}

struct Verdict {
  Triple claim;
  EntityId winner;
  std::map<EntityId, double> vote_weights;
  bool label = false;
  std::vector<EvidentialPath> paths;
};

template <class Real>
Verdict check_claim(const Triple& claim, const PolicyParams& params, const KnowledgeGraph& graph,
                    const BasicComplexEmbedding<Real>& emb, const EnvConfig& env, std::size_t width) {
  Verdict v;
  v.claim = claim;
  v.paths = beam_search(claim, params, graph, emb, env, width);
  VoteResult votes = vote(v.paths);
  v.winner = votes.winner;
  v.vote_weights = std::move(votes.weights);
  v.label = v.winner == claim.tail;
  return v;
}

/// "A –rel→ B ←rel2– C"; self-loop hops are dropped, and a path that never
/// moves renders as "A → A".
inline std::string render_path(const EvidentialPath& path, const KnowledgeGraph& graph) {
  std::string out = graph.entity_label(path.start);
  bool moved = false;
  for (const Hop& hop : path.hops) {
    if (hop.relation == graph.self_loop()) continue;
    moved = true;
    if (graph.is_inverse(hop.relation)) {
      out += " ←" + graph.relation_label(graph.base_of(hop.relation)) + "– ";
    } else {
      out += " –" + graph.relation_label(hop.relation) + "→ ";
    }
    out += graph.entity_label(hop.entity);
  }
  if (!moved) out += " → " + graph.entity_label(path.start);
  return out;
}

inline std::string render_claim(const Triple& claim, const KnowledgeGraph& graph) {
  return graph.entity_label(claim.head) + " " + graph.relation_label(claim.relation) + " " +
         graph.entity_label(claim.tail);
}

/// One JSON object per verdict, suitable for line-delimited export.
inline nlohmann::json verdict_to_json(const Verdict& v, const KnowledgeGraph& graph) {
  nlohmann::json paths = nlohmann::json::array();
  for (const EvidentialPath& p : v.paths) {
    paths.push_back({{"path", render_path(p, graph)},
                     {"final_entity", graph.entity_label(p.final_entity)},
                     {"weight", p.weight}});
  }
  return {{"claim",
           {{"head", graph.entity_label(v.claim.head)},
            {"relation", graph.relation_label(v.claim.relation)},
            {"tail", graph.entity_label(v.claim.tail)}}},
          {"verdict", v.label},
          {"winner", graph.entity_label(v.winner)},
          {"paths", std::move(paths)}};
}

}  // namespace kgfc
