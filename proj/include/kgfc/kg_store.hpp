#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kgfc/error.hpp"
#include "kgfc/rng.hpp"

namespace kgfc {

struct EntityId {
  std::uint32_t value = 0;
  friend auto operator<=>(EntityId, EntityId) = default;
};

struct RelationId {
  std::uint32_t value = 0;
  friend auto operator<=>(RelationId, RelationId) = default;
};

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

inline constexpr std::string_view kInverseSuffix = "_inv";
inline constexpr std::string_view kSelfLoopLabel = "SELF_LOOP";

/// Immutable triple store with inverse closure and a self-loop action.
///
/// Relation ids are laid out as base relations [0, B), their inverses
/// [B, 2B) with inverse_of(r) = r + B, and the self-loop at 2B. Triples are
/// kept sorted by (head, relation, tail), which doubles as a CSR adjacency
/// index: the edges of entity e live in [row_offsets_[e], row_offsets_[e+1]).
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  /// Builds the closure of `base_triples`. Every relation id in the input
  /// must be a base relation; duplicates are dropped.
  KnowledgeGraph(std::vector<std::string> entity_labels, std::vector<std::string> base_relation_labels,
                 std::vector<Triple> base_triples)
      : entity_labels_(std::move(entity_labels)) {
    const auto base = static_cast<std::uint32_t>(base_relation_labels.size());
    relation_labels_ = std::move(base_relation_labels);
    relation_labels_.reserve(2 * base + 1);
    for (std::uint32_t r = 0; r < base; ++r) {
      relation_labels_.push_back(relation_labels_[r] + std::string(kInverseSuffix));
    }
    relation_labels_.emplace_back(kSelfLoopLabel);
    base_relation_count_ = base;

    triples_.reserve(2 * base_triples.size());
    for (const Triple& t : base_triples) {
      if (t.relation.value >= base || t.head.value >= entity_labels_.size() ||
          t.tail.value >= entity_labels_.size()) {
        throw ContractError("KnowledgeGraph: triple references an unknown id");
      }
      triples_.push_back(t);
      triples_.push_back(Triple{t.tail, inverse_of(t.relation), t.head});
    }
    std::sort(triples_.begin(), triples_.end());
    triples_.erase(std::unique(triples_.begin(), triples_.end()), triples_.end());

    row_offsets_.assign(entity_labels_.size() + 1, 0);
    for (const Triple& t : triples_) ++row_offsets_[t.head.value + 1];
    for (std::size_t e = 0; e < entity_labels_.size(); ++e) row_offsets_[e + 1] += row_offsets_[e];
    tails_.reserve(triples_.size());
    for (const Triple& t : triples_) tails_.push_back(t.tail);

    for (std::uint32_t i = 0; i < entity_labels_.size(); ++i) entity_index_.emplace(entity_labels_[i], i);
    for (std::uint32_t i = 0; i < relation_labels_.size(); ++i) relation_index_.emplace(relation_labels_[i], i);
  }

  std::size_t entity_count() const noexcept { return entity_labels_.size(); }
  std::size_t base_relation_count() const noexcept { return base_relation_count_; }
  /// Base + inverse + self-loop: the size of the action space.
  std::size_t relation_count() const noexcept { return relation_labels_.size(); }
  /// Number of distinct base (non-inverse) facts.
  std::size_t base_fact_count() const noexcept { return triples_.size() / 2; }

  RelationId self_loop() const noexcept { return RelationId{2 * base_relation_count_}; }
  bool is_base(RelationId r) const noexcept { return r.value < base_relation_count_; }
  bool is_inverse(RelationId r) const noexcept {
    return r.value >= base_relation_count_ && r.value < 2 * base_relation_count_;
  }
  RelationId inverse_of(RelationId r) const {
    if (is_base(r)) return RelationId{r.value + base_relation_count_};
    if (is_inverse(r)) return RelationId{r.value - base_relation_count_};
    throw ContractError("inverse_of: the self-loop has no inverse");
  }
  /// The base relation for r (r itself when r is already a base relation).
  RelationId base_of(RelationId r) const { return is_inverse(r) ? inverse_of(r) : r; }

  bool valid(EntityId e) const noexcept { return e.value < entity_count(); }
  bool valid(RelationId r) const noexcept { return r.value < relation_count(); }
  bool valid(const Triple& t) const noexcept { return valid(t.head) && valid(t.relation) && valid(t.tail); }

  const std::string& entity_label(EntityId e) const { return entity_labels_.at(e.value); }
  const std::string& relation_label(RelationId r) const { return relation_labels_.at(r.value); }
  const std::vector<std::string>& entity_labels() const noexcept { return entity_labels_; }
  const std::vector<std::string>& relation_labels() const noexcept { return relation_labels_; }
  std::span<const std::string> base_relation_labels() const noexcept {
    return std::span(relation_labels_).first(base_relation_count_);
  }

  std::optional<EntityId> find_entity(std::string_view label) const {
    auto it = entity_index_.find(std::string(label));
    if (it == entity_index_.end()) return std::nullopt;
    return EntityId{it->second};
  }
  std::optional<RelationId> find_relation(std::string_view label) const {
    auto it = relation_index_.find(std::string(label));
    if (it == relation_index_.end()) return std::nullopt;
    return RelationId{it->second};
  }

  /// All stored triples (base and inverse), sorted. Never contains the self-loop.
  std::span<const Triple> triples() const noexcept { return triples_; }

  /// Edges leaving `e`, sorted by (relation, tail).
  std::span<const Triple> edges(EntityId e) const {
    return std::span(triples_).subspan(row_offsets_[e.value], row_offsets_[e.value + 1] - row_offsets_[e.value]);
  }

  /// Destinations reachable from `e` via `r`, ascending. Empty for the self-loop.
  std::span<const EntityId> neighbors(EntityId e, RelationId r) const {
    auto [lo, hi] = relation_range(e, r);
    return std::span(tails_).subspan(lo, hi - lo);
  }

  bool contains(const Triple& t) const {
    if (!valid(t.head)) return false;
    auto row = edges(t.head);
    return std::binary_search(row.begin(), row.end(), t);
  }

  /// Base triples only, sorted.
  std::vector<Triple> base_triples() const {
    std::vector<Triple> out;
    out.reserve(base_fact_count());
    for (const Triple& t : triples_) {
      if (is_base(t.relation)) out.push_back(t);
    }
    return out;
  }

  /// Same vocabularies, minus every base triple for which `drop` holds (and
  /// its inverse).
  KnowledgeGraph without(const std::function<bool(const Triple&)>& drop) const {
    std::vector<Triple> kept;
    kept.reserve(base_fact_count());
    for (const Triple& t : triples_) {
      if (is_base(t.relation) && !drop(t)) kept.push_back(t);
    }
    return KnowledgeGraph(entity_labels_, std::vector<std::string>(base_relation_labels().begin(), base_relation_labels().end()),
                          std::move(kept));
  }

 private:
  std::pair<std::size_t, std::size_t> relation_range(EntityId e, RelationId r) const {
    const std::size_t begin = row_offsets_.at(e.value);
    const std::size_t end = row_offsets_[e.value + 1];
    auto first = triples_.begin() + static_cast<std::ptrdiff_t>(begin);
    auto last = triples_.begin() + static_cast<std::ptrdiff_t>(end);
    auto lo = std::lower_bound(first, last, r, [](const Triple& t, RelationId rel) { return t.relation < rel; });
    auto hi = std::upper_bound(lo, last, r, [](RelationId rel, const Triple& t) { return rel < t.relation; });
    return {static_cast<std::size_t>(lo - triples_.begin()), static_cast<std::size_t>(hi - triples_.begin())};
  }

  std::vector<std::string> entity_labels_;
  std::vector<std::string> relation_labels_;
  std::uint32_t base_relation_count_ = 0;
  std::vector<Triple> triples_;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<EntityId> tails_;
  std::unordered_map<std::string, std::uint32_t> entity_index_;
  std::unordered_map<std::string, std::uint32_t> relation_index_;
};

/// Legal relations at `at`: every relation with an outgoing edge, then the
/// self-loop. Ascending id order (the self-loop has the largest id).
inline std::vector<RelationId> valid_actions(const KnowledgeGraph& graph, EntityId at) {
  std::vector<RelationId> actions;
  for (const Triple& t : graph.edges(at)) {
    if (actions.empty() || actions.back() != t.relation) actions.push_back(t.relation);
  }
  actions.push_back(graph.self_loop());
  return actions;
}

/// Parses head<TAB>relation<TAB>tail lines. A relation labelled "x_inv" is
/// read as the inverse of "x" and stored as the reversed base triple.
inline KnowledgeGraph parse_triples(std::istream& in, const std::string& source = "<input>") {
  std::vector<std::string> entities;
  std::vector<std::string> relations;
  std::unordered_map<std::string, std::uint32_t> entity_ids;
  std::unordered_map<std::string, std::uint32_t> relation_ids;
  std::vector<Triple> triples;

  auto intern = [](std::unordered_map<std::string, std::uint32_t>& ids, std::vector<std::string>& labels,
                   std::string_view label) {
    auto [it, inserted] = ids.try_emplace(std::string(label), static_cast<std::uint32_t>(labels.size()));
    if (inserted) labels.emplace_back(label);
    return it->second;
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::string_view rest(line);
    std::array<std::string_view, 3> fields;
    std::size_t count = 0;
    while (true) {
      const auto tab = rest.find('\t');
      if (count < fields.size()) fields[count] = rest.substr(0, tab);
      ++count;
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (count != 3) {
      throw ParseError(source, line_no, "expected 3 tab-separated fields, found " + std::to_string(count));
    }
    if (fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw ParseError(source, line_no, "empty field");
    }

    std::string_view head = fields[0];
    std::string_view relation = fields[1];
    std::string_view tail = fields[2];
    const std::uint32_t h = intern(entity_ids, entities, head);
    const std::uint32_t t = intern(entity_ids, entities, tail);
    if (relation.size() > kInverseSuffix.size() && relation.ends_with(kInverseSuffix)) {
      relation.remove_suffix(kInverseSuffix.size());
      const std::uint32_t r = intern(relation_ids, relations, relation);
      triples.push_back(Triple{EntityId{t}, RelationId{r}, EntityId{h}});
    } else {
      const std::uint32_t r = intern(relation_ids, relations, relation);
      triples.push_back(Triple{EntityId{h}, RelationId{r}, EntityId{t}});
    }
  }
  if (triples.empty()) throw ParseError(source + ": no triples found");
  return KnowledgeGraph(std::move(entities), std::move(relations), std::move(triples));
}

inline KnowledgeGraph load_triples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LookupError("cannot open triple file: " + path);
  return parse_triples(in, path);
}

struct ClaimSample {
  Triple claim;
  bool label = false;
  EntityId true_tail;
  friend bool operator==(const ClaimSample&, const ClaimSample&) = default;
};

struct TaskDataset {
  std::string name;
  /// One relation for single tasks, several for a combined task.
  std::vector<RelationId> query_relations;
  std::vector<ClaimSample> train;
  std::vector<ClaimSample> test;
  KnowledgeGraph pruned_graph;

  RelationId query_relation() const { return query_relations.at(0); }
  std::size_t size() const noexcept { return train.size() + test.size(); }
};

inline constexpr std::size_t kMinTaskTriples = 5;

/// Pulls every (h, query_relation, t) out of the graph as a positive claim and
/// splits the positives train/test after a seeded shuffle.
inline TaskDataset extract_task(const KnowledgeGraph& graph, RelationId query_relation, double split_ratio,
                                std::uint64_t seed) {
  if (!graph.is_base(query_relation)) {
    throw ContractError("extract_task: " + (graph.valid(query_relation) ? graph.relation_label(query_relation)
                                                                         : std::to_string(query_relation.value)) +
                        " is not a base relation");
  }
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ContractError("extract_task: split ratio must be in (0, 1)");

  std::vector<Triple> positives;
  for (const Triple& t : graph.triples()) {
    if (t.relation == query_relation) positives.push_back(t);
  }
  if (positives.size() < kMinTaskTriples) {
    throw ContractError("extract_task: relation \"" + graph.relation_label(query_relation) + "\" has only " +
                        std::to_string(positives.size()) + " triples (need at least " +
                        std::to_string(kMinTaskTriples) + ")");
  }

  Rng rng(seed);
  rng.shuffle(positives);
  const auto n_train = std::min(positives.size(),
                                static_cast<std::size_t>(std::floor(split_ratio * static_cast<double>(positives.size()) + 1e-9)));

  TaskDataset task;
  task.name = graph.relation_label(query_relation);
  task.query_relations = {query_relation};
  for (std::size_t i = 0; i < positives.size(); ++i) {
    ClaimSample s{positives[i], true, positives[i].tail};
    (i < n_train ? task.train : task.test).push_back(s);
  }
  task.pruned_graph = graph.without([&](const Triple& t) { return t.relation == query_relation; });
  return task;
}

/// Union of several tasks over the same graph; the pruned graph drops every
/// member's query relation.
inline TaskDataset combine_tasks(std::string name, const std::vector<TaskDataset>& parts, const KnowledgeGraph& graph) {
  TaskDataset combined;
  combined.name = std::move(name);
  for (const TaskDataset& part : parts) {
    combined.query_relations.insert(combined.query_relations.end(), part.query_relations.begin(),
                                    part.query_relations.end());
    combined.train.insert(combined.train.end(), part.train.begin(), part.train.end());
    combined.test.insert(combined.test.end(), part.test.begin(), part.test.end());
  }
  const auto& drop = combined.query_relations;
  combined.pruned_graph =
      graph.without([&](const Triple& t) { return std::find(drop.begin(), drop.end(), t.relation) != drop.end(); });
  return combined;
}

/// Adds `ratio` tail-corrupted negatives after every positive, keeping each
/// negative in its positive's split. Candidate tails are the observed tails of
/// the same relation; when none survive the true-tail exclusion, any entity
/// that is not a true tail is used instead.
inline TaskDataset generate_negatives(const TaskDataset& task, const KnowledgeGraph& graph, std::size_t ratio,
                                      std::uint64_t seed) {
  if (ratio < 1) throw ContractError("generate_negatives: ratio must be at least 1");

  std::unordered_map<std::uint32_t, std::vector<EntityId>> tails_of;
  for (RelationId r : task.query_relations) {
    auto& tails = tails_of[r.value];
    for (const Triple& t : graph.triples()) {
      if (t.relation == r) tails.push_back(t.tail);
    }
    std::sort(tails.begin(), tails.end());
    tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
  }

  Rng rng(seed);
  std::vector<EntityId> pool;
  auto corrupt = [&](const std::vector<ClaimSample>& in) {
    std::vector<ClaimSample> out;
    out.reserve(in.size() * (ratio + 1));
    for (const ClaimSample& s : in) {
      if (!s.label) continue;
      out.push_back(s);
      const Triple& c = s.claim;
      auto truth = graph.neighbors(c.head, c.relation);
      auto is_true = [&](EntityId e) { return std::binary_search(truth.begin(), truth.end(), e); };

      pool.clear();
      auto it = tails_of.find(c.relation.value);
      if (it != tails_of.end()) {
        for (EntityId e : it->second) {
          if (!is_true(e) && e != c.tail) pool.push_back(e);
        }
      }
      if (pool.empty()) {
        for (std::uint32_t e = 0; e < graph.entity_count(); ++e) {
          if (!is_true(EntityId{e}) && EntityId{e} != c.tail) pool.push_back(EntityId{e});
        }
      }
      if (pool.empty()) {
        throw ContractError("generate_negatives: no candidate tail for (" + graph.entity_label(c.head) + ", " +
                            graph.relation_label(c.relation) + ")");
      }

      if (pool.size() >= ratio) {
        // Partial Fisher-Yates: distinct negatives.
        for (std::size_t k = 0; k < ratio; ++k) {
          std::swap(pool[k], pool[k + rng.uniform_index(pool.size() - k)]);
          out.push_back(ClaimSample{Triple{c.head, c.relation, pool[k]}, false, c.tail});
        }
      } else {
        for (std::size_t k = 0; k < ratio; ++k) {
          out.push_back(ClaimSample{Triple{c.head, c.relation, pool[rng.uniform_index(pool.size())]}, false, c.tail});
        }
      }
    }
    return out;
  };

  TaskDataset result;
  result.name = task.name;
  result.query_relations = task.query_relations;
  result.train = corrupt(task.train);
  result.test = corrupt(task.test);
  result.pruned_graph = task.pruned_graph;
  return result;
}

/// The graph used to fit embeddings for a task: everything except the test
/// positives, so held-out answers never leak into the scoring function.
inline KnowledgeGraph embedding_graph(const KnowledgeGraph& graph, const TaskDataset& task) {
  std::vector<Triple> held_out;
  for (const ClaimSample& s : task.test) {
    if (s.label) held_out.push_back(s.claim);
  }
  std::sort(held_out.begin(), held_out.end());
  return graph.without([&](const Triple& t) { return std::binary_search(held_out.begin(), held_out.end(), t); });
}

// ---- text serialization --------------------------------------------------

/// One "head<TAB>relation<TAB>tail<TAB>label<TAB>true_tail" line per sample.
inline void write_samples(std::ostream& out, const KnowledgeGraph& graph, std::span<const ClaimSample> samples) {
  for (const ClaimSample& s : samples) {
    out << graph.entity_label(s.claim.head) << '\t' << graph.relation_label(s.claim.relation) << '\t'
        << graph.entity_label(s.claim.tail) << '\t' << (s.label ? 1 : 0) << '\t' << graph.entity_label(s.true_tail)
        << '\n';
  }
}

inline std::vector<ClaimSample> read_samples(std::istream& in, const KnowledgeGraph& graph,
                                             const std::string& source = "<samples>") {
  std::vector<ClaimSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 5 || (fields[3] != "0" && fields[3] != "1")) {
      throw ParseError(source, line_no, "expected head, relation, tail, label(0|1), true_tail");
    }
    auto entity = [&](const std::string& label) {
      auto id = graph.find_entity(label);
      if (!id) throw ParseError(source, line_no, "unknown entity \"" + label + "\"");
      return *id;
    };
    auto relation = graph.find_relation(fields[1]);
    if (!relation) throw ParseError(source, line_no, "unknown relation \"" + fields[1] + "\"");
    samples.push_back(ClaimSample{Triple{entity(fields[0]), *relation, entity(fields[2])}, fields[3] == "1",
                                  entity(fields[4])});
  }
  return samples;
}

/// "id<TAB>label" lines.
inline void write_vocabulary(std::ostream& out, std::span<const std::string> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << '\t' << labels[i] << '\n';
}

}  // namespace kgfc
