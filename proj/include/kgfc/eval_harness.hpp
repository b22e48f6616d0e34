#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "kgfc/complex_embed.hpp"
#include "kgfc/config.hpp"
#include "kgfc/kg_store.hpp"
#include "kgfc/mdp_env.hpp"
#include "kgfc/path_reasoner.hpp"
#include "kgfc/policy_net.hpp"

namespace kgfc {

struct SampleRecord {
  ClaimSample sample;
  bool reached = false;  // some path ends on true_tail
  EntityId winner;
  bool correct = false;  // winner == true_tail
  Verdict verdict;
};

struct EvalReport {
  std::string task;
  std::size_t dataset_size = 0;
  std::size_t beam_width = 0;
  double hits = 0.0;           // over all test samples
  double hits_positive = 0.0;  // over positive test samples only
  double voting_accuracy = 0.0;
  std::vector<SampleRecord> samples;
};

namespace detail {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
// handled by exactly one worker, so per-index outputs are deterministic.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  threads = std::min(threads, n);
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += threads) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

/// Beam-searches every test claim of the task over its pruned graph and
/// scores reachability (hits) and vote correctness against true_tail.
template <class Real>
EvalReport evaluate_task(const TaskDataset& task, const PolicyParams& params, const BasicComplexEmbedding<Real>& emb,
                         const EnvConfig& env, std::size_t width, std::size_t threads = 1) {
  if (task.test.empty()) throw ContractError("evaluate: task \"" + task.name + "\" has an empty test split");
  EvalReport report;
  report.task = task.name;
  report.dataset_size = task.size();
  report.beam_width = width;
  report.samples.resize(task.test.size());

  detail::parallel_for(task.test.size(), threads, [&](std::size_t i) {
    const ClaimSample& s = task.test[i];
    SampleRecord rec;
    rec.sample = s;
    rec.verdict = check_claim(s.claim, params, task.pruned_graph, emb, env, width);
    rec.reached = std::any_of(rec.verdict.paths.begin(), rec.verdict.paths.end(),
                              [&](const EvidentialPath& p) { return p.final_entity == s.true_tail; });
    rec.winner = rec.verdict.winner;
    rec.correct = rec.winner == s.true_tail;
    report.samples[i] = std::move(rec);
  });

  std::size_t reached = 0, correct = 0, positives = 0, positives_reached = 0;
  for (const SampleRecord& r : report.samples) {
    reached += r.reached;
    correct += r.correct;
    if (r.sample.label) {
      ++positives;
      positives_reached += r.reached;
    }
  }
  const auto n = static_cast<double>(report.samples.size());
  report.hits = static_cast<double>(reached) / n;
  report.voting_accuracy = static_cast<double>(correct) / n;
  report.hits_positive = positives ? static_cast<double>(positives_reached) / static_cast<double>(positives) : 0.0;
  return report;
}

template <class Real>
double eval_hits(const TaskDataset& task, const PolicyParams& params, const BasicComplexEmbedding<Real>& emb,
                 const EnvConfig& env, std::size_t width) {
  return evaluate_task(task, params, emb, env, width).hits;
}

template <class Real>
double eval_voting(const TaskDataset& task, const PolicyParams& params, const BasicComplexEmbedding<Real>& emb,
                   const EnvConfig& env, std::size_t width) {
  return evaluate_task(task, params, emb, env, width).voting_accuracy;
}

// ---- report files --------------------------------------------------------

inline std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void write_report(std::ostream& out, const std::vector<EvalReport>& reports) {
  out << "task\tsize\twidth\thits\tvoting_acc\thits_pos\n";
  for (const EvalReport& r : reports) {
    out << r.task << '\t' << r.dataset_size << '\t' << r.beam_width << '\t' << format_metric(r.hits) << '\t'
        << format_metric(r.voting_accuracy) << '\t' << format_metric(r.hits_positive) << '\n';
  }
}

/// Per-sample detail, one JSON object per line.
inline void write_sample_details(std::ostream& out, const EvalReport& report, const KnowledgeGraph& graph) {
  for (const SampleRecord& r : report.samples) {
    nlohmann::json j = verdict_to_json(r.verdict, graph);
    j["label"] = r.sample.label;
    j["true_tail"] = graph.entity_label(r.sample.true_tail);
    j["reached"] = r.reached;
    j["correct"] = r.correct;
    out << j.dump() << '\n';
  }
}

// ---- experiment driver ---------------------------------------------------

struct TaskSpec {
  std::string name;
  std::vector<std::string> relations;
};

/// Resolves a task token to a base relation: exact label first, then a unique
/// match on the label's last '/', ':' or '.' component.
inline RelationId resolve_relation(const KnowledgeGraph& graph, const std::string& token) {
  if (auto r = graph.find_relation(token); r && graph.is_base(*r)) return *r;
  std::vector<RelationId> matches;
  for (std::uint32_t i = 0; i < graph.base_relation_count(); ++i) {
    const std::string& label = graph.relation_label(RelationId{i});
    const auto cut = label.find_last_of("/:.");
    const std::string_view last = cut == std::string::npos ? std::string_view(label) : std::string_view(label).substr(cut + 1);
    if (last == token) matches.push_back(RelationId{i});
  }
  if (matches.size() == 1) return matches.front();
  if (matches.empty()) throw LookupError("unknown relation \"" + token + "\"");
  throw LookupError("ambiguous relation \"" + token + "\" (" + std::to_string(matches.size()) + " matches)");
}

/// One task per configured relation, plus "combined" when requested.
inline std::vector<TaskSpec> task_specs(const RunConfig& config) {
  std::vector<TaskSpec> specs;
  for (const auto& r : config.task_relations) specs.push_back({r, {r}});
  if (config.combined && config.task_relations.size() > 1) specs.push_back({"combined", config.task_relations});
  return specs;
}

/// Extraction, split and negatives for one spec.
inline TaskDataset prepare_task(const KnowledgeGraph& graph, const TaskSpec& spec, const RunConfig& config) {
  std::vector<TaskDataset> parts;
  for (const auto& token : spec.relations) {
    TaskDataset t = extract_task(graph, resolve_relation(graph, token), config.split, config.task_seed);
    parts.push_back(generate_negatives(t, graph, config.negative_ratio, config.task_seed));
  }
  if (parts.size() == 1) {
    parts.front().name = spec.name;
    return std::move(parts.front());
  }
  return combine_tasks(spec.name, parts, graph);
}

/// File-system-safe form of a task name.
inline std::string task_file_stem(const std::string& name) {
  std::string out;
  for (char c : name) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  while (!out.empty() && out.front() == '_') out.erase(out.begin());
  return out.empty() ? "task" : out;
}

struct ModelPaths {
  std::filesystem::path embedding;
  std::filesystem::path policy;
  std::filesystem::path policy_log;
};

inline ModelPaths model_paths(const RunConfig& config, const std::string& task_name) {
  const std::filesystem::path dir(config.model_dir);
  const std::string stem = task_file_stem(task_name);
  return {dir / (stem + ".emb"), dir / (stem + ".pol"), dir / (stem + ".policy.log")};
}

inline ComplexEmbedding train_task_embeddings(const KnowledgeGraph& graph, const TaskDataset& task,
                                              const RunConfig& config) {
  return train_embeddings(embedding_graph(graph, task), config.embedding);
}

inline PolicyParams train_task_policy(const TaskDataset& task, const ComplexEmbedding& emb, const RunConfig& config,
                                      std::ostream* progress_log = nullptr) {
  PolicyParams params = init_policy(state_dim(emb.dim(), config.env.max_steps), task.pruned_graph.relation_count(),
                                    config.policy.seed, config.policy.hidden);
  return train_policy(task, std::move(params), emb, config.env, config.policy, [&](const ProgressRecord& r) {
    if (progress_log) write_progress(*progress_log, r);
  });
}

inline ComplexEmbedding load_task_embeddings(const KnowledgeGraph& graph, const RunConfig& config,
                                             const std::string& task_name) {
  const auto path = model_paths(config, task_name).embedding;
  if (!std::filesystem::exists(path)) throw LookupError("missing embedding file: " + path.string());
  return load_embeddings(path.string(), EmbeddingShape{graph.entity_count(), graph.relation_count(), config.embedding.dim});
}

inline PolicyParams load_task_policy(const KnowledgeGraph& graph, const RunConfig& config,
                                     const std::string& task_name) {
  const auto path = model_paths(config, task_name).policy;
  if (!std::filesystem::exists(path)) throw LookupError("missing policy file: " + path.string());
  return load_policy(path.string(), PolicyShape{state_dim(config.embedding.dim, config.env.max_steps),
                                                config.policy.hidden, graph.relation_count()});
}

/// Runs the task x width grid. Missing models are trained (and saved) when
/// `train_missing` is set, otherwise they are an error. Writes
/// <report_dir>/report.tsv and one <task>.w<width>.jsonl detail file per cell.
inline std::vector<EvalReport> run_experiment(const KnowledgeGraph& graph, const std::vector<TaskSpec>& specs,
                                              const RunConfig& config, bool train_missing) {
  std::filesystem::create_directories(config.report_dir);
  if (train_missing) std::filesystem::create_directories(config.model_dir);
  std::vector<EvalReport> reports;

  for (const TaskSpec& spec : specs) {
    const TaskDataset task = prepare_task(graph, spec, config);
    const ModelPaths paths = model_paths(config, spec.name);

    ComplexEmbedding emb;
    if (train_missing && !std::filesystem::exists(paths.embedding)) {
      emb = train_task_embeddings(graph, task, config);
      save_embeddings(emb, paths.embedding.string());
    } else {
      emb = load_task_embeddings(graph, config, spec.name);
    }

    PolicyParams policy;
    if (train_missing && !std::filesystem::exists(paths.policy)) {
      std::ofstream log(paths.policy_log, std::ios::trunc);
      policy = train_task_policy(task, emb, config, &log);
      save_policy(policy, paths.policy.string());
    } else {
      policy = load_task_policy(graph, config, spec.name);
    }

    for (std::size_t width : config.beam_widths) {
      EvalReport report = evaluate_task(task, policy, emb, config.env, width, config.eval_threads);
      std::ofstream detail(std::filesystem::path(config.report_dir) /
                           (task_file_stem(spec.name) + ".w" + std::to_string(width) + ".jsonl"));
      write_sample_details(detail, report, task.pruned_graph);
      reports.push_back(std::move(report));
    }
  }

  std::ofstream out(std::filesystem::path(config.report_dir) / "report.tsv", std::ios::trunc);
  write_report(out, reports);
  return reports;
}

}  // namespace kgfc
