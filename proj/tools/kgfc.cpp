// kgfc: command-line driver for ingestion, training, claim checking and
// evaluation.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kgfc/kgfc.hpp"

namespace fs = std::filesystem;
using namespace kgfc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : Error {
  using Error::Error;
};

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::string nearest_labels(const std::vector<std::string>& labels, const std::string& query, std::size_t count = 3) {
  std::vector<std::pair<std::size_t, const std::string*>> scored;
  scored.reserve(labels.size());
  for (const auto& l : labels) scored.emplace_back(edit_distance(query, l), &l);
  const auto keep = std::min(count, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    [](const auto& x, const auto& y) { return x.first != y.first ? x.first < y.first : *x.second < *y.second; });
  std::string out;
  for (std::size_t i = 0; i < keep; ++i) out += (i ? ", " : "") + *scored[i].second;
  return out;
}

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string model_dir;
  std::string triples;
  std::vector<std::string> overrides;
};

// defaults < config file < command-line flags
RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig config;
  if (!g.config_path.empty()) apply_config_file(config, g.config_path);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ParseError("--set expects section.key=value, got \"" + kv + "\"");
    set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) config.set_seed(*g.seed);
  if (!g.model_dir.empty()) config.model_dir = g.model_dir;
  if (!g.triples.empty()) config.triples_path = g.triples;
  return config;
}

KnowledgeGraph load_graph(const RunConfig& config) {
  if (config.triples_path.empty()) throw UsageError("no triple file given (use --triples or [data] triples)");
  return load_triples(config.triples_path);
}

std::vector<TaskSpec> require_tasks(const RunConfig& config) {
  auto specs = task_specs(config);
  if (specs.empty()) throw UsageError("no task relations configured ([task] relations)");
  return specs;
}

int cmd_ingest(const RunConfig& config, const std::string& out_dir) {
  const KnowledgeGraph graph = load_graph(config);
  const fs::path dir(out_dir.empty() ? config.model_dir : out_dir);
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "entities.tsv", std::ios::trunc);
    write_vocabulary(out, graph.entity_labels());
  }
  {
    std::ofstream out(dir / "relations.tsv", std::ios::trunc);
    write_vocabulary(out, graph.relation_labels());
  }
  const std::string summary = "entities=" + std::to_string(graph.entity_count()) +
                              " relations=" + std::to_string(graph.base_relation_count()) +
                              " facts=" + std::to_string(graph.base_fact_count());
  std::ofstream(dir / "summary.txt", std::ios::trunc) << summary << '\n';
  std::cout << summary << '\n';
  return kExitOk;
}

int cmd_generate_negatives(const RunConfig& config, const std::string& out_dir) {
  const KnowledgeGraph graph = load_graph(config);
  const fs::path dir(out_dir.empty() ? config.model_dir : out_dir);
  fs::create_directories(dir);
  for (const TaskSpec& spec : require_tasks(config)) {
    const TaskDataset task = prepare_task(graph, spec, config);
    const std::string stem = task_file_stem(spec.name);
    std::ofstream train(dir / (stem + ".train.tsv"), std::ios::trunc);
    write_samples(train, graph, task.train);
    std::ofstream test(dir / (stem + ".test.tsv"), std::ios::trunc);
    write_samples(test, graph, task.test);
    std::cout << spec.name << ": " << task.train.size() << " train, " << task.test.size() << " test samples\n";
  }
  return kExitOk;
}

int cmd_train_embeddings(const RunConfig& config) {
  const KnowledgeGraph graph = load_graph(config);
  fs::create_directories(config.model_dir);
  for (const TaskSpec& spec : require_tasks(config)) {
    const TaskDataset task = prepare_task(graph, spec, config);
    const ModelPaths paths = model_paths(config, spec.name);
    std::ofstream log(fs::path(config.model_dir) / (task_file_stem(spec.name) + ".embedding.log"), std::ios::trunc);
    const ComplexEmbedding emb = train_embeddings(embedding_graph(graph, task), config.embedding,
                                                  [&](const EmbedEpochRecord& r) {
                                                    log << r.epoch << '\t' << r.mean_loss << '\n';
                                                  });
    save_embeddings(emb, paths.embedding.string());
    std::cout << spec.name << ": wrote " << paths.embedding.string() << '\n';
  }
  return kExitOk;
}

int cmd_train_policy(const RunConfig& config) {
  const KnowledgeGraph graph = load_graph(config);
  for (const TaskSpec& spec : require_tasks(config)) {
    const TaskDataset task = prepare_task(graph, spec, config);
    const ComplexEmbedding emb = load_task_embeddings(graph, config, spec.name);
    const ModelPaths paths = model_paths(config, spec.name);
    std::ofstream log(paths.policy_log, std::ios::trunc);
    const PolicyParams policy = train_task_policy(task, emb, config, &log);
    save_policy(policy, paths.policy.string());
    std::cout << spec.name << ": wrote " << paths.policy.string() << '\n';
  }
  return kExitOk;
}

int cmd_check(const RunConfig& config, const std::vector<std::string>& claim_labels, const std::string& task_name,
              std::size_t width, bool as_json) {
  const KnowledgeGraph graph = load_graph(config);
  const auto specs = require_tasks(config);
  auto spec = specs.front();
  if (!task_name.empty()) {
    auto it = std::find_if(specs.begin(), specs.end(), [&](const TaskSpec& s) { return s.name == task_name; });
    if (it == specs.end()) throw UsageError("unknown task \"" + task_name + "\"");
    spec = *it;
  }

  auto entity = [&](const std::string& label) {
    auto id = graph.find_entity(label);
    if (!id) {
      throw UsageError("unknown entity \"" + label + "\"; nearest matches: " + nearest_labels(graph.entity_labels(), label));
    }
    return *id;
  };
  const EntityId head = entity(claim_labels[0]);
  RelationId relation;
  try {
    relation = resolve_relation(graph, claim_labels[1]);
  } catch (const LookupError&) {
    std::vector<std::string> base(graph.base_relation_labels().begin(), graph.base_relation_labels().end());
    throw UsageError("unknown relation \"" + claim_labels[1] + "\"; nearest matches: " +
                     nearest_labels(base, claim_labels[1]));
  }
  const EntityId tail = entity(claim_labels[2]);

  const TaskDataset task = prepare_task(graph, spec, config);
  const ComplexEmbedding emb = load_task_embeddings(graph, config, spec.name);
  const PolicyParams policy = load_task_policy(graph, config, spec.name);
  const Triple claim{head, relation, tail};
  const Verdict verdict = check_claim(claim, policy, task.pruned_graph, emb, config.env, width);

  if (as_json) {
    std::cout << verdict_to_json(verdict, task.pruned_graph).dump() << '\n';
    return kExitOk;
  }
  std::vector<const EvidentialPath*> ordered;
  for (const auto& p : verdict.paths) ordered.push_back(&p);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const EvidentialPath* a, const EvidentialPath* b) { return a->weight > b->weight; });
  std::cout << "Claim: " << render_claim(claim, graph) << '\n';
  std::cout << "Verdict: " << (verdict.label ? "TRUE" : "FALSE") << " (winner: " << graph.entity_label(verdict.winner)
            << ", vote " << format_metric(verdict.vote_weights.at(verdict.winner)) << ")\n";
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    std::cout << "Path " << i + 1 << ": " << render_path(*ordered[i], graph) << "  [weight "
              << format_metric(ordered[i]->weight) << "]\n";
  }
  return kExitOk;
}

int cmd_evaluate(const RunConfig& config) {
  const KnowledgeGraph graph = load_graph(config);
  const auto reports = run_experiment(graph, require_tasks(config), config, /*train_missing=*/false);
  write_report(std::cout, reports);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainable fact checking over knowledge graphs"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config_path, "Run configuration file");
  app.add_option("--seed", g.seed, "Seed for task split, embeddings and policy");
  app.add_option("--model-dir", g.model_dir, "Directory for model files");
  app.add_option("--triples", g.triples, "Triple file (overrides [data] triples)");
  app.add_option("--set", g.overrides, "Override a config key: section.key=value");

  std::string out_dir;
  auto* ingest = app.add_subcommand("ingest", "Load a triple file, write vocabularies and a count summary");
  ingest->add_option("--out", out_dir, "Output directory (default: model dir)");

  auto* negatives = app.add_subcommand("generate-negatives", "Extract tasks and write train/test claim files");
  negatives->add_option("--out", out_dir, "Output directory (default: model dir)");

  auto* train_emb = app.add_subcommand("train-embeddings", "Train ComplEx embeddings for every task");
  auto* train_pol = app.add_subcommand("train-policy", "Train the path policy for every task");

  std::vector<std::string> claim;
  std::string task_name;
  std::size_t width = 10;
  bool as_json = false;
  auto* check = app.add_subcommand("check", "Check one claim and print its evidential paths");
  check->add_option("claim", claim, "HEAD RELATION TAIL")->expected(3)->required();
  check->add_option("--task", task_name, "Task whose models to use (default: first task)");
  check->add_option("--width", width, "Beam width")->check(CLI::PositiveNumber);
  check->add_flag("--json", as_json, "Print the verdict as one JSON line");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate every task at every beam width");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const RunConfig config = resolve_config(g);
    if (ingest->parsed()) return cmd_ingest(config, out_dir);
    if (negatives->parsed()) return cmd_generate_negatives(config, out_dir);
    if (train_emb->parsed()) return cmd_train_embeddings(config);
    if (train_pol->parsed()) return cmd_train_policy(config);
    if (check->parsed()) return cmd_check(config, claim, task_name, width, as_json);
    if (evaluate->parsed()) return cmd_evaluate(config);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
