#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "kgfc/complex_embed.hpp"
#include "kgfc/error.hpp"
#include "kgfc/mdp_env.hpp"
#include "kgfc/policy_net.hpp"

namespace kgfc {

/// Everything a reproducible run needs. Defaults are the published
/// hyperparameters.
struct RunConfig {
  // [data]
  std::string triples_path;
  std::string model_dir = "models";
  std::string report_dir = "reports";
  // [task]
  std::vector<std::string> task_relations;
  bool combined = false;
  double split = 0.8;
  std::size_t negative_ratio = 10;
  std::uint64_t task_seed = 0;
  // [embedding], [policy], [env]
  EmbedTrainConfig embedding;
  PolicyTrainConfig policy;
  EnvConfig env;
  // [eval]
  std::vector<std::size_t> beam_widths{3, 5, 10};
  std::size_t eval_threads = 1;

  /// Points every seed at `seed`.
  void set_seed(std::uint64_t seed) {
    task_seed = seed;
    embedding.seed = seed;
    policy.seed = seed;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(std::string_view text, std::string_view key) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError("invalid value \"" + std::string(text) + "\" for " + std::string(key));
  }
  return value;
}

inline bool parse_bool(std::string_view text, std::string_view key) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ParseError("invalid boolean \"" + std::string(text) + "\" for " + std::string(key));
}

inline std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

using Setter = std::function<void(RunConfig&, std::string_view value, std::string_view key)>;

inline const std::map<std::string, Setter, std::less<>>& config_setters() {
  static const std::map<std::string, Setter, std::less<>> setters = [] {
    std::map<std::string, Setter, std::less<>> s;
    auto str = [](std::string RunConfig::*field) {
      return [field](RunConfig& c, std::string_view v, std::string_view) { c.*field = std::string(v); };
    };
    auto size = [](auto getter) {
      return [getter](RunConfig& c, std::string_view v, std::string_view k) {
        getter(c) = parse_number<std::size_t>(v, k);
      };
    };
    auto u64 = [](auto getter) {
      return [getter](RunConfig& c, std::string_view v, std::string_view k) {
        getter(c) = parse_number<std::uint64_t>(v, k);
      };
    };
    auto real = [](auto getter) {
      return [getter](RunConfig& c, std::string_view v, std::string_view k) { getter(c) = parse_number<double>(v, k); };
    };

    s["data.triples"] = str(&RunConfig::triples_path);
    s["data.model_dir"] = str(&RunConfig::model_dir);
    s["data.report_dir"] = str(&RunConfig::report_dir);

    s["task.relations"] = [](RunConfig& c, std::string_view v, std::string_view) { c.task_relations = split_list(v); };
    s["task.combined"] = [](RunConfig& c, std::string_view v, std::string_view k) { c.combined = parse_bool(v, k); };
    s["task.split"] = real([](RunConfig& c) -> double& { return c.split; });
    s["task.negative_ratio"] = size([](RunConfig& c) -> std::size_t& { return c.negative_ratio; });
    s["task.seed"] = u64([](RunConfig& c) -> std::uint64_t& { return c.task_seed; });

    s["embedding.dim"] = size([](RunConfig& c) -> std::size_t& { return c.embedding.dim; });
    s["embedding.epochs"] = size([](RunConfig& c) -> std::size_t& { return c.embedding.epochs; });
    s["embedding.batch_size"] = size([](RunConfig& c) -> std::size_t& { return c.embedding.batch_size; });
    s["embedding.learning_rate"] = real([](RunConfig& c) -> double& { return c.embedding.learning_rate; });
    s["embedding.l3_strength"] = real([](RunConfig& c) -> double& { return c.embedding.l3_strength; });
    s["embedding.negatives_per_positive"] =
        size([](RunConfig& c) -> std::size_t& { return c.embedding.negatives_per_positive; });
    s["embedding.seed"] = u64([](RunConfig& c) -> std::uint64_t& { return c.embedding.seed; });

    s["policy.hidden"] = size([](RunConfig& c) -> std::size_t& { return c.policy.hidden; });
    s["policy.episodes"] = size([](RunConfig& c) -> std::size_t& { return c.policy.episodes; });
    s["policy.learning_rate"] = real([](RunConfig& c) -> double& { return c.policy.learning_rate; });
    s["policy.top_k"] = size([](RunConfig& c) -> std::size_t& { return c.policy.top_k; });
    s["policy.seed"] = u64([](RunConfig& c) -> std::uint64_t& { return c.policy.seed; });
    s["policy.log_every"] = size([](RunConfig& c) -> std::size_t& { return c.policy.log_every; });
    s["policy.optimizer"] = [](RunConfig& c, std::string_view v, std::string_view k) {
      if (v == "adam") {
        c.policy.optimizer = PolicyOptimizer::Adam;
      } else if (v == "sgd") {
        c.policy.optimizer = PolicyOptimizer::Sgd;
      } else {
        throw ParseError("invalid optimizer \"" + std::string(v) + "\" for " + std::string(k) + " (adam|sgd)");
      }
    };

    s["env.max_steps"] = size([](RunConfig& c) -> std::size_t& { return c.env.max_steps; });

    s["eval.widths"] = [](RunConfig& c, std::string_view v, std::string_view k) {
      c.beam_widths.clear();
      for (const auto& item : split_list(v)) c.beam_widths.push_back(parse_number<std::size_t>(item, k));
    };
    s["eval.threads"] = size([](RunConfig& c) -> std::size_t& { return c.eval_threads; });
    return s;
  }();
  return setters;
}

}  // namespace detail

/// Sets one "section.key" to `value`. Unknown keys are errors.
inline void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  const auto& setters = detail::config_setters();
  auto it = setters.find(key);
  if (it == setters.end()) throw ParseError("unknown config key \"" + std::string(key) + "\"");
  it->second(config, detail::trim(value), key);
}

/// Layers "[section]" / "key = value" text on top of `config`. '#' starts a
/// comment line.
inline void apply_config(RunConfig& config, std::istream& in, const std::string& source = "<config>") {
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ParseError(source, line_no, "unterminated section header");
      section = std::string(detail::trim(text.substr(1, text.size() - 2)));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, line_no, "expected key = value");
    if (section.empty()) throw ParseError(source, line_no, "key outside of a [section]");
    const std::string key = section + "." + std::string(detail::trim(text.substr(0, eq)));
    try {
      set_config_value(config, key, text.substr(eq + 1));
    } catch (const ParseError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
}

inline void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LookupError("cannot open config file: " + path);
  apply_config(config, in, path);
}

}  // namespace kgfc
