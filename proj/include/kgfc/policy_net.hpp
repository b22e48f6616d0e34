#pragma once

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kgfc/adam.hpp"
#include "kgfc/binary_io.hpp"
#include "kgfc/complex_embed.hpp"
#include "kgfc/error.hpp"
#include "kgfc/kg_store.hpp"
#include "kgfc/mdp_env.hpp"
#include "kgfc/rng.hpp"

namespace kgfc {

/// Two-layer MLP: softmax(w2 * relu(w1 * s + b1) + b2).
struct PolicyParams {
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Matrix w1;           // hidden x state_dim
  Eigen::VectorXd b1;  // hidden
  Matrix w2;           // action_count x hidden
  Eigen::VectorXd b2;  // action_count

  static PolicyParams zeros(std::size_t state_dim, std::size_t hidden, std::size_t action_count) {
    const auto s = static_cast<Eigen::Index>(state_dim);
    const auto h = static_cast<Eigen::Index>(hidden);
    const auto a = static_cast<Eigen::Index>(action_count);
    return {Matrix::Zero(h, s), Eigen::VectorXd::Zero(h), Matrix::Zero(a, h), Eigen::VectorXd::Zero(a)};
  }

  std::size_t state_dim() const noexcept { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden() const noexcept { return static_cast<std::size_t>(w1.rows()); }
  std::size_t action_count() const noexcept { return static_cast<std::size_t>(w2.rows()); }

  /// Flat views of w1, b1, w2, b2 in file order.
  template <class F>
  void for_each_block(F&& f) {
    f(std::span<double>(w1.data(), static_cast<std::size_t>(w1.size())));
    f(std::span<double>(b1.data(), static_cast<std::size_t>(b1.size())));
    f(std::span<double>(w2.data(), static_cast<std::size_t>(w2.size())));
    f(std::span<double>(b2.data(), static_cast<std::size_t>(b2.size())));
  }
  template <class F>
  void for_each_block(F&& f) const {
    f(std::span<const double>(w1.data(), static_cast<std::size_t>(w1.size())));
    f(std::span<const double>(b1.data(), static_cast<std::size_t>(b1.size())));
    f(std::span<const double>(w2.data(), static_cast<std::size_t>(w2.size())));
    f(std::span<const double>(b2.data(), static_cast<std::size_t>(b2.size())));
  }

  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    if (a.state_dim() != b.state_dim() || a.hidden() != b.hidden() || a.action_count() != b.action_count()) {
      return false;
    }
    auto same = [](const auto& x, const auto& y) {
      return std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0;
    };
    return same(a.w1, b.w1) && same(a.b1, b.b1) && same(a.w2, b.w2) && same(a.b2, b.b2);
  }
};

inline constexpr std::size_t kDefaultHidden = 128;

/// Xavier-uniform weights, zero biases.
inline PolicyParams init_policy(std::size_t state_dim, std::size_t action_count, std::uint64_t seed,
                                std::size_t hidden = kDefaultHidden) {
  if (state_dim == 0 || action_count == 0 || hidden == 0) throw ContractError("init_policy: dimensions must be positive");
  PolicyParams p = PolicyParams::zeros(state_dim, hidden, action_count);
  Rng rng(seed);
  auto xavier = [&](PolicyParams::Matrix& w) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  };
  xavier(p.w1);
  xavier(p.w2);
  return p;
}

struct PolicyActivations {
  Eigen::VectorXd pre;     // w1 s + b1
  Eigen::VectorXd hidden;  // relu(pre)
  Eigen::VectorXd logits;  // w2 h + b2
};

inline PolicyActivations policy_activations(const PolicyParams& params, const StateVector& sv) {
  if (static_cast<std::size_t>(sv.size()) != params.state_dim()) {
    throw ContractError("policy_forward: state has length " + std::to_string(sv.size()) + ", network expects " +
                        std::to_string(params.state_dim()));
  }
  PolicyActivations a;
  a.pre = params.w1 * sv + params.b1;
  a.hidden = a.pre.cwiseMax(0.0);
  a.logits = params.w2 * a.hidden + params.b2;
  return a;
}

/// Numerically stable softmax.
inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return p / p.sum();
}

/// Action distribution for a state. Throws DivergenceError on non-finite output.
inline Eigen::VectorXd policy_forward(const PolicyParams& params, const StateVector& sv) {
  Eigen::VectorXd probs = softmax(policy_activations(params, sv).logits);
  if (!probs.allFinite()) throw DivergenceError("policy_forward: non-finite output");
  return probs;
}

/// Zeroes illegal actions and rescales the rest to sum to 1. Falls back to
/// uniform over `legal` when the legal mass underflows.
inline Eigen::VectorXd mask_renormalize(const Eigen::VectorXd& probs, std::span<const RelationId> legal) {
  if (legal.empty()) throw ContractError("mask_renormalize: no legal actions");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(probs.size());
  double mass = 0.0;
  for (RelationId r : legal) mass += probs[r.value];
  if (!(mass >= DBL_MIN) || !std::isfinite(mass)) {
    for (RelationId r : legal) out[r.value] = 1.0 / static_cast<double>(legal.size());
    return out;
  }
  for (RelationId r : legal) out[r.value] = probs[r.value] / mass;
  return out;
}

/// Indices of the min(k, #positive) most likely actions, likelier first and
/// lower index first among equals.
inline std::vector<std::size_t> top_k_actions(const Eigen::VectorXd& masked, std::size_t k) {
  std::vector<std::size_t> idx;
  for (Eigen::Index i = 0; i < masked.size(); ++i) {
    if (masked[i] > 0.0) idx.push_back(static_cast<std::size_t>(i));
  }
  const std::size_t keep = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (masked[static_cast<Eigen::Index>(a)] != masked[static_cast<Eigen::Index>(b)]) {
                        return masked[static_cast<Eigen::Index>(a)] > masked[static_cast<Eigen::Index>(b)];
                      }
                      return a < b;
                    });
  idx.resize(keep);
  return idx;
}

/// Draws one of the top-k actions with probabilities renormalized among them.
inline std::size_t sample_top_k(const Eigen::VectorXd& masked, std::size_t k, Rng& rng) {
  if (k == 0) throw ContractError("sample_top_k: k must be at least 1");
  const auto top = top_k_actions(masked, k);
  if (top.empty()) throw ContractError("sample_top_k: distribution has no positive entry");
  double total = 0.0;
  for (std::size_t i : top) total += masked[static_cast<Eigen::Index>(i)];
  const double u = rng.uniform01() * total;
  double acc = 0.0;
  for (std::size_t i : top) {
    acc += masked[static_cast<Eigen::Index>(i)];
    if (u < acc) return i;
  }
  return top.back();
}

struct TrajectoryStep {
  StateVector state;
  std::vector<RelationId> legal;
  RelationId action;
  double probability = 0.0;  // masked probability of `action`
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  PathState final_state;
  double reward = 0.0;
};

/// One training episode: encode, forward, mask, top-k sample, transition,
/// for max_steps steps, then the terminal reward.
template <class Real>
Trajectory run_episode(const ClaimSample& sample, const PolicyParams& params, const KnowledgeGraph& graph,
                       const BasicComplexEmbedding<Real>& emb, const EnvConfig& env, std::size_t top_k, Rng& rng) {
  Trajectory traj;
  PathState state = initial_state(graph, sample.claim);
  for (std::size_t t = 0; t < env.max_steps; ++t) {
    TrajectoryStep step;
    step.state = encode_state(state, emb, env);
    step.legal = valid_actions(graph, state.current());
    const Eigen::VectorXd masked = mask_renormalize(policy_forward(params, step.state), step.legal);
    step.action = RelationId{static_cast<std::uint32_t>(sample_top_k(masked, top_k, rng))};
    step.probability = masked[step.action.value];
    state = transition(state, step.action, graph, emb, env);
    traj.steps.push_back(std::move(step));
  }
  traj.reward = reward(state, sample, env);
  traj.final_state = std::move(state);
  return traj;
}

namespace detail {

// log of the masked probability of `action`, computed from logits so it
// stays finite when the raw softmax underflows.
inline double log_masked_probability(const Eigen::VectorXd& logits, std::span<const RelationId> legal,
                                     RelationId action) {
  double m = -INFINITY;
  for (RelationId r : legal) m = std::max(m, logits[r.value]);
  double sum = 0.0;
  for (RelationId r : legal) sum += std::exp(logits[r.value] - m);
  return logits[action.value] - m - std::log(sum);
}

}  // namespace detail

/// REINFORCE loss: -reward * sum_t log p_masked(a_t | s_t).
inline double episode_loss(const PolicyParams& params, const Trajectory& traj) {
  double log_prob = 0.0;
  for (const TrajectoryStep& step : traj.steps) {
    log_prob += detail::log_masked_probability(policy_activations(params, step.state).logits, step.legal, step.action);
  }
  return -traj.reward * log_prob;
}

/// Analytic gradient of episode_loss with respect to every parameter.
inline PolicyParams policy_gradient(const PolicyParams& params, const Trajectory& traj) {
  PolicyParams grad = PolicyParams::zeros(params.state_dim(), params.hidden(), params.action_count());
  if (traj.reward == 0.0) return grad;
  Eigen::VectorXd g_logits(static_cast<Eigen::Index>(params.action_count()));
  for (const TrajectoryStep& step : traj.steps) {
    const PolicyActivations act = policy_activations(params, step.state);
    // d(-log q_a)/dz_j = q_j - [j == a] over legal j; illegal logits do not enter.
    double m = -INFINITY;
    for (RelationId r : step.legal) m = std::max(m, act.logits[r.value]);
    double sum = 0.0;
    for (RelationId r : step.legal) sum += std::exp(act.logits[r.value] - m);
    g_logits.setZero();
    for (RelationId r : step.legal) g_logits[r.value] = traj.reward * std::exp(act.logits[r.value] - m) / sum;
    g_logits[step.action.value] -= traj.reward;

    grad.w2.noalias() += g_logits * act.hidden.transpose();
    grad.b2 += g_logits;
    Eigen::VectorXd g_pre = params.w2.transpose() * g_logits;
    for (Eigen::Index i = 0; i < g_pre.size(); ++i) {
      if (act.pre[i] <= 0.0) g_pre[i] = 0.0;
    }
    grad.w1.noalias() += g_pre * step.state.transpose();
    grad.b1 += g_pre;
  }
  return grad;
}

namespace detail {

inline void check_finite(const PolicyParams& grad) {
  bool finite = true;
  grad.for_each_block([&](std::span<const double> block) {
    for (double v : block) finite = finite && std::isfinite(v);
  });
  if (!finite) throw DivergenceError("reinforce_update: non-finite gradient");
}

}  // namespace detail

/// Plain gradient-descent REINFORCE step. Zero-reward trajectories leave the
/// parameters untouched.
inline void reinforce_update(PolicyParams& params, const Trajectory& traj, double learning_rate) {
  if (traj.reward == 0.0) return;
  const PolicyParams grad = policy_gradient(params, traj);
  detail::check_finite(grad);
  params.w1 -= learning_rate * grad.w1;
  params.b1 -= learning_rate * grad.b1;
  params.w2 -= learning_rate * grad.w2;
  params.b2 -= learning_rate * grad.b2;
}

/// Adam over the policy parameters.
class PolicyAdam {
 public:
  PolicyAdam(const PolicyParams& like, double learning_rate)
      : m_(PolicyParams::zeros(like.state_dim(), like.hidden(), like.action_count())), v_(m_) {
    hyper_.learning_rate = learning_rate;
  }

  void apply(PolicyParams& params, const PolicyParams& grad) {
    ++step_;
    std::vector<std::span<double>> p, m, v;
    std::vector<std::span<const double>> g;
    params.for_each_block([&](std::span<double> b) { p.push_back(b); });
    m_.for_each_block([&](std::span<double> b) { m.push_back(b); });
    v_.for_each_block([&](std::span<double> b) { v.push_back(b); });
    grad.for_each_block([&](std::span<const double> b) { g.push_back(b); });
    for (std::size_t i = 0; i < p.size(); ++i) adam_update<double>(p[i], g[i], m[i], v[i], step_, hyper_);
  }

  std::uint64_t steps() const noexcept { return step_; }

 private:
  PolicyParams m_;
  PolicyParams v_;
  std::uint64_t step_ = 0;
  AdamHyper hyper_;
};

enum class PolicyOptimizer { Adam, Sgd };

struct PolicyTrainConfig {
  std::size_t episodes = 100000;
  double learning_rate = 1e-3;
  std::size_t top_k = 3;
  std::uint64_t seed = 0;
  std::size_t hidden = kDefaultHidden;
  PolicyOptimizer optimizer = PolicyOptimizer::Adam;
  std::size_t log_every = 1000;
};

struct ProgressRecord {
  std::size_t episode;  // episodes completed
  double avg_reward;    // mean reward over the trailing window
};

/// Trains on the task's train split (positives and negatives alike), walking
/// the task's pruned graph. Each episode is followed by one update.
template <class Real>
PolicyParams train_policy(const TaskDataset& task, PolicyParams params, const BasicComplexEmbedding<Real>& emb,
                          const EnvConfig& env, const PolicyTrainConfig& config,
                          const std::function<void(const ProgressRecord&)>& on_progress = {}) {
  if (config.episodes == 0) return params;
  if (task.train.empty()) throw ContractError("train_policy: task \"" + task.name + "\" has an empty train split");
  if (config.top_k == 0 || config.log_every == 0) throw ContractError("train_policy: top_k and log_every must be positive");

  const KnowledgeGraph& graph = task.pruned_graph;
  Rng rng(config.seed);
  PolicyAdam adam(params, config.learning_rate);
  std::deque<double> window;
  double window_sum = 0.0;

  for (std::size_t episode = 0; episode < config.episodes; ++episode) {
    try {
      const ClaimSample& sample = task.train[rng.uniform_index(task.train.size())];
      const Trajectory traj = run_episode(sample, params, graph, emb, env, config.top_k, rng);
      if (traj.reward != 0.0) {
        if (config.optimizer == PolicyOptimizer::Sgd) {
          reinforce_update(params, traj, config.learning_rate);
        } else {
          const PolicyParams grad = policy_gradient(params, traj);
          detail::check_finite(grad);
          adam.apply(params, grad);
        }
      }
      window.push_back(traj.reward);
      window_sum += traj.reward;
      if (window.size() > config.log_every) {
        window_sum -= window.front();
        window.pop_front();
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " (episode " + std::to_string(episode) + ")");
    }
    const bool last = episode + 1 == config.episodes;
    if (on_progress && ((episode + 1) % config.log_every == 0 || last)) {
      on_progress({episode + 1, window_sum / static_cast<double>(window.size())});
    }
  }
  return params;
}

/// "episode<TAB>avg_reward" lines.
inline void write_progress(std::ostream& out, const ProgressRecord& r) { out << r.episode << '\t' << r.avg_reward << '\n'; }

// ---- persistence ---------------------------------------------------------

inline constexpr std::uint32_t kPolicyFormatVersion = 1;

struct PolicyShape {
  std::uint64_t state_dim = 0;
  std::uint64_t hidden = 0;
  std::uint64_t action_count = 0;
};

inline void save_policy(const PolicyParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write policy file: " + path);
  binary::write_magic(out, "POLN");
  binary::write_le<std::uint32_t>(out, kPolicyFormatVersion);
  binary::write_le<std::uint64_t>(out, params.state_dim());
  binary::write_le<std::uint64_t>(out, params.hidden());
  binary::write_le<std::uint64_t>(out, params.action_count());
  params.for_each_block([&](std::span<const double> block) {
    for (double v : block) binary::write_f64(out, v);
  });
  if (!out) throw Error("error while writing policy file: " + path);
}

inline PolicyParams load_policy(const std::string& path, std::optional<PolicyShape> expected = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open policy file: " + path);
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);

  binary::expect_magic(in, "POLN", path);
  const auto version = binary::read_le<std::uint32_t>(in);
  if (version != kPolicyFormatVersion) {
    throw FormatError(path + ": unsupported policy format version " + std::to_string(version));
  }
  PolicyShape shape;
  shape.state_dim = binary::read_le<std::uint64_t>(in);
  shape.hidden = binary::read_le<std::uint64_t>(in);
  shape.action_count = binary::read_le<std::uint64_t>(in);
  if (expected && (expected->state_dim != shape.state_dim || expected->action_count != shape.action_count ||
                   (expected->hidden != 0 && expected->hidden != shape.hidden))) {
    throw FormatError(path + ": policy shape mismatch: file has state_dim " + std::to_string(shape.state_dim) +
                      ", hidden " + std::to_string(shape.hidden) + ", action_count " +
                      std::to_string(shape.action_count) + "; expected state_dim " +
                      std::to_string(expected->state_dim) + ", action_count " +
                      std::to_string(expected->action_count));
  }
  constexpr std::uint64_t header = 4 + 4 + 3 * 8;
  const std::uint64_t count =
      shape.hidden * shape.state_dim + shape.hidden + shape.action_count * shape.hidden + shape.action_count;
  if (shape.state_dim == 0 || shape.hidden == 0 || shape.action_count == 0 ||
      file_size != header + count * sizeof(double)) {
    throw FormatError(path + ": policy shape mismatch: header declares " + std::to_string(header + count * 8) +
                      " bytes but file holds " + std::to_string(file_size));
  }
  PolicyParams params = PolicyParams::zeros(shape.state_dim, shape.hidden, shape.action_count);
  params.for_each_block([&](std::span<double> block) {
    for (double& v : block) v = binary::read_f64(in);
  });
  return params;
}

}  // namespace kgfc
