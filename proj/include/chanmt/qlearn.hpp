#pragma once

// Deep Q-learning over decoding trajectories: replay buffer, six trajectory
// sources, bootstrapped targets from a periodically synced target network,
// and a curriculum over the reverse-reward weight.

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "chanmt/decode.hpp"
#include "chanmt/reward.hpp"
#include "chanmt/seq2seq.hpp"

namespace chanmt {

enum class Origin { kQBoltzmann, kQGreedy, kPfSample, kPfGreedy, kPfBeamSmall, kPfBeam50Random, kGold };

inline constexpr std::array<Origin, 6> kMixedOrigins{Origin::kQBoltzmann, Origin::kQGreedy,     Origin::kPfSample,
                                                     Origin::kPfGreedy,   Origin::kPfBeamSmall, Origin::kPfBeam50Random};
inline constexpr std::array<double, 6> kOriginMix{0.3, 0.2, 0.2, 0.1, 0.1, 0.1};

std::string to_string(Origin origin);
Origin parse_origin(std::string_view name);

/// Draws one of the six mixed origins with probabilities kOriginMix.
Origin draw_origin(std::mt19937_64& rng);

struct Trajectory {
  TokenSeq source;
  /// EOS-terminated.
  TokenSeq target;
  /// log p_f(y_t | y_<t, x) per step.
  std::vector<double> forward_steps;
  /// log p_r(x | y).
  double reverse = 0.0;
  double gamma = 0.0;
  StepRewards rewards;
  Origin origin = Origin::kPfGreedy;
  /// Sampling temperature for sampled origins, 0 otherwise.
  double temperature = 0.0;
  /// Beam size for beam origins, 0 otherwise.
  int beam = 0;

  /// Recomputes the rewards for a new gamma.
  void set_gamma(double g);
};

/// Scores `target` (EOS-terminated) with the frozen teachers.
Trajectory make_trajectory(const Seq2SeqModel& p_f, const Seq2SeqModel& p_r, std::span<const TokenId> source,
                           std::span<const TokenId> target, Origin origin, double gamma);

struct Transition {
  std::size_t trajectory = 0;
  std::size_t step = 0;
};

/// Bounded FIFO of whole trajectories with uniform sampling over their
/// transitions. The trainer thread is the only writer.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 2000);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return store_.size(); }
  std::size_t transitions() const { return transitions_; }
  const Trajectory& at(std::size_t i) const { return store_[i]; }
  const std::deque<Trajectory>& trajectories() const { return store_; }

  /// Appends, evicting the oldest trajectory when full.
  void add(Trajectory t);
  /// `n` transitions drawn uniformly with replacement.
  std::vector<Transition> sample(std::size_t n, std::mt19937_64& rng) const;
  void set_gamma(double gamma);

  /// Versioned snapshot of every trajectory with its origin and gamma.
  void save(const std::filesystem::path& path) const;
  /// Throws IntegrityError on a corrupt or mismatched snapshot.
  static ReplayBuffer load(const std::filesystem::path& path);

 private:
  std::size_t capacity_;
  std::size_t transitions_ = 0;
  std::deque<Trajectory> store_;
};

struct QConfig {
  double start_gamma = 0.1;
  double gamma_step = 0.2;
  double target_gamma = 0.9;
  /// Optimiser steps between target-network syncs (K).
  int sync_period = 20;
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  /// Minibatches summed per optimiser step.
  int accumulate = 1;
  std::size_t buffer_capacity = 2000;
  std::size_t batch_transitions = 32;
  int collect_per_round = 16;
  int updates_per_round = 4;
  /// Optimiser steps between dev evaluations.
  int eval_interval = 50;
  /// Evaluations without improvement that end a curriculum stage.
  int patience = 5;
  int max_updates = 2000;
  int max_length = 0;
  int beam50 = 50;
  /// Adds gold-reference trajectories with probability gold_rate.
  bool include_gold = false;
  double gold_rate = 0.1;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

/// Gamma schedule start, start + step, ... capped at the target.
std::vector<double> gamma_schedule(const QConfig& config);

struct QPair {
  Seq2SeqModel online;
  Seq2SeqModel target;
  int sync_period = 20;
  double gamma = 0.1;
  double target_gamma = 0.9;
  /// Optimiser steps taken.
  std::int64_t updates = 0;
  int accumulate = 1;
  int pending = 0;
  ad::AdamState adam;
  std::vector<ad::Matrix> grads;

  static QPair create(const Seq2SeqModel& init, const QConfig& config);
  void sync() { target = online; }
};

/// One trajectory per source, each from an origin drawn with kOriginMix
/// (or gold, when enabled and references are given). Rewards use q.gamma.
std::vector<Trajectory> collect_trajectories(const QPair& q, const Seq2SeqModel& p_f, const Seq2SeqModel& p_r,
                                             std::span<const TokenSeq> sources, std::mt19937_64& rng,
                                             const QConfig& config, std::span<const TokenSeq> gold = {});

/// R_t = r_t + max_a Q'(s_{t+1}, a) for t < T, and R_T = r_T.
std::vector<double> compute_targets(const Seq2SeqModel& q_target, const Trajectory& trajectory);

struct QUpdate {
  double loss = 0.0;
  bool stepped = false;
};

/// Mean of (Q(s_t, a_t) - R_t)^2 over the transitions with targets from
/// q.target. Takes an optimiser step once `accumulate` minibatches have been
/// summed; never touches q.target. Throws TrainingError on a non-finite loss.
QUpdate q_update(QPair& q, const ReplayBuffer& buffer, std::span<const Transition> batch);

/// Loss and gradient of q_update without the optimiser step.
double q_loss(const Seq2SeqModel& online, const Seq2SeqModel& target, const ReplayBuffer& buffer,
              std::span<const Transition> batch, std::vector<ad::Matrix>* grads);

struct QEvalLog {
  std::int64_t update = 0;
  double gamma = 0.0;
  double dev_reward = 0.0;
  double loss = 0.0;
};

struct QResult {
  Seq2SeqModel model;
  std::vector<double> gammas_visited;
  std::vector<QEvalLog> history;
  double best_dev_reward = 0.0;
  std::int64_t best_update = 0;
  std::int64_t syncs = 0;
};

/// Mean total reward of greedy-from-Q decodes (incomplete decodes scored
/// with their last token replaced by EOS).
double greedy_q_reward(const Seq2SeqModel& q, const Seq2SeqModel& p_f, const Seq2SeqModel& p_r,
                       std::span<const TokenSeq> sources, double gamma, int max_length = 0, int threads = 1);

QResult train_q(const Seq2SeqModel& init, const Seq2SeqModel& p_f, const Seq2SeqModel& p_r,
                std::span<const TokenSeq> train_sources, std::span<const TokenSeq> dev_sources, const QConfig& config,
                std::span<const TokenSeq> gold_targets = {});

/// Argmax over raw Q values at every step.
Hypothesis greedy_decode_q(const Seq2SeqModel& q, std::span<const TokenId> source, int max_length = 0);

}  // namespace chanmt
