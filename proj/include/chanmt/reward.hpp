#pragma once

// Noisy-channel reward of a translation and its per-step decomposition.

#include <span>
#include <vector>

#include "chanmt/seq2seq.hpp"

namespace chanmt {

struct RewardBreakdown {
  double forward = 0.0;  // log p_f(y|x)
  double reverse = 0.0;  // log p_r(x|y)
  double gamma = 0.0;
  double total = 0.0;    // forward + gamma * reverse
};

RewardBreakdown combine_reward(double forward, double reverse, double gamma);

/// `seq` followed by EOS unless it already ends with one.
TokenSeq eos_terminated(std::span<const TokenId> seq);

/// log p_r(x + EOS | y). The reverse translator reads the EOS-terminated
/// target `y` as its source.
double reverse_log_prob(const Seq2SeqModel& p_r, std::span<const TokenId> source, std::span<const TokenId> target);

/// Throws ContractError unless `target` ends with EOS and gamma >= 0.
RewardBreakdown total_reward(const Seq2SeqModel& p_f, const Seq2SeqModel& p_r, std::span<const TokenId> source,
                             std::span<const TokenId> target, double gamma);

struct StepRewards {
  std::vector<double> values;

  double sum() const;
};

/// r_t = log p_f(y_t | y_<t, x); the final step adds gamma * log p_r(x|y).
StepRewards step_rewards(const Seq2SeqModel& p_f, const Seq2SeqModel& p_r, std::span<const TokenId> source,
                         std::span<const TokenId> target, double gamma);

/// Same layout from precomputed per-step forward terms and reverse reward.
StepRewards step_rewards_from(std::span<const double> forward_steps, double reverse, double gamma);

}  // namespace chanmt
