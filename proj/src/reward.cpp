#include "chanmt/reward.hpp"

#include "chanmt/error.hpp"

namespace chanmt {

namespace {

void check_request(std::span<const TokenId> target, double gamma) {
  if (target.empty() || target.back() != kEos) {
    throw ContractError("reward: target must be EOS-terminated");
  }
  if (!(gamma >= 0.0)) {
    throw ContractError("reward: gamma must be non-negative");
  }
}

}  // namespace

RewardBreakdown combine_reward(double forward, double reverse, double gamma) {
  return RewardBreakdown{forward, reverse, gamma, forward + gamma * reverse};
}

TokenSeq eos_terminated(std::span<const TokenId> seq) {
  TokenSeq out(seq.begin(), seq.end());
  if (out.empty() || out.back() != kEos) out.push_back(kEos);
  return out;
}

double reverse_log_prob(const Seq2SeqModel& p_r, std::span<const TokenId> source, std::span<const TokenId> target) {
  const TokenSeq x = eos_terminated(source);
  return sequence_log_prob(p_r, target, x);
}

RewardBreakdown total_reward(const Seq2SeqModel& p_f, const Seq2SeqModel& p_r, std::span<const TokenId> source,
                             std::span<const TokenId> target, double gamma) {
  check_request(target, gamma);
  const double forward = sequence_log_prob(p_f, source, target);
  const double reverse = reverse_log_prob(p_r, source, target);
  return combine_reward(forward, reverse, gamma);
}

double StepRewards::sum() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

StepRewards step_rewards_from(std::span<const double> forward_steps, double reverse, double gamma) {
  if (forward_steps.empty()) {
    throw ContractError("step rewards: empty trajectory");
  }
  StepRewards r;
  r.values.assign(forward_steps.begin(), forward_steps.end());
  r.values.back() += gamma * reverse;
  return r;
}

StepRewards step_rewards(const Seq2SeqModel& p_f, const Seq2SeqModel& p_r, std::span<const TokenId> source,
                         std::span<const TokenId> target, double gamma) {
  check_request(target, gamma);
  const auto forward = token_log_probs(p_f, source, target);
  return step_rewards_from(forward, reverse_log_prob(p_r, source, target), gamma);
}

}  // namespace chanmt
