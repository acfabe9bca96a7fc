#pragma once

// Greedy, beam, sampling and noisy-channel rerank decoding.

#include <cstddef>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "chanmt/reward.hpp"
#include "chanmt/seq2seq.hpp"

namespace chanmt {

struct Hypothesis {
  TokenSeq tokens;
  /// Cumulative log-probability (probability scorers) or sum of chosen
  /// values (value scorers).
  double score = 0.0;
  bool complete = false;
};

/// floor(1.2 * source_length + 20).
int length_cap(std::size_t source_length);
/// `max_length` when positive, otherwise length_cap(source_length).
int resolve_cap(std::size_t source_length, int max_length);

/// Tokens of a hypothesis as an EOS-terminated target. An incomplete
/// hypothesis has its last token replaced by EOS.
TokenSeq complete_target(const Hypothesis& h);

enum class ScorerRole { kProbability, kValue };

/// Per-source decoding session producing one score vector per step.
class ScoringSession {
 public:
  virtual ~ScoringSession() = default;
  /// Log-probabilities or values for the next token.
  virtual std::vector<double> scores() const = 0;
  virtual void advance(TokenId token) = 0;
};

class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual ScorerRole role() const = 0;
  virtual std::unique_ptr<ScoringSession> start(std::span<const TokenId> source) const = 0;
};

/// Wraps a model: log-softmax outputs for kProbability, raw scores for kValue.
class ModelScorer final : public StepScorer {
 public:
  ModelScorer(const Seq2SeqModel& model, ScorerRole role) : model_(&model), role_(role) {}

  ScorerRole role() const override { return role_; }
  std::unique_ptr<ScoringSession> start(std::span<const TokenId> source) const override;

 private:
  const Seq2SeqModel* model_;
  ScorerRole role_;
};

/// Argmax at every step (lowest token id on ties) until EOS or the cap.
Hypothesis greedy_decode(const StepScorer& scorer, std::span<const TokenId> source, int max_length = 0);

/// Beam search over cumulative log-probability without length
/// normalisation. Each step keeps the best (b - finished) expansions, ties
/// going to the lower parent rank and then the lower token id; hypotheses
/// ending in EOS are retired. Hypotheses alive at the cap are returned as
/// incomplete. Sorted by score, descending. Throws ConfigError when b < 1.
std::vector<Hypothesis> beam_search(const Seq2SeqModel& model, std::span<const TokenId> source, int b,
                                    int max_length = 0);

struct BsrCandidate {
  Hypothesis hypothesis;
  RewardBreakdown reward;
  std::size_t beam_rank = 0;
};

struct BsrResult {
  Hypothesis best;
  /// Complete beam candidates in beam order with their rewards.
  std::vector<BsrCandidate> candidates;
  /// Index of the chosen candidate, or npos when the beam held no complete
  /// hypothesis (best is then the beam's top entry).
  std::size_t chosen = npos;

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
};

/// Beam search with p_f, then rerank the complete candidates by
/// forward + gamma * reverse. Ties go to the higher forward score and then
/// to the better beam rank.
BsrResult bsr_decode(const Seq2SeqModel& p_f, const Seq2SeqModel& p_r, std::span<const TokenId> source, int b,
                     double gamma, int max_length = 0);

/// Below this temperature sampling degenerates to argmax.
inline constexpr double kArgmaxTemperature = 1e-4;

/// Draws each token from softmax(scores / temperature). Throws ConfigError
/// when temperature <= 0.
Hypothesis sample_decode(const StepScorer& scorer, std::span<const TokenId> source, double temperature,
                         std::mt19937_64& rng, int max_length = 0);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> values);

/// Index drawn from softmax(values / temperature).
std::size_t sample_index(std::span<const double> values, double temperature, std::mt19937_64& rng);

}  // namespace chanmt
