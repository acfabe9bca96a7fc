#pragma once

// Knowledge distillation (pseudo-corpus + maximum likelihood) and
// imitation learning against soft-prefix energies.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "chanmt/corpus.hpp"
#include "chanmt/error.hpp"
#include "chanmt/seq2seq.hpp"

namespace chanmt {

enum class PseudoMode { kBsr, kBeam };

std::string to_string(PseudoMode mode);
PseudoMode parse_pseudo_mode(std::string_view name);

struct PseudoCorpus {
  std::vector<ParallelPair> pairs;
  PseudoMode mode = PseudoMode::kBsr;
  int beam = 1;
  double gamma = 0.0;
  std::uint64_t forward_checksum = 0;
  std::uint64_t reverse_checksum = 0;
};

/// One decoded target per source: BSR choice (kBsr) or beam top-1 (kBeam).
/// Incomplete decodes get their last token replaced by EOS. `p_r` may be
/// null in kBeam mode.
PseudoCorpus generate_pseudo_corpus(const Seq2SeqModel& p_f, const Seq2SeqModel* p_r,
                                    std::span<const TokenSeq> sources, int b, double gamma, PseudoMode mode,
                                    int threads = 1, int max_length = 0);

/// Writes `<stem>.src`, `<stem>.tgt` and the provenance sidecar `<stem>.json`.
void save_pseudo_corpus(const std::filesystem::path& stem, const PseudoCorpus& corpus, const Vocab& src,
                        const Vocab& tgt);
PseudoCorpus load_pseudo_corpus(const std::filesystem::path& stem, const Vocab& src, const Vocab& tgt);

struct TrainOptions {
  int epochs = 20;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double dropout = 0.1;
  std::size_t max_tokens = 256;
  /// Batches whose gradients are summed before one optimiser step.
  int accumulate = 1;
  /// Stop after this many epochs without a better dev score (0 = never).
  int patience = 0;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_bleu = 0.0;
  double dev_loss = 0.0;
};

struct TrainResult {
  Seq2SeqModel model;
  int best_epoch = 0;
  double best_dev_bleu = 0.0;
  double initial_loss = 0.0;
  std::vector<EpochLog> history;
};

/// Thrown when a loss turns non-finite; carries the last finite model.
class DivergenceError : public TrainingError {
 public:
  DivergenceError(const std::string& what, Seq2SeqModel last_finite)
      : TrainingError(what), last_finite_(std::make_shared<Seq2SeqModel>(std::move(last_finite))) {}
  const Seq2SeqModel& last_finite() const { return *last_finite_; }

 private:
  std::shared_ptr<Seq2SeqModel> last_finite_;
};

/// Mean negative log-likelihood per sequence over the given pairs.
double mean_nll(const Seq2SeqModel& model, std::span<const ParallelPair> pairs);

/// Greedy dev translations scored by corpus BLEU against the dev targets.
double dev_bleu(const Seq2SeqModel& model, std::span<const ParallelPair> dev, int threads = 1);

/// Maximum likelihood training from `init`. After every epoch the model is
/// scored on `dev` (BLEU, then lower dev loss) and the best one is returned;
/// with an empty `dev` the last epoch wins.
TrainResult train_mle(const Seq2SeqModel& init, std::span<const ParallelPair> train, std::span<const ParallelPair> dev,
                      const TrainOptions& options);

struct ILConfig {
  /// Probability of taking the policy's own greedy prefix for a minibatch.
  double mix_p = 0.5;
  double gamma = 0.9;
  /// Cap on policy rollouts (0 = the default length cap).
  int max_length = 0;
  TrainOptions train{.epochs = 4, .learning_rate = 1e-4, .weight_decay = 1e-4, .dropout = 0.05};
};

/// Bernoulli(p) draw: true selects the policy rollout.
bool il_draw_rollout(double p, std::mt19937_64& rng);

struct SoftRollout {
  bool from_policy = false;
  TokenSeq prefix;
  SoftSeq soft;
};

/// Prefix ŷ (policy greedy decode or the BSR target) and the rows
/// A(.|x, ŷ_<t) along it.
SoftRollout il_build_soft_rollout(const Seq2SeqModel& A, std::span<const TokenId> source,
                                  std::span<const TokenId> bsr_target, bool use_policy, int max_length = 0);
SoftRollout il_build_soft_rollout(const Seq2SeqModel& A, std::span<const TokenId> source,
                                  std::span<const TokenId> bsr_target, double p, std::mt19937_64& rng,
                                  int max_length = 0);

/// Rows A(.|x, prefix_<t) on a tape.
ad::Var il_soft_rows(const BoundModel& A, std::span<const TokenId> source, std::span<const TokenId> prefix,
                     const Dropout& dropout = {});

struct EnergyTerms {
  ad::Var total;
  ad::Var forward;
  /// Absent when gamma == 0.
  std::optional<ad::Var> reverse;
};

/// forward = -sum_t <rows_t, log p_f(.|x, rows_<t)>;
/// reverse = -sum_t' log p_r(x_t' | x_<t', rows) over x + EOS;
/// total = forward + gamma * reverse.
EnergyTerms il_energy(const BoundModel& p_f, const BoundModel& p_r, std::span<const TokenId> source, ad::Var rows,
                      double gamma);

struct EnergyValue {
  double total = 0.0;
  double forward = 0.0;
  std::optional<double> reverse;
};

EnergyValue il_energy(const Seq2SeqModel& p_f, const Seq2SeqModel& p_r, std::span<const TokenId> source,
                      const SoftSeq& rows, double gamma);

/// Mean energy of the policy along its own greedy decodes of the sources.
double mean_il_energy(const Seq2SeqModel& A, const Seq2SeqModel& p_f, const Seq2SeqModel& p_r,
                      std::span<const ParallelPair> pairs, double gamma, int max_length = 0);

/// Imitation learning from `init`; p_f and p_r stay frozen. `bsr_pairs`
/// holds sources with their BSR targets.
TrainResult train_il(const Seq2SeqModel& init, const Seq2SeqModel& p_f, const Seq2SeqModel& p_r,
                     std::span<const ParallelPair> bsr_pairs, std::span<const ParallelPair> dev,
                     const ILConfig& config);

}  // namespace chanmt
