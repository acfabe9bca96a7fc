#pragma once

// Causal transformer encoder-decoder (pre-layer-norm).
//
// Two evaluation paths share the same kernels:
//  * a tape path over whole sequences, used for training and for soft
//    (distribution-valued) inputs embedded as expected embeddings;
//  * an incremental path with per-layer key/value caches, used for decoding
//    and for scoring hard sequences.
//
// The same model type serves as forward translator, reverse translator,
// distilled student, imitation policy, and Q-network. The Q role reads the
// raw output scores instead of their log-softmax.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "chanmt/autodiff.hpp"
#include "chanmt/vocab.hpp"

namespace chanmt {

struct ModelConfig {
  int src_vocab = 0;
  int tgt_vocab = 0;
  int embed_dim = 64;
  int hidden_dim = 128;
  int layers = 2;
  int heads = 2;
  int max_positions = 128;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
  /// Name of the first field that differs, or empty when equal.
  std::string first_difference(const ModelConfig& other) const;
  bool operator==(const ModelConfig&) const = default;
};

namespace detail {

struct AttentionIdx {
  int wq, bq, wk, bk, wv, bv, wo, bo;
};
struct NormIdx {
  int gain, bias;
};
struct FeedForwardIdx {
  int w1, b1, w2, b2;
};
struct EncoderLayerIdx {
  NormIdx ln1;
  AttentionIdx self;
  NormIdx ln2;
  FeedForwardIdx ffn;
};
struct DecoderLayerIdx {
  NormIdx ln1;
  AttentionIdx self;
  NormIdx ln2;
  AttentionIdx cross;
  NormIdx ln3;
  FeedForwardIdx ffn;
};

struct Layout {
  int src_embed = 0;
  int tgt_embed = 0;
  std::vector<EncoderLayerIdx> encoder;
  NormIdx encoder_norm{};
  std::vector<DecoderLayerIdx> decoder;
  NormIdx decoder_norm{};
  int out_w = 0;
  int out_b = 0;
  std::vector<std::string> names;
  std::vector<std::pair<int, int>> shapes;
};

Layout make_layout(const ModelConfig& config);

}  // namespace detail

class Seq2SeqModel {
 public:
  Seq2SeqModel() = default;
  /// Randomly initialised model (Xavier-normal weights, unit norms).
  Seq2SeqModel(const ModelConfig& config, std::uint64_t seed);
  /// Model with the given parameter values; shapes must match the config.
  Seq2SeqModel(const ModelConfig& config, std::vector<ad::Matrix> parameters);

  const ModelConfig& config() const { return config_; }
  const detail::Layout& layout() const { return layout_; }
  std::vector<ad::Matrix>& parameters() { return params_; }
  const std::vector<ad::Matrix>& parameters() const { return params_; }
  /// Total number of scalar parameters.
  std::size_t parameter_count() const;
  /// FNV-1a hash over config and parameter bytes.
  std::uint64_t checksum() const;
  /// Throws ContractError if any parameter is non-finite.
  void check_finite() const;

  const ad::Matrix& positions() const { return positions_; }

 private:
  ModelConfig config_;
  detail::Layout layout_;
  std::vector<ad::Matrix> params_;
  ad::Matrix positions_;
};

/// Rows are probability distributions over a vocabulary (row-stochastic).
struct SoftSeq {
  ad::Matrix rows;

  std::size_t length() const { return static_cast<std::size_t>(rows.rows()); }
  /// One-hot rows of a hard sequence.
  static SoftSeq one_hot(std::span<const TokenId> ids, std::size_t vocab_size);
};

/// Throws ContractError unless every row is >= 0 and sums to 1 within 1e-9.
void check_soft_seq(const ad::Matrix& rows, std::size_t vocab_size);

// ---------------------------------------------------------------------------
// Tape path

/// Dropout applied during training passes; rate 0 disables it.
struct Dropout {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
};

/// A model's parameters as leaves of a tape.
struct BoundModel {
  const Seq2SeqModel* model = nullptr;
  std::vector<ad::Var> p;
};

/// Binds `model` to `tape`. Gradients are added into `grads` (shaped like the
/// parameters) when non-null; otherwise the model is frozen on this tape.
BoundModel bind_model(ad::Tape& tape, const Seq2SeqModel& model, std::vector<ad::Matrix>* grads);

ad::Var embed_source(const BoundModel& m, std::span<const TokenId> ids);
/// Expected source embeddings of distribution rows (rows x src_vocab).
ad::Var embed_source_soft(const BoundModel& m, ad::Var rows);
ad::Var embed_target(const BoundModel& m, std::span<const TokenId> ids);
ad::Var embed_target_soft(const BoundModel& m, ad::Var rows);
ad::Var encode(const BoundModel& m, ad::Var embedded, const Dropout& dropout = {});
/// Raw output scores (rows x tgt_vocab), position t attending to inputs <= t.
ad::Var decode(const BoundModel& m, ad::Var memory, ad::Var embedded_inputs, const Dropout& dropout = {});

/// BOS followed by every token of `target` except the last.
TokenSeq shift_right(std::span<const TokenId> target);

/// Raw scores for every position of an EOS-terminated (or partial) target
/// under teacher forcing.
ad::Var teacher_forced_scores(const BoundModel& m, std::span<const TokenId> source, std::span<const TokenId> target,
                              const Dropout& dropout = {});

/// Log-distributions (T x tgt_vocab) where row t conditions on soft rows < t.
ad::Var soft_forward(const BoundModel& m, std::span<const TokenId> source, ad::Var soft_rows);

/// Log-distributions for every position of `target` under teacher forcing,
/// with the encoder consuming distribution rows instead of source tokens.
ad::Var soft_source_forward(const BoundModel& m, ad::Var soft_source_rows, std::span<const TokenId> target);

// ---------------------------------------------------------------------------
// Incremental path

/// Encoder output for a hard source.
ad::Matrix encode_source(const Seq2SeqModel& model, std::span<const TokenId> source);
/// Encoder output for distribution rows over the source vocabulary.
ad::Matrix encode_soft_source(const Seq2SeqModel& model, const ad::Matrix& rows);

/// Decoder state for a set of hypotheses sharing one encoder output. Each
/// hypothesis starts at BOS; scores() holds the next-token raw scores of
/// every hypothesis.
class DecoderState {
 public:
  DecoderState(const Seq2SeqModel& model, ad::Matrix memory, std::size_t hypotheses = 1);

  std::size_t hypotheses() const { return static_cast<std::size_t>(scores_.rows()); }
  /// Number of tokens consumed after BOS.
  int length() const { return length_; }
  /// hypotheses x tgt_vocab raw scores.
  const ad::Matrix& scores() const { return scores_; }
  /// Row `h` of scores() turned into log-probabilities.
  std::vector<double> log_probs(std::size_t h) const;

  /// Continues hypothesis `parents[i]` with `tokens[i]`, producing the new
  /// hypothesis i. Throws CapacityError past the model's max positions.
  void advance(std::span<const std::size_t> parents, std::span<const TokenId> tokens);
  /// Single-hypothesis shortcut.
  void advance(TokenId token);

 private:
  void step(const ad::Matrix& embedded);

  const Seq2SeqModel* model_;
  ad::Matrix memory_;
  std::vector<ad::Matrix> cross_k_;
  std::vector<ad::Matrix> cross_v_;
  // [layer][hypothesis] -> rows 0..length_ used
  std::vector<std::vector<ad::Matrix>> self_k_;
  std::vector<std::vector<ad::Matrix>> self_v_;
  ad::Matrix scores_;
  int length_ = 0;
};

/// log p(. | prefix, source). `prefix` must not contain EOS.
std::vector<double> next_token_log_probs(const Seq2SeqModel& model, std::span<const TokenId> source,
                                         std::span<const TokenId> prefix);

/// log p(target_t | target_<t, source) for each position of an EOS-terminated
/// target.
std::vector<double> token_log_probs(const Seq2SeqModel& model, std::span<const TokenId> source,
                                    std::span<const TokenId> target);

/// Sum of token_log_probs. Throws ContractError when `target` lacks EOS.
double sequence_log_prob(const Seq2SeqModel& model, std::span<const TokenId> source, std::span<const TokenId> target);

/// Tape-free soft_forward.
ad::Matrix soft_forward(const Seq2SeqModel& model, std::span<const TokenId> source, const SoftSeq& soft_target);

/// log p(. | target_prefix, soft source) over the target vocabulary.
std::vector<double> soft_source_forward(const Seq2SeqModel& model, const SoftSeq& soft_source,
                                        std::span<const TokenId> target_prefix);

}  // namespace chanmt
