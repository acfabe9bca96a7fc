#pragma once

// Synthetic parallel tasks, vocabularies, batching and parallel text files.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chanmt/vocab.hpp"

namespace chanmt {

enum class TaskKind {
  kCopy,
  kReverse,
  kCipher,
  kCipherSwap,
  /// Cipher with local swaps where some source words share a target form
  /// with a partner word (homophones): such a word emits its partner's
  /// image with probability homophone_rate, and its own image otherwise.
  kHomophone,
};

std::string to_string(TaskKind kind);
/// Throws ConfigError on an unknown name.
TaskKind parse_task_kind(std::string_view name);

struct TaskSpec {
  TaskKind kind = TaskKind::kCipherSwap;
  /// Total vocabulary size per side, the four reserved tokens included.
  int vocab_size = 30;
  int min_length = 3;
  int max_length = 12;
  /// Adjacent-swap probability on the target side (swap kinds only).
  double noise = 0.1;
  /// Share of source words that have a homophone partner.
  double homophone_fraction = 0.25;
  double homophone_rate = 0.55;
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
  bool operator==(const TaskSpec&) const = default;
};

using Sentence = std::vector<std::string>;

struct TextPair {
  Sentence source;
  Sentence target;
};

struct SyntheticCorpus {
  TaskSpec spec;
  std::vector<std::string> source_words;
  std::vector<std::string> target_words;
  /// Content-word index -> target content-word index.
  std::vector<int> bijection;
  /// Content-word index -> homophone partner index, or -1.
  std::vector<int> partner;
  std::vector<TextPair> pairs;

  /// Noise-free translation: every word mapped to its own image.
  Sentence clean_target(std::span<const std::string> source) const;
};

/// Deterministic given spec.seed. Throws ConfigError for an invalid spec and
/// ContractError when n == 0.
SyntheticCorpus generate_corpus(const TaskSpec& spec, std::size_t n);

enum class Side { kSource, kTarget };

/// Every token observed on one side plus the reserved tokens.
Vocab build_vocab(std::span<const TextPair> pairs, Side side);

/// Token-id pair; the target is EOS-terminated.
struct ParallelPair {
  TokenSeq source;
  TokenSeq target;
  bool operator==(const ParallelPair&) const = default;
};

std::vector<ParallelPair> encode_pairs(std::span<const TextPair> pairs, const Vocab& src, const Vocab& tgt);

/// Partition of pair indices into batches whose padded source token count
/// (longest source times batch size) stays within `max_tokens`. Pairs are
/// taken in ascending source length (index order on ties) and packed
/// greedily. Throws CapacityError naming a pair longer than the budget.
std::vector<std::vector<std::size_t>> make_batches(std::span<const ParallelPair> pairs,
                                                   std::size_t max_tokens = std::numeric_limits<std::size_t>::max());

/// Whitespace-tokenised, line-aligned source/target files.
void write_parallel_text(const std::filesystem::path& source_file, const std::filesystem::path& target_file,
                         std::span<const TextPair> pairs);
/// Throws IntegrityError when files are missing, line counts differ, or a
/// line is empty.
std::vector<TextPair> read_parallel_text(const std::filesystem::path& source_file,
                                         const std::filesystem::path& target_file);

/// Splits `pairs` into consecutive parts of the given sizes.
std::vector<std::vector<TextPair>> split_pairs(std::span<const TextPair> pairs, std::span<const std::size_t> sizes);

}  // namespace chanmt
