#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace chanmt {

using TokenId = std::int32_t;
/// Token ids of one sentence. Targets are EOS-terminated once prepared.
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr int kReservedTokens = 4;

/// Ordered, distinct token strings. Ids 0..3 are PAD, BOS, EOS, UNK.
class Vocab {
 public:
  Vocab();
  /// Rebuilds a vocabulary from a complete token list (reserved tokens first).
  explicit Vocab(std::vector<std::string> tokens);

  /// Every token observed in `sentences`, ordered by descending frequency
  /// with ties broken lexicographically, after the reserved tokens.
  static Vocab build(std::span<const std::vector<std::string>> sentences);

  std::size_t size() const { return tokens_.size(); }
  TokenId lookup(std::string_view token) const;
  const std::string& token_of(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Maps words to ids (unknown words become UNK).
  TokenSeq encode(std::span<const std::string> words) const;
  /// Maps ids to words, dropping a trailing EOS.
  std::vector<std::string> decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Splits on ASCII whitespace.
std::vector<std::string> split_words(std::string_view line);
std::string join_words(std::span<const std::string> words);

/// Throws ContractError unless `seq` has at most one EOS, and only at the end.
void check_token_seq(std::span<const TokenId> seq, std::size_t vocab_size);

}  // namespace chanmt
