#pragma once

#include <random>

#include "chanmt/seq2seq.hpp"

namespace chanmt::check {

/// 454 parameters: small enough for exhaustive finite differences.
inline ModelConfig tiny_config(int vocab = 6, int max_positions = 12) {
  ModelConfig c;
  c.src_vocab = vocab;
  c.tgt_vocab = vocab;
  c.embed_dim = 4;
  c.hidden_dim = 4;
  c.layers = 1;
  c.heads = 1;
  c.max_positions = max_positions;
  return c;
}

inline ModelConfig small_config(int src_vocab, int tgt_vocab) {
  ModelConfig c;
  c.src_vocab = src_vocab;
  c.tgt_vocab = tgt_vocab;
  c.embed_dim = 16;
  c.hidden_dim = 24;
  c.layers = 2;
  c.heads = 2;
  c.max_positions = 40;
  return c;
}

/// Random content tokens (no reserved ids).
inline TokenSeq random_tokens(std::mt19937_64& rng, int vocab, int min_len, int max_len) {
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::uniform_int_distribution<int> tok(kReservedTokens, vocab - 1);
  TokenSeq s(static_cast<std::size_t>(len(rng)));
  for (auto& t : s) t = tok(rng);
  return s;
}

inline TokenSeq with_eos(TokenSeq s) {
  s.push_back(kEos);
  return s;
}

}  // namespace chanmt::check
