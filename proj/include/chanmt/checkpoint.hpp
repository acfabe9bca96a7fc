#pragma once

// Versioned binary model checkpoints.
//
// Layout (little-endian): magic "CHMTCKPT", u32 version, u32 role length +
// role bytes, u64 config hash, u64 seed, 7 x i32 model config, two
// vocabularies (u32 count, then u32 length + bytes per token), u32 parameter
// count, then per parameter i64 rows, i64 cols and rows*cols doubles, and a
// trailing u64 FNV-1a checksum over every preceding byte.

#include <cstdint>
#include <filesystem>
#include <string>

#include "chanmt/seq2seq.hpp"
#include "chanmt/vocab.hpp"

namespace chanmt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string role;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  Vocab source_vocab;
  Vocab target_vocab;
  Seq2SeqModel model;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws IntegrityError on a missing, truncated or corrupt file, on a
/// version other than kCheckpointVersion, and (when `expected` is given) on
/// a model config differing from it, naming the first differing field.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace chanmt
