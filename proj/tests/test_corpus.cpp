#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "chanmt/corpus.hpp"
#include "chanmt/error.hpp"

using namespace chanmt;

namespace {

TaskSpec spec_of(TaskKind kind, std::uint64_t seed = 1, double noise = 0.0) {
  TaskSpec s;
  s.kind = kind;
  s.seed = seed;
  s.noise = noise;
  return s;
}

std::vector<TextPair> text_pairs(std::initializer_list<std::pair<const char*, const char*>> lines) {
  std::vector<TextPair> out;
  for (const auto& [s, t] : lines) out.push_back({split_words(s), split_words(t)});
  return out;
}

ParallelPair pair_of_length(std::size_t n) { return {TokenSeq(n, 4), TokenSeq{4, kEos}}; }

}  // namespace

TEST(Tasks, CopyEmitsSource) {
  const auto c = generate_corpus(spec_of(TaskKind::kCopy), 50);
  for (const auto& p : c.pairs) EXPECT_EQ(p.source, p.target);
  const Sentence abc{"a", "b", "c"};
  EXPECT_EQ(c.clean_target(abc), abc);
  const Vocab src = build_vocab(c.pairs, Side::kSource);
  const Vocab tgt = build_vocab(c.pairs, Side::kTarget);
  const auto encoded = encode_pairs(std::span<const TextPair>(c.pairs).first(1), src, tgt);
  EXPECT_EQ(tgt.decode(encoded[0].target), c.pairs[0].target);
  EXPECT_EQ(encoded[0].target.back(), kEos);
  EXPECT_EQ(encoded[0].target.size(), c.pairs[0].target.size() + 1);
}

TEST(Tasks, ReverseMirrorsSource) {
  const auto c = generate_corpus(spec_of(TaskKind::kReverse), 50);
  for (const auto& p : c.pairs) EXPECT_EQ(p.target, Sentence(p.source.rbegin(), p.source.rend()));
  EXPECT_EQ(c.clean_target(Sentence{"a", "b", "c"}), (Sentence{"c", "b", "a"}));
}

TEST(Tasks, CipherFollowsBijectionTable) {
  const auto c = generate_corpus(spec_of(TaskKind::kCipher, 7), 200);
  std::map<std::string, std::string> table;
  for (std::size_t i = 0; i < c.source_words.size(); ++i) {
    table[c.source_words[i]] = c.target_words[static_cast<std::size_t>(c.bijection[i])];
  }
  std::vector<int> sorted = c.bijection;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], static_cast<int>(i));
  for (const auto& p : c.pairs) {
    ASSERT_EQ(p.source.size(), p.target.size());
    for (std::size_t i = 0; i < p.source.size(); ++i) EXPECT_EQ(p.target[i], table.at(p.source[i]));
  }
}

TEST(Tasks, LocalSwapNoiseRate) {
  const auto c = generate_corpus(spec_of(TaskKind::kCipherSwap, 3, 0.1), 4000);
  std::size_t differing = 0;
  std::size_t total = 0;
  for (const auto& p : c.pairs) {
    const auto clean = c.clean_target(p.source);
    ASSERT_EQ(clean.size(), p.target.size());
    Sentence sorted_clean = clean, sorted_target = p.target;
    std::sort(sorted_clean.begin(), sorted_clean.end());
    std::sort(sorted_target.begin(), sorted_target.end());
    EXPECT_EQ(sorted_clean, sorted_target);
    for (std::size_t i = 0; i < clean.size(); ++i) {
      if (clean[i] != p.target[i]) ++differing;
      if (clean[i] != p.target[i]) EXPECT_TRUE((i > 0 && clean[i - 1] == p.target[i]) ||
                                               (i + 1 < clean.size() && clean[i + 1] == p.target[i]));
    }
    total += clean.size();
  }
  EXPECT_GT(differing, 0u);
  EXPECT_LT(static_cast<double>(differing) / static_cast<double>(total), 0.2);
}

TEST(Tasks, HomophonePartnersShareImages) {
  TaskSpec s = spec_of(TaskKind::kHomophone, 5, 0.0);
  const auto c = generate_corpus(s, 2000);
  int with_partner = 0;
  for (std::size_t i = 0; i < c.partner.size(); ++i) {
    if (c.partner[i] >= 0) {
      ++with_partner;
      EXPECT_NE(c.partner[i], static_cast<int>(i));
    }
  }
  EXPECT_EQ(with_partner, 7);
  std::size_t swapped = 0, eligible = 0;
  for (const auto& p : c.pairs) {
    const auto clean = c.clean_target(p.source);
    for (std::size_t i = 0; i < p.source.size(); ++i) {
      const auto k = static_cast<std::size_t>(std::find(c.source_words.begin(), c.source_words.end(), p.source[i]) -
                                              c.source_words.begin());
      if (c.partner[k] < 0) {
        EXPECT_EQ(p.target[i], clean[i]);
        continue;
      }
      ++eligible;
      const auto& image = c.target_words[static_cast<std::size_t>(c.bijection[static_cast<std::size_t>(c.partner[k])])];
      if (p.target[i] == image) {
        ++swapped;
      } else {
        EXPECT_EQ(p.target[i], clean[i]);
      }
    }
  }
  EXPECT_NEAR(static_cast<double>(swapped) / static_cast<double>(eligible), s.homophone_rate, 0.03);
}

TEST(Tasks, SeededRegenerationIsExact) {
  const TaskSpec s = spec_of(TaskKind::kHomophone, 11, 0.1);
  const auto a = generate_corpus(s, 300);
  const auto b = generate_corpus(s, 300);
  ASSERT_EQ(a.pairs.size(), b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    EXPECT_EQ(a.pairs[i].source, b.pairs[i].source);
    EXPECT_EQ(a.pairs[i].target, b.pairs[i].target);
  }
  const auto other = generate_corpus(spec_of(TaskKind::kHomophone, 12, 0.1), 300);
  bool differs = false;
  for (std::size_t i = 0; i < a.pairs.size(); ++i) differs |= a.pairs[i].source != other.pairs[i].source;
  EXPECT_TRUE(differs);
}

TEST(Tasks, LengthsWithinRange) {
  TaskSpec s = spec_of(TaskKind::kCipherSwap, 2, 0.1);
  s.min_length = 2;
  s.max_length = 5;
  for (const auto& p : generate_corpus(s, 500).pairs) {
    EXPECT_GE(p.source.size(), 2u);
    EXPECT_LE(p.source.size(), 5u);
  }
}

TEST(Tasks, InvalidSpecs) {
  TaskSpec s;
  s.vocab_size = 4;
  EXPECT_THROW(generate_corpus(s, 10), ConfigError);
  s.vocab_size = 3;
  EXPECT_THROW(generate_corpus(s, 10), ConfigError);
  s = TaskSpec{};
  s.noise = 1.5;
  EXPECT_THROW(generate_corpus(s, 10), ConfigError);
  s = TaskSpec{};
  s.min_length = 0;
  EXPECT_THROW(generate_corpus(s, 10), ConfigError);
  EXPECT_THROW(generate_corpus(TaskSpec{}, 0), ContractError);
  EXPECT_EQ(parse_task_kind(to_string(TaskKind::kCipherSwap)), TaskKind::kCipherSwap);
  EXPECT_THROW(parse_task_kind("bogus"), ConfigError);
}

TEST(VocabBuild, CountsReservedTokens) {
  const auto pairs = text_pairs({{"a b", "x"}, {"b a a", "y"}});
  EXPECT_EQ(build_vocab(pairs, Side::kSource).size(), 6u);
}

TEST(VocabBuild, Deterministic) {
  const auto c = generate_corpus(TaskSpec{}, 100);
  EXPECT_EQ(build_vocab(c.pairs, Side::kTarget), build_vocab(c.pairs, Side::kTarget));
}

TEST(VocabBuild, FrequencyThenLexicographic) {
  const auto pairs = text_pairs({{"y x z z", "q"}, {"x y", "q"}});
  const Vocab v = build_vocab(pairs, Side::kSource);
  EXPECT_EQ(v.token_of(kReservedTokens), "x");
  EXPECT_EQ(v.token_of(kReservedTokens + 1), "y");
  EXPECT_EQ(v.token_of(kReservedTokens + 2), "z");
  EXPECT_EQ(v.lookup("nope"), kUnk);
}

TEST(Batching, UnboundedBudgetIsOneBatch) {
  std::vector<ParallelPair> pairs;
  for (std::size_t n : {5, 2, 9, 1}) pairs.push_back(pair_of_length(n));
  const auto batches = make_batches(pairs);
  ASSERT_EQ(batches.size(), 1u);
  EXPECT_EQ(batches[0], (std::vector<std::size_t>{3, 1, 0, 2}));
}

TEST(Batching, LongestPairAloneAtItsOwnLength) {
  std::vector<ParallelPair> pairs;
  for (std::size_t n : {3, 7, 2, 3}) pairs.push_back(pair_of_length(n));
  const auto batches = make_batches(pairs, 7);
  bool found = false;
  for (const auto& b : batches) {
    if (std::find(b.begin(), b.end(), 1u) != b.end()) {
      EXPECT_EQ(b.size(), 1u);
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(Batching, GreedyPackingOracle) {
  std::vector<ParallelPair> pairs;
  const std::vector<std::size_t> lengths{7, 3, 10, 1, 5, 9, 2, 8, 4, 6};
  for (std::size_t n : lengths) pairs.push_back(pair_of_length(n));
  const auto batches = make_batches(pairs, 12);

  std::vector<std::size_t> order(lengths.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
  std::vector<std::vector<std::size_t>> expected;
  std::vector<std::size_t> current;
  std::size_t longest = 0;
  for (std::size_t i : order) {
    const std::size_t grown = std::max(longest, lengths[i]);
    if (!current.empty() && grown * (current.size() + 1) > 12) {
      expected.push_back(current);
      current.clear();
      longest = 0;
    }
    current.push_back(i);
    longest = std::max(longest, lengths[i]);
  }
  expected.push_back(current);
  EXPECT_EQ(batches, expected);
  // {1,2,3} {4,5} {6} {7} {8} {9} {10}
  ASSERT_EQ(batches.size(), 7u);
  EXPECT_EQ(batches[0].size(), 3u);
  EXPECT_EQ(batches[1].size(), 2u);

  std::vector<std::size_t> seen;
  for (const auto& b : batches) {
    std::size_t m = 0;
    for (std::size_t i : b) m = std::max(m, lengths[i]);
    EXPECT_LE(m * b.size(), 12u);
    seen.insert(seen.end(), b.begin(), b.end());
  }
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i], i);
  EXPECT_EQ(seen.size(), lengths.size());
}

TEST(Batching, OversizedPairIsCapacityError) {
  std::vector<ParallelPair> pairs{pair_of_length(3), pair_of_length(20)};
  try {
    make_batches(pairs, 12);
    FAIL();
  } catch (const CapacityError& e) {
    EXPECT_NE(std::string(e.what()).find('1'), std::string::npos);
  }
}

TEST(ParallelText, RoundTripAndAlignment) {
  const auto dir = std::filesystem::temp_directory_path() / "chanmt_corpus_test";
  std::filesystem::create_directories(dir);
  const auto pairs = text_pairs({{"a b c", "C B A"}, {"d", "D"}});
  write_parallel_text(dir / "x.src", dir / "x.tgt", pairs);
  const auto back = read_parallel_text(dir / "x.src", dir / "x.tgt");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].source, pairs[0].source);
  EXPECT_EQ(back[1].target, pairs[1].target);
  {
    std::ofstream out(dir / "x.tgt", std::ios::app);
    out << "EXTRA\n";
  }
  EXPECT_THROW(read_parallel_text(dir / "x.src", dir / "x.tgt"), IntegrityError);
  EXPECT_THROW(read_parallel_text(dir / "missing.src", dir / "x.tgt"), IntegrityError);
  std::filesystem::remove_all(dir);
}

TEST(ParallelText, SplitSizes) {
  const auto c = generate_corpus(TaskSpec{}, 10);
  const std::vector<std::size_t> sizes{6, 2, 2};
  const auto parts = split_pairs(c.pairs, sizes);
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[0].size(), 6u);
  EXPECT_EQ(parts[2][1].source, c.pairs[9].source);
}
