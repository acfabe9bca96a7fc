#include <gtest/gtest.h>

#include <cmath>

#include "chanmt/error.hpp"
#include "chanmt/eval.hpp"

using namespace chanmt;

namespace {

std::vector<Sentence> sentences(std::initializer_list<const char*> lines) {
  std::vector<Sentence> out;
  for (const char* l : lines) out.push_back(split_words(l));
  return out;
}

TokenSeq letters(const std::string& s) {
  TokenSeq out;
  for (char ch : s) {
    if (ch != ' ') out.push_back(10 + (ch - 'a'));
  }
  return out;
}

}  // namespace

TEST(Bleu, IdentityIsHundred) {
  const auto refs = sentences({"a b c d e", "f g", "h"});
  EXPECT_EQ(corpus_bleu(refs, refs), 100.0);
  const std::vector<TokenSeq> ids{{4, 5, 6, kEos}, {7, kEos}};
  EXPECT_EQ(corpus_bleu(ids, ids), 100.0);
}

TEST(Bleu, ToyFixture) {
  const auto refs = sentences({"a b c d", "e f g", "h i"});
  const auto hyps = sentences({"a b c x", "e f g", "h"});
  // matches 7/8, 4/5, 2/3, 0/1 (smoothed to 1/2); c = 8, r = 9
  const double expected = 100.0 * std::exp(1.0 - 9.0 / 8.0) *
                          std::exp((std::log(7.0 / 8) + std::log(4.0 / 5) + std::log(2.0 / 3) + std::log(0.5)) / 4.0);
  EXPECT_NEAR(corpus_bleu(hyps, refs), expected, 1e-10);
  EXPECT_NEAR(corpus_bleu(hyps, refs), 61.3349, 5e-5);
}

TEST(Bleu, EmptyHypothesesCollapse) {
  const auto refs = sentences({"a b c d", "e f g"});
  const std::vector<Sentence> hyps(2);
  EXPECT_LT(corpus_bleu(hyps, refs), 1.0);
}

TEST(Bleu, SizeMismatchIsContractError) {
  const auto refs = sentences({"a b", "c"});
  const auto hyps = sentences({"a b"});
  EXPECT_THROW(corpus_bleu(hyps, refs), ContractError);
}

TEST(Bleu, HundredOnlyForIdenticalCorpora) {
  const auto refs = sentences({"a b c d e", "f g h i"});
  EXPECT_LT(corpus_bleu(sentences({"a b c d e", "f g h j"}), refs), 100.0);
  EXPECT_LT(corpus_bleu(sentences({"a b c d e f", "f g h i"}), refs), 100.0);
}

TEST(TokenRep, Fixtures) {
  EXPECT_EQ(token_rep(std::vector<TokenSeq>{letters("aaaaaaa")}), 1.0);
  EXPECT_EQ(token_rep(std::vector<TokenSeq>{letters("abcdefghij")}), 0.0);
  EXPECT_EQ(token_rep(std::vector<TokenSeq>{letters("abcdeafb")}), 1.0 / 3.0);
}

TEST(TokenRep, ShortSequencesContributeNothing) {
  const auto c = token_rep_counts(std::vector<TokenSeq>{letters("aaaaa"), letters("abcdeafb")});
  EXPECT_EQ(c.positions, 3u);
  EXPECT_EQ(c.repeated, 1u);
  EXPECT_EQ(token_rep(std::vector<TokenSeq>{letters("aaaaa")}), 0.0);
  TokenSeq with_eos = letters("aaaaa");
  with_eos.push_back(kEos);
  EXPECT_EQ(token_rep_counts(std::vector<TokenSeq>{with_eos}).positions, 0u);
}

TEST(TokenRep, OrderInvariant) {
  const std::vector<TokenSeq> a{letters("abcdeafb"), letters("aaaaaaaa"), letters("abcdefg")};
  const std::vector<TokenSeq> b{a[2], a[0], a[1]};
  EXPECT_EQ(token_rep(a), token_rep(b));
}

TEST(Buckets, SingleBucketMatchesCorpus) {
  const std::vector<TokenSeq> hyps{letters("abcdeafb"), letters("aaaaaaaa"), letters("ab")};
  const std::vector<std::size_t> lengths{3, 9, 14};
  const std::vector<Bucket> one{{0.0, std::numeric_limits<double>::infinity()}};
  const auto s = bucket_stats(hyps, lengths, one);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].count, 3u);
  EXPECT_EQ(s[0].token_rep, token_rep(hyps));
  EXPECT_DOUBLE_EQ(s[0].mean_length, 6.0);
}

TEST(Buckets, CountsPartitionCorpus) {
  std::vector<TokenSeq> hyps;
  std::vector<std::size_t> lengths;
  for (std::size_t n = 1; n <= 20; ++n) {
    hyps.push_back(TokenSeq(n, 4));
    lengths.push_back(n);
  }
  const auto buckets = default_buckets();
  const auto s = bucket_stats(hyps, lengths, buckets);
  std::size_t total = 0;
  for (const auto& b : s) total += b.count;
  EXPECT_EQ(total, hyps.size());
  EXPECT_EQ(s[0].count, 4u);
  EXPECT_EQ(s[3].count, 8u);
}

TEST(Buckets, UncoveredLengthIsContractError) {
  const std::vector<TokenSeq> hyps{{4}};
  const std::vector<std::size_t> lengths{9};
  const std::vector<Bucket> gap{{0, 4}, {10, 20}};
  EXPECT_THROW(bucket_stats(hyps, lengths, gap), ContractError);
}

TEST(Buckets, PlantedLongSourceRepetition) {
  std::vector<TokenSeq> hyps;
  std::vector<std::size_t> lengths;
  for (int i = 0; i < 10; ++i) {
    hyps.push_back(letters("abcdefgh"));
    lengths.push_back(3);
    hyps.push_back(letters("abababababababab"));
    lengths.push_back(15);
  }
  const auto buckets = default_buckets();
  const auto s = bucket_stats(hyps, lengths, buckets);
  EXPECT_GT(s.back().token_rep, s.front().token_rep);
}

TEST(Pairwise, DiagonalSymmetryAndDisjointVocabularies) {
  std::vector<SystemOutput> systems{{"a", {}, {}}, {"b", {}, {}}, {"c", {}, {}}};
  for (int i = 0; i < 20; ++i) {
    const TokenSeq src{4, 4 + i};
    const TokenSeq a{10, 11, 12, 13, 14, 15, 16, 17};
    TokenSeq b = a;
    b[static_cast<std::size_t>(i % 8)] = 18;
    const TokenSeq c{20, 21, 22, 23, 24, 25, 26, 27};
    for (auto* s : {&systems[0], &systems[1], &systems[2]}) s->sources.push_back(src);
    systems[0].translations.push_back(a);
    systems[1].translations.push_back(b);
    systems[2].translations.push_back(c);
  }
  const auto m = pairwise_bleu(systems);
  ASSERT_EQ(m.systems.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(m.matrix[i][i], 100.0);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(m.matrix[i][j], m.matrix[j][i]);
      EXPECT_GE(m.matrix[i][j], 0.0);
      EXPECT_LE(m.matrix[i][j], 100.0);
    }
  }
  EXPECT_LT(m.matrix[0][2], 1.0);
  EXPECT_GT(m.matrix[0][1], m.matrix[0][2]);
  auto bad = systems;
  bad[1].sources[0] = {7};
  EXPECT_EQ(bad[1].sources.size(), 20u);
  EXPECT_THROW(pairwise_bleu(bad), ContractError);
}

TEST(Stats, MeanStdAndMedian) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto s = mean_std(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(5.0 / 3.0));
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
}
