#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "chanmt/amortize.hpp"
#include "chanmt/decode.hpp"
#include "chanmt/reward.hpp"
#include "support/enumerate.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace chanmt;
namespace fs = std::filesystem;

namespace {

std::vector<TokenSeq> random_sources(std::uint64_t seed, std::size_t n, int vocab, int max_len) {
  std::mt19937_64 rng(seed);
  std::vector<TokenSeq> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(check::random_tokens(rng, vocab, 1, max_len));
  return out;
}

Vocab numbered_vocab(int size) {
  std::vector<std::string> tokens = Vocab().tokens();
  for (int i = kReservedTokens; i < size; ++i) tokens.push_back("w" + std::to_string(i));
  return Vocab(tokens);
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("chanmt_amortize_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<ParallelPair> task_pairs(TaskKind kind, std::size_t n, int vocab, int min_len, int max_len,
                                     std::uint64_t seed, Vocab* src = nullptr, Vocab* tgt = nullptr) {
  TaskSpec spec;
  spec.kind = kind;
  spec.vocab_size = vocab;
  spec.min_length = min_len;
  spec.max_length = max_len;
  spec.seed = seed;
  const auto corpus = generate_corpus(spec, n);
  Vocab s = build_vocab(corpus.pairs, Side::kSource);
  Vocab t = build_vocab(corpus.pairs, Side::kTarget);
  auto pairs = encode_pairs(corpus.pairs, s, t);
  if (src != nullptr) *src = s;
  if (tgt != nullptr) *tgt = t;
  return pairs;
}

double nll_per_token(const Seq2SeqModel& m, std::span<const ParallelPair> pairs) {
  double nll = 0.0, tokens = 0.0;
  for (const auto& p : pairs) {
    nll -= sequence_log_prob(m, p.source, p.target);
    tokens += static_cast<double>(p.target.size());
  }
  return nll / tokens;
}

}  // namespace

TEST(PseudoCorpus, BeamOneTargetsAreGreedyDecodes) {
  Seq2SeqModel f(check::small_config(10, 10), 3);
  const auto xs = random_sources(1, 40, 10, 5);
  const auto c = generate_pseudo_corpus(f, nullptr, xs, 1, 0.0, PseudoMode::kBeam);
  ModelScorer scorer(f, ScorerRole::kProbability);
  ASSERT_EQ(c.pairs.size(), xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EXPECT_EQ(c.pairs[i].source, xs[i]);
    EXPECT_EQ(c.pairs[i].target, complete_target(greedy_decode(scorer, xs[i])));
  }
}

TEST(PseudoCorpus, BsrAtGammaZeroEqualsBeam) {
  Seq2SeqModel f(check::small_config(10, 10), 4), r(check::small_config(10, 10), 5);
  const auto xs = random_sources(2, 30, 10, 5);
  const auto bsr = generate_pseudo_corpus(f, &r, xs, 4, 0.0, PseudoMode::kBsr);
  const auto beam = generate_pseudo_corpus(f, nullptr, xs, 4, 0.0, PseudoMode::kBeam);
  EXPECT_EQ(bsr.pairs, beam.pairs);
}

TEST(PseudoCorpus, ExhaustiveBsrTargetsAreBruteForceArgmax) {
  Seq2SeqModel f(check::tiny_config(), 21), r(check::tiny_config(), 22);
  const auto xs = random_sources(3, 12, 6, 3);
  const auto c = generate_pseudo_corpus(f, &r, xs, 1000, 0.7, PseudoMode::kBsr, 1, 4);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EXPECT_EQ(c.pairs[i].target, check::brute_force_best(f, r, xs[i], 0.7, 4).target);
  }
}

TEST(PseudoCorpus, BsrNeedsReverseModel) {
  Seq2SeqModel f(check::tiny_config(), 1);
  const auto xs = random_sources(4, 2, 6, 3);
  EXPECT_THROW(generate_pseudo_corpus(f, nullptr, xs, 2, 0.5, PseudoMode::kBsr), ContractError);
}

TEST(PseudoCorpus, SaveLoadKeepsPairsAndProvenance) {
  Seq2SeqModel f(check::small_config(10, 10), 6), r(check::small_config(10, 10), 7);
  const auto xs = random_sources(5, 25, 10, 5);
  const auto c = generate_pseudo_corpus(f, &r, xs, 3, 0.5, PseudoMode::kBsr, 1, 6);
  const Vocab v = numbered_vocab(10);
  const auto dir = scratch("roundtrip");
  save_pseudo_corpus(dir / "nc", c, v, v);
  const auto back = load_pseudo_corpus(dir / "nc", v, v);
  EXPECT_EQ(back.pairs, c.pairs);
  EXPECT_EQ(back.mode, PseudoMode::kBsr);
  EXPECT_EQ(back.beam, 3);
  EXPECT_EQ(back.gamma, 0.5);
  EXPECT_EQ(back.forward_checksum, f.checksum());
  EXPECT_EQ(back.reverse_checksum, r.checksum());

  {
    std::ofstream tgt(dir / "nc.tgt", std::ios::app);
    tgt << "w4 w5\n";
  }
  EXPECT_THROW(load_pseudo_corpus(dir / "nc", v, v), IntegrityError);
  fs::remove(dir / "nc.json");
  EXPECT_THROW(load_pseudo_corpus(dir / "nc", v, v), IntegrityError);
}

TEST(Kd, LossIsMeanNllOverPseudoPairs) {
  Seq2SeqModel f(check::small_config(10, 10), 8);
  const auto xs = random_sources(6, 20, 10, 5);
  const auto c = generate_pseudo_corpus(f, nullptr, xs, 2, 0.0, PseudoMode::kBeam, 1, 6);
  Seq2SeqModel student(check::small_config(10, 10), 9);
  double expected = 0.0;
  for (const auto& p : c.pairs) expected -= sequence_log_prob(student, p.source, p.target);
  expected /= static_cast<double>(c.pairs.size());
  EXPECT_NEAR(mean_nll(student, c.pairs), expected, 1e-9);

  TrainOptions o;
  o.epochs = 1;
  o.max_tokens = 40;
  const auto res = train_mle(student, c.pairs, {}, o);
  EXPECT_NEAR(res.initial_loss, expected, 1e-9);
}

TEST(Mle, LossDescendsAndStaysFinite) {
  const auto pairs = task_pairs(TaskKind::kCipher, 200, 10, 2, 5, 3);
  Seq2SeqModel init(check::small_config(10, 10), 10);
  TrainOptions o;
  o.epochs = 3;
  o.max_tokens = 64;
  const auto res = train_mle(init, pairs, {}, o);
  ASSERT_EQ(res.history.size(), 3u);
  for (const auto& e : res.history) EXPECT_TRUE(std::isfinite(e.train_loss));
  EXPECT_LT(res.history.back().train_loss, res.initial_loss);
}

TEST(Mle, OneBatchOverfit) {
  const auto pairs = task_pairs(TaskKind::kCipher, 8, 12, 2, 5, 4);
  ModelConfig mc = check::small_config(12, 12);
  Seq2SeqModel init(mc, 11);
  TrainOptions o;
  o.epochs = 500;
  o.max_tokens = 1000;
  o.learning_rate = 3e-3;
  o.weight_decay = 0.0;
  o.dropout = 0.0;
  const auto res = train_mle(init, pairs, {}, o);
  EXPECT_LT(nll_per_token(res.model, pairs), 0.05);
}

TEST(Mle, CopyTaskConverges) {
  Vocab src, tgt;
  const auto all = task_pairs(TaskKind::kCopy, 2200, 12, 2, 6, 5, &src, &tgt);
  const std::span<const ParallelPair> train(all.data(), 2000), dev(all.data() + 2000, 200);
  ModelConfig mc;
  mc.src_vocab = static_cast<int>(src.size());
  mc.tgt_vocab = static_cast<int>(tgt.size());
  mc.embed_dim = 32;
  mc.hidden_dim = 64;
  mc.layers = 1;
  mc.heads = 2;
  mc.max_positions = 32;
  TrainOptions o;
  o.epochs = 6;
  o.max_tokens = 64;
  o.learning_rate = 3e-3;
  o.dropout = 0.0;
  const auto res = train_mle(Seq2SeqModel(mc, 12), train, dev, o);
  ModelScorer scorer(res.model, ScorerRole::kProbability);
  int exact = 0;
  for (const auto& p : dev) exact += complete_target(greedy_decode(scorer, p.source)) == p.target;
  EXPECT_GE(exact, 198);
}

TEST(IlMix, DegenerateProbabilities) {
  std::mt19937_64 rng(1);
  Seq2SeqModel a(check::small_config(10, 10), 13);
  ModelScorer scorer(a, ScorerRole::kProbability);
  const auto xs = random_sources(7, 10, 10, 5);
  for (const auto& x : xs) {
    const TokenSeq bsr = check::with_eos({4, 5, 6});
    const auto own = il_build_soft_rollout(a, x, bsr, 1.0, rng);
    EXPECT_TRUE(own.from_policy);
    EXPECT_EQ(own.prefix, greedy_decode(scorer, x).tokens);
    const auto forced = il_build_soft_rollout(a, x, bsr, 0.0, rng);
    EXPECT_FALSE(forced.from_policy);
    EXPECT_EQ(forced.prefix, bsr);
    EXPECT_EQ(forced.soft.length(), bsr.size());
    check_soft_seq(forced.soft.rows, 10);
  }
}

TEST(IlMix, HalfProbabilityFrequency) {
  std::mt19937_64 rng(2);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += il_draw_rollout(0.5, rng);
  EXPECT_NEAR(hits / 10000.0, 0.5, 0.02);
  EXPECT_THROW(il_draw_rollout(1.5, rng), ConfigError);
  EXPECT_THROW(il_draw_rollout(-0.1, rng), ConfigError);
}

TEST(IlEnergy, OneHotRowsGiveRewards) {
  Seq2SeqModel f(check::small_config(10, 9), 14), r(check::small_config(9, 10), 15);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    const TokenSeq x = check::random_tokens(rng, 10, 1, 5);
    const TokenSeq y = check::with_eos(check::random_tokens(rng, 9, 0, 5));
    const auto e = il_energy(f, r, x, SoftSeq::one_hot(y, 9), 0.6);
    const auto reward = total_reward(f, r, x, y, 0.6);
    EXPECT_NEAR(e.forward, -sequence_log_prob(f, x, y), 1e-10);
    ASSERT_TRUE(e.reverse.has_value());
    EXPECT_NEAR(*e.reverse, -reverse_log_prob(r, x, y), 1e-9);
    EXPECT_NEAR(e.total, -reward.total, 1e-9);
  }
}

TEST(IlEnergy, GammaZeroIgnoresReverseModel) {
  Seq2SeqModel f(check::tiny_config(), 16), r1(check::tiny_config(), 17), r2(check::tiny_config(), 18);
  const TokenSeq x{4, 5};
  const TokenSeq y = check::with_eos({3, 4});
  ad::Tape t;
  std::vector<ad::Matrix> rgrads = ad::zeros_like(r1.parameters());
  BoundModel bf = bind_model(t, f, nullptr);
  BoundModel br = bind_model(t, r1, &rgrads);
  ad::Var rows = t.constant(SoftSeq::one_hot(y, 6).rows);
  const auto e = il_energy(bf, br, x, rows, 0.0);
  EXPECT_FALSE(e.reverse.has_value());
  t.backward(e.total);
  for (const auto& g : rgrads) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(il_energy(f, r1, x, SoftSeq::one_hot(y, 6), 0.0).total,
            il_energy(f, r2, x, SoftSeq::one_hot(y, 6), 0.0).total);
  EXPECT_THROW(il_energy(f, r1, x, SoftSeq::one_hot(y, 6), -1.0), ContractError);
}

class IlGradient : public ::testing::TestWithParam<bool> {};

TEST_P(IlGradient, PolicyGradientMatchesFiniteDifferences) {
  const bool reverse_part = GetParam();
  Seq2SeqModel a(check::tiny_config(), 19), f(check::tiny_config(), 20), r(check::tiny_config(), 21);
  ASSERT_LE(a.parameter_count(), 500u);
  const TokenSeq x{4, 5, 3};
  const TokenSeq prefix = check::with_eos({5, 4});
  auto loss = [&](std::vector<ad::Matrix>* grads) {
    ad::Tape t;
    BoundModel ba = bind_model(t, a, grads);
    BoundModel bf = bind_model(t, f, nullptr);
    BoundModel br = bind_model(t, r, nullptr);
    const auto e = il_energy(bf, br, x, il_soft_rows(ba, x, prefix), 1.0);
    ad::Var part = reverse_part ? *e.reverse : e.forward;
    if (grads != nullptr) t.backward(part);
    return part.item();
  };
  const auto res = check::check_gradients(a.parameters(), check::LossFunction(loss));
  EXPECT_GT(res.analytic_norm, 0.0);
  EXPECT_LT(res.relative_error, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Parts, IlGradient, ::testing::Values(false, true),
                         [](const auto& info) { return info.param ? std::string("Reverse") : std::string("Forward"); });

TEST(Il, TeachersFrozenAndDevEnergyDrops) {
  Vocab src, tgt;
  const auto pairs = task_pairs(TaskKind::kCipher, 260, 10, 2, 4, 6, &src, &tgt);
  const std::span<const ParallelPair> train(pairs.data(), 200), dev(pairs.data() + 200, 60);
  ModelConfig fc = check::small_config(static_cast<int>(src.size()), static_cast<int>(tgt.size()));
  ModelConfig rc = check::small_config(static_cast<int>(tgt.size()), static_cast<int>(src.size()));
  TrainOptions o;
  o.epochs = 4;
  o.max_tokens = 48;
  o.learning_rate = 3e-3;
  const Seq2SeqModel f = train_mle(Seq2SeqModel(fc, 22), train, dev, o).model;
  std::vector<ParallelPair> rev;
  for (const auto& p : train) rev.push_back({p.target, eos_terminated(p.source)});
  const Seq2SeqModel r = train_mle(Seq2SeqModel(rc, 23), rev, {}, o).model;
  const auto fsum = f.checksum(), rsum = r.checksum();

  std::vector<TokenSeq> xs;
  for (const auto& p : train) xs.push_back(p.source);
  const auto nc = generate_pseudo_corpus(f, &r, xs, 4, 0.5, PseudoMode::kBsr);
  const Seq2SeqModel init(fc, 24);
  ILConfig ic;
  ic.gamma = 0.5;
  ic.mix_p = 0.5;
  ic.train.epochs = 3;
  ic.train.max_tokens = 48;
  ic.train.learning_rate = 3e-3;
  const auto res = train_il(init, f, r, nc.pairs, dev, ic);
  EXPECT_EQ(f.checksum(), fsum);
  EXPECT_EQ(r.checksum(), rsum);
  const double before = mean_il_energy(init, f, r, dev, 0.5);
  const double after = mean_il_energy(res.model, f, r, dev, 0.5);
  EXPECT_NEAR(after, res.history[static_cast<std::size_t>(res.best_epoch - 1)].dev_loss, 1e-9);
  EXPECT_LT(after, before);
}

TEST(Il, InvalidConfigRejected) {
  Seq2SeqModel m(check::tiny_config(), 1);
  const std::vector<ParallelPair> pairs{{{4}, check::with_eos({4})}};
  ILConfig ic;
  ic.mix_p = 2.0;
  EXPECT_THROW(train_il(m, m, m, pairs, {}, ic), ConfigError);
  ic.mix_p = 0.5;
  ic.gamma = -1.0;
  EXPECT_THROW(train_il(m, m, m, pairs, {}, ic), ConfigError);
}
