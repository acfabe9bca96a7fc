#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "chanmt/error.hpp"
#include "chanmt/qlearn.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace chanmt;

namespace {

struct Teachers {
  Seq2SeqModel p_f;
  Seq2SeqModel p_r;
};

Teachers tiny_teachers(int vocab = 6) {
  return {Seq2SeqModel(check::tiny_config(vocab), 11), Seq2SeqModel(check::tiny_config(vocab), 12)};
}

QConfig tiny_q_config() {
  QConfig c;
  c.sync_period = 3;
  c.learning_rate = 1e-2;
  c.max_length = 4;
  c.beam50 = 8;
  return c;
}

Trajectory random_trajectory(const Teachers& t, std::mt19937_64& rng, double gamma, int vocab = 6) {
  const TokenSeq x = check::random_tokens(rng, vocab, 1, 3);
  const TokenSeq y = check::with_eos(check::random_tokens(rng, vocab, 0, 3));
  return make_trajectory(t.p_f, t.p_r, x, y, Origin::kPfGreedy, gamma);
}

bool same_parameters(const Seq2SeqModel& a, const Seq2SeqModel& b) {
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    if (a.parameters()[i] != b.parameters()[i]) return false;
  }
  return true;
}

}  // namespace

TEST(Origins, MixFrequencies) {
  std::mt19937_64 rng(2024);
  std::map<Origin, int> counts;
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++counts[draw_origin(rng)];
  for (std::size_t k = 0; k < kMixedOrigins.size(); ++k) {
    EXPECT_NEAR(counts[kMixedOrigins[k]] / static_cast<double>(n), kOriginMix[k], 0.01) << to_string(kMixedOrigins[k]);
  }
}

TEST(Origins, NamesRoundTrip) {
  for (Origin o : kMixedOrigins) EXPECT_EQ(parse_origin(to_string(o)), o);
  EXPECT_EQ(parse_origin("gold"), Origin::kGold);
  EXPECT_THROW(parse_origin("epsilon"), ConfigError);
}

TEST(Collect, TrajectoriesAreConsistent) {
  const auto t = tiny_teachers();
  const QConfig cfg = tiny_q_config();
  QPair q = QPair::create(Seq2SeqModel(check::tiny_config(), 13), cfg);
  q.gamma = 0.7;
  std::mt19937_64 rng(5);
  std::vector<TokenSeq> xs;
  for (int i = 0; i < 300; ++i) xs.push_back(check::random_tokens(rng, 6, 1, 3));
  const auto trajs = collect_trajectories(q, t.p_f, t.p_r, xs, rng, cfg);
  ASSERT_EQ(trajs.size(), xs.size());
  const ModelScorer forward(t.p_f, ScorerRole::kProbability);
  std::map<Origin, int> seen;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto& tr = trajs[i];
    ++seen[tr.origin];
    EXPECT_EQ(tr.source, xs[i]);
    ASSERT_EQ(tr.target.back(), kEos);
    ASSERT_EQ(tr.rewards.values.size(), tr.target.size());
    EXPECT_LE(tr.target.size(), 4u);
    const auto total = total_reward(t.p_f, t.p_r, tr.source, tr.target, 0.7);
    EXPECT_NEAR(tr.rewards.sum(), total.total, 1e-9);
    const auto fwd = token_log_probs(t.p_f, tr.source, tr.target);
    for (std::size_t s = 0; s + 1 < tr.target.size(); ++s) EXPECT_EQ(tr.rewards.values[s], fwd[s]);
    if (tr.origin == Origin::kPfGreedy) {
      EXPECT_EQ(tr.target, complete_target(greedy_decode(forward, tr.source, 4)));
    }
    if (tr.origin == Origin::kQBoltzmann) {
      EXPECT_GT(tr.temperature, 0.0);
      EXPECT_LT(tr.temperature, 1.5);
    }
    if (tr.origin == Origin::kPfSample) {
      EXPECT_GT(tr.temperature, 0.0);
      EXPECT_LT(tr.temperature, 1.0);
    }
    if (tr.origin == Origin::kPfBeamSmall) {
      EXPECT_GE(tr.beam, 2);
      EXPECT_LE(tr.beam, 10);
    }
  }
  EXPECT_EQ(seen.size(), 6u);
  EXPECT_EQ(seen.count(Origin::kGold), 0u);
}

TEST(Collect, ThreadCountDoesNotChangeResults) {
  const auto t = tiny_teachers();
  QConfig cfg = tiny_q_config();
  QPair q = QPair::create(Seq2SeqModel(check::tiny_config(), 13), cfg);
  std::mt19937_64 src(3);
  std::vector<TokenSeq> xs;
  for (int i = 0; i < 40; ++i) xs.push_back(check::random_tokens(src, 6, 1, 3));
  std::mt19937_64 a(9), b(9);
  const auto one = collect_trajectories(q, t.p_f, t.p_r, xs, a, cfg);
  cfg.threads = 4;
  const auto four = collect_trajectories(q, t.p_f, t.p_r, xs, b, cfg);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EXPECT_EQ(one[i].target, four[i].target);
    EXPECT_EQ(one[i].rewards.values, four[i].rewards.values);
  }
}

TEST(Collect, GoldOnlyBehindFlag) {
  const auto t = tiny_teachers();
  QConfig cfg = tiny_q_config();
  cfg.include_gold = true;
  cfg.gold_rate = 1.0;
  QPair q = QPair::create(Seq2SeqModel(check::tiny_config(), 13), cfg);
  const std::vector<TokenSeq> xs{{4, 5}, {5}};
  const std::vector<TokenSeq> gold{{5, 4}, {4}};
  std::mt19937_64 rng(1);
  const auto trajs = collect_trajectories(q, t.p_f, t.p_r, xs, rng, cfg, gold);
  EXPECT_EQ(trajs[0].origin, Origin::kGold);
  EXPECT_EQ(trajs[0].target, (TokenSeq{5, 4, kEos}));
  EXPECT_EQ(trajs[1].target, (TokenSeq{4, kEos}));
}

TEST(Targets, TerminalIsReward) {
  const auto t = tiny_teachers();
  std::mt19937_64 rng(7);
  Seq2SeqModel q(check::tiny_config(), 20);
  for (int i = 0; i < 20; ++i) {
    const auto tr = random_trajectory(t, rng, 0.5);
    const auto R = compute_targets(q, tr);
    ASSERT_EQ(R.size(), tr.target.size());
    EXPECT_EQ(R.back(), tr.rewards.values.back());
  }
}

TEST(Targets, ConstantOutputAddsConstant) {
  const auto t = tiny_teachers();
  Seq2SeqModel q(check::tiny_config(), 20);
  for (auto& p : q.parameters()) p.setZero();
  std::mt19937_64 rng(8);
  auto tr = random_trajectory(t, rng, 0.9);
  tr.target = {4, 5, 4, kEos};
  tr.set_gamma(0.9);
  tr.forward_steps = token_log_probs(t.p_f, tr.source, tr.target);
  tr.set_gamma(0.9);
  auto R = compute_targets(q, tr);
  for (std::size_t s = 0; s + 1 < R.size(); ++s) EXPECT_EQ(R[s], tr.rewards.values[s]);

  const double c = 2.5;
  q.parameters()[static_cast<std::size_t>(q.layout().out_b)].setConstant(c);
  R = compute_targets(q, tr);
  for (std::size_t s = 0; s + 1 < R.size(); ++s) EXPECT_EQ(R[s], tr.rewards.values[s] + c);
  EXPECT_EQ(R.back(), tr.rewards.values.back());
}

TEST(Targets, MatchHandUnrolledRecomputation) {
  const auto t = tiny_teachers(8);
  Seq2SeqModel q(check::tiny_config(8), 31);
  const TokenSeq x{5, 7, 4};
  const TokenSeq y{6, 4, kEos};
  const auto tr = make_trajectory(t.p_f, t.p_r, x, y, Origin::kQGreedy, 0.9);
  const auto R = compute_targets(q, tr);

  const auto next_max = [&](const TokenSeq& prefix) {
    ad::Tape tape;
    const auto m = bind_model(tape, q, nullptr);
    TokenSeq ext = prefix;
    ext.push_back(kPad);
    const auto scores = teacher_forced_scores(m, x, ext).value();
    return scores.row(scores.rows() - 1).maxCoeff();
  };
  const auto f = token_log_probs(t.p_f, x, y);
  const double rev = sequence_log_prob(t.p_r, y, TokenSeq{5, 7, 4, kEos});
  ASSERT_EQ(R.size(), 3u);
  EXPECT_NEAR(R[0], f[0] + next_max({6}), 1e-12);
  EXPECT_NEAR(R[1], f[1] + next_max({6, 4}), 1e-12);
  EXPECT_EQ(R[2], f[2] + 0.9 * rev);
}

TEST(QUpdate, SingleTransitionLossIsSquaredError) {
  const auto t = tiny_teachers();
  std::mt19937_64 rng(4);
  ReplayBuffer buffer(10);
  buffer.add(random_trajectory(t, rng, 0.5));
  buffer.add(random_trajectory(t, rng, 0.5));
  Seq2SeqModel online(check::tiny_config(), 40);
  Seq2SeqModel target(check::tiny_config(), 41);
  const auto& tr = buffer.at(1);
  const std::size_t step = tr.target.size() - 1;
  const std::vector<Transition> batch{{1, step}};
  const double loss = q_loss(online, target, buffer, batch, nullptr);

  ad::Tape tape;
  const auto m = bind_model(tape, online, nullptr);
  const double qsa = teacher_forced_scores(m, tr.source, tr.target).value()(static_cast<ad::Index>(step),
                                                                              tr.target[step]);
  const double R = compute_targets(target, tr)[step];
  EXPECT_DOUBLE_EQ(loss, (qsa - R) * (qsa - R));
}

TEST(QUpdate, FixedPointHasZeroLossAndGradient) {
  const auto t = tiny_teachers();
  Seq2SeqModel q(check::tiny_config(), 50);
  std::mt19937_64 rng(6);
  ReplayBuffer buffer(10);
  for (int i = 0; i < 3; ++i) {
    auto tr = random_trajectory(t, rng, 0.0);
    ad::Tape tape;
    const auto m = bind_model(tape, q, nullptr);
    const auto scores = teacher_forced_scores(m, tr.source, tr.target).value();
    const std::size_t T = tr.target.size();
    std::vector<double> r(T);
    for (std::size_t s = 0; s < T; ++s) {
      const double qsa = scores(static_cast<ad::Index>(s), tr.target[s]);
      r[s] = s + 1 < T ? qsa - scores.row(static_cast<ad::Index>(s + 1)).maxCoeff() : qsa;
    }
    tr.rewards.values = r;
    buffer.add(tr);
  }
  std::vector<Transition> batch;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    for (std::size_t s = 0; s < buffer.at(i).target.size(); ++s) batch.push_back({i, s});
  }
  auto grads = ad::zeros_like(q.parameters());
  const double loss = q_loss(q, q, buffer, batch, &grads);
  EXPECT_LT(loss, 1e-20);
  double norm = 0.0;
  for (const auto& g : grads) norm += g.squaredNorm();
  EXPECT_LT(std::sqrt(norm), 1e-9);
}

TEST(QUpdate, GradientMatchesFiniteDifferences) {
  const auto t = tiny_teachers();
  std::mt19937_64 rng(10);
  ReplayBuffer buffer(10);
  for (int i = 0; i < 4; ++i) buffer.add(random_trajectory(t, rng, 0.9));
  Seq2SeqModel online(check::tiny_config(), 60);
  const Seq2SeqModel target(check::tiny_config(), 61);
  ASSERT_LE(online.parameter_count(), 500u);
  const auto batch = buffer.sample(12, rng);
  const auto r = check::check_gradients(online.parameters(), check::LossFunction([&](std::vector<ad::Matrix>* g) {
                                          return q_loss(online, target, buffer, batch, g);
                                        }));
  EXPECT_GT(r.analytic_norm, 0.0);
  EXPECT_LT(r.relative_error, 1e-4);
}

TEST(QUpdate, TargetNetworkUntouchedBetweenSyncs) {
  const auto t = tiny_teachers();
  QConfig cfg = tiny_q_config();
  cfg.accumulate = 2;
  QPair q = QPair::create(Seq2SeqModel(check::tiny_config(), 70), cfg);
  std::mt19937_64 rng(12);
  ReplayBuffer buffer(20);
  for (int i = 0; i < 8; ++i) buffer.add(random_trajectory(t, rng, 0.5));
  const Seq2SeqModel frozen = q.target;
  for (int i = 0; i < 6; ++i) {
    const auto step = q_update(q, buffer, buffer.sample(8, rng));
    EXPECT_EQ(step.stepped, i % 2 == 1);
    EXPECT_TRUE(same_parameters(q.target, frozen));
  }
  EXPECT_EQ(q.updates, 3);
  EXPECT_FALSE(same_parameters(q.online, frozen));
  const Seq2SeqModel snapshot = q.online;
  q.sync();
  EXPECT_TRUE(same_parameters(q.target, snapshot));
  EXPECT_EQ(q.target.checksum(), snapshot.checksum());
}

TEST(QUpdate, NonFiniteLossIsTrainingError) {
  const auto t = tiny_teachers();
  QPair q = QPair::create(Seq2SeqModel(check::tiny_config(), 70), tiny_q_config());
  std::mt19937_64 rng(13);
  ReplayBuffer buffer(5);
  auto tr = random_trajectory(t, rng, 0.5);
  tr.rewards.values.back() = std::nan("");
  buffer.add(tr);
  const std::vector<Transition> batch{{0, tr.target.size() - 1}};
  EXPECT_THROW(q_update(q, buffer, batch), TrainingError);
}

TEST(ReplayBuffer, FifoEviction) {
  const auto t = tiny_teachers();
  std::mt19937_64 rng(14);
  ReplayBuffer buffer(3);
  std::vector<Trajectory> all;
  for (int i = 0; i < 5; ++i) {
    all.push_back(random_trajectory(t, rng, 0.1));
    buffer.add(all.back());
    EXPECT_LE(buffer.size(), 3u);
  }
  ASSERT_EQ(buffer.size(), 3u);
  std::size_t transitions = 0;
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(buffer.at(static_cast<std::size_t>(i)).target, all[static_cast<std::size_t>(i + 2)].target);
    transitions += all[static_cast<std::size_t>(i + 2)].target.size();
  }
  EXPECT_EQ(buffer.transitions(), transitions);
  EXPECT_THROW(ReplayBuffer(0), ConfigError);
}

TEST(ReplayBuffer, UniformOverTransitions) {
  const auto t = tiny_teachers();
  ReplayBuffer buffer(100);
  const std::vector<int> lengths{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 9};
  std::size_t offset = 0;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> flat;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    Trajectory tr;
    tr.source = {4};
    tr.target.assign(static_cast<std::size_t>(lengths[i]) - 1, 5);
    tr.target.push_back(kEos);
    tr.forward_steps.assign(tr.target.size(), -1.0);
    tr.set_gamma(0.0);
    buffer.add(tr);
    for (std::size_t s = 0; s < tr.target.size(); ++s) flat[{i, s}] = offset++;
  }
  ASSERT_EQ(buffer.transitions(), 100u);
  std::mt19937_64 rng(15);
  std::vector<double> counts(100, 0.0);
  for (const auto& tr : buffer.sample(10000, rng)) counts[flat.at({tr.trajectory, tr.step})] += 1.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - 100.0) * (c - 100.0) / 100.0;
  EXPECT_LT(chi2, 148.23);
}

TEST(ReplayBuffer, GammaChangeRecomputesRewards) {
  const auto t = tiny_teachers();
  std::mt19937_64 rng(16);
  ReplayBuffer buffer(10);
  for (int i = 0; i < 4; ++i) buffer.add(random_trajectory(t, rng, 0.1));
  buffer.set_gamma(0.3);
  for (const auto& tr : buffer.trajectories()) {
    EXPECT_EQ(tr.gamma, 0.3);
    EXPECT_NEAR(tr.rewards.sum(), total_reward(t.p_f, t.p_r, tr.source, tr.target, 0.3).total, 1e-9);
  }
}

TEST(ReplayBuffer, SnapshotRoundTrip) {
  const auto t = tiny_teachers();
  std::mt19937_64 rng(17);
  ReplayBuffer buffer(10);
  for (int i = 0; i < 4; ++i) {
    auto tr = random_trajectory(t, rng, 0.7);
    tr.origin = kMixedOrigins[static_cast<std::size_t>(i)];
    tr.temperature = 0.25 * i;
    buffer.add(tr);
  }
  const auto path = std::filesystem::temp_directory_path() / "chanmt_replay_test.json";
  buffer.save(path);
  const auto loaded = ReplayBuffer::load(path);
  ASSERT_EQ(loaded.size(), buffer.size());
  EXPECT_EQ(loaded.capacity(), buffer.capacity());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    EXPECT_EQ(loaded.at(i).target, buffer.at(i).target);
    EXPECT_EQ(loaded.at(i).rewards.values, buffer.at(i).rewards.values);
    EXPECT_EQ(loaded.at(i).origin, buffer.at(i).origin);
    EXPECT_EQ(loaded.at(i).gamma, 0.7);
    EXPECT_EQ(loaded.at(i).temperature, buffer.at(i).temperature);
  }
  {
    std::ofstream out(path, std::ios::trunc);
    out << "{\"version\": 1, \"capacity\": 10, \"trajectories\": [";
  }
  EXPECT_THROW(ReplayBuffer::load(path), IntegrityError);
  std::filesystem::remove(path);
}

TEST(Curriculum, ScheduleVisitsIncrements) {
  QConfig c;
  const auto s = gamma_schedule(c);
  ASSERT_EQ(s.size(), 5u);
  const std::vector<double> expected{0.1, 0.3, 0.5, 0.7, 0.9};
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s[i], expected[i], 1e-12);
  EXPECT_EQ(s.back(), 0.9);
  c.target_gamma = 0.1;
  EXPECT_EQ(gamma_schedule(c), std::vector<double>{0.1});
  c.gamma_step = 0.0;
  EXPECT_THROW(gamma_schedule(c), ConfigError);
}

TEST(Curriculum, SyncEveryKSteps) {
  const auto t = tiny_teachers();
  QConfig cfg = tiny_q_config();
  cfg.max_updates = 12;
  cfg.eval_interval = 4;
  cfg.collect_per_round = 4;
  const std::vector<TokenSeq> xs{{4}, {5}, {4, 5}, {5, 5}};
  const auto r = train_q(Seq2SeqModel(check::tiny_config(), 80), t.p_f, t.p_r, xs, xs, cfg);
  EXPECT_EQ(r.syncs, 4);
  EXPECT_EQ(r.history.size(), 3u);
  EXPECT_EQ(r.history.back().update, 12);
}

TEST(GreedyQ, DelegatesToValueScorer) {
  Seq2SeqModel q(check::tiny_config(), 90);
  std::mt19937_64 rng(18);
  for (int i = 0; i < 20; ++i) {
    const TokenSeq x = check::random_tokens(rng, 6, 1, 3);
    const auto a = greedy_decode_q(q, x, 5);
    const auto b = greedy_decode(ModelScorer(q, ScorerRole::kValue), x, 5);
    EXPECT_EQ(a.tokens, b.tokens);
    EXPECT_EQ(a.score, b.score);
    Seq2SeqModel shifted = q;
    shifted.parameters()[static_cast<std::size_t>(q.layout().out_b)].array() += 3.0;
    EXPECT_EQ(greedy_decode_q(shifted, x, 5).tokens, a.tokens);
  }
}
