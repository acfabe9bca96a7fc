#include "chanmt/qlearn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "chanmt/error.hpp"
#include "chanmt/parallel.hpp"

namespace chanmt {

namespace {

constexpr int kBufferVersion = 1;

const std::map<Origin, std::string>& origin_names() {
  static const std::map<Origin, std::string> names = {
      {Origin::kQBoltzmann, "q_boltzmann"}, {Origin::kQGreedy, "q_greedy"},
      {Origin::kPfSample, "pf_sample"},     {Origin::kPfGreedy, "pf_greedy"},
      {Origin::kPfBeamSmall, "pf_beam_small"},    {Origin::kPfBeam50Random, "pf_beam50_random"},
      {Origin::kGold, "gold"}};
  return names;
}

double positive_uniform(double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, hi);
  double v = 0.0;
  while (v == 0.0) v = dist(rng);
  return v;
}

}  // namespace

std::string to_string(Origin origin) { return origin_names().at(origin); }

Origin parse_origin(std::string_view name) {
  for (const auto& [o, n] : origin_names()) {
    if (n == name) return o;
  }
  throw ConfigError("unknown trajectory origin '" + std::string(name) + "'");
}

Origin draw_origin(std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> dist(kOriginMix.begin(), kOriginMix.end());
  return kMixedOrigins[dist(rng)];
}

void Trajectory::set_gamma(double g) {
  gamma = g;
  rewards = step_rewards_from(forward_steps, reverse, g);
}

Trajectory make_trajectory(const Seq2SeqModel& p_f, const Seq2SeqModel& p_r, std::span<const TokenId> source,
                           std::span<const TokenId> target, Origin origin, double gamma) {
  if (target.empty() || target.back() != kEos) {
    throw ContractError("trajectory: target must end with EOS");
  }
  Trajectory t;
  t.source.assign(source.begin(), source.end());
  t.target.assign(target.begin(), target.end());
  t.forward_steps = token_log_probs(p_f, source, target);
  t.reverse = reverse_log_prob(p_r, source, target);
  t.origin = origin;
  t.set_gamma(gamma);
  return t;
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer: capacity must be positive");
}

void ReplayBuffer::add(Trajectory t) {
  if (t.target.empty() || t.rewards.values.size() != t.target.size()) {
    throw ContractError("replay buffer: trajectory rewards do not match its target");
  }
  if (store_.size() == capacity_) {
    transitions_ -= store_.front().target.size();
    store_.pop_front();
  }
  transitions_ += t.target.size();
  store_.push_back(std::move(t));
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (transitions_ == 0) throw ContractError("replay buffer: sampling from an empty buffer");
  std::uniform_int_distribution<std::size_t> dist(0, transitions_ - 1);
  std::vector<std::size_t> flat(n);
  for (auto& f : flat) f = dist(rng);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return flat[a] < flat[b]; });
  std::vector<Transition> out(n);
  std::size_t traj = 0;
  std::size_t base = 0;
  for (std::size_t i : order) {
    while (flat[i] >= base + store_[traj].target.size()) {
      base += store_[traj].target.size();
      ++traj;
    }
    out[i] = {traj, flat[i] - base};
  }
  return out;
}

void ReplayBuffer::set_gamma(double gamma) {
  for (auto& t : store_) t.set_gamma(gamma);
}

void ReplayBuffer::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["version"] = kBufferVersion;
  j["capacity"] = capacity_;
  auto& arr = j["trajectories"] = nlohmann::json::array();
  for (const auto& t : store_) {
    arr.push_back({{"source", t.source},
                   {"target", t.target},
                   {"forward_steps", t.forward_steps},
                   {"reverse", t.reverse},
                   {"gamma", t.gamma},
                   {"rewards", t.rewards.values},
                   {"origin", to_string(t.origin)},
                   {"temperature", t.temperature},
                   {"beam", t.beam}});
  }
  std::ofstream out(path);
  if (!out) throw IntegrityError("replay buffer: cannot write " + path.string());
  out << j.dump();
  if (!out) throw IntegrityError("replay buffer: write failed for " + path.string());
}

ReplayBuffer ReplayBuffer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IntegrityError("replay buffer: cannot read " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("version").get<int>() != kBufferVersion) {
      throw IntegrityError("replay buffer: unsupported version in " + path.string());
    }
    ReplayBuffer buffer(j.at("capacity").get<std::size_t>());
    for (const auto& e : j.at("trajectories")) {
      Trajectory t;
      t.source = e.at("source").get<TokenSeq>();
      t.target = e.at("target").get<TokenSeq>();
      t.forward_steps = e.at("forward_steps").get<std::vector<double>>();
      t.reverse = e.at("reverse").get<double>();
      t.gamma = e.at("gamma").get<double>();
      t.rewards.values = e.at("rewards").get<std::vector<double>>();
      t.origin = parse_origin(e.at("origin").get<std::string>());
      t.temperature = e.at("temperature").get<double>();
      t.beam = e.at("beam").get<int>();
      if (t.target.empty() || t.target.back() != kEos || t.forward_steps.size() != t.target.size() ||
          t.rewards.values.size() != t.target.size()) {
        throw IntegrityError("replay buffer: malformed trajectory in " + path.string());
      }
      buffer.add(std::move(t));
    }
    return buffer;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("replay buffer: corrupt snapshot " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("replay buffer: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

void QConfig::validate() const {
  auto fail = [](const std::string& field) { throw ConfigError("q-learning: invalid " + field); };
  if (!(start_gamma >= 0.0)) fail("start_gamma");
  if (!(gamma_step > 0.0)) fail("gamma_step");
  if (!(target_gamma >= start_gamma)) fail("target_gamma");
  if (sync_period < 1) fail("sync_period");
  if (!(learning_rate > 0.0)) fail("learning_rate");
  if (weight_decay < 0.0) fail("weight_decay");
  if (accumulate < 1) fail("accumulate");
  if (buffer_capacity < 1) fail("buffer_capacity");
  if (batch_transitions < 1) fail("batch_transitions");
  if (collect_per_round < 1) fail("collect_per_round");
  if (updates_per_round < 1) fail("updates_per_round");
  if (eval_interval < 1) fail("eval_interval");
  if (patience < 1) fail("patience");
  if (max_updates < 1) fail("max_updates");
  if (beam50 < 1) fail("beam50");
  if (gold_rate < 0.0 || gold_rate > 1.0) fail("gold_rate");
}

std::vector<double> gamma_schedule(const QConfig& config) {
  config.validate();
  std::vector<double> out;
  for (int k = 0;; ++k) {
    const double g = config.start_gamma + k * config.gamma_step;
    if (g >= config.target_gamma - 1e-9) {
      out.push_back(config.target_gamma);
      return out;
    }
    out.push_back(g);
  }
}

QPair QPair::create(const Seq2SeqModel& init, const QConfig& config) {
  config.validate();
  QPair q;
  q.online = init;
  q.target = init;
  q.sync_period = config.sync_period;
  q.gamma = config.start_gamma;
  q.target_gamma = config.target_gamma;
  q.accumulate = config.accumulate;
  ad::AdamOptions opts;
  opts.learning_rate = config.learning_rate;
  opts.weight_decay = config.weight_decay;
  q.adam = ad::AdamState::create(q.online.parameters(), opts);
  q.grads = ad::zeros_like(q.online.parameters());
  return q;
}

std::vector<Trajectory> collect_trajectories(const QPair& q, const Seq2SeqModel& p_f, const Seq2SeqModel& p_r,
                                             std::span<const TokenSeq> sources, std::mt19937_64& rng,
                                             const QConfig& config, std::span<const TokenSeq> gold) {
  if (config.include_gold && !gold.empty() && gold.size() != sources.size()) {
    throw ContractError("collect: gold targets must align with sources");
  }
  const bool use_gold = config.include_gold && !gold.empty();
  std::vector<std::uint64_t> seeds(sources.size());
  for (auto& s : seeds) s = rng();
  std::vector<Trajectory> out(sources.size());
  const ModelScorer q_values(q.online, ScorerRole::kValue);
  const ModelScorer forward(p_f, ScorerRole::kProbability);
  parallel_for(sources.size(), config.threads, [&](std::size_t i) {
    std::mt19937_64 local(seeds[i]);
    const auto& x = sources[i];
    Origin origin = draw_origin(local);
    if (use_gold && std::bernoulli_distribution(config.gold_rate)(local)) origin = Origin::kGold;
    double temperature = 0.0;
    int beam = 0;
    TokenSeq y;
    switch (origin) {
      case Origin::kQBoltzmann:
        temperature = positive_uniform(1.5, local);
        y = complete_target(sample_decode(q_values, x, temperature, local, config.max_length));
        break;
      case Origin::kQGreedy:
        y = complete_target(greedy_decode(q_values, x, config.max_length));
        break;
      case Origin::kPfSample:
        temperature = positive_uniform(1.0, local);
        y = complete_target(sample_decode(forward, x, temperature, local, config.max_length));
        break;
      case Origin::kPfGreedy:
        y = complete_target(greedy_decode(forward, x, config.max_length));
        break;
      case Origin::kPfBeamSmall: {
        beam = std::uniform_int_distribution<int>(2, 10)(local);
        y = complete_target(beam_search(p_f, x, beam, config.max_length).front());
        break;
      }
      case Origin::kPfBeam50Random: {
        beam = config.beam50;
        const auto hyps = beam_search(p_f, x, beam, config.max_length);
        y = complete_target(hyps[std::uniform_int_distribution<std::size_t>(0, hyps.size() - 1)(local)]);
        break;
      }
      case Origin::kGold:
        y = eos_terminated(gold[i]);
        break;
    }
    Trajectory t = make_trajectory(p_f, p_r, x, y, origin, q.gamma);
    t.temperature = temperature;
    t.beam = beam;
    out[i] = std::move(t);
  });
  return out;
}

std::vector<double> compute_targets(const Seq2SeqModel& q_target, const Trajectory& trajectory) {
  const auto& y = trajectory.target;
  const auto& r = trajectory.rewards.values;
  if (r.size() != y.size()) throw ContractError("targets: rewards do not match the trajectory");
  std::vector<double> out(y.size());
  DecoderState state(q_target, encode_source(q_target, trajectory.source));
  for (std::size_t t = 0; t + 1 < y.size(); ++t) {
    state.advance(y[t]);
    out[t] = r[t] + state.scores().row(0).maxCoeff();
  }
  out.back() = r.back();
  return out;
}

double q_loss(const Seq2SeqModel& online, const Seq2SeqModel& target, const ReplayBuffer& buffer,
              std::span<const Transition> batch, std::vector<ad::Matrix>* grads) {
  if (batch.empty()) throw ContractError("q-update: empty batch");
  std::map<std::size_t, std::vector<double>> weights;
  for (const auto& tr : batch) {
    const auto& traj = buffer.at(tr.trajectory);
    auto& w = weights[tr.trajectory];
    if (w.empty()) w.assign(traj.target.size(), 0.0);
    w.at(tr.step) += 1.0 / static_cast<double>(batch.size());
  }
  double loss = 0.0;
  for (const auto& [index, w] : weights) {
    const auto& traj = buffer.at(index);
    const auto targets = compute_targets(target, traj);
    const std::size_t T = traj.target.size();
    ad::Matrix r(T, 1);
    ad::Matrix wm(T, 1);
    for (std::size_t t = 0; t < T; ++t) {
      r(static_cast<ad::Index>(t), 0) = targets[t];
      wm(static_cast<ad::Index>(t), 0) = w[t];
    }
    ad::Tape tape;
    const auto m = bind_model(tape, online, grads);
    const auto scores = teacher_forced_scores(m, traj.source, traj.target);
    const std::vector<int> ids(traj.target.begin(), traj.target.end());
    const auto diff = ad::sub(ad::pick(scores, ids), tape.constant(r));
    const auto l = ad::sum(ad::mul(ad::mul(diff, diff), tape.constant(wm)));
    loss += l.item();
    if (grads != nullptr) tape.backward(l);
  }
  return loss;
}

QUpdate q_update(QPair& q, const ReplayBuffer& buffer, std::span<const Transition> batch) {
  QUpdate out;
  out.loss = q_loss(q.online, q.target, buffer, batch, &q.grads);
  if (!std::isfinite(out.loss)) throw TrainingError("q-update: non-finite loss");
  if (++q.pending >= q.accumulate) {
    ad::adam_step(q.online.parameters(), q.grads, q.adam);
    for (auto& g : q.grads) g.setZero();
    q.pending = 0;
    ++q.updates;
    out.stepped = true;
  }
  return out;
}

Hypothesis greedy_decode_q(const Seq2SeqModel& q, std::span<const TokenId> source, int max_length) {
  return greedy_decode(ModelScorer(q, ScorerRole::kValue), source, max_length);
}

double greedy_q_reward(const Seq2SeqModel& q, const Seq2SeqModel& p_f, const Seq2SeqModel& p_r,
                       std::span<const TokenSeq> sources, double gamma, int max_length, int threads) {
  if (sources.empty()) throw ContractError("q reward: no sources");
  std::vector<double> totals(sources.size());
  parallel_for(sources.size(), threads, [&](std::size_t i) {
    const auto y = complete_target(greedy_decode_q(q, sources[i], max_length));
    totals[i] = total_reward(p_f, p_r, sources[i], y, gamma).total;
  });
  double s = 0.0;
  for (double v : totals) s += v;
  return s / static_cast<double>(totals.size());
}

QResult train_q(const Seq2SeqModel& init, const Seq2SeqModel& p_f, const Seq2SeqModel& p_r,
                std::span<const TokenSeq> train_sources, std::span<const TokenSeq> dev_sources, const QConfig& config,
                std::span<const TokenSeq> gold_targets) {
  config.validate();
  if (train_sources.empty() || dev_sources.empty()) throw ContractError("q-learning: empty source set");
  if (!gold_targets.empty() && gold_targets.size() != train_sources.size()) {
    throw ContractError("q-learning: gold targets must align with training sources");
  }
  const auto schedule = gamma_schedule(config);
  std::mt19937_64 rng(config.seed);
  QPair q = QPair::create(init, config);
  ReplayBuffer buffer(config.buffer_capacity);

  QResult result;
  result.model = q.online;
  result.best_dev_reward = -std::numeric_limits<double>::infinity();
  result.gammas_visited.push_back(q.gamma);

  std::size_t stage = 0;
  double stage_best = -std::numeric_limits<double>::infinity();
  int stale = 0;
  double recent_loss = 0.0;
  bool done = false;
  std::uniform_int_distribution<std::size_t> pick_source(0, train_sources.size() - 1);

  while (!done && q.updates < config.max_updates) {
    std::vector<TokenSeq> xs;
    std::vector<TokenSeq> gs;
    for (int i = 0; i < config.collect_per_round; ++i) {
      const std::size_t k = pick_source(rng);
      xs.push_back(train_sources[k]);
      if (!gold_targets.empty()) gs.push_back(gold_targets[k]);
    }
    for (auto& t : collect_trajectories(q, p_f, p_r, xs, rng, config, gs)) buffer.add(std::move(t));

    for (int u = 0; u < config.updates_per_round && !done; ++u) {
      const auto batch = buffer.sample(config.batch_transitions, rng);
      const auto step = q_update(q, buffer, batch);
      recent_loss = step.loss;
      if (!step.stepped) continue;
      if (q.updates % q.sync_period == 0) {
        q.sync();
        ++result.syncs;
      }
      if (q.updates % config.eval_interval != 0 && q.updates < config.max_updates) continue;

      const double dev = greedy_q_reward(q.online, p_f, p_r, dev_sources, q.gamma, config.max_length, config.threads);
      result.history.push_back({q.updates, q.gamma, dev, recent_loss});
      const bool final_stage = stage + 1 == schedule.size();
      if (dev > stage_best) {
        stage_best = dev;
        stale = 0;
        if (final_stage) {
          result.model = q.online;
          result.best_dev_reward = dev;
          result.best_update = q.updates;
        }
      } else if (++stale >= config.patience) {
        if (final_stage) {
          done = true;
        } else {
          q.gamma = schedule[++stage];
          result.gammas_visited.push_back(q.gamma);
          buffer.set_gamma(q.gamma);
          stage_best = -std::numeric_limits<double>::infinity();
          stale = 0;
        }
      }
      if (q.updates >= config.max_updates) done = true;
    }
  }
  if (stage + 1 != schedule.size()) {
    result.model = q.online;
    result.best_update = q.updates;
    result.best_dev_reward =
        greedy_q_reward(q.online, p_f, p_r, dev_sources, config.target_gamma, config.max_length, config.threads);
  }
  return result;
}

}  // namespace chanmt
