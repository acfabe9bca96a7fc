#include "chanmt/amortize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "chanmt/decode.hpp"
#include "chanmt/eval.hpp"
#include "chanmt/parallel.hpp"

namespace chanmt {

using ad::Matrix;
using ad::Var;

std::string to_string(PseudoMode mode) { return mode == PseudoMode::kBsr ? "bsr" : "beam"; }

PseudoMode parse_pseudo_mode(std::string_view name) {
  if (name == "bsr") return PseudoMode::kBsr;
  if (name == "beam") return PseudoMode::kBeam;
  throw ConfigError("pseudo mode: expected 'bsr' or 'beam', got '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Pseudo-corpus

PseudoCorpus generate_pseudo_corpus(const Seq2SeqModel& p_f, const Seq2SeqModel* p_r,
                                    std::span<const TokenSeq> sources, int b, double gamma, PseudoMode mode,
                                    int threads, int max_length) {
  if (mode == PseudoMode::kBsr && p_r == nullptr) {
    throw ContractError("pseudo corpus: BSR mode needs a reverse translator");
  }
  PseudoCorpus out;
  out.mode = mode;
  out.beam = b;
  out.gamma = mode == PseudoMode::kBsr ? gamma : 0.0;
  out.forward_checksum = p_f.checksum();
  out.reverse_checksum = (mode == PseudoMode::kBsr) ? p_r->checksum() : 0;
  out.pairs.resize(sources.size());
  parallel_for(sources.size(), threads, [&](std::size_t i) {
    Hypothesis h;
    if (mode == PseudoMode::kBsr) {
      h = bsr_decode(p_f, *p_r, sources[i], b, gamma, max_length).best;
    } else {
      h = beam_search(p_f, sources[i], b, max_length).front();
    }
    out.pairs[i] = ParallelPair{sources[i], complete_target(h)};
  });
  return out;
}

void save_pseudo_corpus(const std::filesystem::path& stem, const PseudoCorpus& corpus, const Vocab& src,
                        const Vocab& tgt) {
  std::vector<TextPair> text;
  text.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) text.push_back({src.decode(p.source), tgt.decode(p.target)});
  auto with_ext = [&](const char* ext) {
    auto p = stem;
    p += ext;
    return p;
  };
  // An EOS-only target would leave an empty line; it is written as the EOS token.
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i].target.empty()) text[i].target.push_back(tgt.token_of(kEos));
  }
  write_parallel_text(with_ext(".src"), with_ext(".tgt"), text);
  nlohmann::json j;
  j["generator"] = to_string(corpus.mode);
  j["beam"] = corpus.beam;
  j["gamma"] = corpus.gamma;
  j["forward_checksum"] = corpus.forward_checksum;
  j["reverse_checksum"] = corpus.reverse_checksum;
  j["pairs"] = corpus.pairs.size();
  std::ofstream(with_ext(".json")) << j.dump(2) << '\n';
}

PseudoCorpus load_pseudo_corpus(const std::filesystem::path& stem, const Vocab& src, const Vocab& tgt) {
  auto with_ext = [&](const char* ext) {
    auto p = stem;
    p += ext;
    return p;
  };
  std::ifstream meta(with_ext(".json"));
  if (!meta) throw IntegrityError("missing pseudo-corpus sidecar " + with_ext(".json").string());
  nlohmann::json j;
  try {
    meta >> j;
  } catch (const std::exception& e) {
    throw IntegrityError("unreadable pseudo-corpus sidecar: " + std::string(e.what()));
  }
  PseudoCorpus c;
  c.mode = parse_pseudo_mode(j.at("generator").get<std::string>());
  c.beam = j.at("beam").get<int>();
  c.gamma = j.at("gamma").get<double>();
  c.forward_checksum = j.at("forward_checksum").get<std::uint64_t>();
  c.reverse_checksum = j.at("reverse_checksum").get<std::uint64_t>();
  for (const auto& t : read_parallel_text(with_ext(".src"), with_ext(".tgt"))) {
    ParallelPair p{src.encode(t.source), tgt.encode(t.target)};
    if (p.target.empty() || p.target.back() != kEos) p.target.push_back(kEos);
    c.pairs.push_back(std::move(p));
  }
  if (c.pairs.size() != j.at("pairs").get<std::size_t>()) {
    throw IntegrityError("pseudo-corpus line count differs from its sidecar");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

using BatchLoss = std::function<double(const Seq2SeqModel& model, std::vector<Matrix>& grads,
                                       std::span<const std::size_t> batch, std::mt19937_64& rng)>;
using DevLoss = std::function<double(const Seq2SeqModel& model)>;

TrainResult run_training(const Seq2SeqModel& init, std::span<const ParallelPair> train,
                         std::span<const ParallelPair> dev, const TrainOptions& o, const BatchLoss& batch_loss,
                         const DevLoss& dev_loss, double initial_loss) {
  if (train.empty()) throw ContractError("training: empty corpus");
  if (o.epochs < 1 || o.accumulate < 1) throw ConfigError("training: epochs and accumulate must be positive");
  Seq2SeqModel model = init;
  auto batches = make_batches(train, o.max_tokens);
  ad::AdamOptions ao;
  ao.learning_rate = o.learning_rate;
  ao.weight_decay = o.weight_decay;
  ad::AdamState adam = ad::AdamState::create(model.parameters(), ao);
  std::vector<Matrix> grads = ad::zeros_like(model.parameters());
  std::mt19937_64 rng(o.seed);

  TrainResult result;
  result.initial_loss = initial_loss;
  result.model = init;
  bool have_best = false;
  double best_bleu = 0.0, best_loss = 0.0;
  int since_best = 0;
  for (int epoch = 1; epoch <= o.epochs; ++epoch) {
    std::shuffle(batches.begin(), batches.end(), rng);
    double loss_sum = 0.0;
    std::size_t pending = 0;
    for (const auto& batch : batches) {
      const double loss = batch_loss(model, grads, batch, rng);
      if (!std::isfinite(loss)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch), model);
      }
      loss_sum += loss;
      if (++pending == static_cast<std::size_t>(o.accumulate)) {
        ad::adam_step(model.parameters(), grads, adam);
        for (auto& g : grads) g.setZero();
        pending = 0;
      }
    }
    if (pending > 0) {
      ad::adam_step(model.parameters(), grads, adam);
      for (auto& g : grads) g.setZero();
    }
    for (const auto& p : model.parameters()) {
      if (!p.allFinite()) throw DivergenceError("parameters became non-finite at epoch " + std::to_string(epoch), result.model);
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(batches.size());
    log.dev_bleu = dev.empty() ? 0.0 : dev_bleu(model, dev, o.threads);
    log.dev_loss = dev_loss(model);
    result.history.push_back(log);
    const bool better = dev.empty() || !have_best || log.dev_bleu > best_bleu ||
                        (log.dev_bleu == best_bleu && log.dev_loss < best_loss);
    if (better) {
      have_best = true;
      best_bleu = log.dev_bleu;
      best_loss = log.dev_loss;
      result.model = model;
      result.best_epoch = epoch;
      result.best_dev_bleu = log.dev_bleu;
      since_best = 0;
    } else if (o.patience > 0 && ++since_best >= o.patience) {
      break;
    }
  }
  return result;
}

Var nll_on_tape(const BoundModel& b, const ParallelPair& p, const Dropout& dropout) {
  Var lp = ad::log_softmax_rows(teacher_forced_scores(b, p.source, p.target, dropout));
  const std::vector<int> ids(p.target.begin(), p.target.end());
  return ad::scale(ad::sum(ad::pick(lp, ids)), -1.0);
}

}  // namespace

double mean_nll(const Seq2SeqModel& model, std::span<const ParallelPair> pairs) {
  if (pairs.empty()) throw ContractError("mean_nll: empty corpus");
  double total = 0.0;
  for (const auto& p : pairs) {
    ad::Tape t;
    BoundModel b = bind_model(t, model, nullptr);
    total += nll_on_tape(b, p, {}).item();
  }
  return total / static_cast<double>(pairs.size());
}

double dev_bleu(const Seq2SeqModel& model, std::span<const ParallelPair> dev, int threads) {
  std::vector<TokenSeq> hyps(dev.size()), refs(dev.size());
  ModelScorer scorer(model, ScorerRole::kProbability);
  parallel_for(dev.size(), threads, [&](std::size_t i) {
    hyps[i] = greedy_decode(scorer, dev[i].source).tokens;
    refs[i] = dev[i].target;
  });
  return corpus_bleu(std::span<const TokenSeq>(hyps), std::span<const TokenSeq>(refs));
}

TrainResult train_mle(const Seq2SeqModel& init, std::span<const ParallelPair> train, std::span<const ParallelPair> dev,
                      const TrainOptions& options) {
  auto batch_loss = [&](const Seq2SeqModel& model, std::vector<Matrix>& grads, std::span<const std::size_t> batch,
                        std::mt19937_64& rng) {
    const Dropout dropout{options.dropout, &rng};
    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (std::size_t idx : batch) {
      ad::Tape t;
      BoundModel b = bind_model(t, model, &grads);
      Var loss = ad::scale(nll_on_tape(b, train[idx], dropout), scale);
      total += loss.item();
      t.backward(loss);
    }
    return total;
  };
  auto dev_loss = [&](const Seq2SeqModel& model) { return dev.empty() ? 0.0 : mean_nll(model, dev); };
  return run_training(init, train, dev, options, batch_loss, dev_loss, mean_nll(init, train));
}

// ---------------------------------------------------------------------------
// Imitation learning

bool il_draw_rollout(double p, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("il: mix probability must lie in [0, 1]");
  return std::bernoulli_distribution(p)(rng);
}

namespace {

TokenSeq il_prefix(const Seq2SeqModel& A, std::span<const TokenId> source, std::span<const TokenId> bsr_target,
                   bool use_policy, int max_length) {
  if (!use_policy) return TokenSeq(bsr_target.begin(), bsr_target.end());
  ModelScorer scorer(A, ScorerRole::kProbability);
  return greedy_decode(scorer, source, max_length).tokens;
}

}  // namespace

Var il_soft_rows(const BoundModel& A, std::span<const TokenId> source, std::span<const TokenId> prefix,
                 const Dropout& dropout) {
  return ad::softmax_rows(teacher_forced_scores(A, source, prefix, dropout));
}

SoftRollout il_build_soft_rollout(const Seq2SeqModel& A, std::span<const TokenId> source,
                                  std::span<const TokenId> bsr_target, bool use_policy, int max_length) {
  SoftRollout r;
  r.from_policy = use_policy;
  r.prefix = il_prefix(A, source, bsr_target, use_policy, max_length);
  ad::Tape t;
  BoundModel b = bind_model(t, A, nullptr);
  r.soft.rows = il_soft_rows(b, source, r.prefix).value();
  return r;
}

SoftRollout il_build_soft_rollout(const Seq2SeqModel& A, std::span<const TokenId> source,
                                  std::span<const TokenId> bsr_target, double p, std::mt19937_64& rng,
                                  int max_length) {
  return il_build_soft_rollout(A, source, bsr_target, il_draw_rollout(p, rng), max_length);
}

EnergyTerms il_energy(const BoundModel& p_f, const BoundModel& p_r, std::span<const TokenId> source, Var rows,
                      double gamma) {
  if (!(gamma >= 0.0)) throw ContractError("il_energy: gamma must be non-negative");
  EnergyTerms e;
  Var lpf = soft_forward(p_f, source, rows);
  e.forward = ad::scale(ad::sum(ad::mul(rows, lpf)), -1.0);
  e.total = e.forward;
  if (gamma > 0.0) {
    const TokenSeq x = eos_terminated(source);
    Var lpr = soft_source_forward(p_r, rows, x);
    const std::vector<int> ids(x.begin(), x.end());
    e.reverse = ad::scale(ad::sum(ad::pick(lpr, ids)), -1.0);
    e.total = ad::add(e.forward, ad::scale(*e.reverse, gamma));
  }
  return e;
}

EnergyValue il_energy(const Seq2SeqModel& p_f, const Seq2SeqModel& p_r, std::span<const TokenId> source,
                      const SoftSeq& rows, double gamma) {
  ad::Tape t;
  BoundModel f = bind_model(t, p_f, nullptr);
  BoundModel r = bind_model(t, p_r, nullptr);
  EnergyTerms e = il_energy(f, r, source, t.constant(rows.rows), gamma);
  EnergyValue v;
  v.total = e.total.item();
  v.forward = e.forward.item();
  if (e.reverse) v.reverse = e.reverse->item();
  return v;
}

double mean_il_energy(const Seq2SeqModel& A, const Seq2SeqModel& p_f, const Seq2SeqModel& p_r,
                      std::span<const ParallelPair> pairs, double gamma, int max_length) {
  if (pairs.empty()) throw ContractError("mean_il_energy: empty corpus");
  double total = 0.0;
  for (const auto& p : pairs) {
    SoftRollout r = il_build_soft_rollout(A, p.source, p.target, true, max_length);
    total += il_energy(p_f, p_r, p.source, r.soft, gamma).total;
  }
  return total / static_cast<double>(pairs.size());
}

TrainResult train_il(const Seq2SeqModel& init, const Seq2SeqModel& p_f, const Seq2SeqModel& p_r,
                     std::span<const ParallelPair> bsr_pairs, std::span<const ParallelPair> dev,
                     const ILConfig& config) {
  if (!(config.mix_p >= 0.0 && config.mix_p <= 1.0)) throw ConfigError("il.mix_p: must lie in [0, 1]");
  if (!(config.gamma >= 0.0)) throw ConfigError("il.gamma: must be non-negative");
  const TrainOptions& o = config.train;
  auto batch_loss = [&](const Seq2SeqModel& model, std::vector<Matrix>& grads, std::span<const std::size_t> batch,
                        std::mt19937_64& rng) {
    const bool use_policy = il_draw_rollout(config.mix_p, rng);
    const Dropout dropout{o.dropout, &rng};
    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (std::size_t idx : batch) {
      const ParallelPair& pair = bsr_pairs[idx];
      const TokenSeq prefix = il_prefix(model, pair.source, pair.target, use_policy, config.max_length);
      ad::Tape t;
      BoundModel a = bind_model(t, model, &grads);
      BoundModel f = bind_model(t, p_f, nullptr);
      BoundModel r = bind_model(t, p_r, nullptr);
      Var rows = il_soft_rows(a, pair.source, prefix, dropout);
      Var loss = ad::scale(il_energy(f, r, pair.source, rows, config.gamma).total, scale);
      total += loss.item();
      t.backward(loss);
    }
    return total;
  };
  auto dev_loss = [&](const Seq2SeqModel& model) {
    return dev.empty() ? 0.0 : mean_il_energy(model, p_f, p_r, dev, config.gamma, config.max_length);
  };
  const double initial = mean_il_energy(init, p_f, p_r, bsr_pairs.first(std::min<std::size_t>(bsr_pairs.size(), 200)),
                                        config.gamma, config.max_length);
  return run_training(init, bsr_pairs, dev, o, batch_loss, dev_loss, initial);
}

}  // namespace chanmt
