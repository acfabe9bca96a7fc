#include "chanmt/decode.hpp"

#include <algorithm>
#include <cmath>

#include "chanmt/error.hpp"

namespace chanmt {

int length_cap(std::size_t source_length) {
  // integer form of floor(1.2 * n + 20)
  return static_cast<int>((12 * source_length + 200) / 10);
}

int resolve_cap(std::size_t source_length, int max_length) {
  return max_length > 0 ? max_length : length_cap(source_length);
}

TokenSeq complete_target(const Hypothesis& h) {
  TokenSeq t = h.tokens;
  if (t.empty()) {
    t.push_back(kEos);
  } else if (t.back() != kEos) {
    t.back() = kEos;
  }
  return t;
}

namespace {

class ModelSession final : public ScoringSession {
 public:
  ModelSession(const Seq2SeqModel& model, std::span<const TokenId> source, ScorerRole role)
      : state_(model, encode_source(model, source)), role_(role) {}

  std::vector<double> scores() const override {
    if (role_ == ScorerRole::kProbability) return state_.log_probs(0);
    const auto& s = state_.scores();
    return {s.data(), s.data() + s.cols()};
  }

  void advance(TokenId token) override { state_.advance(token); }

 private:
  DecoderState state_;
  ScorerRole role_;
};

void check_source(std::span<const TokenId> source) {
  if (source.empty()) {
    throw ContractError("decode: empty source");
  }
}

}  // namespace

std::unique_ptr<ScoringSession> ModelScorer::start(std::span<const TokenId> source) const {
  return std::make_unique<ModelSession>(*model_, source, role_);
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t sample_index(std::span<const double> values, double temperature, std::mt19937_64& rng) {
  if (temperature < kArgmaxTemperature) return argmax(values);
  const double m = *std::max_element(values.begin(), values.end());
  std::vector<double> w(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    w[i] = std::exp((values[i] - m) / temperature);
    total += w[i];
  }
  std::uniform_real_distribution<double> u(0.0, total);
  double r = u(rng);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (r < w[i]) return i;
    r -= w[i];
  }
  return argmax(values);
}

Hypothesis greedy_decode(const StepScorer& scorer, std::span<const TokenId> source, int max_length) {
  check_source(source);
  const int cap = resolve_cap(source.size(), max_length);
  auto session = scorer.start(source);
  Hypothesis h;
  for (int step = 0; step < cap; ++step) {
    const auto s = session->scores();
    const auto tok = static_cast<TokenId>(argmax(s));
    h.tokens.push_back(tok);
    h.score += s[static_cast<std::size_t>(tok)];
    if (tok == kEos) {
      h.complete = true;
      break;
    }
    if (step + 1 < cap) session->advance(tok);
  }
  return h;
}

Hypothesis sample_decode(const StepScorer& scorer, std::span<const TokenId> source, double temperature,
                         std::mt19937_64& rng, int max_length) {
  if (!(temperature > 0.0)) {
    throw ConfigError("sample_decode: temperature must be positive");
  }
  check_source(source);
  const int cap = resolve_cap(source.size(), max_length);
  auto session = scorer.start(source);
  Hypothesis h;
  for (int step = 0; step < cap; ++step) {
    const auto s = session->scores();
    const auto tok = static_cast<TokenId>(sample_index(s, temperature, rng));
    h.tokens.push_back(tok);
    h.score += s[static_cast<std::size_t>(tok)];
    if (tok == kEos) {
      h.complete = true;
      break;
    }
    if (step + 1 < cap) session->advance(tok);
  }
  return h;
}

std::vector<Hypothesis> beam_search(const Seq2SeqModel& model, std::span<const TokenId> source, int b,
                                    int max_length) {
  if (b < 1) {
    throw ConfigError("beam_search: beam size must be at least 1");
  }
  check_source(source);
  const int cap = resolve_cap(source.size(), max_length);
  const auto beam = static_cast<std::size_t>(b);
  DecoderState state(model, encode_source(model, source), 1);
  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> finished;

  struct Candidate {
    double score;
    std::size_t parent;
    TokenId token;
  };
  std::vector<Candidate> cands;
  for (int step = 0; step < cap && !live.empty(); ++step) {
    const std::size_t k = beam - finished.size();
    cands.clear();
    for (std::size_t i = 0; i < live.size(); ++i) {
      const auto lp = state.log_probs(i);
      for (std::size_t v = 0; v < lp.size(); ++v) {
        cands.push_back({live[i].score + lp[v], i, static_cast<TokenId>(v)});
      }
    }
    const std::size_t take = std::min(k, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(take), cands.end(),
                      [](const Candidate& a, const Candidate& c) {
                        if (a.score != c.score) return a.score > c.score;
                        if (a.parent != c.parent) return a.parent < c.parent;
                        return a.token < c.token;
                      });
    std::vector<Hypothesis> next;
    std::vector<std::size_t> parents;
    TokenSeq tokens;
    for (std::size_t j = 0; j < take; ++j) {
      const Candidate& c = cands[j];
      Hypothesis h;
      h.tokens = live[c.parent].tokens;
      h.tokens.push_back(c.token);
      h.score = c.score;
      if (c.token == kEos) {
        h.complete = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
        parents.push_back(c.parent);
        tokens.push_back(c.token);
      }
    }
    live = std::move(next);
    if (!live.empty() && step + 1 < cap) state.advance(parents, tokens);
  }
  std::vector<Hypothesis> out = std::move(finished);
  for (auto& h : live) out.push_back(std::move(h));
  std::stable_sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& c) { return a.score > c.score; });
  if (out.size() > beam) out.resize(beam);
  return out;
}

BsrResult bsr_decode(const Seq2SeqModel& p_f, const Seq2SeqModel& p_r, std::span<const TokenId> source, int b,
                     double gamma, int max_length) {
  if (!(gamma >= 0.0)) {
    throw ConfigError("bsr_decode: gamma must be non-negative");
  }
  auto beam = beam_search(p_f, source, b, max_length);
  BsrResult r;
  for (std::size_t rank = 0; rank < beam.size(); ++rank) {
    if (!beam[rank].complete) continue;
    BsrCandidate c;
    c.reward = combine_reward(beam[rank].score, reverse_log_prob(p_r, source, beam[rank].tokens), gamma);
    c.hypothesis = std::move(beam[rank]);
    c.beam_rank = rank;
    r.candidates.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    if (r.chosen == BsrResult::npos) {
      r.chosen = i;
      continue;
    }
    const auto& a = r.candidates[i].reward;
    const auto& best = r.candidates[r.chosen].reward;
    if (a.total > best.total || (a.total == best.total && a.forward > best.forward)) r.chosen = i;
  }
  if (r.chosen != BsrResult::npos) {
    r.best = r.candidates[r.chosen].hypothesis;
  } else if (!beam.empty()) {
    r.best = beam.front();
  }
  return r;
}

}  // namespace chanmt
