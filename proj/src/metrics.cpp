#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <unordered_map>

#include "chanmt/error.hpp"
#include "chanmt/eval.hpp"

namespace chanmt {

namespace {

using Ids = std::vector<int>;

std::map<Ids, int> ngram_counts(const Ids& s, std::size_t n) {
  std::map<Ids, int> out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[Ids(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(i + n))];
  return out;
}

double bleu_ids(const std::vector<Ids>& hyps, const std::vector<Ids>& refs) {
  if (hyps.size() != refs.size()) {
    throw ContractError("corpus_bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                        std::to_string(refs.size()) + " references");
  }
  std::array<double, 4> matches{}, totals{};
  double hyp_len = 0.0, ref_len = 0.0;
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    hyp_len += static_cast<double>(hyps[k].size());
    ref_len += static_cast<double>(refs[k].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngram_counts(hyps[k], n);
      const auto r = ngram_counts(refs[k], n);
      for (const auto& [gram, c] : h) {
        totals[n - 1] += c;
        auto it = r.find(gram);
        if (it != r.end()) matches[n - 1] += std::min(c, it->second);
      }
    }
  }
  if (hyp_len == 0.0) return 0.0;
  double log_sum = 0.0;
  double smooth = 1.0;
  std::size_t order = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (totals[n] == 0.0) break;
    ++order;
    double p;
    if (matches[n] == 0.0) {
      smooth *= 2.0;
      p = 1.0 / (smooth * totals[n]);
    } else {
      p = matches[n] / totals[n];
    }
    log_sum += std::log(p);
  }
  const double bp = std::exp(std::min(0.0, 1.0 - ref_len / hyp_len));
  return std::min(100.0, 100.0 * bp * std::exp(log_sum / static_cast<double>(order)));
}

Ids strip(const TokenSeq& s) {
  Ids out(s.begin(), s.end());
  if (!out.empty() && out.back() == kEos) out.pop_back();
  return out;
}

}  // namespace

double corpus_bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references) {
  std::unordered_map<std::string, int> intern;
  auto conv = [&](std::span<const Sentence> corpus) {
    std::vector<Ids> out;
    out.reserve(corpus.size());
    for (const auto& s : corpus) {
      Ids ids;
      for (const auto& w : s) ids.push_back(intern.emplace(w, static_cast<int>(intern.size())).first->second);
      out.push_back(std::move(ids));
    }
    return out;
  };
  auto h = conv(hypotheses);
  auto r = conv(references);
  return bleu_ids(h, r);
}

double corpus_bleu(std::span<const TokenSeq> hypotheses, std::span<const TokenSeq> references) {
  std::vector<Ids> h, r;
  for (const auto& s : hypotheses) h.push_back(strip(s));
  for (const auto& s : references) r.push_back(strip(s));
  return bleu_ids(h, r);
}

RepCounts token_rep_counts(std::span<const TokenSeq> hypotheses) {
  RepCounts c;
  for (const auto& raw : hypotheses) {
    const Ids s = strip(raw);
    for (std::size_t t = 5; t < s.size(); ++t) {
      ++c.positions;
      if (std::find(s.begin() + static_cast<long>(t - 5), s.begin() + static_cast<long>(t), s[t]) !=
          s.begin() + static_cast<long>(t)) {
        ++c.repeated;
      }
    }
  }
  return c;
}

double token_rep(std::span<const TokenSeq> hypotheses) { return token_rep_counts(hypotheses).rate(); }

std::vector<Bucket> default_buckets() {
  return {{0, 4}, {4, 8}, {8, 12}, {12, std::numeric_limits<double>::infinity()}};
}

std::vector<BucketStat> bucket_stats(std::span<const TokenSeq> hypotheses, std::span<const std::size_t> source_lengths,
                                     std::span<const Bucket> buckets) {
  if (hypotheses.size() != source_lengths.size()) {
    throw ContractError("bucket_stats: hypotheses and source lengths differ in size");
  }
  std::vector<std::vector<TokenSeq>> members(buckets.size());
  std::vector<double> lengths(buckets.size(), 0.0);
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const double len = static_cast<double>(source_lengths[i]);
    std::size_t found = buckets.size();
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      if (len > buckets[b].lo && len <= buckets[b].hi) {
        if (found != buckets.size()) throw ContractError("bucket_stats: overlapping buckets");
        found = b;
      }
    }
    if (found == buckets.size()) {
      throw ContractError("bucket_stats: source length " + std::to_string(source_lengths[i]) + " is not covered");
    }
    members[found].push_back(hypotheses[i]);
    lengths[found] += static_cast<double>(strip(hypotheses[i]).size());
  }
  std::vector<BucketStat> out;
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    BucketStat s;
    s.bucket = buckets[b];
    s.count = members[b].size();
    s.mean_length = s.count == 0 ? 0.0 : lengths[b] / static_cast<double>(s.count);
    s.token_rep = token_rep(members[b]);
    out.push_back(s);
  }
  return out;
}

PairwiseBleu pairwise_bleu(std::span<const SystemOutput> systems) {
  PairwiseBleu out;
  const std::size_t n = systems.size();
  for (const auto& s : systems) {
    if (s.sources != systems.front().sources || s.translations.size() != s.sources.size()) {
      throw ContractError("pairwise_bleu: system '" + s.name + "' decoded a different source list");
    }
    out.systems.push_back(s.name);
  }
  out.matrix.assign(n, std::vector<double>(n, 100.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (corpus_bleu(std::span<const TokenSeq>(systems[i].translations),
                                          std::span<const TokenSeq>(systems[j].translations)) +
                              corpus_bleu(std::span<const TokenSeq>(systems[j].translations),
                                          std::span<const TokenSeq>(systems[i].translations)));
      out.matrix[i][j] = out.matrix[j][i] = v;
    }
  }
  return out;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  r.n = values.size();
  if (values.empty()) return r;
  double s = 0.0;
  for (double v : values) s += v;
  r.mean = s / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace chanmt
