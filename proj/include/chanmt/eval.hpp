#pragma once

// Corpus metrics, reward statistics, throughput benchmarks and reports.

#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chanmt/corpus.hpp"
#include "chanmt/vocab.hpp"

namespace chanmt {

/// Corpus BLEU (n = 1..4) with brevity penalty exp(min(0, 1 - r/c)) and
/// exponential smoothing of zero-match orders. Orders from the first one with
/// no n-grams in the hypotheses onward are left out of the geometric mean.
/// Returns a value in [0, 100].
/// Throws ContractError when the corpora differ in size.
double corpus_bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references);
/// Token-id variant; a trailing EOS is ignored.
double corpus_bleu(std::span<const TokenSeq> hypotheses, std::span<const TokenSeq> references);

struct RepCounts {
  std::size_t repeated = 0;
  std::size_t positions = 0;
  double rate() const { return positions == 0 ? 0.0 : static_cast<double>(repeated) / static_cast<double>(positions); }
};

/// Positions t >= 6 (1-indexed) whose token appears among the five
/// preceding ones. A trailing EOS is ignored.
RepCounts token_rep_counts(std::span<const TokenSeq> hypotheses);
double token_rep(std::span<const TokenSeq> hypotheses);

/// Half-open source-length interval (lo, hi].
struct Bucket {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
};

std::vector<Bucket> default_buckets();

struct BucketStat {
  Bucket bucket;
  std::size_t count = 0;
  double mean_length = 0.0;
  double token_rep = 0.0;
};

/// Throws ContractError when a source length falls in no bucket or in more
/// than one, or when the inputs differ in size.
std::vector<BucketStat> bucket_stats(std::span<const TokenSeq> hypotheses, std::span<const std::size_t> source_lengths,
                                     std::span<const Bucket> buckets);

struct SystemOutput {
  std::string name;
  std::vector<TokenSeq> sources;
  std::vector<TokenSeq> translations;
};

struct PairwiseBleu {
  std::vector<std::string> systems;
  std::vector<std::vector<double>> matrix;
};

/// Entry (i, j) averages BLEU(i vs j) and BLEU(j vs i). Throws
/// ContractError when the systems decoded different sources.
PairwiseBleu pairwise_bleu(std::span<const SystemOutput> systems);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
  std::size_t n = 0;
};

MeanStd mean_std(std::span<const double> values);
double median(std::vector<double> values);

// ---------------------------------------------------------------------------
// Reports

struct SystemMetrics {
  std::string name;
  std::size_t sentences = 0;
  MeanStd forward;
  MeanStd reverse;
  MeanStd total;
  double bleu = 0.0;
  double token_rep = 0.0;
  double mean_length = 0.0;
  std::vector<BucketStat> buckets;
  std::optional<double> sequences_per_second;
};

/// Per-system statistics from translations, references and per-sentence
/// forward/reverse rewards. Throws ContractError on size mismatches.
SystemMetrics system_metrics(const SystemOutput& output, std::span<const TokenSeq> references,
                             std::span<const double> forward, std::span<const double> reverse, double gamma,
                             std::span<const Bucket> buckets);

struct MetricsReport {
  double gamma = 0.0;
  int threads = 1;
  std::vector<SystemMetrics> systems;
  PairwiseBleu pairwise;

  const SystemMetrics& system(std::string_view name) const;
};

/// Writes metrics.json, systems.csv, buckets.csv, pairwise.csv and the
/// bucket x system matrices bucket_length.csv and bucket_token_rep.csv.
void write_report(const std::filesystem::path& dir, const MetricsReport& report);
/// Reads metrics.json back (sequences_per_second included).
MetricsReport read_report(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Throughput

struct DecoderUnderTest {
  std::string name;
  std::function<TokenSeq(const TokenSeq& source)> decode;
};

struct SpeedOptions {
  int repetitions = 3;
  int threads = 1;
  /// Largest batch token budget tried (a power of two).
  std::size_t max_budget = 4096;
  /// Sources used when comparing budgets.
  std::size_t probe_size = 32;
};

struct SpeedResult {
  std::string name;
  std::size_t budget = 0;
  int threads = 1;
  std::vector<double> runs;
  double sequences_per_second = 0.0;
};

/// For each decoder: picks the fastest batch budget among powers of two
/// from the longest source up to max_budget on a probe subset, runs one
/// untimed warm-up pass, then reports the median over `repetitions` timed
/// passes. Batches are decoded with `threads` workers.
std::vector<SpeedResult> speed_benchmark(std::span<const DecoderUnderTest> decoders, std::span<const TokenSeq> sources,
                                         const SpeedOptions& options = {});

}  // namespace chanmt
