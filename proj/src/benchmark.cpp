#include <algorithm>
#include <chrono>

#include "chanmt/corpus.hpp"
#include "chanmt/error.hpp"
#include "chanmt/eval.hpp"
#include "chanmt/parallel.hpp"

namespace chanmt {

namespace {

using Clock = std::chrono::steady_clock;

double timed_pass(const DecoderUnderTest& d, std::span<const TokenSeq> sources,
                  const std::vector<std::vector<std::size_t>>& batches, int threads) {
  std::vector<TokenSeq> sink(sources.size());
  const auto start = Clock::now();
  for (const auto& batch : batches) {
    parallel_for(batch.size(), threads, [&](std::size_t k) { sink[batch[k]] = d.decode(sources[batch[k]]); });
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  return static_cast<double>(sources.size()) / std::max(secs, 1e-12);
}

std::vector<std::vector<std::size_t>> batches_for(std::span<const TokenSeq> sources, std::size_t budget) {
  std::vector<ParallelPair> pairs;
  pairs.reserve(sources.size());
  for (const auto& s : sources) pairs.push_back({s, TokenSeq{kEos}});
  return make_batches(pairs, budget);
}

}  // namespace

std::vector<SpeedResult> speed_benchmark(std::span<const DecoderUnderTest> decoders, std::span<const TokenSeq> sources,
                                         const SpeedOptions& options) {
  if (sources.empty()) throw ContractError("speed_benchmark: no sources");
  if (options.repetitions < 1) throw ConfigError("speed_benchmark: repetitions must be positive");
  std::size_t longest = 1;
  for (const auto& s : sources) longest = std::max(longest, s.size());
  std::vector<std::size_t> budgets;
  for (std::size_t b = 1; b <= options.max_budget; b *= 2) {
    if (b >= longest) budgets.push_back(b);
  }
  if (budgets.empty()) throw CapacityError("speed_benchmark: longest source exceeds max_budget");
  const auto probe = sources.first(std::min(options.probe_size, sources.size()));

  std::vector<SpeedResult> out;
  for (const auto& d : decoders) {
    SpeedResult r;
    r.name = d.name;
    r.threads = options.threads;
    r.budget = budgets.front();
    if (budgets.size() > 1 && options.threads > 1) {
      double best = -1.0;
      for (std::size_t b : budgets) {
        const double speed = timed_pass(d, probe, batches_for(probe, b), options.threads);
        if (speed > best) {
          best = speed;
          r.budget = b;
        }
      }
    } else {
      r.budget = budgets.back();
    }
    const auto batches = batches_for(sources, r.budget);
    timed_pass(d, sources, batches, options.threads);
    for (int k = 0; k < options.repetitions; ++k) r.runs.push_back(timed_pass(d, sources, batches, options.threads));
    r.sequences_per_second = median(r.runs);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace chanmt
