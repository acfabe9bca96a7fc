#include "chanmt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>

#include "chanmt/error.hpp"

namespace chanmt {

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCopy: return "copy";
    case TaskKind::kReverse: return "reverse";
    case TaskKind::kCipher: return "cipher";
    case TaskKind::kCipherSwap: return "cipher+local-swap";
    case TaskKind::kHomophone: return "homophone";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
  for (auto k : {TaskKind::kCopy, TaskKind::kReverse, TaskKind::kCipher, TaskKind::kCipherSwap, TaskKind::kHomophone}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("task.kind: unknown task '" + std::string(name) + "'");
}

void TaskSpec::validate() const {
  if (vocab_size <= kReservedTokens) {
    throw ConfigError("task.vocab_size: must exceed the " + std::to_string(kReservedTokens) + " reserved tokens");
  }
  if (min_length < 1 || max_length < min_length) throw ConfigError("task.min_length/max_length: invalid range");
  if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("task.noise: must lie in [0, 1]");
  if (!(homophone_rate >= 0.0 && homophone_rate <= 1.0)) throw ConfigError("task.homophone_rate: must lie in [0, 1]");
  if (!(homophone_fraction >= 0.0 && homophone_fraction <= 0.5)) {
    throw ConfigError("task.homophone_fraction: must lie in [0, 0.5]");
  }
}

namespace {

std::string word_name(int i, bool upper) {
  if (i < 26) return std::string(1, static_cast<char>((upper ? 'A' : 'a') + i));
  return (upper ? "W" : "w") + std::to_string(i);
}

bool uses_cipher(TaskKind k) { return k == TaskKind::kCipher || k == TaskKind::kCipherSwap || k == TaskKind::kHomophone; }
bool uses_swaps(TaskKind k) { return k == TaskKind::kCipherSwap || k == TaskKind::kHomophone; }

}  // namespace

Sentence SyntheticCorpus::clean_target(std::span<const std::string> source) const {
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < source_words.size(); ++i) index.emplace(source_words[i], static_cast<int>(i));
  Sentence out;
  for (const auto& w : source) {
    auto it = index.find(w);
    if (it == index.end()) throw ContractError("clean_target: unknown source word '" + w + "'");
    out.push_back(target_words[static_cast<std::size_t>(bijection[static_cast<std::size_t>(it->second)])]);
  }
  if (spec.kind == TaskKind::kReverse) std::reverse(out.begin(), out.end());
  return out;
}

SyntheticCorpus generate_corpus(const TaskSpec& spec, std::size_t n) {
  spec.validate();
  if (n == 0) throw ContractError("generate_corpus: n must be at least 1");
  const int words = spec.vocab_size - kReservedTokens;
  std::mt19937_64 rng(spec.seed);
  SyntheticCorpus c;
  c.spec = spec;
  const bool cipher = uses_cipher(spec.kind);
  for (int i = 0; i < words; ++i) {
    c.source_words.push_back(word_name(i, false));
    c.target_words.push_back(word_name(i, cipher));
  }
  c.bijection.resize(static_cast<std::size_t>(words));
  std::iota(c.bijection.begin(), c.bijection.end(), 0);
  if (cipher) std::shuffle(c.bijection.begin(), c.bijection.end(), rng);
  c.partner.assign(static_cast<std::size_t>(words), -1);
  if (spec.kind == TaskKind::kHomophone) {
    std::vector<int> perm(static_cast<std::size_t>(words));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const int m = static_cast<int>(std::lround(spec.homophone_fraction * words));
    for (int k = 0; k < m; ++k) c.partner[static_cast<std::size_t>(perm[k])] = perm[static_cast<std::size_t>(m + k)];
  }

  std::uniform_int_distribution<int> len(spec.min_length, spec.max_length);
  std::uniform_int_distribution<int> word(0, words - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  c.pairs.reserve(n);
  for (std::size_t p = 0; p < n; ++p) {
    const int L = len(rng);
    std::vector<int> ids(static_cast<std::size_t>(L));
    for (int& w : ids) w = word(rng);
    std::vector<int> out;
    out.reserve(ids.size());
    for (int w : ids) {
      int src = w;
      if (c.partner[static_cast<std::size_t>(w)] >= 0 && u(rng) < spec.homophone_rate) {
        src = c.partner[static_cast<std::size_t>(w)];
      }
      out.push_back(c.bijection[static_cast<std::size_t>(src)]);
    }
    if (spec.kind == TaskKind::kReverse) std::reverse(out.begin(), out.end());
    if (uses_swaps(spec.kind)) {
      for (std::size_t i = 0; i + 1 < out.size();) {
        if (u(rng) < spec.noise) {
          std::swap(out[i], out[i + 1]);
          i += 2;
        } else {
          i += 1;
        }
      }
    }
    TextPair tp;
    for (int w : ids) tp.source.push_back(c.source_words[static_cast<std::size_t>(w)]);
    for (int w : out) tp.target.push_back(c.target_words[static_cast<std::size_t>(w)]);
    c.pairs.push_back(std::move(tp));
  }
  return c;
}

Vocab build_vocab(std::span<const TextPair> pairs, Side side) {
  std::vector<Sentence> sentences;
  sentences.reserve(pairs.size());
  for (const auto& p : pairs) sentences.push_back(side == Side::kSource ? p.source : p.target);
  return Vocab::build(sentences);
}

std::vector<ParallelPair> encode_pairs(std::span<const TextPair> pairs, const Vocab& src, const Vocab& tgt) {
  std::vector<ParallelPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.source.empty() || p.target.empty()) throw ContractError("encode_pairs: empty sentence");
    ParallelPair e{src.encode(p.source), tgt.encode(p.target)};
    e.target.push_back(kEos);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const ParallelPair> pairs, std::size_t max_tokens) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pairs[a].source.size() < pairs[b].source.size(); });
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> current;
  for (std::size_t idx : order) {
    const std::size_t len = pairs[idx].source.size();
    if (len > max_tokens) {
      throw CapacityError("make_batches: pair " + std::to_string(idx) + " has " + std::to_string(len) +
                          " source tokens, over the budget of " + std::to_string(max_tokens));
    }
    if (!current.empty() && len * (current.size() + 1) > max_tokens) {
      batches.push_back(std::move(current));
      current.clear();
    }
    current.push_back(idx);
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

void write_parallel_text(const std::filesystem::path& source_file, const std::filesystem::path& target_file,
                         std::span<const TextPair> pairs) {
  std::ofstream s(source_file), t(target_file);
  if (!s || !t) throw IntegrityError("cannot write parallel files " + source_file.string());
  for (const auto& p : pairs) {
    s << join_words(p.source) << '\n';
    t << join_words(p.target) << '\n';
  }
  if (!s || !t) throw IntegrityError("failed writing parallel files " + source_file.string());
}

std::vector<TextPair> read_parallel_text(const std::filesystem::path& source_file,
                                         const std::filesystem::path& target_file) {
  auto read = [](const std::filesystem::path& f) {
    std::ifstream in(f);
    if (!in) throw IntegrityError("cannot read " + f.string());
    std::vector<Sentence> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(split_words(line));
    }
    return lines;
  };
  auto src = read(source_file);
  auto tgt = read(target_file);
  if (src.size() != tgt.size()) {
    throw IntegrityError("parallel files are misaligned: " + std::to_string(src.size()) + " source lines vs " +
                         std::to_string(tgt.size()) + " target lines");
  }
  std::vector<TextPair> out;
  out.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].empty() || tgt[i].empty()) {
      throw IntegrityError("parallel files: empty sentence on line " + std::to_string(i + 1));
    }
    out.push_back({std::move(src[i]), std::move(tgt[i])});
  }
  return out;
}

std::vector<std::vector<TextPair>> split_pairs(std::span<const TextPair> pairs, std::span<const std::size_t> sizes) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total > pairs.size()) throw ContractError("split_pairs: sizes exceed the corpus");
  std::vector<std::vector<TextPair>> out;
  std::size_t off = 0;
  for (std::size_t s : sizes) {
    out.emplace_back(pairs.begin() + static_cast<long>(off), pairs.begin() + static_cast<long>(off + s));
    off += s;
  }
  return out;
}

}  // namespace chanmt
