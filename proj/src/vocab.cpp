#include "chanmt/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "chanmt/error.hpp"

namespace chanmt {

namespace {

const std::vector<std::string>& reserved() {
  static const std::vector<std::string> names = {"<pad>", "<s>", "</s>", "<unk>"};
  return names;
}

}  // namespace

Vocab::Vocab() : Vocab(reserved()) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const auto& res = reserved();
  if (tokens_.size() < res.size() || !std::equal(res.begin(), res.end(), tokens_.begin())) {
    throw ContractError("vocab: reserved tokens must come first");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) {
      throw ContractError("vocab: duplicate token '" + tokens_[i] + "'");
    }
  }
}

Vocab Vocab::build(std::span<const std::vector<std::string>> sentences) {
  if (sentences.empty()) {
    throw ContractError("vocab: cannot build from an empty corpus");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sentences) {
    for (const auto& w : s) {
      ++counts[w];
    }
  }
  const auto& res = reserved();
  for (const auto& r : res) {
    counts.erase(r);
  }
  std::vector<std::pair<std::string, std::size_t>> entries(counts.begin(), counts.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = res;
  for (auto& e : entries) {
    tokens.push_back(std::move(e.first));
  }
  return Vocab(std::move(tokens));
}

TokenId Vocab::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token_of(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("vocab: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenSeq Vocab::encode(std::span<const std::string> words) const {
  TokenSeq out;
  out.reserve(words.size());
  for (const auto& w : words) {
    out.push_back(lookup(w));
  }
  return out;
}

std::vector<std::string> Vocab::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == kEos && i + 1 == ids.size()) {
      break;
    }
    out.push_back(token_of(ids[i]));
  }
  return out;
}

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += ' ';
    out += words[i];
  }
  return out;
}

void check_token_seq(std::span<const TokenId> seq, std::size_t vocab_size) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] < 0 || static_cast<std::size_t>(seq[i]) >= vocab_size) {
      throw ContractError("token sequence: id out of vocabulary range");
    }
    if (seq[i] == kEos && i + 1 != seq.size()) {
      throw ContractError("token sequence: EOS before the final position");
    }
  }
}

}  // namespace chanmt
