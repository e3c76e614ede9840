#include "lamarl/lang/vocabulary.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace lamarl::lang {

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  std::unordered_set<std::string> seen;
  for (const auto& w : words_) {
    if (w.empty()) throw std::invalid_argument("Vocabulary: empty token");
    if (!seen.insert(w).second) throw std::invalid_argument("Vocabulary: duplicate token '" + w + "'");
  }
}

Vocabulary Vocabulary::for_task(env::Task task) {
  switch (task) {
    case env::Task::PredatorPrey: return Vocabulary({"Prey", "North", "South", "East", "West", "Center"});
    case env::Task::Foraging:
      return Vocabulary({"Gem", "North", "South", "East", "West", "Center", "Purple", "Green", "Yellow"});
    case env::Task::CoordinatedPlacement:
      return Vocabulary(
          {"North", "South", "East", "West", "Center", "Red", "Green", "Blue", "Yellow", "Cyan", "Purple"});
  }
  throw std::invalid_argument("Vocabulary: unknown task");
}

bool Vocabulary::contains(std::string_view word) const {
  return std::find(words_.begin(), words_.end(), word) != words_.end();
}

TokenId Vocabulary::id(std::string_view word) const {
  const auto it = std::find(words_.begin(), words_.end(), word);
  if (it == words_.end()) throw std::invalid_argument("unknown word '" + std::string(word) + "'");
  return static_cast<TokenId>(it - words_.begin());
}

std::string Vocabulary::word(TokenId id) const {
  if (id == eos()) return "<eos>";
  if (id == pad()) return "<pad>";
  if (id < 0 || id >= word_count()) throw std::out_of_range("Vocabulary: token id out of range");
  return words_[static_cast<std::size_t>(id)];
}

std::span<const TokenId> Description::words() const {
  // Well-formed descriptions end with their single EOS.
  return tokens.empty() ? std::span<const TokenId>() : std::span<const TokenId>(tokens.data(), tokens.size() - 1);
}

Description tokenize(std::string_view text, const Vocabulary& vocab) {
  Description d;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) d.tokens.push_back(vocab.id(w));
  d.tokens.push_back(vocab.eos());
  return d;
}

std::string detokenize(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  std::string out;
  for (TokenId t : tokens) {
    if (t == vocab.eos()) break;
    if (!out.empty()) out += ' ';
    out += t == vocab.pad() ? std::string("|") : vocab.word(t);
  }
  return out;
}

std::string detokenize(const Description& d, const Vocabulary& vocab) { return detokenize(d.tokens, vocab); }

bool well_formed(const Description& d, const Vocabulary& vocab) {
  if (d.tokens.empty() || d.tokens.back() != vocab.eos()) return false;
  if (std::count(d.tokens.begin(), d.tokens.end(), vocab.eos()) != 1) return false;
  return std::all_of(d.tokens.begin(), d.tokens.end(), [&](TokenId t) { return t >= 0 && t < vocab.size(); });
}

std::vector<TokenId> join_messages(std::span<const std::vector<TokenId>> messages, const Vocabulary& vocab) {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (i > 0) out.push_back(vocab.pad());
    for (TokenId t : messages[i]) {
      if (t == vocab.eos()) break;
      out.push_back(t);
    }
  }
  out.push_back(vocab.eos());
  return out;
}

std::vector<std::vector<TokenId>> split_broadcast(std::span<const TokenId> broadcast, int n_agents,
                                                  const Vocabulary& vocab) {
  std::vector<std::vector<TokenId>> out(1);
  for (TokenId t : broadcast) {
    if (t == vocab.eos()) break;
    if (t == vocab.pad()) {
      out.emplace_back();
      continue;
    }
    out.back().push_back(t);
  }
  if (static_cast<int>(out.size()) != n_agents) throw std::invalid_argument("split_broadcast: agent count mismatch");
  for (auto& m : out) m.push_back(vocab.eos());
  return out;
}

}  // namespace lamarl::lang
