#pragma once

#include "lamarl/env/grid_world.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lamarl::lang {

using TokenId = int;

/// Ordered task vocabulary followed by the reserved EOS and PAD symbols.
///
/// Ids 0..words-1 are words, `eos()` = words, `pad()` = words + 1. PAD also
/// serves as the decoder's start symbol and as the separator between agents
/// inside a broadcast.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  static Vocabulary for_task(env::Task task);

  int word_count() const { return static_cast<int>(words_.size()); }
  /// Total symbol count including EOS and PAD.
  int size() const { return word_count() + 2; }
  TokenId eos() const { return word_count(); }
  TokenId pad() const { return word_count() + 1; }

  bool contains(std::string_view word) const;
  /// Throws std::invalid_argument for words outside the vocabulary.
  TokenId id(std::string_view word) const;
  std::string word(TokenId id) const;
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
};

/// EOS-terminated token sequence.
struct Description {
  std::vector<TokenId> tokens;

  /// Tokens before EOS.
  std::span<const TokenId> words() const;
  std::size_t length_without_eos() const { return words().size(); }
  bool operator==(const Description&) const = default;
};

inline constexpr int kMaxDescriptionLength = 8;

/// Throws std::invalid_argument on an unknown word.
Description tokenize(std::string_view text, const Vocabulary& vocab);
/// Words up to EOS joined by single spaces; PAD renders as "|".
std::string detokenize(std::span<const TokenId> tokens, const Vocabulary& vocab);
std::string detokenize(const Description& d, const Vocabulary& vocab);

/// Checks the Description invariants: ids in range, exactly one EOS, last.
bool well_formed(const Description& d, const Vocabulary& vocab);

/// Broadcast/joint layout: words of each message in agent order, separated by
/// PAD, terminated by a single EOS.
std::vector<TokenId> join_messages(std::span<const std::vector<TokenId>> messages, const Vocabulary& vocab);
/// Inverse of join_messages (each returned message is EOS-terminated).
std::vector<std::vector<TokenId>> split_broadcast(std::span<const TokenId> broadcast, int n_agents,
                                                  const Vocabulary& vocab);

}  // namespace lamarl::lang
