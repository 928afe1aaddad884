// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

// Word and vote vocabularies plus the title tokenizer.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace expertfind {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kMaskId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kHsepId = 4;
inline constexpr int kNumSpecialTokens = 5;

inline constexpr std::string_view kSpecialTokens[kNumSpecialTokens] = {
    "[PAD]", "[UNK]", "[MASK]", "[SEP]", "[HSEP]"};

// Vote lane ids: 0 is PAD, 1..10 are the normalized vote classes.
inline constexpr int kVotePadId = 0;
inline constexpr int kVoteClasses = 10;
inline constexpr int kVoteVocabSize = kVoteClasses + 1;

// Lowercases ASCII letters, splits on whitespace, and emits every ASCII
// punctuation character as a token of its own. Non-ASCII bytes are treated
// as word characters.
std::vector<std::string> tokenize(std::string_view title);

class Vocabulary {
 public:
  static constexpr int kDefaultMinFreq = 2;

  // Specials only.
  Vocabulary();

  // Keeps tokens with frequency >= min_freq, ordered by (frequency desc,
  // token asc). Throws DataError for an empty title list.
  static Vocabulary build(std::span<const std::string> titles, int min_freq = kDefaultMinFreq);

  // From a full id-ordered token list whose first five entries are the
  // specials. Throws DataError otherwise or on duplicates.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  // Cutoff used by build(); 0 when loaded from a token list.
  int min_freq() const { return min_freq_; }

  // UNK for tokens not in the vocabulary.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  // Throws IndexError for ids outside [0, size()).
  const std::string& token(int id) const;
  std::span<const std::string> tokens() const { return tokens_; }

  // Unknown tokens map to UNK; a title with no tokens yields {UNK}.
  std::vector<int> encode(std::string_view title) const;
  // Space-joined tokens.
  std::string decode(std::span<const int> ids) const;

  // One token per line, line number (from 0) = id.
  void write(std::ostream& out) const;
  static Vocabulary read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int min_freq_ = 0;
};

}  // namespace expertfind
