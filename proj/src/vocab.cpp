// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include "expertfind/vocab.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "expertfind/errors.h"

namespace expertfind {
namespace {

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

bool is_special(std::string_view token) {
  return std::find(std::begin(kSpecialTokens), std::end(kSpecialTokens), token) !=
         std::end(kSpecialTokens);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view title) {
  std::vector<std::string> out;
  std::string word;
  const auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char ch : title) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      word += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() {
  for (int i = 0; i < kNumSpecialTokens; ++i) {
    tokens_.emplace_back(kSpecialTokens[i]);
    ids_.emplace(tokens_.back(), i);
  }
}

Vocabulary Vocabulary::build(std::span<const std::string> titles, int min_freq) {
  if (titles.empty()) throw DataError("cannot build a vocabulary from an empty title list");
  std::map<std::string, long> counts;
  for (const auto& title : titles) {
    for (auto& tok : tokenize(title)) ++counts[std::move(tok)];
  }
  std::vector<std::pair<std::string, long>> ranked;
  for (auto& [tok, n] : counts) {
    if (is_special(tok)) throw DataError("reserved token " + tok + " found in corpus");
    if (n >= min_freq) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  v.min_freq_ = min_freq;
  for (auto& [tok, n] : ranked) {
    v.ids_.emplace(tok, v.size());
    v.tokens_.push_back(std::move(tok));
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < static_cast<std::size_t>(kNumSpecialTokens)) {
    throw DataError("vocabulary lacks the special-token header");
  }
  for (int i = 0; i < kNumSpecialTokens; ++i) {
    if (tokens[i] != kSpecialTokens[i]) {
      throw DataError("vocabulary slot " + std::to_string(i) + " must be " +
                      std::string(kSpecialTokens[i]) + ", found " + tokens[i]);
    }
  }
  Vocabulary v;
  for (std::size_t i = kNumSpecialTokens; i < tokens.size(); ++i) {
    if (tokens[i].empty()) throw DataError("empty token at vocabulary id " + std::to_string(i));
    if (!v.ids_.emplace(tokens[i], static_cast<int>(i)).second) {
      throw DataError("duplicate vocabulary token " + tokens[i]);
    }
    v.tokens_.push_back(std::move(tokens[i]));
  }
  return v;
}

int Vocabulary::id(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(size()));
  }
  return tokens_[id];
}

std::vector<int> Vocabulary::encode(std::string_view title) const {
  std::vector<int> ids;
  for (const auto& tok : tokenize(title)) ids.push_back(id(tok));
  if (ids.empty()) ids.push_back(kUnkId);
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void Vocabulary::write(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::read(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write(out);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  return read(in);
}

}  // namespace expertfind
