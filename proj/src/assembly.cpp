// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include "expertfind/assembly.h"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "expertfind/errors.h"
#include "text_util.h"

namespace expertfind {
namespace {

void check_options(const AssemblyOptions& o) {
  if (o.title_cap < 1) throw ConfigError("title_cap must be positive");
  if (o.max_len < o.title_cap + 4) {
    throw ConfigError("max_len " + std::to_string(o.max_len) + " cannot hold a target of title_cap " +
                      std::to_string(o.title_cap) + " plus one history token (need title_cap + 4)");
  }
}

void push(EncodedSequence& s, int token, int segment, int vote) {
  s.position_ids.push_back(s.length());
  s.token_ids.push_back(token);
  s.segment_ids.push_back(segment);
  s.vote_ids.push_back(vote);
}

// Opens the sequence with the EID slot, the target span and the first SEP.
EncodedSequence begin_sequence(int expert_id, std::int64_t target_id, std::span<const int> target) {
  EncodedSequence s;
  s.expert_id = expert_id;
  push(s, kPadId, 0, kVotePadId);
  const int start = s.length();
  for (int t : target) push(s, t, 0, kVotePadId);
  s.question_spans.push_back({start, s.length(), target_id, kVotePadId});
  push(s, kSepId, 0, kVotePadId);
  return s;
}

void finish(EncodedSequence& s) {
  push(s, kSepId, 1, kVotePadId);
  s.attention_len = s.length();
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> parse_ints(std::string_view s, std::string_view what) {
  std::vector<int> out;
  if (detail::trim(s).empty()) return out;
  for (std::string_view part : detail::split(detail::trim(s), ' ')) {
    out.push_back(detail::parse_int<int>(part, what));
  }
  return out;
}

constexpr std::string_view kExampleHeader =
    "expert_id\ttarget_question_id\tvote_class\tmasked_span\tattention_len\tfallback\ttokens\t"
    "segments\tpositions\tvotes\tspans\tword_positions\tword_inputs";

}  // namespace

TitleIndex::TitleIndex(const Vocabulary& vocab, int title_cap)
    : vocab_(&vocab), title_cap_(title_cap) {
  if (title_cap < 1) throw ConfigError("title_cap must be positive");
}

TitleIndex::TitleIndex(std::span<const QuestionRecord> questions, const Vocabulary& vocab,
                       int title_cap)
    : TitleIndex(vocab, title_cap) {
  titles_.reserve(questions.size());
  for (const auto& q : questions) add(q.question_id, q.title);
}

void TitleIndex::add(std::int64_t question_id, std::string_view title) {
  std::vector<int> ids = vocab_->encode(title);
  if (static_cast<int>(ids.size()) > title_cap_) ids.resize(title_cap_);
  titles_[question_id] = std::move(ids);
}

std::span<const int> TitleIndex::title(std::int64_t question_id) const {
  const auto it = titles_.find(question_id);
  if (it == titles_.end()) {
    throw IndexError("no title for question " + std::to_string(question_id));
  }
  return it->second;
}

std::vector<const HistoryItem*> usable_history(const ExpertProfile& profile,
                                               std::int64_t target_question_id, Timestamp as_of) {
  std::vector<const HistoryItem*> out;
  for (const auto& h : profile.history) {
    if (h.answered_at < as_of && h.question_id != target_question_id) out.push_back(&h);
  }
  return out;
}

EncodedSequence assemble(const ExpertProfile& profile, std::int64_t target_question_id,
                         Timestamp as_of, const TitleIndex& titles,
                         const AssemblyOptions& options) {
  check_options(options);
  const auto usable = usable_history(profile, target_question_id, as_of);
  if (usable.empty()) {
    throw ColdExpertError("expert " + std::to_string(profile.expert_id) +
                          " has no history before the target question " +
                          std::to_string(target_question_id));
  }
  std::span<const int> target = titles.title(target_question_id);
  if (static_cast<int>(target.size()) > options.title_cap) target = target.first(options.title_cap);

  // Newest first until the budget runs out; the closing SEP is reserved. The
  // newest history is truncated rather than dropped if it alone overflows.
  const int budget_total = options.max_len - (static_cast<int>(target.size()) + 3);
  int budget = budget_total;
  std::size_t keep = 0;
  for (auto it = usable.rbegin(); it != usable.rend(); ++it) {
    std::span<const int> h = titles.title((*it)->question_id);
    const int cost = std::min<int>(static_cast<int>(h.size()), options.title_cap) + (keep ? 1 : 0);
    if (cost > budget) {
      if (keep == 0) keep = 1;
      break;
    }
    budget -= cost;
    ++keep;
  }

  EncodedSequence s = begin_sequence(profile.expert_id, target_question_id, target);
  for (std::size_t i = usable.size() - keep; i < usable.size(); ++i) {
    const HistoryItem& h = *usable[i];
    if (i != usable.size() - keep) push(s, kHsepId, 1, kVotePadId);
    std::span<const int> title = titles.title(h.question_id);
    if (static_cast<int>(title.size()) > options.title_cap) title = title.first(options.title_cap);
    if (static_cast<int>(title.size()) > budget_total) title = title.first(budget_total);
    const int start = s.length();
    for (int t : title) push(s, t, 1, h.vote);
    s.question_spans.push_back({start, s.length(), h.question_id, h.vote});
  }
  finish(s);
  return s;
}

EncodedSequence assemble_target_only(int expert_id, std::int64_t target_question_id,
                                     const TitleIndex& titles, const AssemblyOptions& options) {
  check_options(options);
  std::span<const int> target = titles.title(target_question_id);
  if (static_cast<int>(target.size()) > options.title_cap) target = target.first(options.title_cap);
  EncodedSequence s = begin_sequence(expert_id, target_question_id, target);
  finish(s);
  s.fallback = true;
  return s;
}

EncodedSequence assemble_or_fallback(const ExpertProfile& profile,
                                     std::int64_t target_question_id, Timestamp as_of,
                                     const TitleIndex& titles, const AssemblyOptions& options) {
  if (usable_history(profile, target_question_id, as_of).empty()) {
    return assemble_target_only(profile.expert_id, target_question_id, titles, options);
  }
  return assemble(profile, target_question_id, as_of, titles, options);
}

void pad_sequence(EncodedSequence& seq, int count) {
  for (int i = 0; i < count; ++i) {
    seq.position_ids.push_back(seq.length());
    seq.token_ids.push_back(kPadId);
    seq.segment_ids.push_back(0);
    seq.vote_ids.push_back(kVotePadId);
  }
}

MaskingPlan make_pretrain_plan(const EncodedSequence& seq, int vote_class,
                               const MaskingOptions& options, int vocab_size, Rng& rng) {
  if (!(options.word_ratio >= 0.0 && options.word_ratio < 1.0) ||
      !(options.question_ratio >= 0.0 && options.question_ratio < 1.0)) {
    throw ConfigError("masking ratios must lie in [0, 1)");
  }
  if (vote_class < 1 || vote_class > kVoteClasses) {
    throw DataError("vote target " + std::to_string(vote_class) + " outside 1..10");
  }
  MaskingPlan plan;
  plan.vote_class = vote_class;
  const int histories = seq.history_count();
  if (histories > 0 && rng.bernoulli(options.question_ratio)) {
    plan.masked_span = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(histories)));
  }
  const bool random_ok = vocab_size > kNumSpecialTokens;
  for (int s = 1; s <= histories; ++s) {
    if (plan.masked_span == s) continue;
    const auto& span = seq.question_spans[s];
    for (int p = span.start; p < span.end; ++p) {
      if (!rng.bernoulli(options.word_ratio)) continue;
      const double r = rng.uniform();
      int input = seq.token_ids[p];
      if (r < 0.8) {
        input = kMaskId;
      } else if (r < 0.9 && random_ok) {
        input = kNumSpecialTokens +
                static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab_size - kNumSpecialTokens)));
      }
      plan.word_positions.push_back(p);
      plan.word_inputs.push_back(input);
    }
  }
  return plan;
}

std::vector<int> apply_plan(const EncodedSequence& seq, const MaskingPlan& plan) {
  std::vector<int> tokens = seq.token_ids;
  if (plan.masked_span) {
    const auto& span = seq.question_spans.at(static_cast<std::size_t>(*plan.masked_span));
    for (int p = span.start; p < span.end; ++p) tokens[p] = kMaskId;
  }
  for (std::size_t i = 0; i < plan.word_positions.size(); ++i) {
    tokens.at(static_cast<std::size_t>(plan.word_positions[i])) = plan.word_inputs[i];
  }
  return tokens;
}

void write_examples(std::ostream& out, std::span<const PretrainExample> examples) {
  out << kExampleHeader << '\n';
  for (const auto& ex : examples) {
    const auto& s = ex.sequence;
    const auto& p = ex.plan;
    out << s.expert_id << '\t' << s.question_spans.at(0).question_id << '\t' << p.vote_class << '\t'
        << (p.masked_span ? std::to_string(*p.masked_span) : "-") << '\t' << s.attention_len << '\t'
        << (s.fallback ? 1 : 0) << '\t' << join(s.token_ids) << '\t' << join(s.segment_ids) << '\t'
        << join(s.position_ids) << '\t' << join(s.vote_ids) << '\t';
    for (std::size_t i = 0; i < s.question_spans.size(); ++i) {
      const auto& sp = s.question_spans[i];
      if (i) out << ' ';
      out << sp.start << ':' << sp.end << ':' << sp.question_id << ':' << sp.vote;
    }
    out << '\t' << join(p.word_positions) << '\t' << join(p.word_inputs) << '\n';
  }
}

std::vector<PretrainExample> read_examples(std::istream& in) {
  using detail::parse_int;
  std::vector<PretrainExample> examples;
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || detail::trim(line) != kExampleHeader) {
    throw ParseError("expected pre-training example header", 1);
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split(line, '\t');
    if (f.size() != 13) throw ParseError("expected 13 fields", line_no);
    try {
      PretrainExample ex;
      auto& s = ex.sequence;
      auto& p = ex.plan;
      s.expert_id = parse_int<int>(f[0], "expert_id");
      const auto target_id = parse_int<std::int64_t>(f[1], "target_question_id");
      p.vote_class = parse_int<int>(f[2], "vote_class");
      if (f[3] != "-") p.masked_span = parse_int<int>(f[3], "masked_span");
      s.attention_len = parse_int<int>(f[4], "attention_len");
      s.fallback = parse_int<int>(f[5], "fallback") != 0;
      s.token_ids = parse_ints(f[6], "tokens");
      s.segment_ids = parse_ints(f[7], "segments");
      s.position_ids = parse_ints(f[8], "positions");
      s.vote_ids = parse_ints(f[9], "votes");
      for (std::string_view sp : detail::split(f[10], ' ')) {
        const auto parts = detail::split(sp, ':');
        if (parts.size() != 4) throw DataError("malformed span '" + std::string(sp) + "'");
        s.question_spans.push_back({parse_int<int>(parts[0], "span start"),
                                    parse_int<int>(parts[1], "span end"),
                                    parse_int<std::int64_t>(parts[2], "span question"),
                                    parse_int<int>(parts[3], "span vote")});
      }
      p.word_positions = parse_ints(f[11], "word_positions");
      p.word_inputs = parse_ints(f[12], "word_inputs");
      const std::size_t n = s.token_ids.size();
      if (s.segment_ids.size() != n || s.position_ids.size() != n || s.vote_ids.size() != n ||
          p.word_positions.size() != p.word_inputs.size() || s.question_spans.empty() ||
          s.question_spans[0].question_id != target_id) {
        throw DataError("inconsistent lane or plan lengths");
      }
      examples.push_back(std::move(ex));
    } catch (const ParseError&) {
      throw;
    } catch (const DataError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return examples;
}

}  // namespace expertfind
