// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

// Target-aware expert sequences and pre-training masking plans.
//
// Layout (one row per lane):
//
//   tokens    [PAD] t1 .. ta [SEP] h1_1 .. h1_b [HSEP] h2_1 .. [SEP]
//   segments    0   0  ..  0   0     1   ..  1     1     1   ..   1
//   votes     [PAD] PAD.. PAD PAD   v1  ..  v1   PAD    v2  ..  PAD
//   positions   0   1  ..                                      L-1
//
// Slot 0 holds the expert-ID prefix; its token lane carries PAD and the
// encoder substitutes the expert embedding there.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "expertfind/corpus.h"
#include "expertfind/rng.h"
#include "expertfind/vocab.h"

namespace expertfind {

struct AssemblyOptions {
  int max_len = 256;
  int title_cap = 16;  // tokens kept per title, target included
};

struct QuestionSpan {
  int start = 0;  // first token position
  int end = 0;    // one past the last token position
  std::int64_t question_id = 0;
  int vote = kVotePadId;  // PAD for the target span

  int length() const { return end - start; }
  bool operator==(const QuestionSpan&) const = default;
};

struct EncodedSequence {
  int expert_id = 0;
  std::vector<int> token_ids;
  std::vector<int> segment_ids;
  std::vector<int> position_ids;
  std::vector<int> vote_ids;
  // spans[0] is the target; history spans follow in chronological order.
  std::vector<QuestionSpan> question_spans;
  // Positions >= attention_len are padding and never attended to.
  int attention_len = 0;
  // Target-only sequence built for an expert without usable history.
  bool fallback = false;

  int length() const { return static_cast<int>(token_ids.size()); }
  int history_count() const { return static_cast<int>(question_spans.size()) - 1; }
  bool operator==(const EncodedSequence&) const = default;
};

// Encoded, capped titles keyed by question id.
class TitleIndex {
 public:
  TitleIndex(const Vocabulary& vocab, int title_cap);
  TitleIndex(std::span<const QuestionRecord> questions, const Vocabulary& vocab, int title_cap);

  void add(std::int64_t question_id, std::string_view title);
  // Throws IndexError for unknown ids.
  std::span<const int> title(std::int64_t question_id) const;
  int title_cap() const { return title_cap_; }
  const Vocabulary& vocab() const { return *vocab_; }

 private:
  const Vocabulary* vocab_;
  int title_cap_;
  std::unordered_map<std::int64_t, std::vector<int>> titles_;
};

// Histories usable for a target: answered strictly before as_of and not the
// target question itself, in chronological order.
std::vector<const HistoryItem*> usable_history(const ExpertProfile& profile,
                                               std::int64_t target_question_id, Timestamp as_of);

// Packs the most recent usable histories that fit max_len (the oldest are
// dropped first). Throws ColdExpertError if no history is usable and
// ConfigError if max_len < title_cap + 4.
EncodedSequence assemble(const ExpertProfile& profile, std::int64_t target_question_id,
                         Timestamp as_of, const TitleIndex& titles,
                         const AssemblyOptions& options = {});

// [EID] target [SEP] [SEP], flagged as a fallback.
EncodedSequence assemble_target_only(int expert_id, std::int64_t target_question_id,
                                     const TitleIndex& titles,
                                     const AssemblyOptions& options = {});

// assemble(), or the target-only fallback for a cold expert.
EncodedSequence assemble_or_fallback(const ExpertProfile& profile,
                                     std::int64_t target_question_id, Timestamp as_of,
                                     const TitleIndex& titles,
                                     const AssemblyOptions& options = {});

// Appends `count` PAD positions excluded from attention.
void pad_sequence(EncodedSequence& seq, int count);

struct MaskingOptions {
  double word_ratio = 0.15;
  double question_ratio = 0.15;
};

struct MaskingPlan {
  // Word task: ascending positions inside unmasked history spans and the
  // token fed to the encoder at each (MASK, a random word, or the original).
  std::vector<int> word_positions;
  std::vector<int> word_inputs;
  // Question task: index into question_spans (>= 1) of the fully masked span.
  std::optional<int> masked_span;
  // Vote task label: the expert's true class on the target question, 1..10.
  int vote_class = 0;

  bool operator==(const MaskingPlan&) const = default;
};

// Per-sequence generator seed.
inline std::uint64_t sequence_seed(std::uint64_t global_seed, std::int64_t question_id,
                                   int expert_id, std::uint64_t round) {
  return derive_seed({global_seed, static_cast<std::uint64_t>(question_id),
                      static_cast<std::uint64_t>(expert_id), round});
}

// Throws ConfigError for ratios outside [0, 1) and DataError for a vote_class
// outside 1..10.
MaskingPlan make_pretrain_plan(const EncodedSequence& seq, int vote_class,
                               const MaskingOptions& options, int vocab_size, Rng& rng);

// Token lane with the plan's replacements applied.
std::vector<int> apply_plan(const EncodedSequence& seq, const MaskingPlan& plan);

// Line-delimited pre-training examples: a header line, then one
// tab-separated record per example (see docs/FORMATS.md).
struct PretrainExample {
  EncodedSequence sequence;
  MaskingPlan plan;
  bool operator==(const PretrainExample&) const = default;
};
void write_examples(std::ostream& out, std::span<const PretrainExample> examples);
std::vector<PretrainExample> read_examples(std::istream& in);

}  // namespace expertfind
