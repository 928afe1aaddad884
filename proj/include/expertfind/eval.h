// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

// Candidate sets, ranking metrics and evaluation reports.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "expertfind/assembly.h"
#include "expertfind/corpus.h"
#include "expertfind/encoder.h"

namespace expertfind {

inline constexpr int kCandidateCount = 20;

struct CandidateSet {
  std::int64_t question_id = 0;
  std::vector<int> experts;  // dense expert ids, answerers first
  int ground_truth = 0;      // index into experts

  bool operator==(const CandidateSet&) const = default;
};

// Answerers of the question (ground truth plus the earliest others when
// there are more than `size`), then a uniform fill from experts with history
// before the question. The fill generator is seeded by (seed, question id).
// Throws DataError when fewer than `size` experts qualify.
CandidateSet build_candidates(const Corpus& corpus, std::int64_t question_id, std::uint64_t seed,
                              int size = kCandidateCount);

// 1-based rank of scores[ground_truth] under a stable descending sort, ties
// going to the lower index.
int rank_of(std::span<const double> scores, int ground_truth);

struct Metrics {
  double mrr = 0.0;
  double p_at_1 = 0.0;
  double p_at_3 = 0.0;
  double ndcg = 0.0;  // NDCG@20 with a single relevant expert
  std::size_t questions = 0;
};

// Throws DataError on an empty list or a rank outside 1..max_rank.
Metrics compute_metrics(std::span<const int> ranks, int max_rank = kCandidateCount);

// Scores a batch of sequences; must be deterministic.
using SequenceScorer = std::function<std::vector<double>(std::span<const EncodedSequence>)>;

// Scorer running the encoder and score head in eval mode.
SequenceScorer model_scorer(const Encoder<float>& encoder, const ParamStore<float>& params,
                            int workers = 1);

// Copy of a parameter store whose expert table has `experts` rows, each the
// mean of the source rows; used to score experts the checkpoint never saw.
ParamStore<float> with_mean_expert_rows(const ParamStore<float>& params, int experts);

struct EvalOptions {
  std::uint64_t seed = 1;
  int candidates = kCandidateCount;
  // Randomly permute each candidate list before ranking (unbiased ties).
  bool shuffle = false;
  AssemblyOptions assembly;
  // Evaluate only the first `limit` questions (0 = all).
  std::size_t limit = 0;
};

struct QuestionResult {
  std::int64_t question_id = 0;
  std::vector<int> candidates;
  std::vector<double> scores;
  std::vector<bool> cold;  // scored through the target-only fallback
  int ground_truth = 0;
  int rank = 0;
};

struct RankingReport {
  std::vector<QuestionResult> questions;
  Metrics metrics;
  std::uint64_t seed = 0;
  std::size_t cold_candidates = 0;
  std::string fingerprint;  // FNV-1a over the per-question records
};

RankingReport evaluate(const Corpus& corpus, const TitleIndex& titles,
                       std::span<const std::int64_t> question_ids, const SequenceScorer& scorer,
                       const EvalOptions& options);

// Summary block followed by nothing else; records go to a separate stream.
void write_report_summary(std::ostream& out, const RankingReport& report);
// Header line, then one tab-separated record per question.
void write_report_records(std::ostream& out, const RankingReport& report);

// Aligned score matrix for questions x experts, as_of each question's
// creation time.
void write_case_study(std::ostream& out, const Corpus& corpus, const TitleIndex& titles,
                      std::span<const std::int64_t> question_ids, std::span<const int> experts,
                      const SequenceScorer& scorer, const AssemblyOptions& assembly);

}  // namespace expertfind
