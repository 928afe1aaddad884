// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

// Fine-tuning: matching score from the expert vector, trained with softmax
// cross-entropy over the positive and k sampled negatives.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "expertfind/assembly.h"
#include "expertfind/corpus.h"
#include "expertfind/encoder.h"
#include "expertfind/eval.h"
#include "expertfind/params.h"

namespace expertfind {

struct FinetuneConfig {
  double learning_rate = 1e-3;
  int k = 9;
  int epochs = 5;
  int patience = 3;  // epochs without validation MRR improvement
  int batch_size = 16;
  double warmup_fraction = 0.0;
  // Earliest fraction of the train questions used (sparsity experiments).
  double train_fraction = 1.0;
  AssemblyOptions assembly;
  std::uint64_t seed = 1;
  // Validation questions scored per epoch (0 = all).
  std::size_t validation_limit = 0;
  int workers = 1;
};

struct RankingInstance {
  std::int64_t question_id = 0;
  int positive = 0;
  std::vector<int> negatives;
  Timestamp as_of = 0;

  bool operator==(const RankingInstance&) const = default;
};

// Experts with history before the question that did not answer it.
std::vector<int> eligible_negatives(const Corpus& corpus, std::int64_t question_id);

// k experts drawn uniformly without replacement from eligible_negatives().
// Throws DataError when fewer than k are eligible.
std::vector<int> sample_negatives(const Corpus& corpus, std::int64_t question_id, int k, Rng& rng);

// Earliest ceil(fraction * n) of the train questions (chronological order).
std::vector<std::int64_t> train_subset(const Corpus& corpus, double fraction);

struct InstanceSet {
  std::vector<RankingInstance> instances;
  std::size_t cold_positive = 0;  // accepted answerer had no usable history
};

// One instance per question whose accepted answerer has usable history,
// negatives seeded by (seed, question, epoch).
InstanceSet make_instances(const Corpus& corpus, std::span<const std::int64_t> question_ids,
                           int k, std::uint64_t seed, std::uint64_t epoch);

// Scores [n] -> softmax cross-entropy with candidate 0 as the target.
template <typename T>
Tensor<T> ranking_loss(const Tensor<T>& scores);

// Loss of one instance: sequences[0] is the positive.
template <typename T>
Tensor<T> instance_loss(const Encoder<T>& encoder, ParamBinding<T>& p,
                        std::span<const EncodedSequence> sequences, double dropout, Rng* rng);

// Positive first, then negatives, each assembled as of the question time.
std::vector<EncodedSequence> instance_sequences(const Corpus& corpus, const TitleIndex& titles,
                                                const RankingInstance& instance,
                                                const AssemblyOptions& assembly);

struct FinetuneEpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_mrr = 0.0;
  double wall_ms = 0.0;
};

struct FinetuneHooks {
  std::ostream* metrics = nullptr;  // header + one line per epoch
};

struct FinetuneResult {
  std::vector<FinetuneEpochLog> log;
  int best_epoch = 0;  // 0 when no epoch ran
  double best_validation_mrr = 0.0;
  std::size_t instances = 0;
  std::size_t cold_positive = 0;
  bool stopped_early = false;
};

// Fine-tunes `params` (score head added if missing) and leaves them at the
// best validation epoch. With zero epochs the parameters are untouched.
// Throws NumericalError on divergence, leaving the best parameters so far.
FinetuneResult finetune(const Corpus& corpus, const TitleIndex& titles, const ModelConfig& model,
                        const FinetuneConfig& config, ParamStore<float>& params,
                        const FinetuneHooks& hooks = {});

}  // namespace expertfind
