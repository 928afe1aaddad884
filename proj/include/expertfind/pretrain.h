// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

// Pre-training: word-level MLM, question-level MLM and vote prediction from
// the expert vector, optimized jointly with unit weights.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "expertfind/assembly.h"
#include "expertfind/corpus.h"
#include "expertfind/encoder.h"
#include "expertfind/params.h"

namespace expertfind {

struct PretrainTasks {
  bool word = true;
  bool question = true;
  bool vote = true;
};

struct PretrainConfig {
  double learning_rate = 1e-3;
  int steps = 2000;
  int batch_size = 16;
  double warmup_fraction = 0.05;  // linear warmup, then constant
  MaskingOptions masking;
  PretrainTasks tasks;
  AssemblyOptions assembly;
  std::uint64_t seed = 1;
  int log_every = 1;
  int checkpoint_every = 0;  // 0: no intermediate checkpoints
  int workers = 1;
};

// One (expert, target question) pair: the expert answered the question and
// its normalized vote on that answer is the vote label.
struct PretrainPair {
  int expert_id = 0;
  std::int64_t question_id = 0;
  Timestamp as_of = 0;  // target question creation time
  int vote_class = 1;

  bool operator==(const PretrainPair&) const = default;
};

struct PretrainPairs {
  std::vector<PretrainPair> pairs;
  std::size_t cold_skipped = 0;  // answerer had no usable history
};

// Pairs from the answers to the given questions, in question order.
PretrainPairs pretrain_pairs(const Corpus& corpus, std::span<const std::int64_t> question_ids);

// Assembled sequence plus masking plan for `pair`, seeded by
// (seed, question, expert, round).
PretrainExample make_pretrain_example(const PretrainPair& pair, const ProfileSet& profiles,
                                      const TitleIndex& titles, const PretrainConfig& config,
                                      int vocab_size, std::uint64_t round);

// Unnormalized per-sequence loss terms.
template <typename T>
struct ExampleTerms {
  Tensor<T> word_sum;      // summed CE at word-masked positions (undefined if none)
  Tensor<T> question_sum;  // summed CE over the masked span (undefined if none)
  Tensor<T> vote;          // CE of the vote head (undefined if the task is off)
  int word_count = 0;
  int question_count = 0;
};

template <typename T>
ExampleTerms<T> example_terms(const Encoder<T>& encoder, ParamBinding<T>& p,
                              const PretrainExample& example, const PretrainTasks& tasks,
                              double dropout, Rng* rng);

// Batch losses: means over pooled word positions, pooled span positions and
// sequences. A term with nothing to average is the constant 0.
template <typename T>
struct PretrainLoss {
  Tensor<T> word;
  Tensor<T> question;
  Tensor<T> vote;
  Tensor<T> total;
  int word_positions = 0;
  int question_positions = 0;
  bool word_skipped = false;
};

template <typename T>
PretrainLoss<T> pretrain_loss(const Encoder<T>& encoder, ParamBinding<T>& p,
                              std::span<const PretrainExample> batch, const PretrainTasks& tasks,
                              double dropout, Rng* rng);

struct PretrainStepLog {
  int step = 0;
  double word = 0.0;
  double question = 0.0;
  double vote = 0.0;
  double total = 0.0;
  double wall_ms = 0.0;
};

struct PretrainHooks {
  std::ostream* metrics = nullptr;  // header + one line per logged step
  std::function<void(int step, const ParamStore<float>&)> checkpoint;
};

struct PretrainResult {
  std::vector<PretrainStepLog> log;
  std::size_t pairs = 0;
  std::size_t cold_skipped = 0;
  std::size_t word_skips = 0;  // steps whose batch had no word-masked position
};

// Learning rate at 1-based step `step` of `steps`.
double warmup_lr(double lr, double warmup_fraction, int step, int steps);

// Optimizes `params` in place with Adam. On a non-finite loss the parameters
// are restored to the last good step and NumericalError is thrown.
PretrainResult pretrain(const Corpus& corpus, const TitleIndex& titles, const ModelConfig& model,
                        const PretrainConfig& config, ParamStore<float>& params,
                        const PretrainHooks& hooks = {});

// Same loop over explicit pairs.
PretrainResult pretrain(std::span<const PretrainPair> pairs, const ProfileSet& profiles,
                        const TitleIndex& titles, const ModelConfig& model,
                        const PretrainConfig& config, ParamStore<float>& params,
                        const PretrainHooks& hooks = {});

void write_metrics_header(std::ostream& out);
void write_metrics_line(std::ostream& out, const PretrainStepLog& log);

// Fraction of pairs whose arg-max vote class matches the label (eval mode).
double vote_accuracy(const Encoder<float>& encoder, const ParamStore<float>& params,
                     std::span<const PretrainPair> pairs, const ProfileSet& profiles,
                     const TitleIndex& titles, const AssemblyOptions& assembly, int workers = 1);

}  // namespace expertfind
