// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

// Transformer encoder over assembled expert sequences.
//
// Parameter names (all tensors live in one ParamStore):
//   embed.token [V x d]   embed.segment [2 x d]   embed.position [max_len x d]
//   embed.vote [11 x d]   embed.expert [M x d]
//   layer<i>.attn.{wq,wk,wv,wo} [d x d]
//   layer<i>.ln1.{gamma,beta} [d]
//   layer<i>.ffn.w1 [d x f]  layer<i>.ffn.b1 [f]  layer<i>.ffn.w2 [f x d]  layer<i>.ffn.b2 [d]
//   layer<i>.ln2.{gamma,beta} [d]
//   head.word.bias [V]     (word logits reuse embed.token)
//   head.vote.w [d x 10]  head.vote.b [10]
//   head.score.w [d x 1]  head.score.b [1]   (created for fine-tuning)
//
// Layers are post-norm: x = LN(x + Attn(x)); x = LN(x + FFN(x)).

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "expertfind/assembly.h"
#include "expertfind/params.h"
#include "expertfind/rng.h"
#include "expertfind/tensor.h"

namespace expertfind {

struct ModelConfig {
  int d = 64;
  int heads = 4;
  int layers = 2;
  int ffn_mult = 4;
  int max_len = 256;
  int word_vocab = 0;
  int vote_vocab = kVoteVocabSize;
  int segments = 2;
  int experts = 0;
  double dropout_pretrain = 0.2;
  double dropout_finetune = 0.3;
  double init_std = 0.02;
  bool use_vote_lane = true;
  bool use_expert_id = true;

  // Throws ConfigError on violated invariants.
  void validate() const;

  void write(std::ostream& out) const;
  static ModelConfig read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static ModelConfig load(const std::filesystem::path& path);

  bool operator==(const ModelConfig&) const = default;
};

// Applies "key=value" overrides to a config; unknown keys throw ConfigError.
void set_model_key(ModelConfig& config, const std::string& key, const std::string& value);

// Encoder tables, layers and the word/vote heads; normal(0, init_std)
// weights, zero biases, unit layer-norm scales, zero PAD rows.
template <typename T>
ParamStore<T> init_params(const ModelConfig& config, std::uint64_t seed);

// Adds head.score.{w,b} if missing; returns true if it added them.
template <typename T>
bool ensure_score_head(ParamStore<T>& params, const ModelConfig& config, std::uint64_t seed);

// Checks that every tensor the config needs exists with the right shape.
template <typename T>
void check_params(const ParamStore<T>& params, const ModelConfig& config);

template <typename T>
struct EncoderOutput {
  Tensor<T> hidden;         // [L x d]
  Tensor<T> expert_vector;  // [1 x d], row 0 of hidden
};

// Dropout is active only when rng is non-null.
template <typename T>
class Encoder {
 public:
  explicit Encoder(ModelConfig config);
  const ModelConfig& config() const { return config_; }

  // token_ids overrides the sequence's token lane (masked inputs).
  Tensor<T> embed(ParamBinding<T>& p, const EncodedSequence& seq,
                  std::span<const int> token_ids, double dropout, Rng* rng) const;
  Tensor<T> attention(ParamBinding<T>& p, int layer, const Tensor<T>& x, int attention_len,
                      double dropout, Rng* rng) const;
  Tensor<T> ffn(ParamBinding<T>& p, int layer, const Tensor<T>& x, double dropout,
                Rng* rng) const;

  EncoderOutput<T> forward(ParamBinding<T>& p, const EncodedSequence& seq, double dropout,
                           Rng* rng) const;
  EncoderOutput<T> forward(ParamBinding<T>& p, const EncodedSequence& seq,
                           std::span<const int> token_ids, double dropout, Rng* rng) const;

  // [n x d] rows -> [n x V] word logits through the tied token table.
  Tensor<T> word_logits(ParamBinding<T>& p, const Tensor<T>& rows) const;
  // [1 x d] -> [1 x 10]; column c - 1 scores vote class c.
  Tensor<T> vote_logits(ParamBinding<T>& p, const Tensor<T>& expert_vector) const;
  // [1 x d] -> [1 x 1] matching score W_c e + mu_c.
  Tensor<T> score(ParamBinding<T>& p, const Tensor<T>& expert_vector) const;

 private:
  ModelConfig config_;
  std::vector<std::string> names_;  // per-layer parameter names, flattened
  const std::string& name(int layer, int slot) const;
};

}  // namespace expertfind
