// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include "expertfind/finetune.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <unordered_set>

#include "expertfind/errors.h"
#include "expertfind/ops.h"
#include "expertfind/optim.h"
#include "expertfind/pretrain.h"
#include "parallel.h"

namespace expertfind {
namespace {

constexpr std::uint64_t kNegativeSalt = 0x4e454741ULL;
constexpr std::uint64_t kShuffleSalt = 0x45504f43ULL;
constexpr std::uint64_t kDropoutSalt = 0x46544452ULL;
constexpr std::uint64_t kHeadSalt = 0x48454144ULL;

}  // namespace

std::vector<int> eligible_negatives(const Corpus& corpus, std::int64_t question_id) {
  const Timestamp as_of = corpus.question(question_id).creation_time;
  const ProfileSet& profiles = corpus.profiles();
  std::unordered_set<int> answered;
  for (const AnswerRecord* a : corpus.answers_to(question_id)) {
    if (profiles.contains_user(a->owner_expert_id)) {
      answered.insert(profiles.dense_id(a->owner_expert_id));
    }
  }
  std::vector<int> out;
  for (int e = 0; e < profiles.size(); ++e) {
    if (!answered.count(e) && profiles.active_before(e, as_of)) out.push_back(e);
  }
  return out;
}

std::vector<int> sample_negatives(const Corpus& corpus, std::int64_t question_id, int k,
                                  Rng& rng) {
  if (k < 0) throw ConfigError("k must be non-negative");
  std::vector<int> pool = eligible_negatives(corpus, question_id);
  if (pool.size() < static_cast<std::size_t>(k)) {
    throw DataError("question " + std::to_string(question_id) + " has " +
                    std::to_string(pool.size()) + " eligible negatives, fewer than k = " +
                    std::to_string(k) + "; use a smaller k");
  }
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

std::vector<std::int64_t> train_subset(const Corpus& corpus, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("train_fraction must be in (0, 1]");
  const auto& train = corpus.split().train;
  const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(train.size())));
  return {train.begin(), train.begin() + static_cast<std::ptrdiff_t>(std::min(n, train.size()))};
}

InstanceSet make_instances(const Corpus& corpus, std::span<const std::int64_t> question_ids, int k,
                           std::uint64_t seed, std::uint64_t epoch) {
  InstanceSet out;
  for (std::int64_t qid : question_ids) {
    const auto positive = corpus.accepted_expert(qid);
    if (!positive) throw DataError("question " + std::to_string(qid) + " has no accepted answer");
    const Timestamp as_of = corpus.question(qid).creation_time;
    if (usable_history(corpus.profiles()[*positive], qid, as_of).empty()) {
      ++out.cold_positive;
      continue;
    }
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(qid), epoch, kNegativeSalt}));
    out.instances.push_back({qid, *positive, sample_negatives(corpus, qid, k, rng), as_of});
  }
  return out;
}

template <typename T>
Tensor<T> ranking_loss(const Tensor<T>& scores) {
  return cross_entropy(scores, 0);
}

template <typename T>
Tensor<T> instance_loss(const Encoder<T>& encoder, ParamBinding<T>& p,
                        std::span<const EncodedSequence> sequences, double dropout, Rng* rng) {
  if (sequences.empty()) throw DataError("ranking instance without candidates");
  std::vector<Tensor<T>> scores;
  for (const EncodedSequence& seq : sequences) {
    scores.push_back(encoder.score(p, encoder.forward(p, seq, dropout, rng).expert_vector));
  }
  return ranking_loss(stack_scalars(scores));
}

std::vector<EncodedSequence> instance_sequences(const Corpus& corpus, const TitleIndex& titles,
                                                const RankingInstance& instance,
                                                const AssemblyOptions& assembly) {
  std::vector<EncodedSequence> seqs;
  const ProfileSet& profiles = corpus.profiles();
  seqs.push_back(assemble(profiles[instance.positive], instance.question_id, instance.as_of,
                          titles, assembly));
  for (int e : instance.negatives) {
    seqs.push_back(assemble(profiles[e], instance.question_id, instance.as_of, titles, assembly));
  }
  return seqs;
}

FinetuneResult finetune(const Corpus& corpus, const TitleIndex& titles, const ModelConfig& model,
                        const FinetuneConfig& config, ParamStore<float>& params,
                        const FinetuneHooks& hooks) {
  if (config.batch_size < 1 || config.epochs < 0 || config.patience < 1) {
    throw ConfigError("fine-tuning needs batch_size >= 1, epochs >= 0 and patience >= 1");
  }
  if (config.assembly.max_len > model.max_len) {
    throw ConfigError("assembly max_len exceeds the model's position table");
  }
  check_params(params, model);
  FinetuneResult result;
  if (config.epochs == 0) return result;

  ensure_score_head(params, model, derive_seed({config.seed, kHeadSalt}));
  const Encoder<float> encoder(model);
  const std::vector<std::int64_t> train = train_subset(corpus, config.train_fraction);
  if (hooks.metrics) *hooks.metrics << "epoch\ttrain_loss\tvalidation_mrr\twall_ms\n";

  EvalOptions eval;
  eval.seed = config.seed;
  eval.assembly = config.assembly;
  eval.limit = config.validation_limit;

  ParamStore<float> best = params;
  AdamState<float> adam;
  std::int64_t step = 0;
  int since_best = 0;
  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    InstanceSet set =
        make_instances(corpus, train, config.k, config.seed, static_cast<std::uint64_t>(epoch));
    if (set.instances.empty()) throw DataError("no trainable fine-tuning instances");
    result.instances = set.instances.size();
    result.cold_positive = set.cold_positive;
    Rng order(derive_seed({config.seed, static_cast<std::uint64_t>(epoch), kShuffleSalt}));
    auto& inst = set.instances;
    for (std::size_t i = inst.size(); i > 1; --i) {
      std::swap(inst[i - 1], inst[static_cast<std::size_t>(order.below(i))]);
    }
    const std::int64_t total_steps =
        static_cast<std::int64_t>(config.epochs) *
        static_cast<std::int64_t>((inst.size() + config.batch_size - 1) / config.batch_size);

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < inst.size(); begin += config.batch_size) {
      const std::size_t end = std::min(inst.size(), begin + config.batch_size);
      const std::size_t n = end - begin;
      ++step;
      std::vector<double> losses(n);
      std::vector<Gradients<float>> grads(n);
      detail::parallel_for(n, config.workers, [&](std::size_t i, int) {
        const RankingInstance& r = inst[begin + i];
        const auto seqs = instance_sequences(corpus, titles, r, config.assembly);
        Tape<float> tape;
        ParamBinding<float> b(params, &tape);
        Rng drop(derive_seed({config.seed, static_cast<std::uint64_t>(r.question_id),
                              static_cast<std::uint64_t>(epoch), kDropoutSalt}));
        const Tensor<float> loss = instance_loss(encoder, b, std::span<const EncodedSequence>(seqs),
                                                 model.dropout_finetune, &drop);
        losses[i] = loss.item();
        tape.backward(scale(loss, 1.0f / static_cast<float>(n)));
        grads[i] = b.gradients();
      });
      Gradients<float> total(params);
      bool finite = true;
      for (std::size_t i = 0; i < n; ++i) {
        loss_sum += losses[i];
        finite = finite && std::isfinite(losses[i]);
        for (std::size_t k = 0; k < total.size(); ++k) {
          auto dst = total[k];
          const auto src = grads[i][k];
          for (std::size_t j = 0; j < dst.size(); ++j) {
            dst[j] += src[j];
            finite = finite && std::isfinite(dst[j]);
          }
        }
      }
      if (!finite) {
        params = best;
        throw NumericalError("fine-tuning diverged in epoch " + std::to_string(epoch) +
                             "; parameters reset to the best epoch so far");
      }
      adam_step(params, total, adam,
                warmup_lr(config.learning_rate, config.warmup_fraction, static_cast<int>(step),
                          static_cast<int>(total_steps)));
    }

    FinetuneEpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(inst.size());
    log.validation_mrr = evaluate(corpus, titles, corpus.split().validation,
                                  model_scorer(encoder, params, config.workers), eval)
                             .metrics.mrr;
    log.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    result.log.push_back(log);
    if (hooks.metrics) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%d\t%.9g\t%.9g\t%.1f\n", log.epoch, log.train_loss,
                    log.validation_mrr, log.wall_ms);
      *hooks.metrics << buf;
    }
    if (result.best_epoch == 0 || log.validation_mrr > result.best_validation_mrr) {
      result.best_epoch = epoch;
      result.best_validation_mrr = log.validation_mrr;
      best = params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.stopped_early = epoch < config.epochs;
      break;
    }
  }
  params = std::move(best);
  return result;
}

template Tensor<float> ranking_loss(const Tensor<float>&);
template Tensor<double> ranking_loss(const Tensor<double>&);
template Tensor<float> instance_loss(const Encoder<float>&, ParamBinding<float>&,
                                     std::span<const EncodedSequence>, double, Rng*);
template Tensor<double> instance_loss(const Encoder<double>&, ParamBinding<double>&,
                                      std::span<const EncodedSequence>, double, Rng*);

}  // namespace expertfind
