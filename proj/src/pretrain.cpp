// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include "expertfind/pretrain.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <ostream>

#include "expertfind/errors.h"
#include "expertfind/ops.h"
#include "expertfind/optim.h"
#include "parallel.h"

namespace expertfind {
namespace {

constexpr std::uint64_t kDropoutSalt = 0x44524f50ULL;
constexpr std::uint64_t kOrderSalt = 0x4f524452ULL;

template <typename T>
Tensor<T> scaled_or_zero(const std::vector<Tensor<T>>& parts, int count) {
  Tensor<T> acc;
  for (const auto& t : parts) {
    if (!t.defined()) continue;
    acc = acc.defined() ? add(acc, t) : t;
  }
  if (!acc.defined() || count == 0) return Tensor<T>::scalar(T(0));
  return scale(acc, static_cast<T>(1.0 / count));
}

template <typename T>
bool all_finite(const Gradients<T>& g) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (T v : g[i]) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace

PretrainPairs pretrain_pairs(const Corpus& corpus, std::span<const std::int64_t> question_ids) {
  PretrainPairs out;
  const ProfileSet& profiles = corpus.profiles();
  for (std::int64_t qid : question_ids) {
    const Timestamp as_of = corpus.question(qid).creation_time;
    for (const AnswerRecord* a : corpus.answers_to(qid)) {
      if (!profiles.contains_user(a->owner_expert_id)) continue;
      const int e = profiles.dense_id(a->owner_expert_id);
      if (usable_history(profiles[e], qid, as_of).empty()) {
        ++out.cold_skipped;
        continue;
      }
      out.pairs.push_back({e, qid, as_of, corpus.normalizer().normalize(a->raw_vote_score)});
    }
  }
  return out;
}

PretrainExample make_pretrain_example(const PretrainPair& pair, const ProfileSet& profiles,
                                      const TitleIndex& titles, const PretrainConfig& config,
                                      int vocab_size, std::uint64_t round) {
  PretrainExample ex;
  ex.sequence = assemble(profiles[pair.expert_id], pair.question_id, pair.as_of, titles,
                         config.assembly);
  MaskingOptions masking = config.masking;
  if (!config.tasks.word) masking.word_ratio = 0.0;
  if (!config.tasks.question) masking.question_ratio = 0.0;
  Rng rng(sequence_seed(config.seed, pair.question_id, pair.expert_id, round));
  ex.plan = make_pretrain_plan(ex.sequence, pair.vote_class, masking, vocab_size, rng);
  return ex;
}

template <typename T>
ExampleTerms<T> example_terms(const Encoder<T>& encoder, ParamBinding<T>& p,
                              const PretrainExample& example, const PretrainTasks& tasks,
                              double dropout, Rng* rng) {
  const EncodedSequence& seq = example.sequence;
  const MaskingPlan& plan = example.plan;
  const std::vector<int> inputs = apply_plan(seq, plan);
  const EncoderOutput<T> out = encoder.forward(p, seq, inputs, dropout, rng);
  ExampleTerms<T> terms;
  if (tasks.word && !plan.word_positions.empty()) {
    std::vector<int> targets;
    for (int pos : plan.word_positions) targets.push_back(seq.token_ids[pos]);
    const Tensor<T> rows = gather_rows(out.hidden, std::span<const int>(plan.word_positions));
    terms.word_sum = cross_entropy_sum(encoder.word_logits(p, rows), std::span<const int>(targets));
    terms.word_count = static_cast<int>(targets.size());
  }
  if (tasks.question && plan.masked_span) {
    const QuestionSpan& span = seq.question_spans.at(static_cast<std::size_t>(*plan.masked_span));
    const std::vector<int> targets(seq.token_ids.begin() + span.start,
                                   seq.token_ids.begin() + span.end);
    const Tensor<T> rows = slice_rows(out.hidden, static_cast<std::size_t>(span.start),
                                      static_cast<std::size_t>(span.length()));
    terms.question_sum =
        cross_entropy_sum(encoder.word_logits(p, rows), std::span<const int>(targets));
    terms.question_count = span.length();
  }
  if (tasks.vote) {
    if (plan.vote_class < 1 || plan.vote_class > kVoteClasses) {
      throw DataError("vote label " + std::to_string(plan.vote_class) + " outside 1..10");
    }
    terms.vote = cross_entropy(encoder.vote_logits(p, out.expert_vector), plan.vote_class - 1);
  }
  return terms;
}

template <typename T>
PretrainLoss<T> pretrain_loss(const Encoder<T>& encoder, ParamBinding<T>& p,
                              std::span<const PretrainExample> batch, const PretrainTasks& tasks,
                              double dropout, Rng* rng) {
  if (batch.empty()) throw DataError("empty pre-training batch");
  std::vector<Tensor<T>> words, questions, votes;
  PretrainLoss<T> loss;
  for (const PretrainExample& ex : batch) {
    ExampleTerms<T> t = example_terms(encoder, p, ex, tasks, dropout, rng);
    words.push_back(t.word_sum);
    questions.push_back(t.question_sum);
    votes.push_back(t.vote);
    loss.word_positions += t.word_count;
    loss.question_positions += t.question_count;
  }
  loss.word = scaled_or_zero(words, loss.word_positions);
  loss.question = scaled_or_zero(questions, loss.question_positions);
  loss.vote = scaled_or_zero(votes, tasks.vote ? static_cast<int>(batch.size()) : 0);
  loss.word_skipped = tasks.word && loss.word_positions == 0;
  loss.total = add(add(loss.word, loss.question), loss.vote);
  return loss;
}

double warmup_lr(double lr, double warmup_fraction, int step, int steps) {
  const int warm = static_cast<int>(std::ceil(warmup_fraction * steps));
  if (warm > 0 && step <= warm) return lr * step / warm;
  return lr;
}

void write_metrics_header(std::ostream& out) {
  out << "step\tword_mlm\tquestion_mlm\tvote\ttotal\twall_ms\n";
}

void write_metrics_line(std::ostream& out, const PretrainStepLog& log) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d\t%.9g\t%.9g\t%.9g\t%.9g\t%.1f\n", log.step, log.word,
                log.question, log.vote, log.total, log.wall_ms);
  out << buf;
}

PretrainResult pretrain(const Corpus& corpus, const TitleIndex& titles, const ModelConfig& model,
                        const PretrainConfig& config, ParamStore<float>& params,
                        const PretrainHooks& hooks) {
  std::vector<std::int64_t> ids;
  const Timestamp cutoff = corpus.train_cutoff();
  for (const QuestionRecord& q : corpus.questions()) {
    if (q.creation_time < cutoff) ids.push_back(q.question_id);
  }
  const PretrainPairs pairs = pretrain_pairs(corpus, ids);
  PretrainResult result =
      pretrain(pairs.pairs, corpus.profiles(), titles, model, config, params, hooks);
  result.cold_skipped = pairs.cold_skipped;
  return result;
}

PretrainResult pretrain(std::span<const PretrainPair> pairs, const ProfileSet& profiles,
                        const TitleIndex& titles, const ModelConfig& model,
                        const PretrainConfig& config, ParamStore<float>& params,
                        const PretrainHooks& hooks) {
  if (pairs.empty()) throw DataError("no pre-training examples (every answerer is cold?)");
  if (config.batch_size < 1 || config.steps < 0) {
    throw ConfigError("pre-training needs batch_size >= 1 and steps >= 0");
  }
  if (config.assembly.max_len > model.max_len) {
    throw ConfigError("assembly max_len exceeds the model's position table");
  }
  check_params(params, model);
  const Encoder<float> encoder(model);
  const int vocab_size = model.word_vocab;
  const int batch = config.batch_size;

  PretrainResult result;
  result.pairs = pairs.size();
  if (hooks.metrics) write_metrics_header(*hooks.metrics);

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng order_rng(derive_seed({config.seed, kOrderSalt}));
  std::size_t cursor = order.size();

  AdamState<float> adam;
  const auto start = std::chrono::steady_clock::now();
  for (int step = 1; step <= config.steps; ++step) {
    std::vector<const PretrainPair*> chosen;
    for (int b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) {
          std::swap(order[i - 1], order[static_cast<std::size_t>(order_rng.below(i))]);
        }
        cursor = 0;
      }
      chosen.push_back(&pairs[order[cursor++]]);
    }

    std::vector<PretrainExample> examples(chosen.size());
    detail::parallel_for(chosen.size(), config.workers, [&](std::size_t i, int) {
      examples[i] = make_pretrain_example(*chosen[i], profiles, titles, config, vocab_size,
                                          static_cast<std::uint64_t>(step));
    });
    int word_total = 0, question_total = 0;
    for (const auto& ex : examples) {
      if (config.tasks.word) word_total += static_cast<int>(ex.plan.word_positions.size());
      if (config.tasks.question && ex.plan.masked_span) {
        question_total +=
            ex.sequence.question_spans[static_cast<std::size_t>(*ex.plan.masked_span)].length();
      }
    }
    const double word_scale = word_total ? 1.0 / word_total : 0.0;
    const double question_scale = question_total ? 1.0 / question_total : 0.0;
    const double vote_scale = config.tasks.vote ? 1.0 / batch : 0.0;

    struct Parts {
      double word = 0, question = 0, vote = 0;
      Gradients<float> grads;
    };
    std::vector<Parts> parts(examples.size());
    detail::parallel_for(examples.size(), config.workers, [&](std::size_t i, int) {
      Tape<float> tape;
      ParamBinding<float> b(params, &tape);
      const PretrainPair& pair = *chosen[i];
      Rng drop(derive_seed({config.seed, static_cast<std::uint64_t>(pair.question_id),
                            static_cast<std::uint64_t>(pair.expert_id),
                            static_cast<std::uint64_t>(step), kDropoutSalt}));
      const ExampleTerms<float> t =
          example_terms(encoder, b, examples[i], config.tasks, model.dropout_pretrain, &drop);
      Tensor<float> loss;
      const auto accumulate = [&](const Tensor<float>& term, double factor, double& value) {
        if (!term.defined()) return;
        value = term.item();
        const Tensor<float> s = scale(term, static_cast<float>(factor));
        loss = loss.defined() ? add(loss, s) : s;
      };
      accumulate(t.word_sum, word_scale, parts[i].word);
      accumulate(t.question_sum, question_scale, parts[i].question);
      accumulate(t.vote, vote_scale, parts[i].vote);
      parts[i].grads = Gradients<float>(params);
      if (loss.defined()) {
        tape.backward(loss);
        b.accumulate_into(parts[i].grads);
      }
    });

    PretrainStepLog log;
    log.step = step;
    Gradients<float> grads(params);
    for (const Parts& part : parts) {
      log.word += part.word * word_scale;
      log.question += part.question * question_scale;
      log.vote += part.vote * vote_scale;
      for (std::size_t k = 0; k < grads.size(); ++k) {
        auto dst = grads[k];
        const auto src = part.grads[k];
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
    }
    log.total = log.word + log.question + log.vote;
    if (config.tasks.word && word_total == 0) ++result.word_skips;
    if (!std::isfinite(log.total) || !all_finite(grads)) {
      throw NumericalError("pre-training diverged at step " + std::to_string(step) +
                           " (non-finite loss or gradient); parameters hold step " +
                           std::to_string(step - 1));
    }
    adam_step(params, grads, adam, warmup_lr(config.learning_rate, config.warmup_fraction, step,
                                             config.steps));
    log.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    if (config.log_every > 0 && (step % config.log_every == 0 || step == config.steps)) {
      result.log.push_back(log);
      if (hooks.metrics) write_metrics_line(*hooks.metrics, log);
    }
    if (hooks.checkpoint && config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
      hooks.checkpoint(step, params);
    }
  }
  return result;
}

double vote_accuracy(const Encoder<float>& encoder, const ParamStore<float>& params,
                     std::span<const PretrainPair> pairs, const ProfileSet& profiles,
                     const TitleIndex& titles, const AssemblyOptions& assembly, int workers) {
  if (pairs.empty()) throw DataError("no pairs to score vote accuracy on");
  std::vector<char> hit(pairs.size(), 0);
  std::vector<std::unique_ptr<ParamBinding<float>>> bindings(
      static_cast<std::size_t>(detail::worker_slots(workers)));
  detail::parallel_for(pairs.size(), workers, [&](std::size_t i, int w) {
    auto& b = bindings[static_cast<std::size_t>(w)];
    if (!b) b = std::make_unique<ParamBinding<float>>(params, nullptr);
    const PretrainPair& pair = pairs[i];
    const EncodedSequence seq =
        assemble(profiles[pair.expert_id], pair.question_id, pair.as_of, titles, assembly);
    const auto out = encoder.forward(*b, seq, 0.0, nullptr);
    const Tensor<float> logit_tensor = encoder.vote_logits(*b, out.expert_vector);
    const auto logits = logit_tensor.values();
    const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
    hit[i] = best + 1 == pair.vote_class;
  });
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) /
         static_cast<double>(pairs.size());
}

template ExampleTerms<float> example_terms(const Encoder<float>&, ParamBinding<float>&,
                                           const PretrainExample&, const PretrainTasks&, double,
                                           Rng*);
template ExampleTerms<double> example_terms(const Encoder<double>&, ParamBinding<double>&,
                                            const PretrainExample&, const PretrainTasks&, double,
                                            Rng*);
template PretrainLoss<float> pretrain_loss(const Encoder<float>&, ParamBinding<float>&,
                                           std::span<const PretrainExample>,
                                           const PretrainTasks&, double, Rng*);
template PretrainLoss<double> pretrain_loss(const Encoder<double>&, ParamBinding<double>&,
                                            std::span<const PretrainExample>,
                                            const PretrainTasks&, double, Rng*);

}  // namespace expertfind
