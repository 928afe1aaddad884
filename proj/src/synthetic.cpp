// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include "expertfind/synthetic.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "expertfind/errors.h"
#include "expertfind/rng.h"

namespace expertfind {
namespace {

void validate(const SyntheticConfig& c) {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("synthetic config: ") + what);
  };
  require(c.experts > 0, "experts must be positive");
  require(c.topics > 0, "topics must be positive");
  require(c.questions > 0, "questions must be positive");
  require(c.words_per_topic > 0, "words_per_topic must be positive");
  require(c.common_words > 0, "common_words must be positive");
  require(c.title_min_tokens > 0 && c.title_min_tokens <= c.title_max_tokens,
          "title token bounds must satisfy 0 < min <= max");
  require(c.topic_word_prob >= 0.0 && c.topic_word_prob <= 1.0, "topic_word_prob outside [0,1]");
  require(c.primary_affinity > 0.0 && c.secondary_affinity >= 0.0, "affinities must be positive");
  require(c.sharpness > 0.0, "sharpness must be positive");
  require(c.skill_variance >= 0.0 && c.vote_noise >= 0.0, "variances must be non-negative");
  require(c.max_extra_answers >= 0, "max_extra_answers must be non-negative");
  require(c.question_interval_ms > c.answer_interval_ms * (c.max_extra_answers + 1),
          "question_interval_ms must exceed the span of one question's answers");
}

int clamp_class(double v) {
  return static_cast<int>(std::clamp(std::round(v), 1.0, 10.0));
}

// Index drawn proportionally to weights; zero entries are never chosen.
int draw_weighted(std::span<const double> weights, Rng& rng) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw DataError("synthetic generator: no expert has positive weight");
  double u = rng.uniform() * total;
  int last_positive = -1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    if (u < weights[i]) return last_positive;
    u -= weights[i];
  }
  return last_positive;
}

}  // namespace

int SyntheticTruth::expert_of_user(std::int64_t uid) const {
  const auto it = std::find(user_id.begin(), user_id.end(), uid);
  if (it == user_id.end()) throw IndexError("unknown synthetic user id " + std::to_string(uid));
  return static_cast<int>(it - user_id.begin());
}

std::int64_t synthetic_raw_vote(int vote_class) {
  return std::llround(std::pow(1000.0, (vote_class - 1) / 9.0)) - 6;
}

SyntheticCorpus generate_synthetic(const SyntheticConfig& c) {
  validate(c);
  Rng rng(derive_seed({c.seed, 0x53594e5448ULL}));
  SyntheticCorpus out;
  SyntheticTruth& truth = out.truth;

  const int M = c.experts;
  const int T = c.topics;
  truth.primary_topic.resize(M);
  truth.affinity.assign(M, std::vector<double>(T, c.secondary_affinity));
  truth.skill.assign(M, std::vector<int>(T, 1));
  truth.user_id.resize(M);
  for (int e = 0; e < M; ++e) {
    truth.primary_topic[e] = e % T;
    truth.affinity[e][e % T] = c.primary_affinity;
    truth.user_id[e] = 1000 + e;
    const int base = 1 + (e / T) % 10;
    for (int t = 0; t < T; ++t) {
      truth.skill[e][t] =
          c.skill_variance > 0.0 ? clamp_class(base + c.skill_variance * rng.normal()) : base;
    }
  }
  truth.best_expert.assign(T, 0);
  for (int t = 0; t < T; ++t) {
    double best = -1.0;
    for (int e = 0; e < M; ++e) {
      const double v = truth.affinity[e][t] * truth.skill[e][t];
      if (v > best) {
        best = v;
        truth.best_expert[t] = e;
      }
    }
  }

  // Per-topic sampling weights, fixed for the whole corpus.
  std::vector<std::vector<double>> accept_w(T, std::vector<double>(M));
  std::vector<std::vector<double>> extra_w(T, std::vector<double>(M));
  for (int t = 0; t < T; ++t) {
    for (int e = 0; e < M; ++e) {
      const double base = c.skill_weighted_answers ? truth.affinity[e][t] * truth.skill[e][t]
                                                   : truth.affinity[e][t];
      accept_w[t][e] = std::pow(base, c.sharpness);
      extra_w[t][e] = truth.affinity[e][t];
    }
  }

  std::int64_t next_answer_id = c.questions + 1;
  truth.question_topic.reserve(c.questions);
  for (int i = 0; i < c.questions; ++i) {
    const int topic = static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
    truth.question_topic.push_back(topic);

    QuestionRecord q;
    q.question_id = i + 1;
    q.creation_time = c.start_time + static_cast<Timestamp>(i) * c.question_interval_ms;
    const int len = c.title_min_tokens +
                    static_cast<int>(rng.below(c.title_max_tokens - c.title_min_tokens + 1));
    for (int k = 0; k < len; ++k) {
      if (k) q.title += ' ';
      if (rng.bernoulli(c.topic_word_prob)) {
        q.title += "t" + std::to_string(topic) + "w" + std::to_string(rng.below(c.words_per_topic));
      } else {
        q.title += "c" + std::to_string(rng.below(c.common_words));
      }
    }
    q.raw_score = static_cast<std::int64_t>(rng.below(10));

    const int accepted = draw_weighted(accept_w[topic], rng);
    std::vector<int> answerers = {accepted};
    const int extras = static_cast<int>(rng.below(c.max_extra_answers + 1));
    std::vector<double> w = extra_w[topic];
    w[accepted] = 0.0;
    for (int k = 0; k < extras; ++k) {
      if (std::none_of(w.begin(), w.end(), [](double x) { return x > 0.0; })) break;
      const int e = draw_weighted(w, rng);
      answerers.push_back(e);
      w[e] = 0.0;
    }
    // The accepted answer is not necessarily the first one posted.
    const std::size_t accepted_slot = rng.below(answerers.size());
    std::swap(answerers[0], answerers[accepted_slot]);

    for (std::size_t k = 0; k < answerers.size(); ++k) {
      const int e = answerers[k];
      const bool is_accepted = k == accepted_slot;
      const double mean = truth.skill[e][topic] - (is_accepted ? 0 : c.other_vote_shift);
      const int cls = clamp_class(c.vote_noise > 0.0 ? mean + c.vote_noise * rng.normal() : mean);
      AnswerRecord a;
      a.answer_id = next_answer_id++;
      a.parent_question_id = q.question_id;
      a.owner_expert_id = truth.user_id[e];
      a.raw_vote_score = synthetic_raw_vote(cls);
      a.creation_time = q.creation_time + static_cast<Timestamp>(k + 1) * c.answer_interval_ms;
      if (is_accepted) q.accepted_answer_id = a.answer_id;
      out.posts.answers.push_back(a);
    }
    out.posts.questions.push_back(std::move(q));
  }
  return out;
}

}  // namespace expertfind
