// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded generator of small Q&A corpora with a planted expertise signal.
//
// Every expert has a primary topic (expert index mod topics) with affinity
// `primary_affinity` and affinity `secondary_affinity` elsewhere, plus a
// per-topic skill in 1..10 drawn around a base skill. Questions pick a
// topic uniformly and a title mixing topic words ("t<topic>w<i>") with
// shared filler words ("c<i>"). The accepted answerer is drawn with weight
// (affinity x skill)^sharpness, or affinity^sharpness when
// `skill_weighted_answers` is off; extra answerers are drawn by affinity.
// Vote classes sit at the answerer's topic skill (minus `other_vote_shift`
// for non-accepted answers) plus Gaussian noise, and are converted back to
// raw scores so that the log normalizer recovers the class.

#pragma once

#include <cstdint>
#include <vector>

#include "expertfind/corpus.h"

namespace expertfind {

struct SyntheticConfig {
  int experts = 50;
  int topics = 5;
  int questions = 2000;
  std::uint64_t seed = 1;

  int words_per_topic = 40;
  int common_words = 30;
  int title_min_tokens = 4;
  int title_max_tokens = 8;
  double topic_word_prob = 0.75;

  double primary_affinity = 1.0;
  double secondary_affinity = 0.05;
  double sharpness = 1.0;
  double skill_variance = 1.0;  // standard deviation around the base skill
  bool skill_weighted_answers = true;
  int max_extra_answers = 3;

  double vote_noise = 0.5;  // standard deviation, in vote classes
  int other_vote_shift = 2;

  Timestamp start_time = 1'577'836'800'000;  // 2020-01-01T00:00:00
  Timestamp question_interval_ms = 3'600'000;
  Timestamp answer_interval_ms = 60'000;
};

struct SyntheticTruth {
  std::vector<int> primary_topic;              // per expert index
  std::vector<std::vector<double>> affinity;   // [expert][topic]
  std::vector<std::vector<int>> skill;         // [expert][topic], 1..10
  std::vector<int> question_topic;             // per question, in generation order
  std::vector<int> best_expert;                // per topic: argmax affinity x skill
  std::vector<std::int64_t> user_id;           // per expert index

  // Expert index for a source user id.
  int expert_of_user(std::int64_t user_id) const;
};

struct SyntheticCorpus {
  PostsData posts;
  SyntheticTruth truth;
};

// Class -> raw score such that a normalizer fitted on classes 1..10 maps it
// back: round(1000^((c - 1) / 9)) - 6.
std::int64_t synthetic_raw_vote(int vote_class);

// Throws ConfigError unless experts, topics and questions are positive and
// the remaining knobs are in range.
SyntheticCorpus generate_synthetic(const SyntheticConfig& config);

}  // namespace expertfind
