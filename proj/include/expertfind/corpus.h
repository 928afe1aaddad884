// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

// Community Q&A records, vote normalization, expert profiles and the
// chronological train/validation/test split.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace expertfind {

// Milliseconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

// Accepts "YYYY-MM-DDTHH:MM:SS" with an optional fractional part of up to
// three digits (the dump format). Throws DataError on anything else.
Timestamp parse_timestamp(std::string_view text);
// Inverse of parse_timestamp; always prints milliseconds.
std::string format_timestamp(Timestamp t);

struct QuestionRecord {
  std::int64_t question_id = 0;
  std::string title;
  std::optional<std::int64_t> accepted_answer_id;
  Timestamp creation_time = 0;
  std::int64_t raw_score = 0;

  bool operator==(const QuestionRecord&) const = default;
};

struct AnswerRecord {
  std::int64_t answer_id = 0;
  std::int64_t parent_question_id = 0;
  std::int64_t owner_expert_id = 0;  // user id in the source data
  std::int64_t raw_vote_score = 0;
  Timestamp creation_time = 0;

  bool operator==(const AnswerRecord&) const = default;
};

struct ParseStats {
  std::size_t rows = 0;
  std::size_t missing_owner = 0;
  std::size_t missing_title = 0;
  std::size_t unknown_post_type = 0;
  // Answers whose parent question is absent; dropped.
  std::size_t dangling_answers = 0;
  // Accepted-answer links that do not resolve to a retained answer of the
  // same question; cleared.
  std::size_t unresolved_accepted = 0;
};

struct PostsData {
  std::vector<QuestionRecord> questions;
  std::vector<AnswerRecord> answers;
  ParseStats stats;
};

// Reads a StackExchange Posts.xml rows file. Uses the attributes Id,
// PostTypeId, ParentId, AcceptedAnswerId, Score, Title, OwnerUserId and
// CreationDate; everything else is ignored. Throws ParseError (with the line
// number) on malformed XML.
PostsData parse_posts(std::istream& in);

// Writes records back in the same schema; parse_posts(write_posts(x))
// reproduces the retained fields of x.
void write_posts(std::ostream& out, const PostsData& posts);

// Log-scaled mapping of raw vote scores onto the classes 1..10:
//   s = raw - v_min_raw + 1,  L = ln(s),
//   v = round(9 (L - log_min) / (log_max - log_min) + 1), clamped to [1, 10].
// A degenerate range maps every score to 1.
class VoteNormalizer {
 public:
  static constexpr int kMinClass = 1;
  static constexpr int kMaxClass = 10;

  VoteNormalizer() = default;
  VoteNormalizer(std::int64_t v_min_raw, std::int64_t v_max_raw);

  // Throws DataError for an empty list.
  static VoteNormalizer fit(std::span<const std::int64_t> raw_scores);

  int normalize(std::int64_t raw) const;

  std::int64_t v_min_raw() const { return v_min_raw_; }
  std::int64_t v_max_raw() const { return v_max_raw_; }
  double log_min() const { return log_min_; }
  double log_max() const { return log_max_; }

  void write(std::ostream& out) const;
  static VoteNormalizer read(std::istream& in);

 private:
  std::int64_t v_min_raw_ = 0;
  std::int64_t v_max_raw_ = 0;
  double log_min_ = 0.0;
  double log_max_ = 0.0;
};

std::pair<VoteNormalizer, std::vector<int>> normalize_votes(
    std::span<const std::int64_t> raw_scores);

struct HistoryItem {
  std::int64_t question_id = 0;
  std::int64_t answer_id = 0;
  int vote = 1;  // normalized class 1..10
  Timestamp answered_at = 0;

  bool operator==(const HistoryItem&) const = default;
};

struct ExpertProfile {
  int expert_id = 0;  // dense, 0-based
  std::int64_t user_id = 0;
  std::vector<HistoryItem> history;  // ascending by answered_at

  bool operator==(const ExpertProfile&) const = default;
};

class ProfileSet {
 public:
  ProfileSet() = default;
  explicit ProfileSet(std::vector<ExpertProfile> profiles);

  int size() const { return static_cast<int>(profiles_.size()); }
  const ExpertProfile& operator[](int expert_id) const { return profiles_[expert_id]; }
  std::span<const ExpertProfile> profiles() const { return profiles_; }

  // Dense id for a source user id; throws IndexError if unknown.
  int dense_id(std::int64_t user_id) const;
  bool contains_user(std::int64_t user_id) const { return dense_ids_.count(user_id) > 0; }

  // True if the expert answered at least one question strictly before t.
  bool active_before(int expert_id, Timestamp t) const;

 private:
  std::vector<ExpertProfile> profiles_;
  std::unordered_map<std::int64_t, int> dense_ids_;
};

// One profile per distinct answer owner, dense ids assigned in ascending
// user-id order, histories sorted by (answer time, answer id).
ProfileSet build_profiles(std::span<const QuestionRecord> questions,
                          std::span<const AnswerRecord> answers, const VoteNormalizer& normalizer);

struct SplitSpec {
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> validation;
  std::vector<std::int64_t> test;
};

// Questions with an accepted answer, ordered by (creation_time, id): the first
// floor(0.8 n) train, the next floor(0.1 n) validation, the rest test. Throws
// DataError for fewer than 10 such questions.
SplitSpec chronological_split(std::span<const QuestionRecord> questions);

// Posts plus everything derived from them. The normalizer is fitted on the
// answers created before the first validation question only.
class Corpus {
 public:
  Corpus() = default;
  static Corpus build(PostsData posts);

  // Assembles a corpus from already-derived parts (used when loading files).
  Corpus(std::vector<QuestionRecord> questions, std::vector<AnswerRecord> answers,
         VoteNormalizer normalizer, ProfileSet profiles, SplitSpec split);

  std::span<const QuestionRecord> questions() const { return questions_; }
  std::span<const AnswerRecord> answers() const { return answers_; }
  const VoteNormalizer& normalizer() const { return normalizer_; }
  const ProfileSet& profiles() const { return profiles_; }
  const SplitSpec& split() const { return split_; }
  const ParseStats& parse_stats() const { return parse_stats_; }

  const QuestionRecord& question(std::int64_t question_id) const;
  bool has_question(std::int64_t question_id) const;
  const AnswerRecord& answer(std::int64_t answer_id) const;
  // Answers to a question in (creation_time, answer_id) order.
  std::vector<const AnswerRecord*> answers_to(std::int64_t question_id) const;
  // Dense id of the accepted answerer, if the question has one.
  std::optional<int> accepted_expert(std::int64_t question_id) const;
  // Creation time of the first validation question (normalizer fit cutoff).
  Timestamp train_cutoff() const;

 private:
  void reindex();

  std::vector<QuestionRecord> questions_;
  std::vector<AnswerRecord> answers_;
  VoteNormalizer normalizer_;
  ProfileSet profiles_;
  SplitSpec split_;
  ParseStats parse_stats_;
  std::unordered_map<std::int64_t, std::size_t> question_index_;
  std::unordered_map<std::int64_t, std::size_t> answer_index_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> answers_by_question_;
};

// Summary statistics of a corpus.
struct CorpusStats {
  std::size_t questions = 0;
  std::size_t answerers = 0;
  std::size_t answers = 0;
  double density_percent = 0.0;  // answers / (questions x answerers) x 100
  double avg_title_length = 0.0;  // whitespace/punctuation tokens per title
};
CorpusStats corpus_stats(const Corpus& corpus);

// Record files written into a corpus directory:
//   questions.tsv, answers.tsv, profiles.tsv  (header line + one record per line)
//   split.tsv                                  (split name, question id)
//   normalizer.txt                             (key=value)
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace expertfind
