// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include "expertfind/corpus.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <unordered_set>

#include "expertfind/errors.h"
#include "text_util.h"

namespace expertfind {

namespace {

bool digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  out = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    out = out * 10 + (s[i] - '0');
  }
  return true;
}

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
  const std::string_view s = detail::trim(text);
  int y, mo, d, h, mi, sec;
  const bool ok = digits(s, 0, 4, y) && s.size() >= 19 && s[4] == '-' && digits(s, 5, 2, mo) &&
                  s[7] == '-' && digits(s, 8, 2, d) && (s[10] == 'T' || s[10] == ' ') &&
                  digits(s, 11, 2, h) && s[13] == ':' && digits(s, 14, 2, mi) && s[16] == ':' &&
                  digits(s, 17, 2, sec);
  if (!ok) throw DataError("invalid timestamp '" + std::string(text) + "'");
  int millis = 0;
  if (s.size() > 19) {
    if (s[19] != '.' || s.size() == 20 || s.size() > 23) {
      throw DataError("invalid timestamp '" + std::string(text) + "'");
    }
    int frac = 0;
    const std::size_t n = s.size() - 20;
    if (!digits(s, 20, n, frac)) throw DataError("invalid timestamp '" + std::string(text) + "'");
    millis = frac * (n == 1 ? 100 : n == 2 ? 10 : 1);
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 59) {
    throw DataError("invalid timestamp '" + std::string(text) + "'");
  }
  const auto days = sys_days(ymd).time_since_epoch().count();
  return ((static_cast<Timestamp>(days) * 24 + h) * 60 + mi) * 60000 +
         static_cast<Timestamp>(sec) * 1000 + millis;
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  constexpr Timestamp kDayMs = 86'400'000;
  Timestamp days = t / kDayMs;
  Timestamp rem = t % kDayMs;
  if (rem < 0) {
    rem += kDayMs;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d.%03d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3'600'000), static_cast<int>(rem / 60'000 % 60),
                static_cast<int>(rem / 1000 % 60), static_cast<int>(rem % 1000));
  return buf;
}

VoteNormalizer::VoteNormalizer(std::int64_t v_min_raw, std::int64_t v_max_raw)
    : v_min_raw_(v_min_raw), v_max_raw_(v_max_raw) {
  if (v_min_raw > v_max_raw) throw DataError("vote normalizer: v_min_raw > v_max_raw");
  log_min_ = std::log(1.0);
  log_max_ = std::log(static_cast<double>(v_max_raw - v_min_raw) + 1.0);
}

VoteNormalizer VoteNormalizer::fit(std::span<const std::int64_t> raw_scores) {
  if (raw_scores.empty()) throw DataError("vote normalizer: empty score list");
  const auto [lo, hi] = std::minmax_element(raw_scores.begin(), raw_scores.end());
  return VoteNormalizer(*lo, *hi);
}

int VoteNormalizer::normalize(std::int64_t raw) const {
  if (log_max_ <= log_min_) return kMinClass;
  // Scores outside the fitted range (later data) clamp to the end classes.
  const double s = std::max(1.0, static_cast<double>(raw - v_min_raw_) + 1.0);
  const double scaled = 9.0 * (std::log(s) - log_min_) / (log_max_ - log_min_) + 1.0;
  const double v = std::round(scaled);
  return static_cast<int>(std::clamp(v, double{kMinClass}, double{kMaxClass}));
}

void VoteNormalizer::write(std::ostream& out) const {
  out << "v_min_raw=" << v_min_raw_ << '\n'
      << "v_max_raw=" << v_max_raw_ << '\n'
      << "log_min=" << detail::format_double(log_min_) << '\n'
      << "log_max=" << detail::format_double(log_max_) << '\n';
}

VoteNormalizer VoteNormalizer::read(std::istream& in) {
  const auto kv = detail::read_key_values(in);
  const auto get = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw DataError(std::string("normalizer file missing key ") + key);
    return it->second;
  };
  VoteNormalizer n(detail::parse_int<std::int64_t>(get("v_min_raw"), "v_min_raw"),
                   detail::parse_int<std::int64_t>(get("v_max_raw"), "v_max_raw"));
  n.log_min_ = detail::parse_double(get("log_min"), "log_min");
  n.log_max_ = detail::parse_double(get("log_max"), "log_max");
  return n;
}

std::pair<VoteNormalizer, std::vector<int>> normalize_votes(
    std::span<const std::int64_t> raw_scores) {
  VoteNormalizer n = VoteNormalizer::fit(raw_scores);
  std::vector<int> classes;
  classes.reserve(raw_scores.size());
  for (std::int64_t raw : raw_scores) classes.push_back(n.normalize(raw));
  return {n, std::move(classes)};
}

ProfileSet::ProfileSet(std::vector<ExpertProfile> profiles) : profiles_(std::move(profiles)) {
  for (std::size_t i = 0; i < profiles_.size(); ++i) {
    if (profiles_[i].expert_id != static_cast<int>(i)) {
      throw DataError("profile " + std::to_string(i) + " has non-dense expert id " +
                      std::to_string(profiles_[i].expert_id));
    }
    if (!dense_ids_.emplace(profiles_[i].user_id, static_cast<int>(i)).second) {
      throw DataError("duplicate profile for user " + std::to_string(profiles_[i].user_id));
    }
  }
}

int ProfileSet::dense_id(std::int64_t user_id) const {
  const auto it = dense_ids_.find(user_id);
  if (it == dense_ids_.end()) throw IndexError("unknown expert user id " + std::to_string(user_id));
  return it->second;
}

bool ProfileSet::active_before(int expert_id, Timestamp t) const {
  const auto& h = profiles_.at(static_cast<std::size_t>(expert_id)).history;
  return !h.empty() && h.front().answered_at < t;
}

ProfileSet build_profiles(std::span<const QuestionRecord> questions,
                          std::span<const AnswerRecord> answers,
                          const VoteNormalizer& normalizer) {
  std::unordered_set<std::int64_t> known;
  for (const auto& q : questions) known.insert(q.question_id);
  std::map<std::int64_t, std::vector<HistoryItem>> by_user;
  for (const auto& a : answers) {
    if (!known.count(a.parent_question_id)) continue;
    by_user[a.owner_expert_id].push_back(
        {a.parent_question_id, a.answer_id, normalizer.normalize(a.raw_vote_score), a.creation_time});
  }
  std::vector<ExpertProfile> profiles;
  profiles.reserve(by_user.size());
  for (auto& [user, history] : by_user) {
    std::sort(history.begin(), history.end(), [](const HistoryItem& x, const HistoryItem& y) {
      return x.answered_at != y.answered_at ? x.answered_at < y.answered_at
                                            : x.answer_id < y.answer_id;
    });
    profiles.push_back({static_cast<int>(profiles.size()), user, std::move(history)});
  }
  return ProfileSet(std::move(profiles));
}

SplitSpec chronological_split(std::span<const QuestionRecord> questions) {
  std::vector<const QuestionRecord*> eligible;
  for (const auto& q : questions) {
    if (q.accepted_answer_id) eligible.push_back(&q);
  }
  if (eligible.size() < 10) {
    throw DataError("chronological split needs at least 10 questions with an accepted answer, got " +
                    std::to_string(eligible.size()));
  }
  std::sort(eligible.begin(), eligible.end(), [](const QuestionRecord* a, const QuestionRecord* b) {
    return a->creation_time != b->creation_time ? a->creation_time < b->creation_time
                                                : a->question_id < b->question_id;
  });
  const std::size_t n = eligible.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  SplitSpec split;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? split.train : i < n_train + n_val ? split.validation : split.test;
    dst.push_back(eligible[i]->question_id);
  }
  return split;
}

Corpus Corpus::build(PostsData posts) {
  SplitSpec split = chronological_split(posts.questions);
  Corpus c;
  c.questions_ = std::move(posts.questions);
  c.answers_ = std::move(posts.answers);
  c.split_ = std::move(split);
  c.parse_stats_ = posts.stats;
  c.reindex();

  const Timestamp cutoff = c.train_cutoff();
  std::vector<std::int64_t> fit_scores;
  for (const auto& a : c.answers_) {
    if (a.creation_time < cutoff) fit_scores.push_back(a.raw_vote_score);
  }
  if (fit_scores.empty()) {
    throw DataError("no answers before the first validation question to fit the vote normalizer");
  }
  c.normalizer_ = VoteNormalizer::fit(fit_scores);
  c.profiles_ = build_profiles(c.questions_, c.answers_, c.normalizer_);
  return c;
}

Corpus::Corpus(std::vector<QuestionRecord> questions, std::vector<AnswerRecord> answers,
               VoteNormalizer normalizer, ProfileSet profiles, SplitSpec split)
    : questions_(std::move(questions)),
      answers_(std::move(answers)),
      normalizer_(normalizer),
      profiles_(std::move(profiles)),
      split_(std::move(split)) {
  reindex();
}

void Corpus::reindex() {
  question_index_.clear();
  answer_index_.clear();
  answers_by_question_.clear();
  for (std::size_t i = 0; i < questions_.size(); ++i) {
    if (!question_index_.emplace(questions_[i].question_id, i).second) {
      throw DataError("duplicate question id " + std::to_string(questions_[i].question_id));
    }
  }
  for (std::size_t i = 0; i < answers_.size(); ++i) {
    const auto& a = answers_[i];
    if (!answer_index_.emplace(a.answer_id, i).second) {
      throw DataError("duplicate answer id " + std::to_string(a.answer_id));
    }
    if (!question_index_.count(a.parent_question_id)) {
      throw DataError("answer " + std::to_string(a.answer_id) + " refers to missing question " +
                      std::to_string(a.parent_question_id));
    }
    answers_by_question_[a.parent_question_id].push_back(i);
  }
  for (auto& [qid, idx] : answers_by_question_) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
      const auto& a = answers_[x];
      const auto& b = answers_[y];
      return a.creation_time != b.creation_time ? a.creation_time < b.creation_time
                                                : a.answer_id < b.answer_id;
    });
  }
}

const QuestionRecord& Corpus::question(std::int64_t question_id) const {
  const auto it = question_index_.find(question_id);
  if (it == question_index_.end()) {
    throw IndexError("unknown question id " + std::to_string(question_id));
  }
  return questions_[it->second];
}

bool Corpus::has_question(std::int64_t question_id) const {
  return question_index_.count(question_id) > 0;
}

const AnswerRecord& Corpus::answer(std::int64_t answer_id) const {
  const auto it = answer_index_.find(answer_id);
  if (it == answer_index_.end()) throw IndexError("unknown answer id " + std::to_string(answer_id));
  return answers_[it->second];
}

std::vector<const AnswerRecord*> Corpus::answers_to(std::int64_t question_id) const {
  std::vector<const AnswerRecord*> out;
  const auto it = answers_by_question_.find(question_id);
  if (it == answers_by_question_.end()) return out;
  for (std::size_t i : it->second) out.push_back(&answers_[i]);
  return out;
}

std::optional<int> Corpus::accepted_expert(std::int64_t question_id) const {
  const auto& q = question(question_id);
  if (!q.accepted_answer_id) return std::nullopt;
  return profiles_.dense_id(answer(*q.accepted_answer_id).owner_expert_id);
}

Timestamp Corpus::train_cutoff() const {
  if (!split_.validation.empty()) return question(split_.validation.front()).creation_time;
  if (!split_.test.empty()) return question(split_.test.front()).creation_time;
  return std::numeric_limits<Timestamp>::max();
}

}  // namespace expertfind
