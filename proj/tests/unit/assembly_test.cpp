// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "expertfind/assembly.h"
#include "expertfind/errors.h"

namespace ef = expertfind;

namespace {

constexpr int P = ef::kVotePadId;

// Vocabulary over single letters a..z plus w0..w99.
ef::Vocabulary letters_vocab() {
  std::vector<std::string> tokens(std::begin(ef::kSpecialTokens), std::end(ef::kSpecialTokens));
  for (char c = 'a'; c <= 'z'; ++c) tokens.emplace_back(1, c);
  for (int i = 0; i < 100; ++i) tokens.push_back("w" + std::to_string(i));
  return ef::Vocabulary::from_tokens(tokens);
}

struct Fixture {
  ef::Vocabulary vocab = letters_vocab();
  ef::TitleIndex titles{vocab, 16};
  ef::ExpertProfile profile;

  // Adds a history item answered at `t` for a new question with `title`.
  void history(std::int64_t qid, const std::string& title, int vote, ef::Timestamp t) {
    titles.add(qid, title);
    profile.history.push_back({qid, 1000 + qid, vote, t});
  }
};

void check_invariants(const ef::EncodedSequence& s, int max_len) {
  const int L = s.length();
  ASSERT_LE(L, max_len);
  ASSERT_EQ(s.segment_ids.size(), static_cast<std::size_t>(L));
  ASSERT_EQ(s.position_ids.size(), static_cast<std::size_t>(L));
  ASSERT_EQ(s.vote_ids.size(), static_cast<std::size_t>(L));
  EXPECT_EQ(s.token_ids[0], ef::kPadId);
  int seps = 0, hseps = 0;
  std::set<int> structural = {0};
  for (int p = 0; p < L; ++p) {
    EXPECT_EQ(s.position_ids[p], p);
    if (s.token_ids[p] == ef::kSepId) ++seps, structural.insert(p);
    if (s.token_ids[p] == ef::kHsepId) ++hseps, structural.insert(p);
  }
  EXPECT_EQ(seps, 2);
  EXPECT_EQ(hseps, s.history_count() - 1);
  const auto& target = s.question_spans.at(0);
  EXPECT_EQ(target.start, 1);
  EXPECT_EQ(s.token_ids[target.end], ef::kSepId);
  for (int p = target.start; p < target.end; ++p) structural.insert(p);
  int prev_end = target.end;
  for (std::size_t i = 1; i < s.question_spans.size(); ++i) {
    const auto& sp = s.question_spans[i];
    EXPECT_GT(sp.start, prev_end);
    EXPECT_LT(sp.start, sp.end);
    prev_end = sp.end;
    for (int p = sp.start; p < sp.end; ++p) {
      EXPECT_EQ(s.vote_ids[p], sp.vote);
      EXPECT_EQ(s.segment_ids[p], 1);
    }
  }
  for (int p = 0; p < L; ++p) {
    EXPECT_EQ(s.vote_ids[p] == P, structural.count(p) == 1) << "position " << p;
    EXPECT_EQ(s.segment_ids[p], p <= target.end ? 0 : 1) << "position " << p;
  }
  EXPECT_EQ(s.attention_len, L);
}

}  // namespace

TEST(Assemble, LayoutExample) {
  Fixture f;
  f.titles.add(50, "a b c");
  f.history(1, "d e", 4, 100);
  f.history(2, "f g h", 9, 200);
  f.profile.expert_id = 7;
  const auto s = ef::assemble(f.profile, 50, 1000, f.titles, {.max_len = 32});
  const auto id = [&](const char* t) { return f.vocab.id(t); };
  const int S = ef::kSepId, H = ef::kHsepId;
  EXPECT_EQ(s.expert_id, 7);
  EXPECT_EQ(s.token_ids, (std::vector<int>{ef::kPadId, id("a"), id("b"), id("c"), S, id("d"),
                                           id("e"), H, id("f"), id("g"), id("h"), S}));
  EXPECT_EQ(s.segment_ids, (std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1}));
  EXPECT_EQ(s.vote_ids, (std::vector<int>{P, P, P, P, P, 4, 4, P, 9, 9, 9, P}));
  ASSERT_EQ(s.question_spans.size(), 3u);
  EXPECT_EQ(s.question_spans[0], (ef::QuestionSpan{1, 4, 50, P}));
  EXPECT_EQ(s.question_spans[1], (ef::QuestionSpan{5, 7, 1, 4}));
  EXPECT_EQ(s.question_spans[2], (ef::QuestionSpan{8, 11, 2, 9}));
  check_invariants(s, 32);
}

TEST(Assemble, SingleHistoryHasNoHsep) {
  Fixture f;
  f.titles.add(50, "a");
  f.history(1, "b c", 2, 10);
  const auto s = ef::assemble(f.profile, 50, 11, f.titles);
  EXPECT_EQ(std::count(s.token_ids.begin(), s.token_ids.end(), ef::kHsepId), 0);
  check_invariants(s, 256);
}

TEST(Assemble, PackingKeepsMostRecent) {
  Fixture f;
  f.titles.add(999, "a b c");
  for (int i = 0; i < 50; ++i) {
    std::string title;
    for (int k = 0; k < 8; ++k) title += "w" + std::to_string((i + k) % 100) + " ";
    f.history(i + 1, title, 1 + i % 10, 100 + i);
  }
  const int max_len = 64;
  const auto s = ef::assemble(f.profile, 999, 10'000, f.titles, {.max_len = max_len});
  // EID + 3 target + SEP + SEP = 6 fixed slots; each history costs 8 + 1
  // separator, with one separator fewer than histories.
  const int expected = (max_len - 6) / 9;
  ASSERT_EQ(expected, 6);
  EXPECT_EQ(s.history_count(), expected);
  for (int i = 0; i < expected; ++i) {
    EXPECT_EQ(s.question_spans[1 + i].question_id, 50 - expected + 1 + i);
  }
  check_invariants(s, max_len);
}

TEST(Assemble, TitleCapAndOverflowTruncation) {
  Fixture f;
  std::string long_title;
  for (int k = 0; k < 30; ++k) long_title += "w" + std::to_string(k) + " ";
  f.titles.add(500, long_title);
  f.history(1, long_title, 3, 1);
  const auto s = ef::assemble(f.profile, 500, 2, f.titles, {.max_len = 24, .title_cap = 16});
  EXPECT_EQ(s.question_spans[0].length(), 16);
  EXPECT_EQ(s.question_spans[1].length(), 24 - 16 - 3);
  EXPECT_EQ(s.length(), 24);
  check_invariants(s, 24);
  EXPECT_THROW(ef::assemble(f.profile, 500, 2, f.titles, {.max_len = 19, .title_cap = 16}),
               ef::ConfigError);
}

TEST(Assemble, LeakFree) {
  Fixture f;
  f.titles.add(77, "a b");
  const ef::Timestamp as_of = 5000;
  for (int i = 0; i < 40; ++i) {
    // Half before and half at-or-after the reference time.
    f.history(i + 1, "c d e", 5, as_of - 2000 + 100 * i);
  }
  f.history(77, "a b", 6, 10);  // the target itself, answered earlier
  std::sort(f.profile.history.begin(), f.profile.history.end(),
            [](const auto& a, const auto& b) { return a.answered_at < b.answered_at; });
  const auto s = ef::assemble(f.profile, 77, as_of, f.titles);
  std::set<std::int64_t> future;
  for (const auto& h : f.profile.history) {
    if (h.answered_at >= as_of) future.insert(h.question_id);
  }
  int leaked = 0;
  for (std::size_t i = 1; i < s.question_spans.size(); ++i) {
    leaked += future.count(s.question_spans[i].question_id) > 0;
    EXPECT_NE(s.question_spans[i].question_id, 77);
  }
  EXPECT_EQ(leaked, 0);
  EXPECT_EQ(s.history_count(), 20);
}

TEST(Assemble, ColdExpertAndFallback) {
  Fixture f;
  f.titles.add(9, "x y");
  f.history(1, "a", 3, 500);
  f.profile.expert_id = 2;
  EXPECT_THROW(ef::assemble(f.profile, 9, 500, f.titles), ef::ColdExpertError);
  const auto s = ef::assemble_or_fallback(f.profile, 9, 500, f.titles);
  EXPECT_TRUE(s.fallback);
  EXPECT_EQ(s.token_ids, (std::vector<int>{ef::kPadId, f.vocab.id("x"), f.vocab.id("y"),
                                           ef::kSepId, ef::kSepId}));
  EXPECT_EQ(s.segment_ids, (std::vector<int>{0, 0, 0, 0, 1}));
  EXPECT_EQ(s.history_count(), 0);
  EXPECT_FALSE(ef::assemble_or_fallback(f.profile, 9, 501, f.titles).fallback);
}

namespace {

ef::EncodedSequence random_sequence(ef::Rng& rng, const Fixture& base, int histories) {
  Fixture f{base.vocab, ef::TitleIndex(base.vocab, 16), {}};
  f.titles.add(10'000, "a b c d");
  for (int i = 0; i < histories; ++i) {
    std::string title;
    const int len = 1 + static_cast<int>(rng.below(8));
    for (int k = 0; k < len; ++k) title += "w" + std::to_string(rng.below(100)) + " ";
    f.history(i + 1, title, 1 + static_cast<int>(rng.below(10)), i);
  }
  return ef::assemble(f.profile, 10'000, 1'000'000, f.titles);
}

}  // namespace

TEST(MaskingPlan, WordRatioStatistics) {
  Fixture base;
  ef::Rng shape_rng(1);
  std::vector<ef::EncodedSequence> seqs;
  for (int i = 0; i < 50; ++i) seqs.push_back(random_sequence(shape_rng, base, 1 + i % 12));
  long eligible = 0, masked = 0, as_mask = 0, unchanged = 0;
  for (int n = 0; n < 10'000; ++n) {
    const auto& s = seqs[n % seqs.size()];
    ef::Rng rng(ef::sequence_seed(42, n, s.expert_id, 0));
    const auto plan = ef::make_pretrain_plan(s, 5, {.word_ratio = 0.15, .question_ratio = 0.15},
                                             base.vocab.size(), rng);
    for (int sp = 1; sp <= s.history_count(); ++sp) {
      if (plan.masked_span != sp) eligible += s.question_spans[sp].length();
    }
    masked += static_cast<long>(plan.word_positions.size());
    for (std::size_t i = 0; i < plan.word_positions.size(); ++i) {
      as_mask += plan.word_inputs[i] == ef::kMaskId;
      unchanged += plan.word_inputs[i] == s.token_ids[plan.word_positions[i]];
    }
  }
  const double frac = static_cast<double>(masked) / eligible;
  EXPECT_NEAR(frac, 0.15, 0.01);
  EXPECT_NEAR(static_cast<double>(as_mask) / masked, 0.8, 0.02);
  // Unchanged covers the 10% keep branch plus rare random draws of the same id.
  EXPECT_NEAR(static_cast<double>(unchanged) / masked, 0.1, 0.02);
}

TEST(MaskingPlan, MaskableRegionsOnly) {
  Fixture base;
  ef::Rng shape_rng(2);
  for (int n = 0; n < 2000; ++n) {
    const auto s = random_sequence(shape_rng, base, 1 + n % 6);
    ef::Rng rng(ef::sequence_seed(7, n, 0, 0));
    const auto plan = ef::make_pretrain_plan(s, 1 + n % 10, {.word_ratio = 0.5, .question_ratio = 0.5},
                                             base.vocab.size(), rng);
    std::set<int> allowed;
    for (int sp = 1; sp <= s.history_count(); ++sp) {
      for (int p = s.question_spans[sp].start; p < s.question_spans[sp].end; ++p) allowed.insert(p);
    }
    std::set<int> span_positions;
    if (plan.masked_span) {
      ASSERT_GE(*plan.masked_span, 1);
      ASSERT_LE(*plan.masked_span, s.history_count());
      const auto& sp = s.question_spans[*plan.masked_span];
      for (int p = sp.start; p < sp.end; ++p) span_positions.insert(p);
    }
    for (int p : plan.word_positions) {
      ASSERT_TRUE(allowed.count(p));
      ASSERT_FALSE(span_positions.count(p));
    }
    // The applied plan masks the whole chosen span and nothing else outside
    // the word positions.
    const auto tokens = ef::apply_plan(s, plan);
    const std::set<int> words(plan.word_positions.begin(), plan.word_positions.end());
    for (int p = 0; p < s.length(); ++p) {
      if (span_positions.count(p)) {
        ASSERT_EQ(tokens[p], ef::kMaskId);
      } else if (!words.count(p)) {
        ASSERT_EQ(tokens[p], s.token_ids[p]);
      }
    }
    ASSERT_EQ(plan.vote_class, 1 + n % 10);
  }
}

TEST(MaskingPlan, ZeroQuestionRatioAndDeterminism) {
  Fixture base;
  ef::Rng shape_rng(3);
  const auto s = random_sequence(shape_rng, base, 5);
  for (int n = 0; n < 500; ++n) {
    ef::Rng rng(n);
    EXPECT_FALSE(ef::make_pretrain_plan(s, 3, {.word_ratio = 0.3, .question_ratio = 0.0},
                                        base.vocab.size(), rng)
                     .masked_span);
  }
  ef::Rng a(99), b(99);
  EXPECT_EQ(ef::make_pretrain_plan(s, 3, {}, base.vocab.size(), a),
            ef::make_pretrain_plan(s, 3, {}, base.vocab.size(), b));
  ef::Rng c(1);
  EXPECT_THROW(ef::make_pretrain_plan(s, 0, {}, base.vocab.size(), c), ef::DataError);
  EXPECT_THROW(ef::make_pretrain_plan(s, 3, {.word_ratio = 1.0}, base.vocab.size(), c),
               ef::ConfigError);
}

TEST(PretrainExamples, TextRoundTrip) {
  Fixture base;
  ef::Rng rng(5);
  std::vector<ef::PretrainExample> examples;
  for (int i = 0; i < 20; ++i) {
    auto s = random_sequence(rng, base, 1 + i % 4);
    s.expert_id = i;
    auto plan = ef::make_pretrain_plan(s, 1 + i % 10, {.word_ratio = 0.3, .question_ratio = 0.4},
                                       base.vocab.size(), rng);
    examples.push_back({s, plan});
  }
  std::stringstream buf;
  ef::write_examples(buf, examples);
  EXPECT_EQ(ef::read_examples(buf), examples);
  std::stringstream bad("nonsense\n");
  EXPECT_THROW(ef::read_examples(bad), ef::ParseError);
}
