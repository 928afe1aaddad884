// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <boost/multiprecision/cpp_dec_float.hpp>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "expertfind/corpus.h"
#include "expertfind/errors.h"
#include "expertfind/rng.h"
#include "expertfind/synthetic.h"

namespace ef = expertfind;
using boost::multiprecision::cpp_dec_float_50;

namespace {

const char* kThreeQuestionDump = R"(<?xml version="1.0" encoding="utf-8"?>
<posts>
  <row Id="1" PostTypeId="1" AcceptedAnswerId="11" CreationDate="2011-01-01T10:00:00.000" Score="3" Title="a b" OwnerUserId="90" />
  <row Id="2" PostTypeId="1" CreationDate="2011-01-02T10:00:00.000" Score="0" Title="What is &quot;DNA&quot; &amp; RNA?" OwnerUserId="91" />
  <row Id="3" PostTypeId="1" AcceptedAnswerId="15" CreationDate="2011-01-03T10:00:00.000" Score="-1" Title="c d e" />
  <row Id="11" PostTypeId="2" ParentId="1" CreationDate="2011-01-01T11:00:00.000" Score="5" OwnerUserId="100" />
  <row Id="12" PostTypeId="2" ParentId="1" CreationDate="2011-01-01T12:00:00.000" Score="-2" OwnerUserId="101" />
  <row Id="13" PostTypeId="2" ParentId="2" CreationDate="2011-01-02T11:00:00.000" Score="1" OwnerUserId="100" />
  <row Id="14" PostTypeId="2" ParentId="3" CreationDate="2011-01-03T11:00:00.000" Score="0" OwnerUserId="102" />
  <row Id="15" PostTypeId="2" ParentId="3" CreationDate="2011-01-03T12:00:00.000" Score="7" OwnerUserId="101" />
</posts>
)";

ef::PostsData parse(const std::string& xml) {
  std::istringstream in(xml);
  return ef::parse_posts(in);
}

std::string serialize(const ef::PostsData& p) {
  std::ostringstream out;
  ef::write_posts(out, p);
  return out.str();
}

// n questions one hour apart, each with one accepted answer by user 500 + i % 4.
ef::PostsData regular_posts(int n) {
  ef::PostsData p;
  for (int i = 0; i < n; ++i) {
    const ef::Timestamp t = 1'000'000'000'000 + i * 3'600'000LL;
    p.questions.push_back({i + 1, "title " + std::to_string(i), 10'000 + i, t, 0});
    p.answers.push_back({10'000 + i, i + 1, 500 + i % 4, i % 7 - 2, t + 60'000});
  }
  return p;
}

}  // namespace

TEST(Timestamp, ParsesDumpFormat) {
  EXPECT_EQ(ef::parse_timestamp("1970-01-01T00:00:00"), 0);
  EXPECT_EQ(ef::parse_timestamp("1970-01-02T00:00:01.5"), 86'401'500);
  EXPECT_EQ(ef::parse_timestamp("2010-11-23T20:42:57.543"), 1'290'544'977'543);
  EXPECT_EQ(ef::format_timestamp(1'290'544'977'543), "2010-11-23T20:42:57.543");
  EXPECT_THROW(ef::parse_timestamp("2010-13-01T00:00:00"), ef::DataError);
  EXPECT_THROW(ef::parse_timestamp("yesterday"), ef::DataError);
}

TEST(ParsePosts, QuestionFieldMapping) {
  const auto p = parse(
      R"(<posts><row Id="4" PostTypeId="1" Title="a b" Score="3" CreationDate="2012-05-05T00:00:00" OwnerUserId="1"/></posts>)");
  ASSERT_EQ(p.questions.size(), 1u);
  EXPECT_EQ(p.questions[0].question_id, 4);
  EXPECT_EQ(p.questions[0].title, "a b");
  EXPECT_EQ(p.questions[0].raw_score, 3);
  EXPECT_FALSE(p.questions[0].accepted_answer_id.has_value());
}

TEST(ParsePosts, AnswerFieldMapping) {
  const auto p = parse(R"(<posts>
<row Id="7" PostTypeId="1" Title="q" CreationDate="2012-05-05T00:00:00"/>
<row Id="8" PostTypeId="2" ParentId="7" Score="-3" OwnerUserId="42" CreationDate="2012-05-06T00:00:00"/>
</posts>)");
  ASSERT_EQ(p.answers.size(), 1u);
  EXPECT_EQ(p.answers[0].parent_question_id, 7);
  EXPECT_EQ(p.answers[0].owner_expert_id, 42);
  EXPECT_EQ(p.answers[0].raw_vote_score, -3);
}

TEST(ParsePosts, ThreeQuestionFiveAnswerFixture) {
  const auto p = parse(kThreeQuestionDump);
  EXPECT_EQ(p.questions.size(), 3u);
  EXPECT_EQ(p.answers.size(), 5u);
  EXPECT_EQ(p.stats.dangling_answers, 0u);
  EXPECT_EQ(p.stats.unresolved_accepted, 0u);
  EXPECT_EQ(p.questions[1].title, "What is \"DNA\" & RNA?");
  EXPECT_EQ(p.questions[2].accepted_answer_id, 15);
}

TEST(ParsePosts, DropsAndCounts) {
  const auto p = parse(R"(<posts>
<row Id="1" PostTypeId="1" Title="   " CreationDate="2012-05-05T00:00:00"/>
<row Id="2" PostTypeId="1" CreationDate="2012-05-05T00:00:00"/>
<row Id="3" PostTypeId="1" Title="ok" AcceptedAnswerId="99" CreationDate="2012-05-05T00:00:00"/>
<row Id="4" PostTypeId="2" ParentId="3" CreationDate="2012-05-05T01:00:00"/>
<row Id="5" PostTypeId="2" ParentId="1" OwnerUserId="8" CreationDate="2012-05-05T01:00:00"/>
<row Id="6" PostTypeId="5" CreationDate="2012-05-05T01:00:00"/>
<row Id="7" PostTypeId="2" ParentId="3" OwnerUserId="8" CreationDate="2012-05-05T01:00:00"/>
</posts>)");
  EXPECT_EQ(p.stats.rows, 7u);
  EXPECT_EQ(p.stats.missing_title, 2u);
  EXPECT_EQ(p.stats.missing_owner, 1u);
  EXPECT_EQ(p.stats.unknown_post_type, 1u);
  EXPECT_EQ(p.stats.dangling_answers, 1u);
  EXPECT_EQ(p.stats.unresolved_accepted, 1u);
  ASSERT_EQ(p.questions.size(), 1u);
  EXPECT_FALSE(p.questions[0].accepted_answer_id.has_value());
  ASSERT_EQ(p.answers.size(), 1u);
  EXPECT_EQ(p.answers[0].answer_id, 7);
}

TEST(ParsePosts, MalformedXmlReportsLine) {
  const std::string bad =
      "<posts>\n<row Id=\"1\" PostTypeId=\"1\" Title=\"x\" CreationDate=\"2012-05-05T00:00:00\"/>\n"
      "<row Id=\"2\" PostTypeId=1 />\n</posts>\n";
  try {
    parse(bad);
    FAIL() << "expected ParseError";
  } catch (const ef::ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse("<posts><row Id=\"1\""), ef::ParseError);
  EXPECT_THROW(parse("<posts><row Id=\"1\" Title=\"&bogus;\" /></posts>"), ef::ParseError);
}

TEST(ParsePosts, RoundTripIsFixedPoint) {
  const auto first = parse(kThreeQuestionDump);
  const std::string text = serialize(first);
  const auto second = parse(text);
  EXPECT_EQ(second.questions, first.questions);
  EXPECT_EQ(second.answers, first.answers);
  EXPECT_EQ(serialize(second), text);

  auto synth = ef::generate_synthetic({.experts = 7, .topics = 2, .questions = 40, .seed = 3});
  synth.posts.questions[0].title = "tabs\tand\nnewlines <&> \"quotes\" 'single'";
  const auto again = parse(serialize(synth.posts));
  EXPECT_EQ(again.questions, synth.posts.questions);
  EXPECT_EQ(again.answers, synth.posts.answers);
}

TEST(NormalizeVotes, BiologyEndpoints) {
  const ef::VoteNormalizer n(-8, 287);
  EXPECT_EQ(n.normalize(-8), 1);
  EXPECT_EQ(n.normalize(287), 10);
}

TEST(NormalizeVotes, RawZeroMatchesHighPrecisionPipeline) {
  // Independent evaluation of shift, log and affine map in 50-digit decimal.
  const cpp_dec_float_50 s = cpp_dec_float_50(0) - cpp_dec_float_50(-8) + 1;
  const cpp_dec_float_50 L = log(s);
  const cpp_dec_float_50 lmax = log(cpp_dec_float_50(287) - cpp_dec_float_50(-8) + 1);
  const cpp_dec_float_50 scaled = 9 * L / lmax + 1;
  EXPECT_NEAR(static_cast<double>(L), 2.19722, 1e-5);
  EXPECT_NEAR(static_cast<double>(lmax), 5.69036, 1e-5);
  const int oracle = static_cast<int>(round(scaled));
  EXPECT_EQ(oracle, 4);

  const std::vector<std::int64_t> raw = {-8, 0, 287};
  const auto [n, classes] = ef::normalize_votes(raw);
  EXPECT_EQ(classes, (std::vector<int>{1, oracle, 10}));
  EXPECT_EQ(n.v_min_raw(), -8);
  EXPECT_EQ(n.v_max_raw(), 287);
  EXPECT_DOUBLE_EQ(n.log_min(), 0.0);
}

TEST(NormalizeVotes, DegenerateAndEmpty) {
  const std::vector<std::int64_t> same = {4, 4, 4};
  EXPECT_EQ(ef::normalize_votes(same).second, (std::vector<int>{1, 1, 1}));
  EXPECT_THROW(ef::normalize_votes({}), ef::DataError);
}

TEST(NormalizeVotes, MonotoneOnRandomCorpora) {
  ef::Rng rng(2024);
  for (int trial = 0; trial < 10'000; ++trial) {
    const int size = 1 + static_cast<int>(rng.below(40));
    const std::int64_t lo = static_cast<std::int64_t>(rng.below(200)) - 150;
    const std::int64_t span = static_cast<std::int64_t>(rng.below(5000));
    std::vector<std::int64_t> raw(size);
    for (auto& v : raw) v = lo + static_cast<std::int64_t>(rng.below(span + 1));
    const auto [n, classes] = ef::normalize_votes(raw);
    std::vector<std::size_t> order(size);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return raw[a] < raw[b]; });
    for (std::size_t i = 1; i < order.size(); ++i) {
      ASSERT_LE(classes[order[i - 1]], classes[order[i]]) << "trial " << trial;
    }
    for (int c : classes) ASSERT_TRUE(c >= 1 && c <= 10);
    if (n.v_min_raw() < n.v_max_raw()) {
      ASSERT_EQ(n.normalize(n.v_min_raw()), 1);
      ASSERT_EQ(n.normalize(n.v_max_raw()), 10);
    }
  }
}

TEST(NormalizeVotes, FileRoundTrip) {
  const ef::VoteNormalizer n(-5, 994);
  std::stringstream buf;
  n.write(buf);
  const auto back = ef::VoteNormalizer::read(buf);
  EXPECT_EQ(back.v_min_raw(), -5);
  EXPECT_EQ(back.v_max_raw(), 994);
  EXPECT_EQ(back.log_max(), n.log_max());
}

TEST(BuildProfiles, HistoryIsChronological) {
  std::vector<ef::QuestionRecord> qs = {{1, "a", {}, 0, 0}, {2, "b", {}, 0, 0}};
  std::vector<ef::AnswerRecord> as = {{21, 2, 77, 0, 2000}, {11, 1, 77, 0, 1000}};
  const auto set = ef::build_profiles(qs, as, ef::VoteNormalizer(0, 10));
  ASSERT_EQ(set.size(), 1);
  ASSERT_EQ(set[0].history.size(), 2u);
  EXPECT_EQ(set[0].history[0].question_id, 1);
  EXPECT_EQ(set[0].history[1].question_id, 2);
}

TEST(BuildProfiles, FourExpertsNineAnswers) {
  std::vector<ef::QuestionRecord> qs;
  for (int i = 1; i <= 5; ++i) qs.push_back({i, "q", {}, i * 100, 0});
  const std::vector<std::pair<int, std::int64_t>> owners = {
      {1, 7}, {1, 8}, {2, 7}, {2, 9}, {3, 10}, {3, 8}, {4, 7}, {5, 9}, {5, 10}};
  std::vector<ef::AnswerRecord> as;
  std::map<std::int64_t, std::size_t> expected;
  for (std::size_t i = 0; i < owners.size(); ++i) {
    as.push_back({static_cast<std::int64_t>(100 + i), owners[i].first, owners[i].second,
                  static_cast<std::int64_t>(i), owners[i].first * 100 + 5});
    ++expected[owners[i].second];
  }
  const auto set = ef::build_profiles(qs, as, ef::VoteNormalizer::fit(std::vector<std::int64_t>{0, 8}));
  ASSERT_EQ(set.size(), 4);
  std::size_t total = 0;
  for (const auto& p : set.profiles()) {
    EXPECT_EQ(p.history.size(), expected.at(p.user_id));
    for (const auto& h : p.history) EXPECT_TRUE(h.vote >= 1 && h.vote <= 10);
    total += p.history.size();
  }
  EXPECT_EQ(total, 9u);
  // Users never seen as answer owners get no profile.
  EXPECT_FALSE(set.contains_user(11));
  EXPECT_EQ(set.dense_id(7), 0);
  EXPECT_EQ(set.dense_id(10), 3);
}

TEST(ChronologicalSplit, Sizes) {
  for (const auto& [n, tr, va, te] : std::vector<std::array<int, 4>>{
           {10, 8, 1, 1}, {100, 80, 10, 10}, {25, 20, 2, 3}}) {
    const auto p = regular_posts(n);
    const auto s = ef::chronological_split(p.questions);
    EXPECT_EQ(static_cast<int>(s.train.size()), tr);
    EXPECT_EQ(static_cast<int>(s.validation.size()), va);
    EXPECT_EQ(static_cast<int>(s.test.size()), te);
  }
  EXPECT_THROW(ef::chronological_split(regular_posts(9).questions), ef::DataError);
}

TEST(ChronologicalSplit, PartitionsInTimeOrder) {
  auto p = regular_posts(57);
  std::reverse(p.questions.begin(), p.questions.end());
  p.questions[3].accepted_answer_id.reset();
  const auto s = ef::chronological_split(p.questions);
  std::set<std::int64_t> all;
  for (const auto* part : {&s.train, &s.validation, &s.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), 56u);
  EXPECT_EQ(s.train.size() + s.validation.size() + s.test.size(), 56u);
  std::map<std::int64_t, ef::Timestamp> t;
  for (const auto& q : p.questions) t[q.question_id] = q.creation_time;
  for (auto a : s.train) {
    for (auto b : s.validation) EXPECT_LE(t[a], t[b]);
    for (auto b : s.test) EXPECT_LE(t[a], t[b]);
  }
}

TEST(Corpus, NormalizerUsesTrainingPeriodOnly) {
  auto p = regular_posts(20);
  // A huge score in the test period must not stretch the fitted range.
  p.answers.back().raw_vote_score = 100'000;
  const auto c = ef::Corpus::build(p);
  EXPECT_EQ(c.normalizer().v_max_raw(), 4);
  EXPECT_EQ(c.normalizer().v_min_raw(), -2);
  EXPECT_EQ(c.normalizer().normalize(100'000), 10);
}

TEST(Corpus, SaveLoadRoundTrip) {
  auto synth = ef::generate_synthetic({.experts = 12, .topics = 3, .questions = 80, .seed = 9});
  synth.posts.questions[1].title = "with\ttab and \\ backslash";
  const auto c = ef::Corpus::build(synth.posts);
  const auto dir = std::filesystem::temp_directory_path() / "expertfind_corpus_rt";
  std::filesystem::remove_all(dir);
  ef::save_corpus(c, dir);
  const auto d = ef::load_corpus(dir);
  EXPECT_TRUE(std::equal(c.questions().begin(), c.questions().end(), d.questions().begin(),
                         d.questions().end()));
  EXPECT_TRUE(std::equal(c.answers().begin(), c.answers().end(), d.answers().begin(),
                         d.answers().end()));
  EXPECT_TRUE(std::equal(c.profiles().profiles().begin(), c.profiles().profiles().end(),
                         d.profiles().profiles().begin(), d.profiles().profiles().end()));
  EXPECT_EQ(d.split().train, c.split().train);
  EXPECT_EQ(d.split().test, c.split().test);
  EXPECT_EQ(d.normalizer().v_max_raw(), c.normalizer().v_max_raw());
  std::filesystem::remove_all(dir);
  EXPECT_THROW(ef::load_corpus(dir), ef::DataError);
}

TEST(Corpus, StatsRecount) {
  ef::PostsData p = regular_posts(10);
  p.questions[0].title = "How do I sequence DNA?";        // how do i sequence dna ?  -> 6
  p.questions[1].title = "PCR: primers, again";           // pcr : primers , again   -> 5
  p.questions[2].title = "  spaced   out  ";              // spaced out              -> 2
  const auto c = ef::Corpus::build(p);
  const auto s = ef::corpus_stats(c);
  // Remaining seven titles are "title N": 2 tokens each.
  EXPECT_NEAR(s.avg_title_length, (6 + 5 + 2 + 7 * 2) / 10.0, 1e-12);
  EXPECT_EQ(s.answerers, 4u);
  EXPECT_EQ(s.answers, 10u);
  EXPECT_NEAR(s.density_percent, 100.0 * 10 / (10 * 4), 1e-12);
}

TEST(Synthetic, DeterministicForSeed) {
  const ef::SyntheticConfig cfg{.experts = 20, .topics = 4, .questions = 300, .seed = 77};
  EXPECT_EQ(serialize(ef::generate_synthetic(cfg).posts),
            serialize(ef::generate_synthetic(cfg).posts));
  auto other = cfg;
  other.seed = 78;
  EXPECT_NE(serialize(ef::generate_synthetic(cfg).posts),
            serialize(ef::generate_synthetic(other).posts));
}

TEST(Synthetic, ZeroSkillVarianceGivesConstantVotesPerExpert) {
  const auto s = ef::generate_synthetic({.experts = 30,
                                         .topics = 3,
                                         .questions = 400,
                                         .seed = 5,
                                         .skill_variance = 0.0,
                                         .vote_noise = 0.0,
                                         .other_vote_shift = 0});
  std::map<std::int64_t, std::set<std::int64_t>> votes;
  for (const auto& a : s.posts.answers) votes[a.owner_expert_id].insert(a.raw_vote_score);
  for (const auto& [user, v] : votes) EXPECT_EQ(v.size(), 1u) << "user " << user;
}

TEST(Synthetic, RawVotesInvertTheNormalizer) {
  std::vector<std::int64_t> raw;
  for (int c = 1; c <= 10; ++c) raw.push_back(ef::synthetic_raw_vote(c));
  const auto [n, classes] = ef::normalize_votes(raw);
  EXPECT_EQ(classes, (std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
}

TEST(Synthetic, PlantedBestExpertDominatesItsTopic) {
  const ef::SyntheticConfig cfg{.experts = 50,
                                .topics = 5,
                                .questions = 4000,
                                .seed = 11,
                                .secondary_affinity = 0.01,
                                .sharpness = 10.0,
                                .skill_variance = 0.0};
  const auto s = ef::generate_synthetic(cfg);
  std::vector<int> asked(cfg.topics, 0), won(cfg.topics, 0);
  std::map<std::int64_t, std::int64_t> owner;
  for (const auto& a : s.posts.answers) owner[a.answer_id] = a.owner_expert_id;
  for (std::size_t i = 0; i < s.posts.questions.size(); ++i) {
    const int t = s.truth.question_topic[i];
    ++asked[t];
    const int e = s.truth.expert_of_user(owner.at(*s.posts.questions[i].accepted_answer_id));
    if (e == s.truth.best_expert[t]) ++won[t];
  }
  for (int t = 0; t < cfg.topics; ++t) {
    // Closed-form share of the best expert under the generator's weights.
    double total = 0.0;
    for (int e = 0; e < cfg.experts; ++e) {
      total += std::pow(s.truth.affinity[e][t] * s.truth.skill[e][t], cfg.sharpness);
    }
    const int b = s.truth.best_expert[t];
    const double expected =
        std::pow(s.truth.affinity[b][t] * s.truth.skill[b][t], cfg.sharpness) / total;
    const double observed = static_cast<double>(won[t]) / asked[t];
    const double sigma = std::sqrt(expected * (1 - expected) / asked[t]);
    EXPECT_GE(observed, 0.6) << "topic " << t;
    EXPECT_NEAR(observed, expected, 4 * sigma) << "topic " << t;
  }
}

TEST(Synthetic, RejectsNonPositiveSizes) {
  EXPECT_THROW(ef::generate_synthetic({.experts = 0}), ef::ConfigError);
  EXPECT_THROW(ef::generate_synthetic({.questions = 0}), ef::ConfigError);
}
