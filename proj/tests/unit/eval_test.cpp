// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "expertfind/errors.h"
#include "expertfind/eval.h"
#include "expertfind/synthetic.h"
#include "expertfind/vocab.h"
#include "posts_builder.h"

namespace ef = expertfind;
using ef::testing::PostsBuilder;

namespace {

// Brute-force rank: strictly greater scores, plus ties at a smaller index, plus one.
int brute_rank(const std::vector<double>& s, int g) {
  int r = 1;
  for (int i = 0; i < static_cast<int>(s.size()); ++i) {
    if (s[i] > s[g] || (s[i] == s[g] && i < g)) ++r;
  }
  return r;
}

struct BruteMetrics {
  long double mrr = 0, p1 = 0, p3 = 0, ndcg = 0;
};

BruteMetrics brute_metrics(const std::vector<int>& ranks) {
  BruteMetrics m;
  for (int r : ranks) {
    m.mrr += 1.0L / r;
    m.p1 += r <= 1 ? 1 : 0;
    m.p3 += r <= 3 ? 1 : 0;
    // Single relevant item: IDCG = 1, DCG = 1 / log2(r + 1).
    m.ndcg += std::log(2.0L) / std::log(static_cast<long double>(r) + 1.0L);
  }
  const long double n = static_cast<long double>(ranks.size());
  m.mrr /= n, m.p1 /= n, m.p3 /= n, m.ndcg /= n;
  return m;
}

// Users 1001..1025 each answer one early question; the target question is
// answered by `answerers` users starting at 1001 (in that order), the one at
// index `accepted` being accepted.
struct CandidateFixture {
  std::int64_t target = 0;
  ef::Corpus corpus;

  CandidateFixture(int answerers, int accepted) {
    PostsBuilder b;
    b.warm_up(1001, 25);
    target = b.question("target", 100);
    for (int i = 0; i < answerers; ++i) b.answer(target, 1001 + i, 1, 1 + i, i == accepted);
    corpus = b.build();
  }
};

ef::Corpus synthetic_corpus(int questions, int experts = 50, std::uint64_t seed = 1) {
  ef::SyntheticConfig c;
  c.questions = questions;
  c.experts = experts;
  c.seed = seed;
  return ef::Corpus::build(ef::generate_synthetic(c).posts);
}

std::vector<std::string> all_titles(const ef::Corpus& corpus) {
  std::vector<std::string> t;
  for (const auto& q : corpus.questions()) t.push_back(q.title);
  return t;
}

ef::SequenceScorer constant_scorer(double value) {
  return [value](std::span<const ef::EncodedSequence> seqs) {
    return std::vector<double>(seqs.size(), value);
  };
}

}  // namespace

TEST(Rank, ArgmaxAndTies) {
  std::vector<double> s(20, 0.0);
  s[5] = 1.0;
  EXPECT_EQ(ef::rank_of(s, 5), 1);
  const std::vector<double> equal(20, 0.25);
  EXPECT_EQ(ef::rank_of(equal, 0), 1);
  EXPECT_EQ(ef::rank_of(equal, 7), 8);
  EXPECT_THROW(ef::rank_of(equal, 20), ef::IndexError);
  std::vector<double> nan = equal;
  nan[3] = std::nan("");
  EXPECT_THROW(ef::rank_of(nan, 0), ef::NumericalError);
}

TEST(Rank, MatchesBruteForceWithTies) {
  ef::Rng rng(7);
  for (int trial = 0; trial < 10'000; ++trial) {
    std::vector<double> s(20);
    // Coarse values so that ties are frequent.
    for (double& v : s) v = static_cast<double>(rng.below(6));
    const int g = static_cast<int>(rng.below(20));
    ASSERT_EQ(ef::rank_of(s, g), brute_rank(s, g));
  }
}

TEST(Metrics, ClosedForms) {
  const std::vector<int> perfect = {1, 1, 1};
  const auto m = ef::compute_metrics(perfect);
  EXPECT_DOUBLE_EQ(m.mrr, 1.0);
  EXPECT_DOUBLE_EQ(m.p_at_1, 1.0);
  EXPECT_DOUBLE_EQ(m.p_at_3, 1.0);
  EXPECT_DOUBLE_EQ(m.ndcg, 1.0);
  EXPECT_EQ(m.questions, 3u);

  const std::vector<int> three = {3};
  const auto t = ef::compute_metrics(three);
  EXPECT_NEAR(t.mrr, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(t.p_at_1, 0.0);
  EXPECT_EQ(t.p_at_3, 1.0);
  EXPECT_NEAR(t.ndcg, 0.5, 1e-15);
}

TEST(Metrics, RejectsEmptyAndOutOfRange) {
  EXPECT_THROW(ef::compute_metrics(std::vector<int>{}), ef::DataError);
  EXPECT_THROW(ef::compute_metrics(std::vector<int>{0}), ef::DataError);
  EXPECT_THROW(ef::compute_metrics(std::vector<int>{21}), ef::DataError);
}

TEST(Metrics, MatchesBruteForceOnRandomScores) {
  ef::Rng rng(2026);
  std::vector<int> ranks;
  for (int trial = 0; trial < 10'000; ++trial) {
    std::vector<double> s(20);
    for (double& v : s) v = rng.normal();
    const int g = static_cast<int>(rng.below(20));
    ranks.push_back(ef::rank_of(s, g));
    ASSERT_EQ(ranks.back(), brute_rank(s, g));
    // Each single-question list as well as the running pool.
    const std::vector<int> one = {ranks.back()};
    const auto m = ef::compute_metrics(one);
    const auto b = brute_metrics(one);
    ASSERT_NEAR(m.mrr, static_cast<double>(b.mrr), 1e-9);
    ASSERT_NEAR(m.p_at_1, static_cast<double>(b.p1), 1e-9);
    ASSERT_NEAR(m.p_at_3, static_cast<double>(b.p3), 1e-9);
    ASSERT_NEAR(m.ndcg, static_cast<double>(b.ndcg), 1e-9);
  }
  const auto m = ef::compute_metrics(ranks);
  const auto b = brute_metrics(ranks);
  EXPECT_NEAR(m.mrr, static_cast<double>(b.mrr), 1e-9);
  EXPECT_NEAR(m.p_at_1, static_cast<double>(b.p1), 1e-9);
  EXPECT_NEAR(m.p_at_3, static_cast<double>(b.p3), 1e-9);
  EXPECT_NEAR(m.ndcg, static_cast<double>(b.ndcg), 1e-9);
}

TEST(Metrics, BoundsAndOrdering) {
  ef::Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> ranks(1 + rng.below(30));
    for (int& r : ranks) r = 1 + static_cast<int>(rng.below(20));
    const auto m = ef::compute_metrics(ranks);
    EXPECT_GT(m.mrr, 0.0);
    EXPECT_LE(m.mrr, 1.0);
    EXPECT_LE(0.0, m.p_at_1);
    EXPECT_LE(m.p_at_1, m.p_at_3);
    EXPECT_LE(m.p_at_3, 1.0);
    EXPECT_GE(m.ndcg, 1.0 / std::log2(21.0) - 1e-12);
    EXPECT_LE(m.ndcg, 1.0);
  }
}

TEST(Metrics, ImprovingTheGroundTruthNeverHurts) {
  ef::Rng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> s(20);
    for (double& v : s) v = rng.normal();
    const int g = static_cast<int>(rng.below(20));
    const int before = ef::rank_of(s, g);
    s[g] += std::abs(rng.normal());
    const int after = ef::rank_of(s, g);
    ASSERT_LE(after, before);
    const auto mb = ef::compute_metrics(std::vector<int>{before});
    const auto ma = ef::compute_metrics(std::vector<int>{after});
    EXPECT_GE(ma.mrr, mb.mrr);
    EXPECT_GE(ma.p_at_1, mb.p_at_1);
    EXPECT_GE(ma.p_at_3, mb.p_at_3);
    EXPECT_GE(ma.ndcg, mb.ndcg);
  }
}

TEST(Candidates, TwentyAnswerersNeedNoFill) {
  CandidateFixture f(20, 4);
  const auto a = ef::build_candidates(f.corpus, f.target, 1);
  const auto b = ef::build_candidates(f.corpus, f.target, 999);
  EXPECT_EQ(a.experts, b.experts);
  ASSERT_EQ(a.experts.size(), 20u);
  const auto& p = f.corpus.profiles();
  for (int i = 0; i < 20; ++i) EXPECT_EQ(a.experts[i], p.dense_id(1001 + i));
  EXPECT_EQ(a.experts[a.ground_truth], p.dense_id(1005));
}

TEST(Candidates, OneAnswererGetsNineteenFills) {
  CandidateFixture f(1, 0);
  const auto c = ef::build_candidates(f.corpus, f.target, 5);
  ASSERT_EQ(c.experts.size(), 20u);
  EXPECT_EQ(c.ground_truth, 0);
  const std::set<int> distinct(c.experts.begin(), c.experts.end());
  EXPECT_EQ(distinct.size(), 20u);
  EXPECT_EQ(std::count(c.experts.begin(), c.experts.end(), c.experts[0]), 1);
  const auto as_of = f.corpus.question(f.target).creation_time;
  for (int e : c.experts) EXPECT_TRUE(f.corpus.profiles().active_before(e, as_of));
  EXPECT_EQ(c, ef::build_candidates(f.corpus, f.target, 5));
}

TEST(Candidates, OverflowKeepsTruthAndEarliest) {
  CandidateFixture f(25, 24);
  const auto c = ef::build_candidates(f.corpus, f.target, 1);
  ASSERT_EQ(c.experts.size(), 20u);
  const auto& p = f.corpus.profiles();
  for (int i = 0; i < 19; ++i) EXPECT_EQ(c.experts[i], p.dense_id(1001 + i));
  EXPECT_EQ(c.ground_truth, 19);
  EXPECT_EQ(c.experts[19], p.dense_id(1025));
}

TEST(Candidates, TooFewExpertsIsADataError) {
  PostsBuilder b;
  b.warm_up(1, 12);
  const auto q = b.question("target", 50);
  b.answer(q, 1, 1, 1, true);
  EXPECT_THROW(ef::build_candidates(b.build(), q, 1), ef::DataError);
}

TEST(Candidates, FillIsSeeded) {
  CandidateFixture f(1, 0);
  std::set<std::vector<int>> seen;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    seen.insert(ef::build_candidates(f.corpus, f.target, seed).experts);
  }
  EXPECT_GT(seen.size(), 1u);
}

TEST(Evaluate, ConstantScorerRanksByIndexUnlessShuffled) {
  const ef::Corpus corpus = synthetic_corpus(11'000);
  const auto vocab = ef::Vocabulary::build(all_titles(corpus), 1);
  const ef::TitleIndex titles(corpus.questions(), vocab, 16);

  std::vector<std::int64_t> ids;
  for (const auto& q : corpus.questions()) {
    if (corpus.accepted_expert(q.question_id)) ids.push_back(q.question_id);
  }
  ASSERT_GE(ids.size(), 10'600u);
  ids.erase(ids.begin(), ids.begin() + 600);
  ids.resize(10'000);

  ef::EvalOptions opts;
  opts.assembly.max_len = 32;
  std::vector<int> fixed, shuffled;
  for (std::size_t begin = 0; begin < ids.size(); begin += 1000) {
    const std::span<const std::int64_t> chunk(ids.data() + begin, 1000);
    opts.shuffle = false;
    for (const auto& r : ef::evaluate(corpus, titles, chunk, constant_scorer(0.5), opts).questions) {
      ASSERT_EQ(r.rank, r.ground_truth + 1);
      fixed.push_back(r.rank);
    }
    opts.shuffle = true;
    for (const auto& r : ef::evaluate(corpus, titles, chunk, constant_scorer(0.5), opts).questions) {
      shuffled.push_back(r.rank);
    }
  }
  double h20 = 0.0;
  for (int r = 1; r <= 20; ++r) h20 += 1.0 / r;
  // The commonly quoted 0.17994 is this value rounded loosely.
  EXPECT_NEAR(h20 / 20.0, 0.17994, 1e-4);
  EXPECT_NEAR(ef::compute_metrics(shuffled).mrr, h20 / 20.0, 0.01);
  // Answerers come first, so unshuffled ties favour the ground truth.
  EXPECT_GT(ef::compute_metrics(fixed).mrr, 0.3);
}

TEST(Evaluate, ShuffleLeavesDistinctScoresUnchanged) {
  const ef::Corpus corpus = synthetic_corpus(600);
  const auto vocab = ef::Vocabulary::build(all_titles(corpus), 1);
  const ef::TitleIndex titles(corpus.questions(), vocab, 16);
  // Score: a hash of the whole sequence, distinct per expert.
  const ef::SequenceScorer scorer = [](std::span<const ef::EncodedSequence> seqs) {
    std::vector<double> out;
    for (const auto& s : seqs) out.push_back(s.expert_id * 1.5 + s.length() * 1e-3);
    return out;
  };
  ef::EvalOptions opts;
  const auto& test = corpus.split().test;
  const auto plain = ef::evaluate(corpus, titles, test, scorer, opts);
  opts.shuffle = true;
  const auto shuffled = ef::evaluate(corpus, titles, test, scorer, opts);
  EXPECT_DOUBLE_EQ(plain.metrics.mrr, shuffled.metrics.mrr);
  EXPECT_DOUBLE_EQ(plain.metrics.ndcg, shuffled.metrics.ndcg);
}

TEST(Evaluate, IdenticalSeedsGiveIdenticalReports) {
  const ef::Corpus corpus = synthetic_corpus(600);
  const auto vocab = ef::Vocabulary::build(all_titles(corpus), 1);
  const ef::TitleIndex titles(corpus.questions(), vocab, 16);
  ef::ModelConfig mc;
  mc.d = 16;
  mc.heads = 2;
  mc.layers = 1;
  mc.max_len = 64;
  mc.word_vocab = vocab.size();
  mc.experts = corpus.profiles().size();
  auto params = ef::init_params<float>(mc, 3);
  ef::ensure_score_head(params, mc, 4);
  const ef::Encoder<float> encoder(mc);
  ef::EvalOptions opts;
  opts.assembly.max_len = 64;
  const auto& test = corpus.split().test;

  const auto run = [&](int workers) {
    const auto r = ef::evaluate(corpus, titles, test, ef::model_scorer(encoder, params, workers),
                                opts);
    std::ostringstream out;
    ef::write_report_summary(out, r);
    ef::write_report_records(out, r);
    return std::make_pair(r.fingerprint, out.str());
  };
  const auto a = run(1), b = run(1), c = run(3);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);

  opts.seed = 2;
  const auto d = ef::evaluate(corpus, titles, test, ef::model_scorer(encoder, params), opts);
  EXPECT_NE(d.fingerprint, a.first);
}

TEST(Evaluate, ColdAnswererUsesTargetOnlyFallback) {
  PostsBuilder b;
  b.warm_up(1001, 25);
  const auto q = b.question("target", 100);
  b.answer(q, 1001, 3, 1, true);
  b.answer(q, 2000, 3, 2);  // first answer ever by user 2000
  const ef::Corpus corpus = b.build();
  const auto vocab = ef::Vocabulary::build(all_titles(corpus), 1);
  const ef::TitleIndex titles(corpus.questions(), vocab, 16);
  const std::vector<std::int64_t> ids = {q};
  const auto r = ef::evaluate(corpus, titles, ids, constant_scorer(1.0), {});
  ASSERT_EQ(r.questions.size(), 1u);
  EXPECT_EQ(r.cold_candidates, 1u);
  EXPECT_TRUE(r.questions[0].cold[1]);
  EXPECT_EQ(std::count(r.questions[0].cold.begin(), r.questions[0].cold.end(), true), 1);
  std::ostringstream records;
  ef::write_report_records(records, r);
  EXPECT_NE(records.str().find("01000000000000000000"), std::string::npos);
}

TEST(Evaluate, MeanExpertRows) {
  ef::ModelConfig mc;
  mc.d = 8;
  mc.heads = 2;
  mc.layers = 1;
  mc.word_vocab = 20;
  mc.experts = 4;
  const auto params = ef::init_params<float>(mc, 1);
  const auto mean = ef::with_mean_expert_rows(params, 7);
  const auto& src = params.at("embed.expert");
  const auto& dst = mean.at("embed.expert");
  ASSERT_EQ(dst.shape, (ef::Shape{7, 8}));
  for (int c = 0; c < 8; ++c) {
    double m = 0.0;
    for (int r = 0; r < 4; ++r) m += src.values[r * 8 + c];
    m /= 4.0;
    for (int r = 0; r < 7; ++r) EXPECT_NEAR(dst.values[r * 8 + c], m, 1e-6);
  }
}

TEST(CaseStudy, MarksColdScores) {
  CandidateFixture f(1, 0);
  const auto vocab = ef::Vocabulary::build(all_titles(f.corpus), 1);
  const ef::TitleIndex titles(f.corpus.questions(), vocab, 16);
  const std::vector<std::int64_t> qids = {1, f.target};
  const std::vector<int> experts = {0, 1};
  std::ostringstream out;
  ef::write_case_study(out, f.corpus, titles, qids, experts, constant_scorer(2.0), {});
  const std::string s = out.str();
  // Neither expert has history before the first warm-up question.
  EXPECT_NE(s.find('*'), std::string::npos);
  EXPECT_NE(s.find("2.0000"), std::string::npos);
}
