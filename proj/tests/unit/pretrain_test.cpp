// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "expertfind/errors.h"
#include "expertfind/pretrain.h"
#include "expertfind/synthetic.h"
#include "expertfind/vocab.h"

namespace ef = expertfind;

namespace {

struct World {
  ef::Corpus corpus;
  ef::Vocabulary vocab;
  std::unique_ptr<ef::TitleIndex> titles;
  ef::ModelConfig model;
  std::vector<ef::PretrainPair> pairs;

  explicit World(int questions = 300) {
    ef::SyntheticConfig sc;
    sc.experts = 20;
    sc.topics = 4;
    sc.questions = questions;
    corpus = ef::Corpus::build(ef::generate_synthetic(sc).posts);
    std::vector<std::string> t;
    for (const auto& q : corpus.questions()) t.push_back(q.title);
    vocab = ef::Vocabulary::build(t, 1);
    titles = std::make_unique<ef::TitleIndex>(corpus.questions(), vocab, 8);
    model.d = 16;
    model.heads = 2;
    model.layers = 1;
    model.max_len = 48;
    model.word_vocab = vocab.size();
    model.experts = corpus.profiles().size();
    pairs = ef::pretrain_pairs(corpus, corpus.split().train).pairs;
  }

  ef::PretrainConfig config() const {
    ef::PretrainConfig c;
    c.assembly.max_len = model.max_len;
    c.assembly.title_cap = 8;
    c.batch_size = 4;
    c.steps = 5;
    return c;
  }

  std::vector<ef::PretrainExample> examples(const ef::PretrainConfig& c, std::size_t n) const {
    std::vector<ef::PretrainExample> out;
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(ef::make_pretrain_example(pairs[i], corpus.profiles(), *titles, c,
                                              vocab.size(), 0));
    }
    return out;
  }
};

void zero(ef::ParamStore<double>& p, const char* name) {
  auto& v = p.at(name).values;
  std::fill(v.begin(), v.end(), 0.0);
}

}  // namespace

TEST(PretrainPairs, VoteLabelIsTheNormalizedAnswerVote) {
  World s;
  const auto result = ef::pretrain_pairs(s.corpus, s.corpus.split().train);
  ASSERT_FALSE(result.pairs.empty());
  EXPECT_GT(result.cold_skipped, 0u);  // every expert's first answer
  for (const auto& p : result.pairs) {
    const auto& profile = s.corpus.profiles()[p.expert_id];
    bool found = false;
    for (const ef::AnswerRecord* a : s.corpus.answers_to(p.question_id)) {
      if (a->owner_expert_id != profile.user_id) continue;
      EXPECT_EQ(p.vote_class, s.corpus.normalizer().normalize(a->raw_vote_score));
      found = true;
    }
    EXPECT_TRUE(found);
    EXPECT_EQ(p.as_of, s.corpus.question(p.question_id).creation_time);
  }
}

TEST(PretrainLoss, UniformLogitsGiveLogVocabularyAndLogTen) {
  World s;
  auto c = s.config();
  c.masking.word_ratio = 0.5;
  c.masking.question_ratio = 0.9;
  const auto batch = s.examples(c, 8);
  auto params = ef::init_params<double>(s.model, 1);
  zero(params, "embed.token");
  zero(params, "head.vote.w");
  const ef::Encoder<double> encoder(s.model);
  ef::ParamBinding<double> p(params, nullptr);
  const auto loss = ef::pretrain_loss(encoder, p, batch, c.tasks, 0.0, nullptr);
  ASSERT_GT(loss.word_positions, 0);
  ASSERT_GT(loss.question_positions, 0);
  const double lnv = std::log(static_cast<double>(s.vocab.size()));
  EXPECT_NEAR(loss.word.item(), lnv, 1e-9);
  EXPECT_NEAR(loss.question.item(), lnv, 1e-9);
  EXPECT_NEAR(loss.vote.item(), std::log(10.0), 1e-9);
  EXPECT_NEAR(loss.vote.item(), 2.302585, 1e-6);
}

TEST(PretrainLoss, TotalIsTheSumOfComponents) {
  World s;
  auto c = s.config();
  const ef::Encoder<double> encoder(s.model);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto params = ef::init_params<double>(s.model, seed);
    ef::ParamBinding<double> p(params, nullptr);
    const auto batch = s.examples(c, 4 + seed);
    const auto loss = ef::pretrain_loss(encoder, p, batch, c.tasks, 0.0, nullptr);
    EXPECT_NEAR(loss.total.item(), loss.word.item() + loss.question.item() + loss.vote.item(),
                1e-9);
  }
}

TEST(PretrainLoss, NoQuestionMaskingGivesZeroQuestionLoss) {
  World s;
  auto c = s.config();
  c.masking.question_ratio = 0.0;
  const auto batch = s.examples(c, 16);
  const auto params = ef::init_params<double>(s.model, 1);
  const ef::Encoder<double> encoder(s.model);
  ef::ParamBinding<double> p(params, nullptr);
  const auto loss = ef::pretrain_loss(encoder, p, batch, c.tasks, 0.0, nullptr);
  EXPECT_EQ(loss.question_positions, 0);
  EXPECT_EQ(loss.question.item(), 0.0);
}

TEST(PretrainLoss, DisabledTasksContributeNothing) {
  World s;
  auto c = s.config();
  c.tasks.vote = false;
  c.tasks.word = false;
  const auto batch = s.examples(c, 6);
  const auto params = ef::init_params<double>(s.model, 1);
  const ef::Encoder<double> encoder(s.model);
  ef::ParamBinding<double> p(params, nullptr);
  const auto loss = ef::pretrain_loss(encoder, p, batch, c.tasks, 0.0, nullptr);
  EXPECT_EQ(loss.vote.item(), 0.0);
  EXPECT_EQ(loss.word.item(), 0.0);
  EXPECT_EQ(loss.total.item(), loss.question.item());
}

TEST(Warmup, LinearThenConstant) {
  EXPECT_DOUBLE_EQ(ef::warmup_lr(1e-3, 0.05, 1, 100), 1e-3 / 5);
  EXPECT_DOUBLE_EQ(ef::warmup_lr(1e-3, 0.05, 5, 100), 1e-3);
  EXPECT_DOUBLE_EQ(ef::warmup_lr(1e-3, 0.05, 80, 100), 1e-3);
  EXPECT_DOUBLE_EQ(ef::warmup_lr(1e-3, 0.0, 1, 100), 1e-3);
}

TEST(PretrainLoop, ZeroLearningRateLeavesParametersBitIdentical) {
  World s;
  auto c = s.config();
  c.learning_rate = 0.0;
  auto params = ef::init_params<float>(s.model, 9);
  const auto before = params;
  ef::pretrain(s.corpus, *s.titles, s.model, c, params);
  EXPECT_TRUE(params == before);
}

TEST(PretrainLoop, SeededRunsRepeatExactlyForAnyWorkerCount) {
  World s;
  auto c = s.config();
  const auto run = [&](int workers, std::uint64_t seed) {
    auto cc = c;
    cc.workers = workers;
    cc.seed = seed;
    auto params = ef::init_params<float>(s.model, 2);
    std::ostringstream log;
    const auto r = ef::pretrain(s.corpus, *s.titles, s.model, cc, params, {.metrics = &log});
    std::vector<double> curve;
    for (const auto& l : r.log) curve.push_back(l.total);
    return std::make_pair(curve, params);
  };
  const auto a = run(1, 1), b = run(1, 1), c3 = run(3, 1), other = run(1, 2);
  EXPECT_EQ(a.first, b.first);
  EXPECT_TRUE(a.second == b.second);
  EXPECT_EQ(a.first, c3.first);
  EXPECT_TRUE(a.second == c3.second);
  EXPECT_NE(a.first, other.first);
}

TEST(PretrainLoop, OneStepMovesOnlyTheBatchExpertRows) {
  World s;
  auto c = s.config();
  c.steps = 1;
  c.warmup_fraction = 0.0;
  const std::vector<ef::PretrainPair> batch(s.pairs.begin(), s.pairs.begin() + c.batch_size);
  std::set<int> in_batch;
  for (const auto& p : batch) in_batch.insert(p.expert_id);
  auto params = ef::init_params<float>(s.model, 4);
  const auto before = params.at("embed.expert").values;
  ef::pretrain(batch, s.corpus.profiles(), *s.titles, s.model, c, params);
  const auto& after = params.at("embed.expert").values;
  const int d = s.model.d;
  for (int e = 0; e < s.model.experts; ++e) {
    bool changed = false;
    for (int j = 0; j < d; ++j) changed = changed || before[e * d + j] != after[e * d + j];
    EXPECT_EQ(changed, in_batch.count(e) == 1) << "expert " << e;
  }
}

TEST(PretrainLoop, MetricsLogHasOneLinePerStep) {
  World s;
  auto c = s.config();
  auto params = ef::init_params<float>(s.model, 1);
  std::ostringstream log;
  const auto r = ef::pretrain(s.corpus, *s.titles, s.model, c, params, {.metrics = &log});
  ASSERT_EQ(r.log.size(), 5u);
  std::istringstream in(log.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step\tword_mlm\tquestion_mlm\tvote\ttotal\twall_ms");
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 5);
  for (const auto& l : r.log) EXPECT_NEAR(l.total, l.word + l.question + l.vote, 1e-9);
}

TEST(PretrainLoop, CheckpointHookFiresAtTheInterval) {
  World s;
  auto c = s.config();
  c.steps = 6;
  c.checkpoint_every = 2;
  auto params = ef::init_params<float>(s.model, 1);
  std::vector<int> steps;
  ef::PretrainHooks hooks;
  hooks.checkpoint = [&](int step, const ef::ParamStore<float>&) { steps.push_back(step); };
  ef::pretrain(s.corpus, *s.titles, s.model, c, params, hooks);
  EXPECT_EQ(steps, (std::vector<int>{2, 4, 6}));
}

TEST(PretrainLoop, NonFiniteParametersAbort) {
  World s;
  auto c = s.config();
  auto params = ef::init_params<float>(s.model, 1);
  params.at("head.vote.b").values[0] = std::nanf("");
  EXPECT_THROW(ef::pretrain(s.corpus, *s.titles, s.model, c, params), ef::NumericalError);
}

TEST(PretrainLoop, TrainingLowersTheLoss) {
  World s;
  auto c = s.config();
  c.steps = 150;
  c.batch_size = 8;
  c.learning_rate = 3e-3;
  c.warmup_fraction = 0.0;
  auto params = ef::init_params<float>(s.model, 1);
  const auto r = ef::pretrain(s.corpus, *s.titles, s.model, c, params);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) first += r.log[i].total, last += r.log[r.log.size() - 1 - i].total;
  EXPECT_LT(last, first);
  const ef::Encoder<float> encoder(s.model);
  const double acc =
      ef::vote_accuracy(encoder, params, s.pairs, s.corpus.profiles(), *s.titles, c.assembly);
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
}

TEST(PretrainLoop, VoteAccuracyFollowsTheVoteHead) {
  World s;
  const auto c = s.config();
  auto params = ef::init_params<float>(s.model, 1);
  auto& w = params.at("head.vote.w").values;
  std::fill(w.begin(), w.end(), 0.0f);
  auto& b = params.at("head.vote.b").values;
  std::fill(b.begin(), b.end(), 0.0f);
  const ef::Encoder<float> encoder(s.model);
  for (int cls : {1, 4, 10}) {
    b[static_cast<std::size_t>(cls - 1)] = 5.0f;
    const double expected =
        static_cast<double>(std::count_if(s.pairs.begin(), s.pairs.end(),
                                          [&](const auto& p) { return p.vote_class == cls; })) /
        static_cast<double>(s.pairs.size());
    EXPECT_DOUBLE_EQ(
        ef::vote_accuracy(encoder, params, s.pairs, s.corpus.profiles(), *s.titles, c.assembly, 2),
        expected)
        << cls;
    b[static_cast<std::size_t>(cls - 1)] = 0.0f;
  }
}
