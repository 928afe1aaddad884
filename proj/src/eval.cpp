// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include "expertfind/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>

#include "expertfind/errors.h"
#include "expertfind/ops.h"
#include "parallel.h"

namespace expertfind {
namespace {

constexpr std::uint64_t kFillSalt = 0x46494c4cULL;
constexpr std::uint64_t kShuffleSalt = 0x53485546ULL;

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

CandidateSet build_candidates(const Corpus& corpus, std::int64_t question_id, std::uint64_t seed,
                              int size) {
  if (size < 1) throw ConfigError("candidate set size must be positive");
  const QuestionRecord& q = corpus.question(question_id);
  const auto truth = corpus.accepted_expert(question_id);
  if (!truth) {
    throw DataError("question " + std::to_string(question_id) + " has no accepted answerer");
  }
  const ProfileSet& profiles = corpus.profiles();

  std::vector<int> answerers;
  for (const AnswerRecord* a : corpus.answers_to(question_id)) {
    if (!profiles.contains_user(a->owner_expert_id)) continue;
    const int e = profiles.dense_id(a->owner_expert_id);
    if (std::find(answerers.begin(), answerers.end(), e) == answerers.end()) answerers.push_back(e);
  }
  if (static_cast<int>(answerers.size()) > size) {
    std::vector<int> kept;
    int others = 0;
    for (int e : answerers) {
      if (e == *truth) {
        kept.push_back(e);
      } else if (others < size - 1) {
        kept.push_back(e);
        ++others;
      }
    }
    answerers = std::move(kept);
  }

  CandidateSet set;
  set.question_id = question_id;
  set.experts = answerers;
  const std::size_t need = static_cast<std::size_t>(size) - answerers.size();
  if (need > 0) {
    std::vector<int> eligible;
    for (int e = 0; e < profiles.size(); ++e) {
      if (std::find(answerers.begin(), answerers.end(), e) != answerers.end()) continue;
      if (profiles.active_before(e, q.creation_time)) eligible.push_back(e);
    }
    if (eligible.size() < need) {
      throw DataError("question " + std::to_string(question_id) + ": only " +
                      std::to_string(answerers.size() + eligible.size()) +
                      " experts qualify for a " + std::to_string(size) + "-candidate set");
    }
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(question_id), kFillSalt}));
    for (std::size_t i = 0; i < need; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
      std::swap(eligible[i], eligible[j]);
      set.experts.push_back(eligible[i]);
    }
  }
  set.ground_truth = static_cast<int>(
      std::find(set.experts.begin(), set.experts.end(), *truth) - set.experts.begin());
  return set;
}

int rank_of(std::span<const double> scores, int ground_truth) {
  if (ground_truth < 0 || static_cast<std::size_t>(ground_truth) >= scores.size()) {
    throw IndexError("ground truth index " + std::to_string(ground_truth) + " outside " +
                     std::to_string(scores.size()) + " scores");
  }
  const double s = scores[static_cast<std::size_t>(ground_truth)];
  if (std::isnan(s)) throw NumericalError("ground truth score is NaN");
  int rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (std::isnan(scores[j])) throw NumericalError("candidate score is NaN");
    if (scores[j] > s || (scores[j] == s && static_cast<int>(j) < ground_truth)) ++rank;
  }
  return rank;
}

Metrics compute_metrics(std::span<const int> ranks, int max_rank) {
  if (ranks.empty()) throw DataError("no ranks to aggregate");
  Metrics m;
  for (int r : ranks) {
    if (r < 1 || r > max_rank) {
      throw DataError("rank " + std::to_string(r) + " outside 1.." + std::to_string(max_rank));
    }
    m.mrr += 1.0 / r;
    m.p_at_1 += r <= 1 ? 1.0 : 0.0;
    m.p_at_3 += r <= 3 ? 1.0 : 0.0;
    m.ndcg += 1.0 / std::log2(r + 1.0);
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.p_at_1 /= n;
  m.p_at_3 /= n;
  m.ndcg /= n;
  m.questions = ranks.size();
  return m;
}

SequenceScorer model_scorer(const Encoder<float>& encoder, const ParamStore<float>& params,
                            int workers) {
  check_params(params, encoder.config());
  if (!params.contains("head.score.w")) throw DataError("checkpoint has no score head");
  return [encoder, &params, workers](std::span<const EncodedSequence> seqs) {
    std::vector<double> scores(seqs.size());
    std::vector<std::unique_ptr<ParamBinding<float>>> bindings(
        static_cast<std::size_t>(detail::worker_slots(workers)));
    detail::parallel_for(seqs.size(), workers, [&](std::size_t i, int w) {
      auto& b = bindings[static_cast<std::size_t>(w)];
      if (!b) b = std::make_unique<ParamBinding<float>>(params, nullptr);
      const auto out = encoder.forward(*b, seqs[i], 0.0, nullptr);
      scores[i] = encoder.score(*b, out.expert_vector).item();
    });
    return scores;
  };
}

ParamStore<float> with_mean_expert_rows(const ParamStore<float>& params, int experts) {
  if (experts < 1) throw ConfigError("expert count must be positive");
  const auto& table = params.at("embed.expert");
  const std::size_t rows = table.shape.at(0), d = table.shape.at(1);
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += table.values[i * d + j];
  }
  std::vector<float> values;
  values.reserve(static_cast<std::size_t>(experts) * d);
  for (int e = 0; e < experts; ++e) {
    for (std::size_t j = 0; j < d; ++j) values.push_back(static_cast<float>(mean[j] / rows));
  }
  ParamStore<float> out = params;
  out.set("embed.expert", {static_cast<std::size_t>(experts), d}, std::move(values));
  return out;
}

RankingReport evaluate(const Corpus& corpus, const TitleIndex& titles,
                       std::span<const std::int64_t> question_ids, const SequenceScorer& scorer,
                       const EvalOptions& options) {
  if (question_ids.empty()) throw DataError("evaluation split is empty");
  if (options.limit > 0 && options.limit < question_ids.size()) {
    question_ids = question_ids.first(options.limit);
  }
  RankingReport report;
  report.seed = options.seed;
  std::vector<EncodedSequence> seqs;
  for (std::int64_t qid : question_ids) {
    CandidateSet set = build_candidates(corpus, qid, options.seed, options.candidates);
    if (options.shuffle) {
      const int truth = set.experts[static_cast<std::size_t>(set.ground_truth)];
      Rng rng(derive_seed({options.seed, static_cast<std::uint64_t>(qid), kShuffleSalt}));
      for (std::size_t i = set.experts.size(); i > 1; --i) {
        std::swap(set.experts[i - 1], set.experts[static_cast<std::size_t>(rng.below(i))]);
      }
      set.ground_truth = static_cast<int>(
          std::find(set.experts.begin(), set.experts.end(), truth) - set.experts.begin());
    }
    QuestionResult r;
    r.question_id = qid;
    r.ground_truth = set.ground_truth;
    const Timestamp as_of = corpus.question(qid).creation_time;
    for (int e : set.experts) {
      seqs.push_back(
          assemble_or_fallback(corpus.profiles()[e], qid, as_of, titles, options.assembly));
      r.cold.push_back(seqs.back().fallback);
      report.cold_candidates += seqs.back().fallback ? 1 : 0;
    }
    r.candidates = std::move(set.experts);
    report.questions.push_back(std::move(r));
  }

  const std::vector<double> scores = scorer(seqs);
  if (scores.size() != seqs.size()) {
    throw DimensionError("scorer returned " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(seqs.size()) + " sequences");
  }
  std::vector<int> ranks;
  std::size_t offset = 0;
  for (QuestionResult& r : report.questions) {
    r.scores.assign(scores.begin() + static_cast<std::ptrdiff_t>(offset),
                    scores.begin() + static_cast<std::ptrdiff_t>(offset + r.candidates.size()));
    offset += r.candidates.size();
    r.rank = rank_of(r.scores, r.ground_truth);
    ranks.push_back(r.rank);
  }
  report.metrics = compute_metrics(ranks, options.candidates);
  std::ostringstream records;
  write_report_records(records, report);
  report.fingerprint = fnv1a_hex(records.str());
  return report;
}

void write_report_summary(std::ostream& out, const RankingReport& report) {
  char buf[64];
  const auto line = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    out << key << '\t' << buf << '\n';
  };
  out << "questions\t" << report.metrics.questions << '\n';
  out << "seed\t" << report.seed << '\n';
  line("mrr", report.metrics.mrr);
  line("p_at_1", report.metrics.p_at_1);
  line("p_at_3", report.metrics.p_at_3);
  line("ndcg_at_20", report.metrics.ndcg);
  out << "cold_candidates\t" << report.cold_candidates << '\n';
  out << "fingerprint\t" << report.fingerprint << '\n';
}

void write_report_records(std::ostream& out, const RankingReport& report) {
  out << "question_id\tground_truth\trank\tcandidates\tscores\tcold\n";
  for (const QuestionResult& r : report.questions) {
    out << r.question_id << '\t' << r.ground_truth << '\t' << r.rank << '\t';
    for (std::size_t i = 0; i < r.candidates.size(); ++i) {
      out << (i ? " " : "") << r.candidates[i];
    }
    out << '\t';
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      out << (i ? " " : "") << format_score(r.scores[i]);
    }
    out << '\t';
    for (bool c : r.cold) out << (c ? '1' : '0');
    out << '\n';
  }
}

void write_case_study(std::ostream& out, const Corpus& corpus, const TitleIndex& titles,
                      std::span<const std::int64_t> question_ids, std::span<const int> experts,
                      const SequenceScorer& scorer, const AssemblyOptions& assembly) {
  std::vector<EncodedSequence> seqs;
  for (std::int64_t qid : question_ids) {
    const Timestamp as_of = corpus.question(qid).creation_time;
    for (int e : experts) {
      if (e < 0 || e >= corpus.profiles().size()) {
        throw IndexError("expert " + std::to_string(e) + " outside the corpus");
      }
      seqs.push_back(assemble_or_fallback(corpus.profiles()[e], qid, as_of, titles, assembly));
    }
  }
  const std::vector<double> scores = scorer(seqs);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-12s", "question");
  out << buf;
  for (int e : experts) {
    std::snprintf(buf, sizeof buf, " %10s", ("e" + std::to_string(e)).c_str());
    out << buf;
  }
  out << "  accepted\n";
  std::size_t k = 0;
  for (std::int64_t qid : question_ids) {
    std::snprintf(buf, sizeof buf, "%-12lld", static_cast<long long>(qid));
    out << buf;
    for (std::size_t j = 0; j < experts.size(); ++j, ++k) {
      std::snprintf(buf, sizeof buf, " %9.4f%c", scores[k], seqs[k].fallback ? '*' : ' ');
      out << buf;
    }
    const auto truth = corpus.accepted_expert(qid);
    out << "  " << (truth ? "e" + std::to_string(*truth) : std::string("-")) << '\n';
  }
  out << "* scored from the target question alone (no prior history)\n";
}

}  // namespace expertfind
