// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <functional>

#include "expertfind/corpus.h"
#include "expertfind/errors.h"
#include "expertfind/vocab.h"
#include "text_util.h"

namespace expertfind {
namespace {

namespace fs = std::filesystem;

constexpr std::string_view kQuestionsHeader =
    "question_id\ttitle\taccepted_answer_id\tcreation_time\traw_score";
constexpr std::string_view kAnswersHeader =
    "answer_id\tparent_question_id\towner_expert_id\traw_vote_score\tcreation_time";
constexpr std::string_view kProfilesHeader = "expert_id\tuser_id\thistory_length\thistory";
constexpr std::string_view kSplitHeader = "split\tquestion_id";

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

// Calls row(fields, line_no) for each data line after checking the header.
void read_table(const fs::path& path, std::string_view header, std::size_t columns,
                const std::function<void(const std::vector<std::string_view>&, std::size_t)>& row) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("missing corpus file " + path.string() + " (produce it with `expertfind ingest`"
                    " or `expertfind synth`)");
  }
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || detail::trim(line) != header) {
    throw ParseError(path.filename().string() + ": expected header '" + std::string(header) + "'",
                     1);
  }
  ++line_no;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split(line, '\t');
    if (fields.size() != columns) {
      throw ParseError(path.filename().string() + ": expected " + std::to_string(columns) +
                           " fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    try {
      row(fields, line_no);
    } catch (const ParseError&) {
      throw;
    } catch (const DataError& e) {
      throw ParseError(path.filename().string() + ": " + e.what(), line_no);
    }
  }
}

}  // namespace

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats s;
  s.questions = corpus.questions().size();
  s.answers = corpus.answers().size();
  s.answerers = static_cast<std::size_t>(corpus.profiles().size());
  if (s.questions && s.answerers) {
    s.density_percent = 100.0 * static_cast<double>(s.answers) /
                        (static_cast<double>(s.questions) * static_cast<double>(s.answerers));
  }
  std::size_t tokens = 0;
  for (const auto& q : corpus.questions()) tokens += tokenize(q.title).size();
  if (s.questions) s.avg_title_length = static_cast<double>(tokens) / s.questions;
  return s;
}

void save_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "questions.tsv");
    out << kQuestionsHeader << '\n';
    for (const auto& q : corpus.questions()) {
      out << q.question_id << '\t' << detail::escape_field(q.title) << '\t';
      if (q.accepted_answer_id) out << *q.accepted_answer_id;
      out << '\t' << format_timestamp(q.creation_time) << '\t' << q.raw_score << '\n';
    }
  }
  {
    auto out = open_out(dir / "answers.tsv");
    out << kAnswersHeader << '\n';
    for (const auto& a : corpus.answers()) {
      out << a.answer_id << '\t' << a.parent_question_id << '\t' << a.owner_expert_id << '\t'
          << a.raw_vote_score << '\t' << format_timestamp(a.creation_time) << '\n';
    }
  }
  {
    auto out = open_out(dir / "profiles.tsv");
    out << kProfilesHeader << '\n';
    for (const auto& p : corpus.profiles().profiles()) {
      out << p.expert_id << '\t' << p.user_id << '\t' << p.history.size() << '\t';
      for (std::size_t i = 0; i < p.history.size(); ++i) {
        const auto& h = p.history[i];
        if (i) out << ';';
        out << h.question_id << ':' << h.answer_id << ':' << h.vote << ':'
            << format_timestamp(h.answered_at);
      }
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "split.tsv");
    out << kSplitHeader << '\n';
    for (auto id : corpus.split().train) out << "train\t" << id << '\n';
    for (auto id : corpus.split().validation) out << "validation\t" << id << '\n';
    for (auto id : corpus.split().test) out << "test\t" << id << '\n';
  }
  auto out = open_out(dir / "normalizer.txt");
  corpus.normalizer().write(out);
}

Corpus load_corpus(const fs::path& dir) {
  using detail::parse_int;
  std::vector<QuestionRecord> questions;
  read_table(dir / "questions.tsv", kQuestionsHeader, 5, [&](const auto& f, std::size_t) {
    QuestionRecord q;
    q.question_id = parse_int<std::int64_t>(f[0], "question_id");
    q.title = detail::unescape_field(f[1]);
    if (!detail::trim(f[2]).empty()) {
      q.accepted_answer_id = parse_int<std::int64_t>(f[2], "accepted_answer_id");
    }
    q.creation_time = parse_timestamp(f[3]);
    q.raw_score = parse_int<std::int64_t>(f[4], "raw_score");
    questions.push_back(std::move(q));
  });

  std::vector<AnswerRecord> answers;
  read_table(dir / "answers.tsv", kAnswersHeader, 5, [&](const auto& f, std::size_t) {
    answers.push_back({parse_int<std::int64_t>(f[0], "answer_id"),
                       parse_int<std::int64_t>(f[1], "parent_question_id"),
                       parse_int<std::int64_t>(f[2], "owner_expert_id"),
                       parse_int<std::int64_t>(f[3], "raw_vote_score"), parse_timestamp(f[4])});
  });

  std::vector<ExpertProfile> profiles;
  read_table(dir / "profiles.tsv", kProfilesHeader, 4, [&](const auto& f, std::size_t) {
    ExpertProfile p;
    p.expert_id = parse_int<int>(f[0], "expert_id");
    p.user_id = parse_int<std::int64_t>(f[1], "user_id");
    const auto n = parse_int<std::size_t>(f[2], "history_length");
    if (!f[3].empty()) {
      for (std::string_view item : detail::split(f[3], ';')) {
        // The timestamp contains ':' so split only the first three fields.
        const auto parts = detail::split(item, ':');
        if (parts.size() < 4) throw DataError("malformed history item '" + std::string(item) + "'");
        const std::size_t ts_start = parts[0].size() + parts[1].size() + parts[2].size() + 3;
        HistoryItem h{parse_int<std::int64_t>(parts[0], "question_id"),
                      parse_int<std::int64_t>(parts[1], "answer_id"),
                      parse_int<int>(parts[2], "vote"), parse_timestamp(item.substr(ts_start))};
        if (h.vote < VoteNormalizer::kMinClass || h.vote > VoteNormalizer::kMaxClass) {
          throw DataError("vote class " + std::to_string(h.vote) + " outside 1..10");
        }
        p.history.push_back(h);
      }
    }
    if (p.history.size() != n) throw DataError("history_length does not match the item count");
    profiles.push_back(std::move(p));
  });

  SplitSpec split;
  read_table(dir / "split.tsv", kSplitHeader, 2, [&](const auto& f, std::size_t) {
    const auto id = parse_int<std::int64_t>(f[1], "question_id");
    if (f[0] == "train") {
      split.train.push_back(id);
    } else if (f[0] == "validation") {
      split.validation.push_back(id);
    } else if (f[0] == "test") {
      split.test.push_back(id);
    } else {
      throw DataError("unknown split name '" + std::string(f[0]) + "'");
    }
  });

  std::ifstream norm_in(dir / "normalizer.txt");
  if (!norm_in) throw DataError("missing corpus file " + (dir / "normalizer.txt").string());
  const VoteNormalizer normalizer = VoteNormalizer::read(norm_in);

  return Corpus(std::move(questions), std::move(answers), normalizer,
                ProfileSet(std::move(profiles)), std::move(split));
}

}  // namespace expertfind
