// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "expertfind/corpus.h"
#include "expertfind/errors.h"
#include "expertfind/eval.h"
#include "expertfind/pipeline.h"

namespace py = pybind11;
namespace ef = expertfind;
using Path = std::filesystem::path;

namespace {

ef::RunConfig make_config(const std::optional<Path>& config_file,
                          const std::vector<std::string>& overrides, int workers) {
  ef::RunConfig c;
  if (config_file) ef::apply_config_file(c, *config_file);
  ef::apply_overrides(c, overrides);
  if (workers > 0) c.workers = workers;
  return c;
}

py::dict metrics_dict(const ef::Metrics& m) {
  py::dict d;
  d["mrr"] = m.mrr;
  d["p_at_1"] = m.p_at_1;
  d["p_at_3"] = m.p_at_3;
  d["ndcg_at_20"] = m.ndcg;
  d["questions"] = m.questions;
  return d;
}

py::dict stats_dict(const ef::CorpusStats& s) {
  py::dict d;
  d["questions"] = s.questions;
  d["answerers"] = s.answerers;
  d["answers"] = s.answers;
  d["density_percent"] = s.density_percent;
  d["avg_title_length"] = s.avg_title_length;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Expert finding with a target-aware pre-trained encoder";

  auto error = py::register_exception<ef::Error>(m, "Error");
  auto data_error = py::register_exception<ef::DataError>(m, "DataError", error.ptr());
  py::register_exception<ef::ParseError>(m, "ParseError", data_error.ptr());
  py::register_exception<ef::ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<ef::NumericalError>(m, "NumericalError", error.ptr());

  m.def("code_version", &ef::code_version);

  m.def(
      "synth",
      [](const Path& out, const std::optional<Path>& config,
         const std::vector<std::string>& overrides) {
        ef::RunConfig c = make_config(config, overrides, 0);
        c.output = out;
        return stats_dict(ef::run_synth(c));
      },
      py::arg("out"), py::arg("config") = py::none(),
      py::arg("overrides") = std::vector<std::string>{},
      "Generate a synthetic corpus directory; returns its statistics.");

  m.def(
      "ingest",
      [](const Path& posts, const Path& out, const std::optional<Path>& config,
         const std::vector<std::string>& overrides) {
        ef::RunConfig c = make_config(config, overrides, 0);
        c.output = out;
        return stats_dict(ef::run_ingest(c, posts));
      },
      py::arg("posts"), py::arg("out"), py::arg("config") = py::none(),
      py::arg("overrides") = std::vector<std::string>{},
      "Parse a Posts.xml dump into a corpus directory; returns its statistics.");

  m.def(
      "pretrain",
      [](const Path& corpus, const Path& out, const std::optional<Path>& init,
         const std::optional<Path>& config, const std::vector<std::string>& overrides,
         int workers) {
        ef::RunConfig c = make_config(config, overrides, workers);
        c.corpus = corpus;
        c.output = out;
        if (init) c.init = *init;
        ef::PretrainResult r;
        {
          py::gil_scoped_release release;
          r = ef::run_pretrain(c);
        }
        py::list log;
        for (const auto& l : r.log) {
          py::dict d;
          d["step"] = l.step;
          d["word_mlm"] = l.word;
          d["question_mlm"] = l.question;
          d["vote"] = l.vote;
          d["total"] = l.total;
          log.append(d);
        }
        return log;
      },
      py::arg("corpus"), py::arg("out"), py::arg("init") = py::none(),
      py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{},
      py::arg("workers") = 0, "Pre-train; returns the per-step loss log.");

  m.def(
      "finetune",
      [](const Path& corpus, const Path& out, const std::optional<Path>& init,
         const std::optional<Path>& config, const std::vector<std::string>& overrides,
         int workers) {
        ef::RunConfig c = make_config(config, overrides, workers);
        c.corpus = corpus;
        c.output = out;
        if (init) c.init = *init;
        ef::FinetuneResult r;
        {
          py::gil_scoped_release release;
          r = ef::run_finetune(c);
        }
        py::dict d;
        d["best_epoch"] = r.best_epoch;
        d["best_validation_mrr"] = r.best_validation_mrr;
        py::list epochs;
        for (const auto& e : r.log) {
          py::dict x;
          x["epoch"] = e.epoch;
          x["train_loss"] = e.train_loss;
          x["validation_mrr"] = e.validation_mrr;
          epochs.append(x);
        }
        d["epochs"] = epochs;
        return d;
      },
      py::arg("corpus"), py::arg("out"), py::arg("init") = py::none(),
      py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{},
      py::arg("workers") = 0, "Fine-tune for expert ranking; returns the epoch log.");

  m.def(
      "evaluate",
      [](const Path& checkpoint, const Path& corpus, const Path& out, const std::string& split,
         const std::optional<Path>& checkpoint_corpus, const std::optional<Path>& config,
         const std::vector<std::string>& overrides, int workers) {
        ef::RunConfig c = make_config(config, overrides, workers);
        c.checkpoint = checkpoint;
        c.corpus = corpus;
        c.output = out;
        c.split = split;
        if (checkpoint_corpus) c.checkpoint_corpus = *checkpoint_corpus;
        ef::RankingReport r;
        {
          py::gil_scoped_release release;
          r = ef::run_evaluate(c);
        }
        py::dict d = metrics_dict(r.metrics);
        d["fingerprint"] = r.fingerprint;
        d["cold_candidates"] = r.cold_candidates;
        return d;
      },
      py::arg("checkpoint"), py::arg("corpus"), py::arg("out"), py::arg("split") = "test",
      py::arg("checkpoint_corpus") = py::none(), py::arg("config") = py::none(),
      py::arg("overrides") = std::vector<std::string>{}, py::arg("workers") = 0,
      "Rank 20-expert candidate sets of a split; returns the metrics.");

  m.def(
      "gradcheck",
      [](bool corrupt) {
        const auto suite = ef::run_gradcheck(corrupt);
        std::ostringstream text;
        ef::write_gradcheck(text, suite);
        py::dict d;
        d["passed"] = suite.passed();
        d["pretrain_max_rel_error"] = suite.pretrain.max_rel_error;
        d["finetune_max_rel_error"] = suite.finetune.max_rel_error;
        d["report"] = text.str();
        return d;
      },
      py::arg("corrupt") = false, "Finite-difference gradient check of both losses.");

  m.def(
      "rank_of",
      [](const std::vector<double>& scores, int ground_truth) {
        return ef::rank_of(scores, ground_truth);
      },
      py::arg("scores"), py::arg("ground_truth"));

  m.def(
      "compute_metrics",
      [](const std::vector<int>& ranks, int max_rank) {
        return metrics_dict(ef::compute_metrics(ranks, max_rank));
      },
      py::arg("ranks"), py::arg("max_rank") = ef::kCandidateCount);

  m.def(
      "normalize_votes",
      [](const std::vector<std::int64_t>& raw) { return ef::normalize_votes(raw).second; },
      py::arg("raw_scores"), "Vote classes 1..10 for raw vote scores.");
}
