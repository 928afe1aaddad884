// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end phases over on-disk artifacts, shared by the command-line tool
// and the Python module.
//
// Corpus directory: corpus files (see corpus.h), vocab.txt, stats.txt.
// Run directory:    config.txt, model.txt, vocab.txt, params.ckpt, plus the
//                   phase outputs (metrics.tsv, report.txt, records.tsv).

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "expertfind/corpus.h"
#include "expertfind/encoder.h"
#include "expertfind/eval.h"
#include "expertfind/finetune.h"
#include "expertfind/gradcheck.h"
#include "expertfind/pretrain.h"
#include "expertfind/synthetic.h"
#include "expertfind/vocab.h"

namespace expertfind {

// Version string written into every output directory.
std::string code_version();

struct RunConfig {
  std::filesystem::path corpus;             // training / evaluation corpus
  std::filesystem::path eval_corpus;        // evaluate: corpus to score (default: corpus)
  std::filesystem::path checkpoint_corpus;  // evaluate: corpus the checkpoint was trained on
  std::filesystem::path checkpoint;         // run directory holding params.ckpt
  std::filesystem::path init;               // finetune: run directory to start from
  std::filesystem::path output;
  std::string split = "test";
  std::uint64_t seed = 1;  // parameter init and training
  int workers = 1;
  int min_freq = Vocabulary::kDefaultMinFreq;
  int title_cap = 16;

  ModelConfig model;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  EvalOptions eval;
  SyntheticConfig synth;

  // Copies the shared fields (seed, workers, assembly limits) into the
  // per-phase configs.
  void resolve();
};

// "key=value" with dotted sections: model.*, pretrain.*, finetune.*, eval.*,
// synth.*; bare keys are the top-level fields. Unknown keys throw ConfigError.
void set_run_key(RunConfig& config, const std::string& key, const std::string& value);
// Reads key=value lines into `config` (later lines win).
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
// Applies "key=value" strings in order.
void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides);
void write_run_config(std::ostream& out, const RunConfig& config);

struct ModelBundle {
  ModelConfig model;
  Vocabulary vocab;
  ParamStore<float> params;
};

void save_model(const std::filesystem::path& dir, const ModelBundle& bundle);
// Throws DataError naming the producing command when files are missing.
ModelBundle load_model(const std::filesystem::path& dir);

// Vocabulary over the titles of questions created before the training cutoff.
Vocabulary corpus_vocabulary(const Corpus& corpus, int min_freq);

// Writes corpus files, vocab.txt and stats.txt; returns the statistics.
CorpusStats write_corpus_dir(const std::filesystem::path& dir, const Corpus& corpus,
                             const Vocabulary& vocab);
void write_stats(std::ostream& out, const CorpusStats& stats);

struct LoadedCorpus {
  Corpus corpus;
  Vocabulary vocab;
};
LoadedCorpus load_corpus_dir(const std::filesystem::path& dir);

// Question ids of a split by name: train, validation or test.
std::vector<std::int64_t> split_questions(const Corpus& corpus, const std::string& split);

// Phases. Each writes config.txt (with the code version) into config.output.
CorpusStats run_synth(const RunConfig& config);
CorpusStats run_ingest(const RunConfig& config, const std::filesystem::path& posts_xml);
PretrainResult run_pretrain(const RunConfig& config);
FinetuneResult run_finetune(const RunConfig& config);

struct LrSweepEntry {
  double learning_rate = 0.0;
  FinetuneResult result;
};
// One fine-tune per learning rate under output/lr_<value>/, plus sweep.tsv.
std::vector<LrSweepEntry> run_lr_sweep(const RunConfig& config, const std::vector<double>& rates);

// Scores a split of the evaluation corpus. When the checkpoint corpus differs
// from the evaluation corpus (zero-shot), every expert gets the mean trained
// expert embedding.
RankingReport run_evaluate(const RunConfig& config);

struct SweepEntry {
  std::string value;
  RankingReport report;
};
// pretrain + finetune + evaluate per value of `key`, each under
// output/<key>_<value>/, plus sweep.tsv.
std::vector<SweepEntry> run_sweep(const RunConfig& config, const std::string& key,
                                  const std::vector<std::string>& values);

void run_case_study(const RunConfig& config, const std::vector<std::int64_t>& questions,
                    const std::vector<int>& experts, std::ostream& out);

struct GradCheckSuite {
  GradCheckResult pretrain;  // combined pre-training loss
  GradCheckResult finetune;  // ranking loss over positive + negatives
  bool passed() const { return pretrain.passed && finetune.passed; }
};
// d=8, h=2, 2 layers, 3 experts, 12-token vocabulary, double precision.
GradCheckSuite run_gradcheck(bool corrupt_gradient = false);
void write_gradcheck(std::ostream& out, const GradCheckSuite& suite);

}  // namespace expertfind
