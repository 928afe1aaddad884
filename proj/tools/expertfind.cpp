// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line entry point: ingest/synth -> pretrain -> finetune -> evaluate.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "expertfind/errors.h"
#include "expertfind/pipeline.h"

namespace ef = expertfind;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  int workers = 0;
  std::string seed;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_file, "key=value config file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", common.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("--workers", common.workers, "worker threads for per-sequence work");
  cmd->add_option("--seed", common.seed, "training seed");
}

// Defaults, then the config file, then --set, then dedicated flags.
ef::RunConfig base_config(const Common& common) {
  ef::RunConfig config;
  if (!common.config_file.empty()) ef::apply_config_file(config, common.config_file);
  ef::apply_overrides(config, common.overrides);
  if (common.workers > 0) config.workers = common.workers;
  if (!common.seed.empty()) ef::set_run_key(config, "seed", common.seed);
  return config;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::istringstream conv(item);
    T v{};
    if (!(conv >> v) || !conv.eof()) {
      throw ef::ConfigError(std::string("bad ") + what + " list entry '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ef::ConfigError(std::string("empty ") + what + " list");
  return out;
}

std::vector<std::string> split_strings(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw ef::ConfigError("empty value list");
  return out;
}

void print_report(const ef::RankingReport& report) {
  std::printf("questions   %zu\n", report.metrics.questions);
  std::printf("MRR         %.4f\n", report.metrics.mrr);
  std::printf("P@1         %.4f\n", report.metrics.p_at_1);
  std::printf("P@3         %.4f\n", report.metrics.p_at_3);
  std::printf("NDCG@20     %.4f\n", report.metrics.ndcg);
  std::printf("cold        %zu candidates scored from the target alone\n",
              report.cold_candidates);
  std::printf("fingerprint %s\n", report.fingerprint.c_str());
}

void print_stats(const ef::CorpusStats& s) {
  std::printf("%-12s %-10s %-8s %-10s %-10s\n", "density(%)", "questions", "experts", "answers",
              "title_len");
  std::printf("%-12.4f %-10zu %-8zu %-10zu %-10.2f\n", s.density_percent, s.questions, s.answerers,
              s.answers, s.avg_title_length);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expert finding with a target-aware pre-trained encoder"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ef::code_version());

  Common common;
  std::string out, corpus, eval_corpus, checkpoint_corpus, checkpoint, init, posts, split;
  std::string lr_sweep, sweep_key = "pretrain.word_ratio",
                        sweep_values = "0.05,0.1,0.15,0.2,0.25";
  std::string questions, experts;
  double train_fraction = 0.0;
  bool shuffle = false, corrupt = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic planted corpus");
  add_common(synth, common);
  synth->add_option("--out", out, "output corpus directory")->required();

  auto* ingest = app.add_subcommand("ingest", "parse a Posts.xml dump into a corpus");
  add_common(ingest, common);
  ingest->add_option("--posts", posts, "Posts.xml")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", out, "output corpus directory")->required();

  auto* pretrain = app.add_subcommand("pretrain", "pre-train the encoder");
  add_common(pretrain, common);
  pretrain->add_option("--corpus", corpus, "corpus directory")->required();
  pretrain->add_option("--out", out, "run directory")->required();
  pretrain->add_option("--init", init, "start from this run directory");

  auto* finetune = app.add_subcommand("finetune", "fine-tune for expert ranking");
  add_common(finetune, common);
  finetune->add_option("--corpus", corpus, "corpus directory")->required();
  finetune->add_option("--out", out, "run directory")->required();
  finetune->add_option("--init", init, "pre-trained run directory (default: random init)");
  finetune->add_option("--train-fraction", train_fraction, "use the earliest fraction of train")
      ->check(CLI::Range(0.0, 1.0));
  finetune->add_option("--lr-sweep", lr_sweep, "comma-separated learning rates");

  auto* evaluate = app.add_subcommand("evaluate", "rank 20-expert candidate sets");
  add_common(evaluate, common);
  evaluate->add_option("--checkpoint", checkpoint, "fine-tuned run directory")->required();
  evaluate->add_option("--corpus", corpus, "corpus directory");
  evaluate->add_option("--eval-corpus", eval_corpus, "corpus to evaluate on");
  evaluate->add_option("--checkpoint-corpus", checkpoint_corpus,
                       "corpus the checkpoint was trained on (zero-shot when different)");
  evaluate->add_option("--out", out, "report directory")->required();
  evaluate->add_option("--split", split, "train, validation or test");
  evaluate->add_flag("--shuffle", shuffle, "shuffle candidates before ranking");

  auto* sweep = app.add_subcommand("sweep", "pretrain/finetune/evaluate per config value");
  add_common(sweep, common);
  sweep->add_option("--corpus", corpus, "corpus directory")->required();
  sweep->add_option("--out", out, "sweep directory")->required();
  sweep->add_option("--key", sweep_key, "config key to vary");
  sweep->add_option("--values", sweep_values, "comma-separated values");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gradcheck->add_flag("--corrupt", corrupt, "perturb one analytic gradient (negative control)");
  gradcheck->add_option("--out", out, "also write the report to this file");

  auto* casestudy = app.add_subcommand("casestudy", "score matrix for questions x experts");
  add_common(casestudy, common);
  casestudy->add_option("--checkpoint", checkpoint, "fine-tuned run directory")->required();
  casestudy->add_option("--corpus", corpus, "corpus directory")->required();
  casestudy->add_option("--questions", questions, "comma-separated question ids")->required();
  casestudy->add_option("--experts", experts, "comma-separated dense expert ids")->required();
  casestudy->add_option("--out", out, "write to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (gradcheck->parsed()) {
      const ef::GradCheckSuite suite = ef::run_gradcheck(corrupt);
      ef::write_gradcheck(std::cout, suite);
      if (!out.empty()) {
        std::ofstream file(out);
        ef::write_gradcheck(file, suite);
      }
      return suite.passed() ? kOk : kNumerical;
    }

    ef::RunConfig config = base_config(common);
    if (!out.empty()) config.output = out;
    if (!corpus.empty()) config.corpus = corpus;
    if (!init.empty()) config.init = init;
    if (!checkpoint.empty()) config.checkpoint = checkpoint;

    if (synth->parsed()) {
      print_stats(ef::run_synth(config));
    } else if (ingest->parsed()) {
      print_stats(ef::run_ingest(config, posts));
    } else if (pretrain->parsed()) {
      const ef::PretrainResult r = ef::run_pretrain(config);
      std::printf("pairs %zu (cold skipped %zu)\n", r.pairs, r.cold_skipped);
      if (!r.log.empty()) {
        const auto& l = r.log.back();
        std::printf("step %d  word %.4f  question %.4f  vote %.4f  total %.4f\n", l.step, l.word,
                    l.question, l.vote, l.total);
      }
    } else if (finetune->parsed()) {
      if (train_fraction > 0.0) config.finetune.train_fraction = train_fraction;
      if (!lr_sweep.empty()) {
        for (const auto& e : ef::run_lr_sweep(config, parse_list<double>(lr_sweep, "lr"))) {
          std::printf("lr %-10g best epoch %d  validation MRR %.4f\n", e.learning_rate,
                      e.result.best_epoch, e.result.best_validation_mrr);
        }
      } else {
        const ef::FinetuneResult r = ef::run_finetune(config);
        for (const auto& e : r.log) {
          std::printf("epoch %d  train loss %.4f  validation MRR %.4f\n", e.epoch, e.train_loss,
                      e.validation_mrr);
        }
        std::printf("best epoch %d (instances %zu, cold positives skipped %zu)\n", r.best_epoch,
                    r.instances, r.cold_positive);
      }
    } else if (evaluate->parsed()) {
      if (!eval_corpus.empty()) config.eval_corpus = eval_corpus;
      if (!checkpoint_corpus.empty()) config.checkpoint_corpus = checkpoint_corpus;
      if (!split.empty()) config.split = split;
      if (shuffle) config.eval.shuffle = true;
      if (config.corpus.empty() && config.eval_corpus.empty()) {
        throw ef::ConfigError("evaluate needs --corpus or --eval-corpus");
      }
      print_report(ef::run_evaluate(config));
    } else if (sweep->parsed()) {
      for (const auto& e : ef::run_sweep(config, sweep_key, split_strings(sweep_values))) {
        std::printf("%s=%-8s MRR %.4f  P@1 %.4f  P@3 %.4f  NDCG@20 %.4f\n", sweep_key.c_str(),
                    e.value.c_str(), e.report.metrics.mrr, e.report.metrics.p_at_1,
                    e.report.metrics.p_at_3, e.report.metrics.ndcg);
      }
    } else if (casestudy->parsed()) {
      const auto qids = parse_list<std::int64_t>(questions, "question");
      const auto eids = parse_list<int>(experts, "expert");
      if (out.empty()) {
        ef::run_case_study(config, qids, eids, std::cout);
      } else {
        std::ofstream file(out);
        if (!file) throw ef::Error("cannot open " + out + " for writing");
        ef::run_case_study(config, qids, eids, file);
      }
    }
    return kOk;
  } catch (const ef::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const ef::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
}
