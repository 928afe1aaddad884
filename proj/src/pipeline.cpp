// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include "expertfind/pipeline.h"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "expertfind/checkpoint.h"
#include "expertfind/errors.h"
#include "expertfind/ops.h"
#include "text_util.h"

namespace expertfind {
namespace {

namespace fs = std::filesystem;

constexpr const char* kParamsFile = "params.ckpt";
constexpr const char* kModelFile = "model.txt";
constexpr const char* kVocabFile = "vocab.txt";
constexpr const char* kConfigFile = "config.txt";

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + " expects true/false, got '" + v + "'");
}

template <typename Int>
Int parse_int_key(const std::string& key, const std::string& v) {
  Int out{};
  if (!detail::try_parse_int(v, out)) {
    throw ConfigError(key + " expects an integer, got '" + v + "'");
  }
  return out;
}

double parse_double_key(const std::string& key, const std::string& v) {
  try {
    return detail::parse_double(v, key);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
}

std::string fmt(double v) { return detail::format_double(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

void prepare_output(const RunConfig& config) {
  if (config.output.empty()) throw ConfigError("no output directory given (--out)");
  fs::create_directories(config.output);
  auto out = open_out(config.output / kConfigFile);
  write_run_config(out, config);
}

void require_file(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw DataError("missing " + path.string() + "; produce it with `expertfind " + producer + "`");
  }
}

RunConfig resolved(const RunConfig& config) {
  RunConfig c = config;
  c.resolve();
  return c;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char ch : s) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-')
                               ? ch
                               : '_';
  return out;
}

}  // namespace

std::string code_version() { return std::string("expertfind ") + EXPERTFIND_VERSION; }

void RunConfig::resolve() {
  const AssemblyOptions assembly{model.max_len, title_cap};
  pretrain.assembly = assembly;
  finetune.assembly = assembly;
  eval.assembly = assembly;
  pretrain.seed = seed;
  finetune.seed = seed;
  pretrain.workers = workers;
  finetune.workers = workers;
}

void set_run_key(RunConfig& c, const std::string& key, const std::string& value) {
  const auto dot = key.find('.');
  const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
  const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
  const auto as_int = [&] { return parse_int_key<int>(key, value); };
  const auto as_u64 = [&] { return parse_int_key<std::uint64_t>(key, value); };
  const auto as_i64 = [&] { return parse_int_key<std::int64_t>(key, value); };
  const auto as_double = [&] { return parse_double_key(key, value); };
  const auto as_bool = [&] { return parse_bool(key, value); };
  const auto unknown = [&] { throw ConfigError("unknown config key '" + key + "'"); };

  if (section.empty()) {
    if (name == "corpus") c.corpus = value;
    else if (name == "eval_corpus") c.eval_corpus = value;
    else if (name == "checkpoint_corpus") c.checkpoint_corpus = value;
    else if (name == "checkpoint") c.checkpoint = value;
    else if (name == "init") c.init = value;
    else if (name == "output") c.output = value;
    else if (name == "split") c.split = value;
    else if (name == "seed") c.seed = as_u64();
    else if (name == "workers") c.workers = as_int();
    else if (name == "min_freq") c.min_freq = as_int();
    else if (name == "title_cap") c.title_cap = as_int();
    else if (name == "code_version") {}
    else unknown();
  } else if (section == "model") {
    set_model_key(c.model, name, value);
  } else if (section == "pretrain") {
    auto& p = c.pretrain;
    if (name == "learning_rate") p.learning_rate = as_double();
    else if (name == "steps") p.steps = as_int();
    else if (name == "batch_size") p.batch_size = as_int();
    else if (name == "warmup_fraction") p.warmup_fraction = as_double();
    else if (name == "word_ratio") p.masking.word_ratio = as_double();
    else if (name == "question_ratio") p.masking.question_ratio = as_double();
    else if (name == "task_word") p.tasks.word = as_bool();
    else if (name == "task_question") p.tasks.question = as_bool();
    else if (name == "task_vote") p.tasks.vote = as_bool();
    else if (name == "log_every") p.log_every = as_int();
    else if (name == "checkpoint_every") p.checkpoint_every = as_int();
    else unknown();
  } else if (section == "finetune") {
    auto& f = c.finetune;
    if (name == "learning_rate") f.learning_rate = as_double();
    else if (name == "k") f.k = as_int();
    else if (name == "epochs") f.epochs = as_int();
    else if (name == "patience") f.patience = as_int();
    else if (name == "batch_size") f.batch_size = as_int();
    else if (name == "warmup_fraction") f.warmup_fraction = as_double();
    else if (name == "train_fraction") f.train_fraction = as_double();
    else if (name == "validation_limit") f.validation_limit = static_cast<std::size_t>(as_u64());
    else unknown();
  } else if (section == "eval") {
    auto& e = c.eval;
    if (name == "seed") e.seed = as_u64();
    else if (name == "candidates") e.candidates = as_int();
    else if (name == "shuffle") e.shuffle = as_bool();
    else if (name == "limit") e.limit = static_cast<std::size_t>(as_u64());
    else unknown();
  } else if (section == "synth") {
    auto& s = c.synth;
    if (name == "experts") s.experts = as_int();
    else if (name == "topics") s.topics = as_int();
    else if (name == "questions") s.questions = as_int();
    else if (name == "seed") s.seed = as_u64();
    else if (name == "words_per_topic") s.words_per_topic = as_int();
    else if (name == "common_words") s.common_words = as_int();
    else if (name == "title_min_tokens") s.title_min_tokens = as_int();
    else if (name == "title_max_tokens") s.title_max_tokens = as_int();
    else if (name == "topic_word_prob") s.topic_word_prob = as_double();
    else if (name == "primary_affinity") s.primary_affinity = as_double();
    else if (name == "secondary_affinity") s.secondary_affinity = as_double();
    else if (name == "sharpness") s.sharpness = as_double();
    else if (name == "skill_variance") s.skill_variance = as_double();
    else if (name == "skill_weighted_answers") s.skill_weighted_answers = as_bool();
    else if (name == "max_extra_answers") s.max_extra_answers = as_int();
    else if (name == "vote_noise") s.vote_noise = as_double();
    else if (name == "other_vote_shift") s.other_vote_shift = as_int();
    else if (name == "start_time") s.start_time = as_i64();
    else if (name == "question_interval_ms") s.question_interval_ms = as_i64();
    else if (name == "answer_interval_ms") s.answer_interval_ms = as_i64();
    else unknown();
  } else {
    unknown();
  }
}

void apply_config_file(RunConfig& config, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::vector<std::pair<std::string, std::string>> lines;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t(detail::trim(line));
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key=value");
    }
    set_run_key(config, std::string(detail::trim(t.substr(0, eq))),
                std::string(detail::trim(t.substr(eq + 1))));
  }
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides) {
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    set_run_key(config, std::string(detail::trim(o.substr(0, eq))),
                std::string(detail::trim(o.substr(eq + 1))));
  }
}

void write_run_config(std::ostream& out, const RunConfig& c) {
  out << "code_version=" << code_version() << '\n';
  const auto path = [&](const char* key, const fs::path& p) {
    if (!p.empty()) out << key << '=' << p.string() << '\n';
  };
  path("corpus", c.corpus);
  path("eval_corpus", c.eval_corpus);
  path("checkpoint_corpus", c.checkpoint_corpus);
  path("checkpoint", c.checkpoint);
  path("init", c.init);
  path("output", c.output);
  out << "split=" << c.split << '\n'
      << "seed=" << c.seed << '\n'
      << "workers=" << c.workers << '\n'
      << "min_freq=" << c.min_freq << '\n'
      << "title_cap=" << c.title_cap << '\n';

  std::ostringstream model;
  c.model.write(model);
  std::istringstream lines(model.str());
  for (std::string line; std::getline(lines, line);) out << "model." << line << '\n';

  const auto& p = c.pretrain;
  out << "pretrain.learning_rate=" << fmt(p.learning_rate) << '\n'
      << "pretrain.steps=" << p.steps << '\n'
      << "pretrain.batch_size=" << p.batch_size << '\n'
      << "pretrain.warmup_fraction=" << fmt(p.warmup_fraction) << '\n'
      << "pretrain.word_ratio=" << fmt(p.masking.word_ratio) << '\n'
      << "pretrain.question_ratio=" << fmt(p.masking.question_ratio) << '\n'
      << "pretrain.task_word=" << fmt(p.tasks.word) << '\n'
      << "pretrain.task_question=" << fmt(p.tasks.question) << '\n'
      << "pretrain.task_vote=" << fmt(p.tasks.vote) << '\n'
      << "pretrain.log_every=" << p.log_every << '\n'
      << "pretrain.checkpoint_every=" << p.checkpoint_every << '\n';
  const auto& f = c.finetune;
  out << "finetune.learning_rate=" << fmt(f.learning_rate) << '\n'
      << "finetune.k=" << f.k << '\n'
      << "finetune.epochs=" << f.epochs << '\n'
      << "finetune.patience=" << f.patience << '\n'
      << "finetune.batch_size=" << f.batch_size << '\n'
      << "finetune.warmup_fraction=" << fmt(f.warmup_fraction) << '\n'
      << "finetune.train_fraction=" << fmt(f.train_fraction) << '\n'
      << "finetune.validation_limit=" << f.validation_limit << '\n';
  const auto& e = c.eval;
  out << "eval.seed=" << e.seed << '\n'
      << "eval.candidates=" << e.candidates << '\n'
      << "eval.shuffle=" << fmt(e.shuffle) << '\n'
      << "eval.limit=" << e.limit << '\n';
  const auto& s = c.synth;
  out << "synth.experts=" << s.experts << '\n'
      << "synth.topics=" << s.topics << '\n'
      << "synth.questions=" << s.questions << '\n'
      << "synth.seed=" << s.seed << '\n'
      << "synth.words_per_topic=" << s.words_per_topic << '\n'
      << "synth.common_words=" << s.common_words << '\n'
      << "synth.title_min_tokens=" << s.title_min_tokens << '\n'
      << "synth.title_max_tokens=" << s.title_max_tokens << '\n'
      << "synth.topic_word_prob=" << fmt(s.topic_word_prob) << '\n'
      << "synth.primary_affinity=" << fmt(s.primary_affinity) << '\n'
      << "synth.secondary_affinity=" << fmt(s.secondary_affinity) << '\n'
      << "synth.sharpness=" << fmt(s.sharpness) << '\n'
      << "synth.skill_variance=" << fmt(s.skill_variance) << '\n'
      << "synth.skill_weighted_answers=" << fmt(s.skill_weighted_answers) << '\n'
      << "synth.max_extra_answers=" << s.max_extra_answers << '\n'
      << "synth.vote_noise=" << fmt(s.vote_noise) << '\n'
      << "synth.other_vote_shift=" << s.other_vote_shift << '\n'
      << "synth.start_time=" << s.start_time << '\n'
      << "synth.question_interval_ms=" << s.question_interval_ms << '\n'
      << "synth.answer_interval_ms=" << s.answer_interval_ms << '\n';
}

void save_model(const fs::path& dir, const ModelBundle& bundle) {
  fs::create_directories(dir);
  bundle.model.save(dir / kModelFile);
  bundle.vocab.save(dir / kVocabFile);
  save_checkpoint(dir / kParamsFile, bundle.params);
}

ModelBundle load_model(const fs::path& dir) {
  for (const char* f : {kModelFile, kVocabFile, kParamsFile}) {
    require_file(dir / f, "pretrain` or `expertfind finetune");
  }
  ModelBundle b{ModelConfig::load(dir / kModelFile), Vocabulary::load(dir / kVocabFile),
                load_checkpoint<float>(dir / kParamsFile)};
  if (b.vocab.size() != b.model.word_vocab) {
    throw DataError(dir.string() + ": vocabulary size does not match model.txt");
  }
  check_params(b.params, b.model);
  return b;
}

Vocabulary corpus_vocabulary(const Corpus& corpus, int min_freq) {
  const Timestamp cutoff = corpus.train_cutoff();
  std::vector<std::string> titles;
  for (const QuestionRecord& q : corpus.questions()) {
    if (q.creation_time < cutoff) titles.push_back(q.title);
  }
  return Vocabulary::build(titles, min_freq);
}

void write_stats(std::ostream& out, const CorpusStats& s) {
  char buf[64];
  out << "questions\t" << s.questions << '\n'
      << "answerers\t" << s.answerers << '\n'
      << "answers\t" << s.answers << '\n';
  std::snprintf(buf, sizeof buf, "%.4f", s.density_percent);
  out << "density_percent\t" << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.2f", s.avg_title_length);
  out << "avg_title_length\t" << buf << '\n';
}

CorpusStats write_corpus_dir(const fs::path& dir, const Corpus& corpus, const Vocabulary& vocab) {
  save_corpus(corpus, dir);
  vocab.save(dir / kVocabFile);
  const CorpusStats stats = corpus_stats(corpus);
  auto out = open_out(dir / "stats.txt");
  write_stats(out, stats);
  const ParseStats& p = corpus.parse_stats();
  out << "parsed_rows\t" << p.rows << '\n'
      << "dropped_missing_owner\t" << p.missing_owner << '\n'
      << "dropped_missing_title\t" << p.missing_title << '\n'
      << "skipped_other_post_types\t" << p.unknown_post_type << '\n'
      << "dropped_dangling_answers\t" << p.dangling_answers << '\n'
      << "cleared_unresolved_accepted\t" << p.unresolved_accepted << '\n'
      << "vocabulary_size\t" << vocab.size() << '\n'
      << "train_questions\t" << corpus.split().train.size() << '\n'
      << "validation_questions\t" << corpus.split().validation.size() << '\n'
      << "test_questions\t" << corpus.split().test.size() << '\n';
  return stats;
}

LoadedCorpus load_corpus_dir(const fs::path& dir) {
  if (dir.empty()) throw ConfigError("no corpus directory given (--corpus)");
  require_file(dir / kVocabFile, "ingest` or `expertfind synth");
  return {load_corpus(dir), Vocabulary::load(dir / kVocabFile)};
}

std::vector<std::int64_t> split_questions(const Corpus& corpus, const std::string& split) {
  if (split == "train") return corpus.split().train;
  if (split == "validation") return corpus.split().validation;
  if (split == "test") return corpus.split().test;
  throw ConfigError("unknown split '" + split + "' (train, validation or test)");
}

CorpusStats run_synth(const RunConfig& config) {
  prepare_output(config);
  const SyntheticCorpus syn = generate_synthetic(config.synth);
  const Corpus corpus = Corpus::build(syn.posts);
  const CorpusStats stats =
      write_corpus_dir(config.output, corpus, corpus_vocabulary(corpus, config.min_freq));
  {
    auto out = open_out(config.output / "posts.xml");
    write_posts(out, syn.posts);
  }
  auto out = open_out(config.output / "truth.tsv");
  out << "kind\tid\ttopic\n";
  for (std::size_t e = 0; e < syn.truth.primary_topic.size(); ++e) {
    out << "expert\t" << corpus.profiles().dense_id(syn.truth.user_id[e]) << '\t'
        << syn.truth.primary_topic[e] << '\n';
  }
  for (std::size_t q = 0; q < syn.truth.question_topic.size(); ++q) {
    out << "question\t" << q + 1 << '\t' << syn.truth.question_topic[q] << '\n';
  }
  return stats;
}

CorpusStats run_ingest(const RunConfig& config, const fs::path& posts_xml) {
  std::ifstream in(posts_xml, std::ios::binary);
  if (!in) throw DataError("cannot open posts file " + posts_xml.string());
  PostsData posts = parse_posts(in);
  prepare_output(config);
  const Corpus corpus = Corpus::build(std::move(posts));
  return write_corpus_dir(config.output, corpus, corpus_vocabulary(corpus, config.min_freq));
}

PretrainResult run_pretrain(const RunConfig& raw) {
  const RunConfig config = resolved(raw);
  LoadedCorpus data = load_corpus_dir(config.corpus);
  ModelBundle bundle;
  if (!config.init.empty()) {
    bundle = load_model(config.init);
    bundle.model.dropout_pretrain = config.model.dropout_pretrain;
  } else {
    bundle.model = config.model;
    bundle.model.word_vocab = data.vocab.size();
    bundle.model.experts = data.corpus.profiles().size();
    bundle.vocab = data.vocab;
    bundle.params = init_params<float>(bundle.model, config.seed);
  }
  if (bundle.model.experts != data.corpus.profiles().size()) {
    throw DataError("initial checkpoint has " + std::to_string(bundle.model.experts) +
                    " experts, corpus has " + std::to_string(data.corpus.profiles().size()));
  }
  RunConfig written = config;
  written.model = bundle.model;
  prepare_output(written);
  const TitleIndex titles(data.corpus.questions(), bundle.vocab, config.title_cap);
  auto metrics = open_out(config.output / "metrics.tsv");
  PretrainHooks hooks;
  hooks.metrics = &metrics;
  hooks.checkpoint = [&](int step, const ParamStore<float>& params) {
    save_checkpoint(config.output / ("params_step" + std::to_string(step) + ".ckpt"), params);
  };
  PretrainConfig pc = config.pretrain;
  pc.assembly.max_len = bundle.model.max_len;
  try {
    PretrainResult result = pretrain(data.corpus, titles, bundle.model, pc, bundle.params, hooks);
    save_model(config.output, bundle);
    return result;
  } catch (const NumericalError&) {
    save_model(config.output, bundle);
    throw;
  }
}

FinetuneResult run_finetune(const RunConfig& raw) {
  const RunConfig config = resolved(raw);
  LoadedCorpus data = load_corpus_dir(config.corpus);
  ModelBundle bundle;
  if (!config.init.empty()) {
    bundle = load_model(config.init);
    bundle.model.dropout_finetune = config.model.dropout_finetune;
    if (bundle.model.experts != data.corpus.profiles().size()) {
      throw DataError("checkpoint " + config.init.string() + " has " +
                      std::to_string(bundle.model.experts) + " experts but the corpus has " +
                      std::to_string(data.corpus.profiles().size()));
    }
  } else {
    bundle.model = config.model;
    bundle.model.word_vocab = data.vocab.size();
    bundle.model.experts = data.corpus.profiles().size();
    bundle.vocab = data.vocab;
    bundle.params = init_params<float>(bundle.model, config.seed);
  }
  RunConfig written = config;
  written.model = bundle.model;
  FinetuneConfig ft = config.finetune;
  ft.assembly.max_len = bundle.model.max_len;
  prepare_output(written);
  const TitleIndex titles(data.corpus.questions(), bundle.vocab, config.title_cap);
  auto metrics = open_out(config.output / "metrics.tsv");
  FinetuneHooks hooks;
  hooks.metrics = &metrics;
  try {
    FinetuneResult result = finetune(data.corpus, titles, bundle.model, ft, bundle.params, hooks);
    save_model(config.output, bundle);
    return result;
  } catch (const NumericalError&) {
    save_model(config.output, bundle);
    throw;
  }
}

std::vector<LrSweepEntry> run_lr_sweep(const RunConfig& config, const std::vector<double>& rates) {
  if (rates.empty()) throw ConfigError("empty learning-rate list");
  prepare_output(config);
  std::vector<LrSweepEntry> entries;
  for (double lr : rates) {
    RunConfig c = config;
    c.finetune.learning_rate = lr;
    c.output = config.output / ("lr_" + sanitize(fmt(lr)));
    entries.push_back({lr, run_finetune(c)});
  }
  auto out = open_out(config.output / "sweep.tsv");
  out << "learning_rate\tbest_epoch\tvalidation_mrr\n";
  char buf[64];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%.6f", e.result.best_validation_mrr);
    out << fmt(e.learning_rate) << '\t' << e.result.best_epoch << '\t' << buf << '\n';
  }
  return entries;
}

RankingReport run_evaluate(const RunConfig& raw) {
  const RunConfig config = resolved(raw);
  if (config.checkpoint.empty()) throw ConfigError("no checkpoint given (--checkpoint)");
  ModelBundle bundle = load_model(config.checkpoint);
  if (!bundle.params.contains("head.score.w")) {
    throw DataError(config.checkpoint.string() +
                    " has no score head; produce it with `expertfind finetune`");
  }
  const fs::path eval_dir = config.eval_corpus.empty() ? config.corpus : config.eval_corpus;
  const Corpus corpus = load_corpus_dir(eval_dir).corpus;
  const bool zero_shot =
      !config.checkpoint_corpus.empty() &&
      fs::weakly_canonical(config.checkpoint_corpus) != fs::weakly_canonical(eval_dir);
  if (zero_shot) {
    bundle.params = with_mean_expert_rows(bundle.params, corpus.profiles().size());
    bundle.model.experts = corpus.profiles().size();
  } else if (bundle.model.experts != corpus.profiles().size()) {
    throw DataError("checkpoint has " + std::to_string(bundle.model.experts) +
                    " experts but the evaluation corpus has " +
                    std::to_string(corpus.profiles().size()) +
                    "; pass --checkpoint-corpus for a zero-shot evaluation");
  }
  prepare_output(config);
  EvalOptions eval = config.eval;
  eval.assembly.max_len = bundle.model.max_len;
  const TitleIndex titles(corpus.questions(), bundle.vocab, config.title_cap);
  const Encoder<float> encoder(bundle.model);
  const auto ids = split_questions(corpus, config.split);
  RankingReport report =
      evaluate(corpus, titles, ids, model_scorer(encoder, bundle.params, config.workers), eval);
  {
    auto out = open_out(config.output / "report.txt");
    out << "split\t" << config.split << '\n' << "zero_shot\t" << fmt(zero_shot) << '\n';
    write_report_summary(out, report);
  }
  auto records = open_out(config.output / "records.tsv");
  write_report_records(records, report);
  return report;
}

std::vector<SweepEntry> run_sweep(const RunConfig& config, const std::string& key,
                                  const std::vector<std::string>& values) {
  if (values.empty()) throw ConfigError("empty sweep value list");
  prepare_output(config);
  std::vector<SweepEntry> entries;
  for (const std::string& v : values) {
    RunConfig c = config;
    set_run_key(c, key, v);
    const fs::path dir = config.output / (sanitize(key) + "_" + sanitize(v));
    c.output = dir / "pretrain";
    run_pretrain(c);
    c.init = dir / "pretrain";
    c.output = dir / "finetune";
    run_finetune(c);
    c.init.clear();
    c.checkpoint = dir / "finetune";
    c.output = dir;
    entries.push_back({v, run_evaluate(c)});
  }
  auto out = open_out(config.output / "sweep.tsv");
  out << key << "\tmrr\tp_at_1\tp_at_3\tndcg_at_20\n";
  char buf[128];
  for (const auto& e : entries) {
    const Metrics& m = e.report.metrics;
    std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\t%.6f\t%.6f\n", m.mrr, m.p_at_1, m.p_at_3,
                  m.ndcg);
    out << e.value << buf;
  }
  return entries;
}

void run_case_study(const RunConfig& raw, const std::vector<std::int64_t>& questions,
                    const std::vector<int>& experts, std::ostream& out) {
  const RunConfig config = resolved(raw);
  if (config.checkpoint.empty()) throw ConfigError("no checkpoint given (--checkpoint)");
  const ModelBundle bundle = load_model(config.checkpoint);
  if (!bundle.params.contains("head.score.w")) {
    throw DataError(config.checkpoint.string() +
                    " has no score head; produce it with `expertfind finetune`");
  }
  const Corpus corpus =
      load_corpus_dir(config.eval_corpus.empty() ? config.corpus : config.eval_corpus).corpus;
  if (bundle.model.experts != corpus.profiles().size()) {
    throw DataError("checkpoint and corpus disagree on the number of experts");
  }
  const TitleIndex titles(corpus.questions(), bundle.vocab, config.title_cap);
  const Encoder<float> encoder(bundle.model);
  write_case_study(out, corpus, titles, questions, experts,
                   model_scorer(encoder, bundle.params, config.workers),
                   {bundle.model.max_len, config.title_cap});
}

namespace {

// Hand-built sequence for expert e over word ids 5..11.
EncodedSequence gradcheck_sequence(int e) {
  const int w = 5 + e;
  EncodedSequence s;
  s.expert_id = e;
  s.token_ids = {kPadId, w, w + 1, kSepId, w + 2, w + 3, kHsepId, w + 4, 5, kSepId};
  s.segment_ids = {0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
  s.vote_ids = {0, 0, 0, 0, 2 + e, 2 + e, 0, 9 - e, 9 - e, 0};
  for (int p = 0; p < 10; ++p) s.position_ids.push_back(p);
  s.question_spans = {{1, 3, 100, 0}, {4, 6, 101, 2 + e}, {7, 9, 102, 9 - e}};
  s.attention_len = 10;
  return s;
}

}  // namespace

GradCheckSuite run_gradcheck(bool corrupt_gradient) {
  ModelConfig c;
  c.d = 8;
  c.heads = 2;
  c.layers = 2;
  c.ffn_mult = 2;
  c.max_len = 12;
  c.word_vocab = 12;
  c.experts = 3;
  c.init_std = 0.5;
  ParamStore<double> params = init_params<double>(c, 2024);
  ensure_score_head(params, c, 2024);
  const Encoder<double> encoder(c);

  std::vector<PretrainExample> batch;
  for (int e = 0; e < 3; ++e) {
    PretrainExample ex;
    ex.sequence = gradcheck_sequence(e);
    ex.plan.vote_class = 3 + 3 * e;
    if (e < 2) {
      ex.plan.masked_span = 1 + e;
      const int pos = e == 0 ? 7 : 4;
      ex.plan.word_positions = {pos, pos + 1};
      ex.plan.word_inputs = {kMaskId, e == 0 ? 11 : ex.sequence.token_ids[pos + 1]};
    } else {
      ex.plan.word_positions = {4, 8};
      ex.plan.word_inputs = {kMaskId, 10};
    }
    batch.push_back(std::move(ex));
  }
  std::vector<EncodedSequence> candidates;
  for (int e = 0; e < 3; ++e) candidates.push_back(gradcheck_sequence(e));

  GradCheckOptions options;
  options.corrupt_gradient = corrupt_gradient;
  GradCheckSuite suite;
  suite.pretrain = grad_check_params(
      [&](ParamBinding<double>& p) {
        return pretrain_loss(encoder, p, std::span<const PretrainExample>(batch), PretrainTasks{},
                             0.0, nullptr)
            .total;
      },
      params, options);
  suite.finetune = grad_check_params(
      [&](ParamBinding<double>& p) {
        return instance_loss(encoder, p, std::span<const EncodedSequence>(candidates), 0.0,
                             nullptr);
      },
      params, options);
  return suite;
}

void write_gradcheck(std::ostream& out, const GradCheckSuite& suite) {
  out << "precision\tdouble (forced)\n"
      << "fixture\td=8 h=2 layers=2 experts=3 vocab=12\n";
  char buf[256];
  const auto line = [&](const char* name, const GradCheckResult& r) {
    std::snprintf(buf, sizeof buf, "%s\tmax_rel_error=%.3e\tchecked=%zu\tworst=%s[%zu]\t%s\n", name,
                  r.max_rel_error, r.checked, r.worst_param.c_str(), r.worst_index,
                  r.passed ? "PASS" : "FAIL");
    out << buf;
  };
  line("pretrain_loss", suite.pretrain);
  line("finetune_loss", suite.finetune);
  out << "result\t" << (suite.passed() ? "PASS" : "FAIL") << '\n';
}

}  // namespace expertfind
