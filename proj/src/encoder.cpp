// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include "expertfind/encoder.h"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "expertfind/errors.h"
#include "expertfind/ops.h"
#include "text_util.h"

namespace expertfind {
namespace {

enum Slot { kWq, kWk, kWv, kWo, kLn1G, kLn1B, kW1, kB1, kW2, kB2, kLn2G, kLn2B, kSlots };

constexpr const char* kSlotNames[kSlots] = {
    "attn.wq", "attn.wk", "attn.wv", "attn.wo", "ln1.gamma", "ln1.beta",
    "ffn.w1",  "ffn.b1",  "ffn.w2",  "ffn.b2",  "ln2.gamma", "ln2.beta"};

std::string layer_name(int layer, int slot) {
  return "layer" + std::to_string(layer) + "." + kSlotNames[slot];
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("model config key " + key + " expects true/false, got '" + v + "'");
}

template <typename T>
Tensor<T> gather_lane(const Tensor<T>& table, std::span<const int> ids, const char* lane) {
  try {
    return gather_rows(table, ids);
  } catch (const IndexError& e) {
    throw IndexError(std::string(lane) + " lane: " + e.what());
  }
}

}  // namespace

void ModelConfig::validate() const {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("model config: " + what);
  };
  require(d > 0 && heads > 0, "d and heads must be positive");
  require(d % heads == 0, "d (" + std::to_string(d) + ") must be divisible by heads (" +
                              std::to_string(heads) + ")");
  require(layers >= 0, "layers must be non-negative");
  require(ffn_mult > 0, "ffn_mult must be positive");
  require(max_len > 0, "max_len must be positive");
  require(word_vocab > kNumSpecialTokens - 1, "word_vocab must include the special tokens");
  require(vote_vocab == kVoteVocabSize, "vote_vocab must be 11");
  require(segments == 2, "segments must be 2");
  require(experts > 0, "experts must be positive");
  require(dropout_pretrain >= 0.0 && dropout_pretrain < 1.0, "dropout_pretrain outside [0,1)");
  require(dropout_finetune >= 0.0 && dropout_finetune < 1.0, "dropout_finetune outside [0,1)");
  require(init_std > 0.0, "init_std must be positive");
}

void ModelConfig::write(std::ostream& out) const {
  out << "d=" << d << '\n'
      << "heads=" << heads << '\n'
      << "layers=" << layers << '\n'
      << "ffn_mult=" << ffn_mult << '\n'
      << "max_len=" << max_len << '\n'
      << "word_vocab=" << word_vocab << '\n'
      << "vote_vocab=" << vote_vocab << '\n'
      << "segments=" << segments << '\n'
      << "experts=" << experts << '\n'
      << "dropout_pretrain=" << detail::format_double(dropout_pretrain) << '\n'
      << "dropout_finetune=" << detail::format_double(dropout_finetune) << '\n'
      << "init_std=" << detail::format_double(init_std) << '\n'
      << "use_vote_lane=" << (use_vote_lane ? "true" : "false") << '\n'
      << "use_expert_id=" << (use_expert_id ? "true" : "false") << '\n';
}

void set_model_key(ModelConfig& c, const std::string& key, const std::string& value) {
  const auto as_int = [&] {
    int v = 0;
    if (!detail::try_parse_int(value, v)) {
      throw ConfigError("model config key " + key + " expects an integer, got '" + value + "'");
    }
    return v;
  };
  const auto as_double = [&] {
    try {
      return detail::parse_double(value, key);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
  };
  if (key == "d") c.d = as_int();
  else if (key == "heads") c.heads = as_int();
  else if (key == "layers") c.layers = as_int();
  else if (key == "ffn_mult") c.ffn_mult = as_int();
  else if (key == "max_len") c.max_len = as_int();
  else if (key == "word_vocab") c.word_vocab = as_int();
  else if (key == "vote_vocab") c.vote_vocab = as_int();
  else if (key == "segments") c.segments = as_int();
  else if (key == "experts") c.experts = as_int();
  else if (key == "dropout_pretrain") c.dropout_pretrain = as_double();
  else if (key == "dropout_finetune") c.dropout_finetune = as_double();
  else if (key == "init_std") c.init_std = as_double();
  else if (key == "use_vote_lane") c.use_vote_lane = parse_bool(key, value);
  else if (key == "use_expert_id") c.use_expert_id = parse_bool(key, value);
  else throw ConfigError("unknown model config key '" + key + "'");
}

ModelConfig ModelConfig::read(std::istream& in) {
  ModelConfig c;
  for (const auto& [k, v] : detail::read_key_values(in)) set_model_key(c, k, v);
  c.validate();
  return c;
}

void ModelConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write(out);
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model config " + path.string());
  return read(in);
}

template <typename T>
ParamStore<T> init_params(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  Rng rng(derive_seed({seed, 0x494e4954ULL}));
  ParamStore<T> p;
  const auto d = static_cast<std::size_t>(c.d);
  const auto f = static_cast<std::size_t>(c.d * c.ffn_mult);
  const auto normal = [&](std::string name, Shape shape) {
    std::vector<T> v(shape_numel(shape));
    for (T& x : v) x = static_cast<T>(rng.normal() * c.init_std);
    p.add(std::move(name), std::move(shape), std::move(v));
  };
  const auto constant = [&](std::string name, std::size_t n, T value) {
    p.add(std::move(name), {n}, std::vector<T>(n, value));
  };
  const auto zero_row = [&](const char* name, std::size_t row) {
    auto& e = p.at(name);
    std::fill_n(e.values.begin() + static_cast<std::ptrdiff_t>(row * d), d, T(0));
  };

  normal("embed.token", {static_cast<std::size_t>(c.word_vocab), d});
  zero_row("embed.token", kPadId);
  normal("embed.segment", {static_cast<std::size_t>(c.segments), d});
  normal("embed.position", {static_cast<std::size_t>(c.max_len), d});
  normal("embed.vote", {static_cast<std::size_t>(c.vote_vocab), d});
  zero_row("embed.vote", kVotePadId);
  normal("embed.expert", {static_cast<std::size_t>(c.experts), d});
  for (int l = 0; l < c.layers; ++l) {
    for (int s : {kWq, kWk, kWv, kWo}) normal(layer_name(l, s), {d, d});
    constant(layer_name(l, kLn1G), d, T(1));
    constant(layer_name(l, kLn1B), d, T(0));
    normal(layer_name(l, kW1), {d, f});
    constant(layer_name(l, kB1), f, T(0));
    normal(layer_name(l, kW2), {f, d});
    constant(layer_name(l, kB2), d, T(0));
    constant(layer_name(l, kLn2G), d, T(1));
    constant(layer_name(l, kLn2B), d, T(0));
  }
  constant("head.word.bias", static_cast<std::size_t>(c.word_vocab), T(0));
  normal("head.vote.w", {d, static_cast<std::size_t>(kVoteClasses)});
  constant("head.vote.b", kVoteClasses, T(0));
  return p;
}

template <typename T>
bool ensure_score_head(ParamStore<T>& params, const ModelConfig& c, std::uint64_t seed) {
  if (params.contains("head.score.w") && params.contains("head.score.b")) return false;
  Rng rng(derive_seed({seed, 0x53434f5245ULL}));
  std::vector<T> w(static_cast<std::size_t>(c.d));
  for (T& x : w) x = static_cast<T>(rng.normal() * c.init_std);
  params.set("head.score.w", {static_cast<std::size_t>(c.d), 1}, std::move(w));
  params.set("head.score.b", {1}, {T(0)});
  return true;
}

template <typename T>
void check_params(const ParamStore<T>& params, const ModelConfig& c) {
  const auto d = static_cast<std::size_t>(c.d);
  const auto f = static_cast<std::size_t>(c.d * c.ffn_mult);
  const auto expect = [&](const std::string& name, Shape shape) {
    if (!params.contains(name)) throw DataError("checkpoint lacks parameter " + name);
    if (params.at(name).shape != shape) {
      throw DataError("parameter " + name + " has shape " +
                      shape_to_string(params.at(name).shape) + ", config expects " +
                      shape_to_string(shape));
    }
  };
  expect("embed.token", {static_cast<std::size_t>(c.word_vocab), d});
  expect("embed.segment", {static_cast<std::size_t>(c.segments), d});
  expect("embed.position", {static_cast<std::size_t>(c.max_len), d});
  expect("embed.vote", {static_cast<std::size_t>(c.vote_vocab), d});
  expect("embed.expert", {static_cast<std::size_t>(c.experts), d});
  for (int l = 0; l < c.layers; ++l) {
    for (int s : {kWq, kWk, kWv, kWo}) expect(layer_name(l, s), {d, d});
    for (int s : {kLn1G, kLn1B, kB2, kLn2G, kLn2B}) expect(layer_name(l, s), {d});
    expect(layer_name(l, kW1), {d, f});
    expect(layer_name(l, kB1), {f});
    expect(layer_name(l, kW2), {f, d});
  }
}

template <typename T>
Encoder<T>::Encoder(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  for (int l = 0; l < config_.layers; ++l) {
    for (int s = 0; s < kSlots; ++s) names_.push_back(layer_name(l, s));
  }
}

template <typename T>
const std::string& Encoder<T>::name(int layer, int slot) const {
  return names_[static_cast<std::size_t>(layer * kSlots + slot)];
}

template <typename T>
Tensor<T> Encoder<T>::embed(ParamBinding<T>& p, const EncodedSequence& seq,
                            std::span<const int> token_ids, double dropout, Rng* rng) const {
  const std::size_t L = token_ids.size();
  if (L == 0 || L != seq.segment_ids.size() || L != seq.position_ids.size() ||
      L != seq.vote_ids.size()) {
    throw DimensionError("embed: lanes must be non-empty and of equal length");
  }
  if (L > static_cast<std::size_t>(config_.max_len)) {
    throw IndexError("position lane: sequence length " + std::to_string(L) + " exceeds max_len " +
                     std::to_string(config_.max_len));
  }
  Tensor<T> first;
  if (config_.use_expert_id) {
    const int eid[1] = {seq.expert_id};
    first = gather_lane(p("embed.expert"), std::span<const int>(eid), "expert");
  } else {
    const int pad[1] = {kPadId};
    first = gather_lane(p("embed.token"), std::span<const int>(pad), "token");
  }
  Tensor<T> x = first;
  if (L > 1) {
    Tensor<T> rest = gather_lane(p("embed.token"), token_ids.subspan(1), "token");
    if (config_.use_vote_lane) {
      rest = add(rest, gather_lane(p("embed.vote"), std::span<const int>(seq.vote_ids).subspan(1),
                                   "vote"));
    }
    x = concat_rows<T>({first, rest});
  }
  x = add(x, gather_lane(p("embed.segment"), std::span<const int>(seq.segment_ids), "segment"));
  x = add(x, gather_lane(p("embed.position"), std::span<const int>(seq.position_ids), "position"));
  return rng ? expertfind::dropout(x, dropout, *rng) : x;
}

template <typename T>
Tensor<T> Encoder<T>::attention(ParamBinding<T>& p, int layer, const Tensor<T>& x,
                                int attention_len, double dropout, Rng* rng) const {
  const int h = config_.heads;
  const std::size_t dh = static_cast<std::size_t>(config_.d / h);
  const Tensor<T> q = matmul(x, p(name(layer, kWq)));
  const Tensor<T> k = matmul(x, p(name(layer, kWk)));
  const Tensor<T> v = matmul(x, p(name(layer, kWv)));
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  const std::size_t valid = static_cast<std::size_t>(attention_len);
  std::vector<Tensor<T>> outputs;
  outputs.reserve(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i) {
    const std::size_t start = static_cast<std::size_t>(i) * dh;
    const Tensor<T> qh = h == 1 ? q : slice_cols(q, start, dh);
    const Tensor<T> kh = h == 1 ? k : slice_cols(k, start, dh);
    const Tensor<T> vh = h == 1 ? v : slice_cols(v, start, dh);
    const Tensor<T> weights = softmax(scale(matmul_nt(qh, kh), inv_sqrt), valid);
    outputs.push_back(matmul(weights, vh));
  }
  Tensor<T> merged = h == 1 ? outputs.front() : concat_cols(outputs);
  Tensor<T> projected = matmul(merged, p(name(layer, kWo)));
  if (rng) projected = expertfind::dropout(projected, dropout, *rng);
  return layer_norm(add(x, projected), p(name(layer, kLn1G)), p(name(layer, kLn1B)));
}

template <typename T>
Tensor<T> Encoder<T>::ffn(ParamBinding<T>& p, int layer, const Tensor<T>& x, double dropout,
                          Rng* rng) const {
  const Tensor<T> hidden = relu(add_bias(matmul(x, p(name(layer, kW1))), p(name(layer, kB1))));
  Tensor<T> out = add_bias(matmul(hidden, p(name(layer, kW2))), p(name(layer, kB2)));
  if (rng) out = expertfind::dropout(out, dropout, *rng);
  return layer_norm(add(x, out), p(name(layer, kLn2G)), p(name(layer, kLn2B)));
}

template <typename T>
EncoderOutput<T> Encoder<T>::forward(ParamBinding<T>& p, const EncodedSequence& seq,
                                     double dropout, Rng* rng) const {
  return forward(p, seq, seq.token_ids, dropout, rng);
}

template <typename T>
EncoderOutput<T> Encoder<T>::forward(ParamBinding<T>& p, const EncodedSequence& seq,
                                     std::span<const int> token_ids, double dropout,
                                     Rng* rng) const {
  const int attention_len = seq.attention_len > 0 ? seq.attention_len : seq.length();
  Tensor<T> x = embed(p, seq, token_ids, dropout, rng);
  for (int l = 0; l < config_.layers; ++l) {
    x = attention(p, l, x, attention_len, dropout, rng);
    x = ffn(p, l, x, dropout, rng);
  }
  return {x, slice_rows(x, 0, 1)};
}

template <typename T>
Tensor<T> Encoder<T>::word_logits(ParamBinding<T>& p, const Tensor<T>& rows) const {
  return add_bias(matmul_nt(rows, p("embed.token")), p("head.word.bias"));
}

template <typename T>
Tensor<T> Encoder<T>::vote_logits(ParamBinding<T>& p, const Tensor<T>& expert_vector) const {
  return add_bias(matmul(expert_vector, p("head.vote.w")), p("head.vote.b"));
}

template <typename T>
Tensor<T> Encoder<T>::score(ParamBinding<T>& p, const Tensor<T>& expert_vector) const {
  return add_bias(matmul(expert_vector, p("head.score.w")), p("head.score.b"));
}

template ParamStore<float> init_params<float>(const ModelConfig&, std::uint64_t);
template ParamStore<double> init_params<double>(const ModelConfig&, std::uint64_t);
template bool ensure_score_head(ParamStore<float>&, const ModelConfig&, std::uint64_t);
template bool ensure_score_head(ParamStore<double>&, const ModelConfig&, std::uint64_t);
template void check_params(const ParamStore<float>&, const ModelConfig&);
template void check_params(const ParamStore<double>&, const ModelConfig&);
template class Encoder<float>;
template class Encoder<double>;

}  // namespace expertfind
