// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include <cctype>
#include <istream>
#include <iterator>
#include <map>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "expertfind/corpus.h"
#include "expertfind/errors.h"
#include "text_util.h"

namespace expertfind {
namespace {

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

std::string decode_entities(std::string_view s, std::size_t line) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    const std::size_t semi = s.find(';', i);
    if (semi == std::string_view::npos) throw ParseError("unterminated character entity", line);
    const std::string_view name = s.substr(i + 1, semi - i - 1);
    if (name == "lt") {
      out += '<';
    } else if (name == "gt") {
      out += '>';
    } else if (name == "amp") {
      out += '&';
    } else if (name == "quot") {
      out += '"';
    } else if (name == "apos") {
      out += '\'';
    } else if (name.size() > 1 && name[0] == '#') {
      std::uint32_t cp = 0;
      bool ok;
      if (name[1] == 'x' || name[1] == 'X') {
        const std::string_view hex = name.substr(2);
        const auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), cp, 16);
        ok = ec == std::errc() && ptr == hex.data() + hex.size() && !hex.empty();
      } else {
        ok = detail::try_parse_int(name.substr(1), cp);
      }
      if (!ok || cp > 0x10FFFF) {
        throw ParseError("invalid character reference &" + std::string(name) + ";", line);
      }
      append_utf8(out, cp);
    } else {
      throw ParseError("unknown entity &" + std::string(name) + ";", line);
    }
    i = semi;
  }
  return out;
}

std::string encode_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      case '\n': out += "&#xA;"; break;
      case '\r': out += "&#xD;"; break;
      case '\t': out += "&#x9;"; break;
      default: out += c;
    }
  }
  return out;
}

bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == ':' ||
         c == '.';
}

// Cursor over the whole document that tracks the current line.
class Scanner {
 public:
  explicit Scanner(std::string text) : text_(std::move(text)) {}

  bool done() const { return pos_ >= text_.size(); }
  std::size_t line() const { return line_; }
  char peek() const { return text_[pos_]; }
  bool starts_with(std::string_view s) const {
    return std::string_view(text_).substr(pos_, s.size()) == s;
  }
  void advance(std::size_t n = 1) {
    for (std::size_t i = 0; i < n && pos_ < text_.size(); ++i) {
      if (text_[pos_++] == '\n') ++line_;
    }
  }
  void skip_space() {
    while (!done() && std::isspace(static_cast<unsigned char>(peek()))) advance();
  }
  // Advances past the next occurrence of `end`; throws if absent.
  void skip_past(std::string_view end, const char* what) {
    const std::size_t found = text_.find(end, pos_);
    if (found == std::string::npos) throw ParseError(std::string("unterminated ") + what, line_);
    advance(found + end.size() - pos_);
  }
  std::string_view take_while(bool (*pred)(char)) {
    const std::size_t start = pos_;
    while (!done() && pred(peek())) advance();
    return std::string_view(text_).substr(start, pos_ - start);
  }
  std::string_view take_until(char c, const char* what) {
    const std::size_t start = pos_;
    const std::size_t found = text_.find(c, pos_);
    if (found == std::string::npos) throw ParseError(std::string("unterminated ") + what, line_);
    advance(found - pos_);
    return std::string_view(text_).substr(start, found - start);
  }

 private:
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

using Attributes = std::map<std::string, std::string, std::less<>>;

// Parses attributes up to and including "/>" or ">".
Attributes parse_attributes(Scanner& sc, std::string_view element) {
  Attributes attrs;
  while (true) {
    sc.skip_space();
    if (sc.done()) throw ParseError("unterminated <" + std::string(element) + "> tag", sc.line());
    if (sc.starts_with("/>")) {
      sc.advance(2);
      return attrs;
    }
    if (sc.peek() == '>') {
      sc.advance();
      return attrs;
    }
    const std::size_t line = sc.line();
    const std::string name(sc.take_while(is_name_char));
    if (name.empty()) {
      throw ParseError("unexpected character '" + std::string(1, sc.peek()) + "' in tag", line);
    }
    sc.skip_space();
    if (sc.done() || sc.peek() != '=') throw ParseError("attribute " + name + " lacks '='", line);
    sc.advance();
    sc.skip_space();
    if (sc.done() || (sc.peek() != '"' && sc.peek() != '\'')) {
      throw ParseError("attribute " + name + " value is not quoted", line);
    }
    const char quote = sc.peek();
    sc.advance();
    const std::string_view raw = sc.take_until(quote, "attribute value");
    sc.advance();
    if (raw.find('<') != std::string_view::npos) {
      throw ParseError("'<' inside attribute " + name, line);
    }
    if (!attrs.emplace(name, decode_entities(raw, line)).second) {
      throw ParseError("duplicate attribute " + name, line);
    }
  }
}

const std::string* find_attr(const Attributes& a, std::string_view key) {
  const auto it = a.find(key);
  return it == a.end() ? nullptr : &it->second;
}

template <typename Int>
Int required_int(const Attributes& a, std::string_view key, std::size_t line) {
  const std::string* v = find_attr(a, key);
  Int out{};
  if (!v) throw ParseError("row lacks " + std::string(key), line);
  if (!detail::try_parse_int(*v, out)) {
    throw ParseError("row has non-integer " + std::string(key) + " '" + *v + "'", line);
  }
  return out;
}

template <typename Int>
std::optional<Int> optional_int(const Attributes& a, std::string_view key, std::size_t line) {
  const std::string* v = find_attr(a, key);
  if (!v || detail::trim(*v).empty()) return std::nullopt;
  Int out{};
  if (!detail::try_parse_int(*v, out)) {
    throw ParseError("row has non-integer " + std::string(key) + " '" + *v + "'", line);
  }
  return out;
}

void handle_row(const Attributes& attrs, std::size_t line, PostsData& data) {
  ++data.stats.rows;
  const auto id = required_int<std::int64_t>(attrs, "Id", line);
  const auto type = required_int<int>(attrs, "PostTypeId", line);
  if (type != 1 && type != 2) {
    ++data.stats.unknown_post_type;
    return;
  }
  const std::string* date = find_attr(attrs, "CreationDate");
  if (!date) throw ParseError("row " + std::to_string(id) + " lacks CreationDate", line);
  Timestamp created;
  try {
    created = parse_timestamp(*date);
  } catch (const DataError& e) {
    throw ParseError(e.what(), line);
  }
  const std::int64_t score = optional_int<std::int64_t>(attrs, "Score", line).value_or(0);

  if (type == 1) {
    const std::string* title = find_attr(attrs, "Title");
    if (!title || detail::trim(*title).empty()) {
      ++data.stats.missing_title;
      return;
    }
    data.questions.push_back({id, *title, optional_int<std::int64_t>(attrs, "AcceptedAnswerId", line),
                              created, score});
    return;
  }
  const auto owner = optional_int<std::int64_t>(attrs, "OwnerUserId", line);
  if (!owner) {
    ++data.stats.missing_owner;
    return;
  }
  const auto parent = required_int<std::int64_t>(attrs, "ParentId", line);
  data.answers.push_back({id, parent, *owner, score, created});
}

// Drops dangling answers and clears accepted links that do not resolve.
void resolve_links(PostsData& data) {
  std::unordered_set<std::int64_t> question_ids;
  for (const auto& q : data.questions) question_ids.insert(q.question_id);
  std::vector<AnswerRecord> kept;
  kept.reserve(data.answers.size());
  for (auto& a : data.answers) {
    if (question_ids.count(a.parent_question_id)) {
      kept.push_back(a);
    } else {
      ++data.stats.dangling_answers;
    }
  }
  data.answers = std::move(kept);
  std::unordered_map<std::int64_t, std::int64_t> parent_of;
  for (const auto& a : data.answers) parent_of[a.answer_id] = a.parent_question_id;
  for (auto& q : data.questions) {
    if (!q.accepted_answer_id) continue;
    const auto it = parent_of.find(*q.accepted_answer_id);
    if (it == parent_of.end() || it->second != q.question_id) {
      q.accepted_answer_id.reset();
      ++data.stats.unresolved_accepted;
    }
  }
}

}  // namespace

PostsData parse_posts(std::istream& in) {
  Scanner sc(std::string(std::istreambuf_iterator<char>(in), {}));
  PostsData data;
  while (true) {
    sc.skip_space();
    if (sc.done()) break;
    if (sc.peek() != '<') {
      throw ParseError("unexpected text outside of a tag", sc.line());
    }
    if (sc.starts_with("<?")) {
      sc.skip_past("?>", "processing instruction");
    } else if (sc.starts_with("<!--")) {
      sc.skip_past("-->", "comment");
    } else if (sc.starts_with("<!")) {
      sc.skip_past(">", "declaration");
    } else if (sc.starts_with("</")) {
      sc.advance(2);
      if (sc.take_while(is_name_char).empty()) throw ParseError("empty closing tag", sc.line());
      sc.skip_space();
      if (sc.done() || sc.peek() != '>') throw ParseError("malformed closing tag", sc.line());
      sc.advance();
    } else {
      sc.advance();
      const std::size_t line = sc.line();
      const std::string element(sc.take_while(is_name_char));
      if (element.empty()) throw ParseError("malformed tag", line);
      const Attributes attrs = parse_attributes(sc, element);
      if (element == "row") handle_row(attrs, line, data);
    }
  }
  resolve_links(data);
  return data;
}

void write_posts(std::ostream& out, const PostsData& posts) {
  out << "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<posts>\n";
  for (const auto& q : posts.questions) {
    out << "  <row Id=\"" << q.question_id << "\" PostTypeId=\"1\"";
    if (q.accepted_answer_id) out << " AcceptedAnswerId=\"" << *q.accepted_answer_id << '"';
    out << " CreationDate=\"" << format_timestamp(q.creation_time) << "\" Score=\"" << q.raw_score
        << "\" Title=\"" << encode_entities(q.title) << "\" />\n";
  }
  for (const auto& a : posts.answers) {
    out << "  <row Id=\"" << a.answer_id << "\" PostTypeId=\"2\" ParentId=\""
        << a.parent_question_id << "\" CreationDate=\"" << format_timestamp(a.creation_time)
        << "\" Score=\"" << a.raw_vote_score << "\" OwnerUserId=\"" << a.owner_expert_id
        << "\" />\n";
  }
  out << "</posts>\n";
}

}  // namespace expertfind
