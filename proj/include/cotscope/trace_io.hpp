#pragma once

// JSON-Lines wire format for ChainTrace records.
//
// One record per line. Keys appear in a fixed order on output; on input any
// order is accepted but unknown keys are rejected. Absent optionals are
// omitted keys (never null), except `correct`, which encodes the tri-state
// label as true / false / null.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotscope/error.hpp"
#include "cotscope/trace.hpp"

namespace cotscope {

namespace detail {

using PathPart = std::variant<std::string, std::size_t>;

inline std::vector<PathPart> split_field_path(std::string_view path) {
  std::vector<PathPart> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    if (path[i] == '.') {
      ++i;
    } else if (path[i] == '[') {
      const auto close = path.find(']', i);
      if (close == std::string_view::npos) break;
      parts.emplace_back(static_cast<std::size_t>(
          std::stoull(std::string(path.substr(i + 1, close - i - 1)))));
      i = close + 1;
    } else {
      const auto end = path.find_first_of(".[", i);
      const auto stop = end == std::string_view::npos ? path.size() : end;
      parts.emplace_back(std::string(path.substr(i, stop - i)));
      i = stop;
    }
  }
  return parts;
}

// Forward iterator that publishes how far the JSON lexer has read.
class TrackingIterator {
 public:
  using iterator_category = std::forward_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  TrackingIterator() = default;
  TrackingIterator(const char* p, const char** mark) : p_(p), mark_(mark) {}

  reference operator*() const { return *p_; }
  TrackingIterator& operator++() {
    ++p_;
    if (mark_ != nullptr && p_ > *mark_) *mark_ = p_;
    return *this;
  }
  TrackingIterator operator++(int) {
    auto copy = *this;
    ++*this;
    return copy;
  }
  bool operator==(const TrackingIterator& o) const { return p_ == o.p_; }
  bool operator!=(const TrackingIterator& o) const { return p_ != o.p_; }

 private:
  const char* p_ = nullptr;
  const char** mark_ = nullptr;
};

// SAX consumer that finds the byte offset where the value at a given path
// starts. Only used on the error path.
class OffsetLocator {
 public:
  using json = nlohmann::json;
  using number_integer_t = json::number_integer_t;
  using number_unsigned_t = json::number_unsigned_t;
  using number_float_t = json::number_float_t;
  using string_t = json::string_t;
  using binary_t = json::binary_t;

  OffsetLocator(std::string_view text, const char** mark,
                std::vector<PathPart> target)
      : text_(text), mark_(mark), target_(std::move(target)) {}

  std::optional<std::size_t> found() const { return found_; }

  bool null() { return primitive(); }
  bool boolean(bool) { return primitive(); }
  bool number_integer(number_integer_t) { return primitive(); }
  bool number_unsigned(number_unsigned_t) { return primitive(); }
  bool number_float(number_float_t, const string_t&) { return primitive(); }
  bool string(string_t&) { return primitive(); }
  bool binary(binary_t&) { return primitive(); }

  bool start_object(std::size_t) {
    if (!value_start()) return false;
    frames_.push_back({false, {}, 0});
    advance_mark();
    return true;
  }
  bool key(string_t& k) {
    frames_.back().key = k;
    advance_mark();
    return true;
  }
  bool end_object() {
    frames_.pop_back();
    value_end();
    advance_mark();
    return true;
  }
  bool start_array(std::size_t) {
    if (!value_start()) return false;
    frames_.push_back({true, {}, 0});
    advance_mark();
    return true;
  }
  bool end_array() {
    frames_.pop_back();
    value_end();
    advance_mark();
    return true;
  }
  bool parse_error(std::size_t, const std::string&,
                   const nlohmann::detail::exception&) {
    return false;
  }

 private:
  struct Frame {
    bool is_array;
    std::string key;
    std::size_t index;
  };

  bool primitive() {
    if (!value_start()) return false;
    value_end();
    advance_mark();
    return true;
  }

  // Returns false once the target is found so parsing stops early.
  bool value_start() {
    if (frames_.size() != target_.size()) return true;
    for (std::size_t i = 0; i < frames_.size(); ++i) {
      const auto& f = frames_[i];
      if (f.is_array) {
        const auto* idx = std::get_if<std::size_t>(&target_[i]);
        if (idx == nullptr || *idx != f.index) return true;
      } else {
        const auto* k = std::get_if<std::string>(&target_[i]);
        if (k == nullptr || *k != f.key) return true;
      }
    }
    std::size_t pos = prev_;
    while (pos < text_.size() &&
           (text_[pos] == ' ' || text_[pos] == '\t' || text_[pos] == '\n' ||
            text_[pos] == '\r' || text_[pos] == ':' || text_[pos] == ',')) {
      ++pos;
    }
    found_ = pos;
    return false;
  }

  void value_end() {
    if (!frames_.empty() && frames_.back().is_array) ++frames_.back().index;
  }

  void advance_mark() {
    prev_ = static_cast<std::size_t>(*mark_ - text_.data());
  }

  std::string_view text_;
  const char** mark_;
  std::vector<PathPart> target_;
  std::vector<Frame> frames_;
  std::size_t prev_ = 0;
  std::optional<std::size_t> found_;
};

}  // namespace detail

/// Byte offset within `record` where the value at `field_path` begins. Falls
/// back to the closest existing ancestor, then to 0.
inline std::size_t locate_field_offset(std::string_view record,
                                       std::string_view field_path) {
  auto parts = detail::split_field_path(field_path);
  for (;;) {
    const char* mark = record.data();
    detail::OffsetLocator locator(record, &mark, parts);
    detail::TrackingIterator first(record.data(), &mark);
    detail::TrackingIterator last(record.data() + record.size(), nullptr);
    nlohmann::json::sax_parse(first, last, &locator);
    if (auto off = locator.found()) return *off;
    if (parts.empty()) return 0;
    parts.pop_back();
  }
}

namespace detail {

using nlohmann::json;

inline std::string child_path(const std::string& parent, std::string_view key) {
  return parent.empty() ? std::string(key) : parent + "." + std::string(key);
}

inline std::string index_path(const std::string& parent, std::size_t i) {
  return parent + "[" + std::to_string(i) + "]";
}

class RecordDecoder {
 public:
  explicit RecordDecoder(std::string_view text) : text_(text) {}

  [[noreturn]] void fail_at(const std::string& path, const std::string& rule,
                            ErrorCode code = ErrorCode::parse) const {
    throw ParseError(code, locate_field_offset(text_, path), path, rule);
  }

  void expect_keys(const json& obj, const std::string& path,
                   std::initializer_list<std::string_view> allowed) const {
    for (const auto& item : obj.items()) {
      if (std::find(allowed.begin(), allowed.end(), item.key()) ==
          allowed.end()) {
        fail_at(child_path(path, item.key()), "unknown key");
      }
    }
  }

  const json& object(const json& j, const std::string& path) const {
    if (!j.is_object()) fail_at(path, "expected object");
    return j;
  }

  const json& required(const json& obj, const std::string& path,
                       std::string_view key) const {
    auto it = obj.find(std::string(key));
    if (it == obj.end()) fail_at(child_path(path, key), "missing required key");
    return *it;
  }

  const json* optional(const json& obj, const std::string& path,
                       std::string_view key) const {
    auto it = obj.find(std::string(key));
    if (it == obj.end()) return nullptr;
    if (it->is_null()) {
      fail_at(child_path(path, key), "absent optional must be omitted, not null");
    }
    return &*it;
  }

  std::int64_t integer(const json& j, const std::string& path) const {
    if (j.is_number_unsigned()) {
      const auto u = j.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(
                  std::numeric_limits<std::int64_t>::max())) {
        fail_at(path, "integer out of range");
      }
      return static_cast<std::int64_t>(u);
    }
    if (!j.is_number_integer()) fail_at(path, "expected integer");
    return j.get<std::int64_t>();
  }

  double real(const json& j, const std::string& path) const {
    if (!j.is_number()) fail_at(path, "expected number");
    return j.get<double>();
  }

  std::string string(const json& j, const std::string& path) const {
    if (!j.is_string()) fail_at(path, "expected string");
    return j.get<std::string>();
  }

  const json& array(const json& j, const std::string& path) const {
    if (!j.is_array()) fail_at(path, "expected array");
    return j;
  }

  std::vector<double> reals(const json& j, const std::string& path) const {
    std::vector<double> out;
    const auto& arr = array(j, path);
    out.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
      out.push_back(real(arr[i], index_path(path, i)));
    }
    return out;
  }

  std::vector<std::int64_t> integers(const json& j,
                                     const std::string& path) const {
    std::vector<std::int64_t> out;
    const auto& arr = array(j, path);
    out.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
      out.push_back(integer(arr[i], index_path(path, i)));
    }
    return out;
  }

  std::vector<std::string> strings(const json& j,
                                   const std::string& path) const {
    std::vector<std::string> out;
    const auto& arr = array(j, path);
    out.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
      out.push_back(string(arr[i], index_path(path, i)));
    }
    return out;
  }

  TokenRecord token_record(const json& j, const std::string& path) const {
    object(j, path);
    expect_keys(j, path,
                {"pos", "gold_token_id", "gold_logprob", "entropy_nats", "topk"});
    TokenRecord rec;
    rec.pos = integer(required(j, path, "pos"), child_path(path, "pos"));
    rec.gold_token_id = integer(required(j, path, "gold_token_id"),
                                child_path(path, "gold_token_id"));
    rec.gold_logprob = real(required(j, path, "gold_logprob"),
                            child_path(path, "gold_logprob"));
    rec.entropy_nats = real(required(j, path, "entropy_nats"),
                            child_path(path, "entropy_nats"));
    if (const json* tk = optional(j, path, "topk")) {
      const std::string tp = child_path(path, "topk");
      const auto& arr = array(*tk, tp);
      std::vector<TopKEntry> entries;
      entries.reserve(arr.size());
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string ep = index_path(tp, i);
        const auto& pair = array(arr[i], ep);
        if (pair.size() != 2) fail_at(ep, "topk entry must be [id, prob]");
        entries.push_back({integer(pair[0], index_path(ep, 0)),
                           real(pair[1], index_path(ep, 1))});
      }
      rec.topk = std::move(entries);
    }
    return rec;
  }

  StepRecord step_record(const json& j, const std::string& path) const {
    object(j, path);
    expect_keys(j, path, {"step_index", "context_pooled_vec", "token_records"});
    StepRecord step;
    step.step_index = integer(required(j, path, "step_index"),
                              child_path(path, "step_index"));
    if (const json* v = optional(j, path, "context_pooled_vec")) {
      step.context_pooled_vec = reals(*v, child_path(path, "context_pooled_vec"));
    }
    const std::string tp = child_path(path, "token_records");
    const auto& arr = array(required(j, path, "token_records"), tp);
    step.token_records.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
      step.token_records.push_back(token_record(arr[i], index_path(tp, i)));
    }
    return step;
  }

  ChainTrace chain(const json& j) const {
    const std::string root;
    object(j, root);
    expect_keys(j, root,
                {"schema_version", "problem_id", "chain_id", "source",
                 "model_name", "domain", "difficulty_level", "correct",
                 "question_text", "steps_text", "answer_text",
                 "answer_token_ids", "answer_pooled_vec", "vocab_size",
                 "token_count", "step_records"});
    ChainTrace c;
    c.schema_version =
        integer(required(j, root, "schema_version"), "schema_version");
    if (c.schema_version != kSchemaVersion) {
      fail_at("schema_version",
              "unsupported schema version " + std::to_string(c.schema_version),
              ErrorCode::unsupported_version);
    }
    c.problem_id = string(required(j, root, "problem_id"), "problem_id");
    c.chain_id = string(required(j, root, "chain_id"), "chain_id");
    {
      const auto s = string(required(j, root, "source"), "source");
      const auto parsed = parse_source(s);
      if (!parsed) fail_at("source", "unknown source '" + s + "'");
      c.source = *parsed;
    }
    c.model_name = string(required(j, root, "model_name"), "model_name");
    {
      const auto d = string(required(j, root, "domain"), "domain");
      const auto parsed = parse_domain(d);
      if (!parsed) fail_at("domain", "unknown domain '" + d + "'");
      c.domain = *parsed;
    }
    if (const json* lvl = optional(j, root, "difficulty_level")) {
      c.difficulty_level = integer(*lvl, "difficulty_level");
    }
    {
      const auto& corr = required(j, root, "correct");
      if (corr.is_null()) {
        c.correct = Correctness::unknown;
      } else if (corr.is_boolean()) {
        c.correct = corr.get<bool>() ? Correctness::correct
                                     : Correctness::incorrect;
      } else {
        fail_at("correct", "expected true, false or null");
      }
    }
    c.question_text = string(required(j, root, "question_text"), "question_text");
    c.steps_text = strings(required(j, root, "steps_text"), "steps_text");
    c.answer_text = string(required(j, root, "answer_text"), "answer_text");
    c.answer_token_ids =
        integers(required(j, root, "answer_token_ids"), "answer_token_ids");
    if (const json* v = optional(j, root, "answer_pooled_vec")) {
      c.answer_pooled_vec = reals(*v, "answer_pooled_vec");
    }
    c.vocab_size = integer(required(j, root, "vocab_size"), "vocab_size");
    c.token_count = integer(required(j, root, "token_count"), "token_count");
    const auto& steps = array(required(j, root, "step_records"), "step_records");
    c.step_records.reserve(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
      c.step_records.push_back(step_record(steps[i], index_path("step_records", i)));
    }
    return c;
  }

 private:
  std::string_view text_;
};

}  // namespace detail

/// Decodes one record without checking semantic invariants. Structural
/// problems (syntax, types, unknown or missing keys, schema version) throw.
inline ChainTrace decode_trace_line(std::string_view line) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(line.begin(), line.end());
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
    throw ParseError(ErrorCode::parse, offset, "", "malformed JSON record");
  }
  return detail::RecordDecoder(line).chain(doc);
}

/// Decodes one record and rejects it if any invariant is violated; the
/// error reports the first violation.
inline ChainTrace parse_trace_line(std::string_view line) {
  ChainTrace chain = decode_trace_line(line);
  const auto violations = validate_chain(chain);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw ParseError(ErrorCode::parse, locate_field_offset(line, v.path),
                     v.path, v.rule);
  }
  return chain;
}

/// Encodes a valid chain as one line (no trailing newline). Doubles use the
/// shortest decimal form that parses back to the same bits.
inline std::string serialize_chain(const ChainTrace& chain) {
  const auto violations = validate_chain(chain);
  if (!violations.empty()) {
    fail(ErrorCode::invalid_chain, "refusing to serialize invalid chain '" +
                                       chain.chain_id + "': " +
                                       violations.front().path + ": " +
                                       violations.front().rule);
  }
  using ojson = nlohmann::ordered_json;
  ojson j;
  j["schema_version"] = chain.schema_version;
  j["problem_id"] = chain.problem_id;
  j["chain_id"] = chain.chain_id;
  j["source"] = std::string(to_string(chain.source));
  j["model_name"] = chain.model_name;
  j["domain"] = std::string(to_string(chain.domain));
  if (chain.difficulty_level) j["difficulty_level"] = *chain.difficulty_level;
  switch (chain.correct) {
    case Correctness::correct: j["correct"] = true; break;
    case Correctness::incorrect: j["correct"] = false; break;
    case Correctness::unknown: j["correct"] = nullptr; break;
  }
  j["question_text"] = chain.question_text;
  j["steps_text"] = chain.steps_text;
  j["answer_text"] = chain.answer_text;
  j["answer_token_ids"] = chain.answer_token_ids;
  if (chain.answer_pooled_vec) j["answer_pooled_vec"] = *chain.answer_pooled_vec;
  j["vocab_size"] = chain.vocab_size;
  j["token_count"] = chain.token_count;
  ojson steps = ojson::array();
  for (const auto& step : chain.step_records) {
    ojson s;
    s["step_index"] = step.step_index;
    if (step.context_pooled_vec) s["context_pooled_vec"] = *step.context_pooled_vec;
    ojson recs = ojson::array();
    for (const auto& rec : step.token_records) {
      ojson r;
      r["pos"] = rec.pos;
      r["gold_token_id"] = rec.gold_token_id;
      r["gold_logprob"] = rec.gold_logprob;
      r["entropy_nats"] = rec.entropy_nats;
      if (rec.topk) {
        ojson tk = ojson::array();
        for (const auto& e : *rec.topk) tk.push_back(ojson::array({e.token_id, e.prob}));
        r["topk"] = std::move(tk);
      }
      recs.push_back(std::move(r));
    }
    s["token_records"] = std::move(recs);
    steps.push_back(std::move(s));
  }
  j["step_records"] = std::move(steps);
  return j.dump();
}

/// A record that could not be loaded.
struct RecordError {
  std::string file;
  std::size_t line = 0;         // 1-based
  std::size_t byte_offset = 0;  // within the file
  ErrorCode code = ErrorCode::parse;
  std::string message;
};

struct TraceFile {
  std::vector<ChainTrace> chains;
  std::vector<RecordError> errors;
  std::size_t records = 0;  // non-blank lines seen
};

/// Parses every line of a JSON-Lines stream. Blank lines are skipped; bad
/// records are collected rather than thrown.
inline TraceFile read_traces(std::istream& in, const std::string& name = "") {
  TraceFile out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t file_offset = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_start = file_offset;
    file_offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++out.records;
    try {
      out.chains.push_back(parse_trace_line(line));
    } catch (const ParseError& e) {
      out.errors.push_back({name, line_no, line_start + e.byte_offset(),
                            e.code(), e.what()});
    }
  }
  return out;
}

inline TraceFile read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open trace file '" + path + "'");
  return read_traces(in, path);
}

}  // namespace cotscope
