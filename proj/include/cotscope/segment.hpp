#pragma once

// Splits a worked solution into reasoning steps and pulls out the final
// \boxed{...} answer.
//
// The last top-level \boxed{...} region is cut out of the text first, so the
// steps never contain the committed answer. The remainder is split by the
// first rule that yields at least two segments:
//   1. numbered markers at the start of a line ("1. ", "Step 2:")
//   2. blank-line paragraph breaks
//   3. sentence ends: [.!?] + whitespace + uppercase letter or math opener
// Text before the first numbered marker joins the first step. Every
// non-whitespace character of the input ends up in exactly one step or in
// the answer region.

#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cotscope/error.hpp"
#include "cotscope/trace.hpp"

namespace cotscope {

enum class SegmentationRule { numbered_list, paragraph, sentence, whole };

inline constexpr std::string_view to_string(SegmentationRule r) {
  switch (r) {
    case SegmentationRule::numbered_list: return "numbered_list";
    case SegmentationRule::paragraph: return "paragraph";
    case SegmentationRule::sentence: return "sentence";
    case SegmentationRule::whole: return "whole";
  }
  return "";
}

struct SegmentedSolution {
  std::vector<std::string> steps;
  std::string answer;
  bool answer_found = false;
  /// Raw `\boxed{...}` text removed from the solution (empty if none).
  std::string answer_region;
  SegmentationRule segmentation_rule = SegmentationRule::whole;
  Source source = Source::llm;
};

struct BoxedRegion {
  std::size_t begin = 0;  // offset of the backslash
  std::size_t end = 0;    // one past the closing brace
  std::string content;
};

namespace detail {

inline constexpr std::string_view kBoxedOpen = "\\boxed{";

inline bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

// Offset one past the '}' closing the group whose '{' is at open, or npos.
// Backslash escapes (\{, \}) do not count.
inline std::size_t match_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '\\') {
      ++i;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

}  // namespace detail

/// Last top-level \boxed{...} in the text. Nested boxes inside an outer box
/// belong to the outer one.
inline std::optional<BoxedRegion> find_boxed_region(std::string_view text) {
  std::optional<BoxedRegion> last;
  std::size_t pos = 0;
  while ((pos = text.find(detail::kBoxedOpen, pos)) != std::string_view::npos) {
    const std::size_t open = pos + detail::kBoxedOpen.size() - 1;
    const std::size_t close = detail::match_brace(text, open);
    if (close == std::string_view::npos) {
      fail(ErrorCode::malformed_answer,
           "unbalanced braces after \\boxed{ opened at offset " +
               std::to_string(pos));
    }
    last = BoxedRegion{pos, close,
                       std::string(text.substr(open + 1, close - open - 2))};
    pos = close;
  }
  return last;
}

inline std::optional<std::string> extract_boxed_answer(std::string_view text) {
  auto region = find_boxed_region(text);
  if (!region) return std::nullopt;
  return std::move(region->content);
}

namespace detail {

inline std::vector<std::string> collect(std::string_view body,
                                        const std::vector<std::size_t>& cuts) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto push = [&](std::size_t end) {
    const auto seg = trim(body.substr(start, end - start));
    if (!seg.empty()) out.emplace_back(seg);
    start = end;
  };
  for (std::size_t c : cuts) push(c);
  push(body.size());
  return out;
}

inline bool is_marker_line(std::string_view line) {
  std::size_t i = 0;
  if (line.size() >= 4 && (line[0] == 'S' || line[0] == 's') &&
      line.substr(1, 3) == "tep") {
    i = 4;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t digits = i;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i == digits) return false;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    return i < line.size() && (line[i] == ':' || line[i] == '.');
  }
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i == 0 || i >= line.size() || line[i] != '.') return false;
  return i + 1 == line.size() || line[i + 1] == ' ' || line[i + 1] == '\t';
}

inline std::vector<std::string> split_numbered(std::string_view body) {
  std::vector<std::size_t> markers;
  std::size_t line_start = 0;
  while (line_start < body.size()) {
    auto nl = body.find('\n', line_start);
    if (nl == std::string_view::npos) nl = body.size();
    if (is_marker_line(body.substr(line_start, nl - line_start))) {
      markers.push_back(line_start);
    }
    line_start = nl + 1;
  }
  if (markers.size() < 2) return {};
  // Preamble before the first marker stays with step 1.
  markers.erase(markers.begin());
  return collect(body, markers);
}

inline std::vector<std::string> split_paragraphs(std::string_view body) {
  std::vector<std::size_t> cuts;
  std::size_t line_start = 0;
  bool prev_blank = false;
  while (line_start < body.size()) {
    auto nl = body.find('\n', line_start);
    if (nl == std::string_view::npos) nl = body.size();
    const bool blank = trim(body.substr(line_start, nl - line_start)).empty();
    if (!blank && prev_blank) cuts.push_back(line_start);
    prev_blank = blank;
    line_start = nl + 1;
  }
  return collect(body, cuts);
}

inline bool starts_sentence(std::string_view s, std::size_t i) {
  const char c = s[i];
  if (std::isupper(static_cast<unsigned char>(c))) return true;
  if (c == '$') return true;
  if (c == '\\' && i + 1 < s.size()) {
    const char n = s[i + 1];
    return n == '(' || n == '[' || std::isalpha(static_cast<unsigned char>(n));
  }
  return false;
}

inline std::vector<std::string> split_sentences(std::string_view body) {
  std::vector<std::size_t> cuts;
  for (std::size_t i = 0; i + 1 < body.size(); ++i) {
    const char c = body[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t j = i + 1;
    while (j < body.size() && is_space(body[j])) ++j;
    if (j == i + 1 || j >= body.size()) continue;
    if (starts_sentence(body, j)) cuts.push_back(j);
  }
  return collect(body, cuts);
}

}  // namespace detail

inline SegmentedSolution segment_steps(std::string_view solution_text,
                                       Source source = Source::llm) {
  if (detail::trim(solution_text).empty()) {
    fail(ErrorCode::empty_input, "solution text is empty");
  }
  SegmentedSolution out;
  out.source = source;

  std::string body(solution_text);
  std::optional<BoxedRegion> region;
  try {
    region = find_boxed_region(solution_text);
  } catch (const Error&) {
    // A truncated box is not an answer; keep the text as reasoning.
  }
  if (region) {
    out.answer_found = true;
    out.answer = region->content;
    out.answer_region = body.substr(region->begin, region->end - region->begin);
    body.erase(region->begin, region->end - region->begin);
  }

  if (auto steps = detail::split_numbered(body); steps.size() >= 2) {
    out.steps = std::move(steps);
    out.segmentation_rule = SegmentationRule::numbered_list;
  } else if (auto paras = detail::split_paragraphs(body); paras.size() >= 2) {
    out.steps = std::move(paras);
    out.segmentation_rule = SegmentationRule::paragraph;
  } else if (auto sents = detail::split_sentences(body); sents.size() >= 2) {
    out.steps = std::move(sents);
    out.segmentation_rule = SegmentationRule::sentence;
  } else {
    const auto whole = detail::trim(body);
    if (!whole.empty()) out.steps.emplace_back(whole);
    out.segmentation_rule = SegmentationRule::whole;
  }
  return out;
}

namespace detail {

inline void erase_command(std::string& s, std::string_view cmd,
                          std::string_view replacement) {
  std::size_t pos = 0;
  while ((pos = s.find(cmd, pos)) != std::string::npos) {
    const std::size_t after = pos + cmd.size();
    if (after < s.size() && std::isalpha(static_cast<unsigned char>(s[after]))) {
      pos = after;
      continue;
    }
    s.replace(pos, cmd.size(), replacement);
    pos += replacement.size();
  }
}

inline bool braces_balanced(std::string_view s) {
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\') {
      ++i;
    } else if (s[i] == '{') {
      ++depth;
    } else if (s[i] == '}' && --depth < 0) {
      return false;
    }
  }
  return depth == 0;
}

// Removes one layer from every {{X}} whose inner group spans the outer one,
// then strips braces wrapping the whole string.
inline std::string collapse_braces(std::string s) {
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      if (s[i] == '\\') {
        ++i;
        continue;
      }
      if (s[i] != '{' || s[i + 1] != '{') continue;
      const std::size_t outer = match_brace(s, i);
      const std::size_t inner = match_brace(s, i + 1);
      if (outer != std::string::npos && inner + 1 == outer) {
        s.erase(outer - 1, 1);
        s.erase(i, 1);
        changed = true;
        break;
      }
    }
  }
  while (s.size() >= 2 && s.front() == '{' && match_brace(s, 0) == s.size()) {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

}  // namespace detail

/// Canonical form used for answer comparison, or nullopt when the answer
/// cannot be normalised (empty, unbalanced braces).
inline std::optional<std::string> normalize_answer(std::string_view answer) {
  std::string s;
  s.reserve(answer.size());
  for (char c : answer) {
    if (!detail::is_space(c)) s.push_back(c);
  }
  if (s.empty() || !detail::braces_balanced(s)) return std::nullopt;
  detail::erase_command(s, "\\dfrac", "\\frac");
  detail::erase_command(s, "\\tfrac", "\\frac");
  detail::erase_command(s, "\\left", "");
  detail::erase_command(s, "\\right", "");
  s = detail::collapse_braces(std::move(s));
  if (s.empty()) return std::nullopt;
  return s;
}

/// Exact match after normalisation; unknown when either side fails to
/// normalise. No symbolic equivalence (0.5 vs \frac{1}{2} is false).
inline Correctness label_correct(std::string_view candidate,
                                 std::string_view reference) {
  const auto a = normalize_answer(candidate);
  const auto b = normalize_answer(reference);
  if (!a || !b) return Correctness::unknown;
  return *a == *b ? Correctness::correct : Correctness::incorrect;
}

}  // namespace cotscope
