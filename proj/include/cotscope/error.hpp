#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace cotscope {

enum class ErrorCode {
  parse,
  unsupported_version,
  invalid_chain,
  empty_input,
  malformed_answer,
  invalid_distribution,
  empty_span,
  invalid_trace,
  index_out_of_range,
  wrong_metric,
  shape_mismatch,
  degenerate_vector,
  feature_unavailable,
  insufficient_knots,
  invalid_input,
  invalid_target,
  alignment_mismatch,
  insufficient_data,
  nothing_to_export,
  io,
  empty_dataset,
  bad_config,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return "parse";
    case ErrorCode::unsupported_version: return "unsupported_version";
    case ErrorCode::invalid_chain: return "invalid_chain";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::malformed_answer: return "malformed_answer";
    case ErrorCode::invalid_distribution: return "invalid_distribution";
    case ErrorCode::empty_span: return "empty_span";
    case ErrorCode::invalid_trace: return "invalid_trace";
    case ErrorCode::index_out_of_range: return "index_out_of_range";
    case ErrorCode::wrong_metric: return "wrong_metric";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::degenerate_vector: return "degenerate_vector";
    case ErrorCode::feature_unavailable: return "feature_unavailable";
    case ErrorCode::insufficient_knots: return "insufficient_knots";
    case ErrorCode::invalid_input: return "invalid_input";
    case ErrorCode::invalid_target: return "invalid_target";
    case ErrorCode::alignment_mismatch: return "alignment_mismatch";
    case ErrorCode::insufficient_data: return "insufficient_data";
    case ErrorCode::nothing_to_export: return "nothing_to_export";
    case ErrorCode::io: return "io";
    case ErrorCode::empty_dataset: return "empty_dataset";
    case ErrorCode::bad_config: return "bad_config";
  }
  return "unknown";
}

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised while decoding a trace record. Carries the byte offset (within the
/// record text) and a dotted field path such as
/// `step_records[1].token_records[0].entropy_nats`.
class ParseError : public Error {
 public:
  ParseError(ErrorCode code, std::size_t byte_offset, std::string field_path,
             const std::string& rule)
      : Error(code, format(byte_offset, field_path, rule)),
        byte_offset_(byte_offset),
        field_path_(std::move(field_path)),
        rule_(rule) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }
  const std::string& field_path() const noexcept { return field_path_; }
  const std::string& rule() const noexcept { return rule_; }

 private:
  static std::string format(std::size_t offset, const std::string& path,
                            const std::string& rule) {
    std::string msg = "byte " + std::to_string(offset);
    if (!path.empty()) msg += ", field '" + path + "'";
    return msg + ": " + rule;
  }

  std::size_t byte_offset_;
  std::string field_path_;
  std::string rule_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace cotscope
