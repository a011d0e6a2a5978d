#pragma once

// Canonical data model for reasoning-chain traces.
//
// A ChainTrace holds one reasoning chain Z = (z_1..z_K) for one problem X,
// its final answer span Y, and for every prefix length k = 0..K the
// per-answer-token uncertainty records measured under teacher forcing with
// context [X; Z_<=k]. All entropies are in nats.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cotscope/error.hpp"

namespace cotscope {

inline constexpr int kSchemaVersion = 1;

enum class Source { llm, human };

enum class Domain {
  counting_and_probability,
  number_theory,
  prealgebra,
  algebra,
  intermediate_algebra,
  precalculus,
  geometry,
};

inline constexpr std::array<Domain, 7> kAllDomains = {
    Domain::counting_and_probability, Domain::number_theory,
    Domain::prealgebra,               Domain::algebra,
    Domain::intermediate_algebra,     Domain::precalculus,
    Domain::geometry,
};

/// Tri-state correctness label. Human reference chains are `correct` by
/// definition; unlabeled model chains stay `unknown`.
enum class Correctness { incorrect, correct, unknown };

inline constexpr std::string_view to_string(Source s) {
  return s == Source::llm ? "llm" : "human";
}

inline constexpr std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::counting_and_probability: return "counting_and_probability";
    case Domain::number_theory: return "number_theory";
    case Domain::prealgebra: return "prealgebra";
    case Domain::algebra: return "algebra";
    case Domain::intermediate_algebra: return "intermediate_algebra";
    case Domain::precalculus: return "precalculus";
    case Domain::geometry: return "geometry";
  }
  return "";
}

inline constexpr std::string_view to_string(Correctness c) {
  switch (c) {
    case Correctness::incorrect: return "false";
    case Correctness::correct: return "true";
    case Correctness::unknown: return "unknown";
  }
  return "";
}

inline std::optional<Source> parse_source(std::string_view s) {
  if (s == "llm") return Source::llm;
  if (s == "human") return Source::human;
  return std::nullopt;
}

inline std::optional<Domain> parse_domain(std::string_view s) {
  for (Domain d : kAllDomains) {
    if (to_string(d) == s) return d;
  }
  return std::nullopt;
}

struct TopKEntry {
  std::int64_t token_id = 0;
  double prob = 0.0;

  bool operator==(const TopKEntry&) const = default;
};

/// One answer-token position under a given context.
struct TokenRecord {
  std::int64_t pos = 0;
  std::int64_t gold_token_id = 0;
  double gold_logprob = 0.0;  // nats, <= 0
  double entropy_nats = 0.0;  // exact H_t computed by the producer
  std::optional<std::vector<TopKEntry>> topk;

  bool operator==(const TokenRecord&) const = default;
};

/// Uncertainty over the whole answer span for context [X; Z_<=step_index].
struct StepRecord {
  std::int64_t step_index = 0;
  std::vector<TokenRecord> token_records;
  std::optional<std::vector<double>> context_pooled_vec;

  bool operator==(const StepRecord&) const = default;
};

struct ChainTrace {
  std::int64_t schema_version = kSchemaVersion;
  std::string problem_id;
  std::string chain_id;
  Source source = Source::llm;
  std::string model_name;
  Domain domain = Domain::algebra;
  std::optional<std::int64_t> difficulty_level;
  Correctness correct = Correctness::unknown;
  std::string question_text;
  std::vector<std::string> steps_text;
  std::string answer_text;
  std::vector<std::int64_t> answer_token_ids;
  std::optional<std::vector<double>> answer_pooled_vec;
  std::int64_t vocab_size = 0;
  std::int64_t token_count = 0;
  std::vector<StepRecord> step_records;

  /// Number of reasoning steps K.
  std::size_t step_count() const { return steps_text.size(); }

  bool operator==(const ChainTrace&) const = default;
};

/// One broken invariant: where, and which rule.
struct Violation {
  std::string path;
  std::string rule;

  bool operator==(const Violation&) const = default;
};

namespace detail {

inline std::string step_path(std::size_t s) {
  return "step_records[" + std::to_string(s) + "]";
}

inline std::string token_path(std::size_t s, std::size_t t) {
  return step_path(s) + ".token_records[" + std::to_string(t) + "]";
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline void check_topk(const std::vector<TopKEntry>& topk,
                       std::int64_t vocab_size, const std::string& path,
                       std::vector<Violation>& out) {
  if (topk.empty()) {
    out.push_back({path, "topk must not be empty when present"});
    return;
  }
  std::set<std::int64_t> seen;
  double sum = 0.0;
  for (std::size_t i = 0; i < topk.size(); ++i) {
    const auto& e = topk[i];
    const std::string ep = path + "[" + std::to_string(i) + "]";
    if (!(e.prob > 0.0 && e.prob <= 1.0)) {
      out.push_back({ep, "topk probability out of range (0, 1]"});
    }
    if (e.token_id < 0 || (vocab_size > 1 && e.token_id >= vocab_size)) {
      out.push_back({ep, "topk token id out of vocabulary range"});
    }
    if (!seen.insert(e.token_id).second) {
      out.push_back({ep, "topk token ids not distinct"});
    }
    if (i > 0 && e.prob > topk[i - 1].prob) {
      out.push_back({ep, "topk not non-increasing"});
    }
    sum += e.prob;
  }
  if (!(sum <= 1.0 + 1e-9)) {
    out.push_back({path, "topk probability mass exceeds 1"});
  }
}

}  // namespace detail

/// Checks every structural and numeric invariant of a chain. Returns an empty
/// list iff the chain is valid; never throws.
inline std::vector<Violation> validate_chain(const ChainTrace& chain) {
  using detail::step_path;
  using detail::token_path;
  std::vector<Violation> out;

  if (chain.schema_version != kSchemaVersion) {
    out.push_back({"schema_version", "unsupported schema version"});
  }
  if (chain.problem_id.empty()) {
    out.push_back({"problem_id", "problem_id must be non-empty"});
  }
  if (chain.chain_id.empty()) {
    out.push_back({"chain_id", "chain_id must be non-empty"});
  }
  if (chain.difficulty_level &&
      (*chain.difficulty_level < 1 || *chain.difficulty_level > 5)) {
    out.push_back({"difficulty_level", "difficulty level out of range 1-5"});
  }
  if (chain.vocab_size <= 1) {
    out.push_back({"vocab_size", "vocab_size must exceed 1"});
  }
  if (chain.token_count < 0) {
    out.push_back({"token_count", "token_count must be non-negative"});
  }
  if (chain.answer_token_ids.empty()) {
    out.push_back({"answer_token_ids", "answer span must be non-empty"});
  }
  for (std::size_t i = 0; i < chain.answer_token_ids.size(); ++i) {
    const auto id = chain.answer_token_ids[i];
    if (id < 0 || (chain.vocab_size > 1 && id >= chain.vocab_size)) {
      out.push_back({"answer_token_ids[" + std::to_string(i) + "]",
                     "token id out of vocabulary range"});
    }
  }
  if (chain.answer_pooled_vec) {
    if (chain.answer_pooled_vec->empty()) {
      out.push_back({"answer_pooled_vec", "pooled vector must be non-empty"});
    } else if (!detail::all_finite(*chain.answer_pooled_vec)) {
      out.push_back({"answer_pooled_vec", "pooled vector not finite"});
    }
  }

  const auto& steps = chain.step_records;
  if (steps.size() != chain.steps_text.size() + 1) {
    out.push_back({"step_records",
                   "step record count must equal steps_text length + 1"});
  }

  const double max_entropy =
      chain.vocab_size > 1 ? std::log(static_cast<double>(chain.vocab_size))
                           : 0.0;
  const std::size_t span_len = chain.answer_token_ids.size();
  bool any_context_vec = false;

  for (std::size_t s = 0; s < steps.size(); ++s) {
    const auto& step = steps[s];
    if (step.step_index != static_cast<std::int64_t>(s)) {
      out.push_back({step_path(s) + ".step_index",
                     "non-contiguous step indices"});
    }
    if (step.token_records.empty()) {
      out.push_back({step_path(s) + ".token_records",
                     "token_records must be non-empty"});
    } else if (step.token_records.size() != span_len) {
      out.push_back({step_path(s) + ".token_records",
                     "answer span length inconsistent"});
    }
    if (step.context_pooled_vec) {
      any_context_vec = true;
      const auto& v = *step.context_pooled_vec;
      const std::string vp = step_path(s) + ".context_pooled_vec";
      if (v.empty()) {
        out.push_back({vp, "pooled vector must be non-empty"});
      } else if (!detail::all_finite(v)) {
        out.push_back({vp, "pooled vector not finite"});
      }
      if (chain.answer_pooled_vec &&
          chain.answer_pooled_vec->size() != v.size()) {
        out.push_back({vp, "pooled vector dimension mismatch"});
      }
    }

    for (std::size_t t = 0; t < step.token_records.size(); ++t) {
      const auto& rec = step.token_records[t];
      const std::string tp = token_path(s, t);
      if (rec.pos != static_cast<std::int64_t>(t)) {
        out.push_back({tp + ".pos", "token positions not contiguous"});
      }
      if (t < span_len && rec.gold_token_id != chain.answer_token_ids[t]) {
        out.push_back({tp + ".gold_token_id",
                       "gold token does not match answer_token_ids"});
      }
      if (!std::isfinite(rec.gold_logprob) || rec.gold_logprob > 0.0) {
        out.push_back({tp + ".gold_logprob", "gold log-probability out of range"});
      }
      if (!std::isfinite(rec.entropy_nats) || rec.entropy_nats < 0.0 ||
          (chain.vocab_size > 1 && rec.entropy_nats > max_entropy + 1e-9)) {
        out.push_back({tp + ".entropy_nats", "entropy out of range"});
      }
      if (rec.topk) {
        detail::check_topk(*rec.topk, chain.vocab_size, tp + ".topk", out);
      }
    }
  }

  if (any_context_vec && !chain.answer_pooled_vec) {
    out.push_back({"answer_pooled_vec",
                   "answer_pooled_vec required when context vectors present"});
  }
  return out;
}

}  // namespace cotscope
