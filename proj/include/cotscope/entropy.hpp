#pragma once

// Answer-span uncertainty metrics.
//
// For context C_k = [X; Z_<=k] the sequence-level conditional entropy is the
// unweighted mean of per-position token entropies over the answer span,
//   H(Y | C_k) = (1/|Y|) sum_t H_t,   H_t = -sum_v p_t(v) ln p_t(v),
// and the cross-entropy variant averages -ln p(y_t | C_k, y_<t) over the gold
// tokens. Evaluating either for k = 0..K yields a trajectory.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cotscope/error.hpp"
#include "cotscope/trace.hpp"

namespace cotscope {

enum class Metric { entropy, cross_entropy, cosine };

inline constexpr std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::entropy: return "entropy";
    case Metric::cross_entropy: return "cross_entropy";
    case Metric::cosine: return "cosine";
  }
  return "";
}

inline std::optional<Metric> parse_metric(std::string_view s) {
  if (s == "entropy") return Metric::entropy;
  if (s == "cross_entropy" || s == "cross-entropy") return Metric::cross_entropy;
  if (s == "cosine") return Metric::cosine;
  return std::nullopt;
}

/// A metric sampled at reasoning steps k = 0..K of one chain.
struct Trajectory {
  std::string chain_id;
  std::string problem_id;
  Metric metric = Metric::entropy;
  std::vector<double> values;
  Correctness correct = Correctness::unknown;
  Source source = Source::llm;
  Domain domain = Domain::algebra;
  std::size_t step_count = 0;
  std::int64_t token_count = 0;

  bool operator==(const Trajectory&) const = default;
};

/// Probabilities below this contribute nothing (0 ln 0 := 0).
inline constexpr double kNegligibleProb = 1e-300;

/// Shannon entropy in nats of a discrete distribution. Inputs whose sum is
/// within 1e-6 of one are renormalised before summation.
inline double token_entropy(std::span<const double> probs) {
  if (probs.empty()) fail(ErrorCode::invalid_distribution, "empty distribution");
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      fail(ErrorCode::invalid_distribution,
           "probability outside [0, 1]: " + std::to_string(p));
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    fail(ErrorCode::invalid_distribution,
         "probabilities sum to " + std::to_string(sum));
  }
  double h = 0.0;
  for (double p : probs) {
    const double q = p / sum;
    if (q < kNegligibleProb) continue;
    h -= q * std::log(q);
  }
  const double upper = std::log(static_cast<double>(probs.size()));
  return std::clamp(h, 0.0, upper);
}

/// Mean token entropy over the answer span (nats).
inline double sequence_entropy(const StepRecord& step) {
  if (step.token_records.empty()) {
    fail(ErrorCode::empty_span, "step has no answer-token records");
  }
  double sum = 0.0;
  for (const auto& rec : step.token_records) sum += rec.entropy_nats;
  return sum / static_cast<double>(step.token_records.size());
}

/// Mean negative gold-token log-probability over the answer span (nats).
inline double cross_entropy(const StepRecord& step) {
  if (step.token_records.empty()) {
    fail(ErrorCode::empty_span, "step has no answer-token records");
  }
  double sum = 0.0;
  for (const auto& rec : step.token_records) {
    if (!std::isfinite(rec.gold_logprob)) {
      fail(ErrorCode::invalid_trace,
           "non-finite gold_logprob at position " + std::to_string(rec.pos));
    }
    sum += -rec.gold_logprob;
  }
  return sum / static_cast<double>(step.token_records.size());
}

namespace detail {

inline Trajectory trajectory_shell(const ChainTrace& chain, Metric metric) {
  Trajectory t;
  t.chain_id = chain.chain_id;
  t.problem_id = chain.problem_id;
  t.metric = metric;
  t.correct = chain.correct;
  t.source = chain.source;
  t.domain = chain.domain;
  t.step_count = chain.step_count();
  t.token_count = chain.token_count;
  return t;
}

}  // namespace detail

/// values[k] is the entropy (or cross-entropy) of step record k.
inline Trajectory entropy_trajectory(const ChainTrace& chain, Metric metric) {
  if (metric != Metric::entropy && metric != Metric::cross_entropy) {
    fail(ErrorCode::wrong_metric,
         "entropy_trajectory supports entropy or cross_entropy, got " +
             std::string(to_string(metric)));
  }
  Trajectory t = detail::trajectory_shell(chain, metric);
  t.values.reserve(chain.step_records.size());
  for (const auto& step : chain.step_records) {
    try {
      t.values.push_back(metric == Metric::entropy ? sequence_entropy(step)
                                                   : cross_entropy(step));
    } catch (const Error& e) {
      throw Error(e.code(), "chain '" + chain.chain_id + "' step " +
                                std::to_string(step.step_index) + ": " +
                                e.what());
    }
  }
  return t;
}

/// Entropy reduction contributed by step k: values[k-1] - values[k].
/// Positive means the step narrowed the answer.
inline double info_gain(const Trajectory& traj, std::size_t k) {
  if (traj.metric != Metric::entropy) {
    fail(ErrorCode::wrong_metric, "info_gain requires an entropy trajectory");
  }
  if (k < 1 || k >= traj.values.size()) {
    fail(ErrorCode::index_out_of_range,
         "step " + std::to_string(k) + " outside [1, " +
             std::to_string(traj.values.size()) + ")");
  }
  return traj.values[k - 1] - traj.values[k];
}

/// Estimate of I(Y; Z | X) = H(Y|X) - H(Y|X,Z). Computed as the left-to-right
/// sum of per-step information gains so that it matches that sum bit for bit;
/// mathematically it telescopes to values[0] - values[K].
inline double mutual_information_estimate(const Trajectory& traj) {
  if (traj.metric != Metric::entropy) {
    fail(ErrorCode::wrong_metric,
         "mutual_information_estimate requires an entropy trajectory");
  }
  double total = 0.0;
  for (std::size_t k = 1; k < traj.values.size(); ++k) {
    total += info_gain(traj, k);
  }
  return total;
}

struct EntropyBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Brackets the exact entropy of a distribution known only through its top-K
/// slice. The lower bound lumps the tail mass into one outcome; the upper bound
/// spreads it uniformly over the vocabulary entries not in the slice.
inline EntropyBounds entropy_bounds_from_topk(std::span<const TopKEntry> topk,
                                              std::int64_t vocab_size) {
  if (vocab_size < static_cast<std::int64_t>(topk.size()) || vocab_size < 1) {
    fail(ErrorCode::invalid_distribution, "vocab_size smaller than topk slice");
  }
  double mass = 0.0;
  double head = 0.0;
  for (const auto& e : topk) {
    if (!std::isfinite(e.prob) || e.prob < 0.0 || e.prob > 1.0) {
      fail(ErrorCode::invalid_distribution, "topk probability outside [0, 1]");
    }
    mass += e.prob;
    if (e.prob >= kNegligibleProb) head -= e.prob * std::log(e.prob);
  }
  double tail = 1.0 - mass;
  if (tail < -1e-9) {
    fail(ErrorCode::invalid_distribution,
         "topk mass exceeds 1 by " + std::to_string(-tail));
  }
  tail = std::max(tail, 0.0);
  const auto rest = vocab_size - static_cast<std::int64_t>(topk.size());
  EntropyBounds b;
  b.lower = head;
  if (tail >= kNegligibleProb) b.lower -= tail * std::log(tail);
  b.upper = b.lower;
  if (rest > 1 && tail >= kNegligibleProb) {
    b.upper += tail * std::log(static_cast<double>(rest));
  }
  return b;
}

}  // namespace cotscope
