#pragma once

// Entropy-slope selection over several chains sampled for one problem:
// chains whose entropy does not decrease are dropped, the rest are ranked by
// how steeply entropy falls and the top k are kept.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "cotscope/aggregate.hpp"
#include "cotscope/entropy.hpp"
#include "cotscope/error.hpp"

namespace cotscope {

struct PruneOptions {
  std::size_t top_k = 1;
  /// A chain counts as non-decreasing when its trend is >= tau. Larger tau
  /// tolerates more; +infinity prunes nothing.
  double tau = 0.0;
  SlopeMode mode = SlopeMode::ols;
};

struct PruneReport {
  std::string problem_id;
  std::vector<std::string> kept;    // most negative trend first
  std::vector<std::string> pruned;  // in ranking order
  std::map<std::string, double> slopes;
  /// 1 if a kept chain is correct, 0 if a correct chain existed but none was
  /// kept, absent when the bundle had no correct chain.
  std::optional<double> accuracy_retained;
  /// Fraction of the bundle's generated tokens spent on pruned chains.
  double compute_saved = 0.0;
  std::int64_t tokens_total = 0;
  std::int64_t tokens_pruned = 0;
  bool fallback = false;  // every chain failed the filter

  bool operator==(const PruneReport&) const = default;
};

inline void check_prune_options(const PruneOptions& opt) {
  if (opt.top_k < 1) fail(ErrorCode::invalid_input, "top_k must be at least 1");
  if (std::isnan(opt.tau) || opt.tau < 0.0) {
    fail(ErrorCode::invalid_input, "tau must be >= 0");
  }
}

inline PruneReport prune_bundle(std::span<const Trajectory> trajs,
                                const PruneOptions& opt = {}) {
  check_prune_options(opt);
  if (trajs.empty()) fail(ErrorCode::insufficient_data, "empty bundle");

  PruneReport report;
  report.problem_id = trajs.front().problem_id;

  struct Ranked {
    double trend;
    double final_value;
    const Trajectory* traj;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(trajs.size());
  std::set<std::string> ids;
  for (const auto& t : trajs) {
    if (t.metric != Metric::entropy) {
      fail(ErrorCode::wrong_metric, "chain '" + t.chain_id +
                                        "' is a " + std::string(to_string(t.metric)) +
                                        " trajectory; pruning needs entropy");
    }
    if (t.problem_id != report.problem_id) {
      fail(ErrorCode::invalid_input, "bundle mixes problems '" +
                                         report.problem_id + "' and '" +
                                         t.problem_id + "'");
    }
    if (!ids.insert(t.chain_id).second) {
      fail(ErrorCode::invalid_input, "duplicate chain '" + t.chain_id + "'");
    }
    const double tr = trend(t, opt.mode);
    report.slopes[t.chain_id] = tr;
    ranked.push_back({tr, t.values.back(), &t});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    return std::tie(a.trend, a.final_value, a.traj->chain_id) <
           std::tie(b.trend, b.final_value, b.traj->chain_id);
  });

  std::vector<const Ranked*> survivors;
  for (const auto& r : ranked) {
    if (!(r.trend >= opt.tau)) survivors.push_back(&r);
  }
  std::set<const Trajectory*> keep;
  if (survivors.empty()) {
    report.fallback = true;
    keep.insert(ranked.front().traj);
  } else {
    for (std::size_t i = 0; i < survivors.size() && i < opt.top_k; ++i) {
      keep.insert(survivors[i]->traj);
    }
  }

  bool any_correct = false;
  bool kept_correct = false;
  for (const auto& r : ranked) {
    const Trajectory& t = *r.traj;
    const bool kept = keep.contains(&t);
    (kept ? report.kept : report.pruned).push_back(t.chain_id);
    report.tokens_total += t.token_count;
    if (!kept) report.tokens_pruned += t.token_count;
    if (t.correct == Correctness::correct) {
      any_correct = true;
      kept_correct = kept_correct || kept;
    }
  }
  if (any_correct) report.accuracy_retained = kept_correct ? 1.0 : 0.0;
  if (report.tokens_total > 0) {
    report.compute_saved = static_cast<double>(report.tokens_pruned) /
                           static_cast<double>(report.tokens_total);
  }
  return report;
}

struct PolicyEvaluation {
  std::vector<PruneReport> reports;  // sorted by problem_id
  std::size_t bundles_evaluated = 0;
  std::size_t bundles_skipped = 0;  // every label unknown
  std::size_t bundles_with_correct = 0;
  std::size_t bundles_retained = 0;
  /// Among bundles that had a correct chain, fraction that still keep one.
  std::optional<double> accuracy_retained;
  /// Any-correct rate over evaluated bundles without pruning.
  double baseline_accuracy = 0.0;
  /// Any-correct rate over evaluated bundles after pruning.
  double pruned_accuracy = 0.0;
  double compute_saved = 0.0;
  std::int64_t tokens_total = 0;
  std::int64_t tokens_pruned = 0;
};

/// Runs prune_bundle over every problem. Bundles are processed on `workers`
/// threads; results are ordered by problem_id regardless of scheduling.
inline PolicyEvaluation evaluate_policy(std::span<const Trajectory> trajs,
                                        const PruneOptions& opt = {},
                                        std::size_t workers = 1) {
  check_prune_options(opt);
  std::map<std::string, std::vector<Trajectory>> bundles;
  for (const auto& t : trajs) bundles[t.problem_id].push_back(t);

  PolicyEvaluation eval;
  std::vector<const std::vector<Trajectory>*> todo;
  for (const auto& [pid, bundle] : bundles) {
    const bool labeled = std::any_of(bundle.begin(), bundle.end(), [](const auto& t) {
      return t.correct != Correctness::unknown;
    });
    if (labeled) {
      todo.push_back(&bundle);
    } else {
      ++eval.bundles_skipped;
    }
  }

  eval.reports.resize(todo.size());
  workers = std::max<std::size_t>(1, std::min(workers, todo.size()));
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < todo.size(); i += workers) {
            eval.reports[i] = prune_bundle(*todo[i], opt);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::size_t any_correct_after = 0;
  for (const auto& r : eval.reports) {
    ++eval.bundles_evaluated;
    eval.tokens_total += r.tokens_total;
    eval.tokens_pruned += r.tokens_pruned;
    if (r.accuracy_retained) {
      ++eval.bundles_with_correct;
      if (*r.accuracy_retained == 1.0) {
        ++eval.bundles_retained;
        ++any_correct_after;
      }
    }
  }
  if (eval.bundles_with_correct > 0) {
    eval.accuracy_retained = static_cast<double>(eval.bundles_retained) /
                             static_cast<double>(eval.bundles_with_correct);
  }
  if (eval.bundles_evaluated > 0) {
    const double n = static_cast<double>(eval.bundles_evaluated);
    eval.baseline_accuracy = static_cast<double>(eval.bundles_with_correct) / n;
    eval.pruned_accuracy = static_cast<double>(any_correct_after) / n;
  }
  if (eval.tokens_total > 0) {
    eval.compute_saved = static_cast<double>(eval.tokens_pruned) /
                         static_cast<double>(eval.tokens_total);
  }
  return eval;
}

}  // namespace cotscope
