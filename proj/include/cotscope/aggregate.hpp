#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "cotscope/entropy.hpp"
#include "cotscope/error.hpp"
#include "cotscope/resample.hpp"
#include "cotscope/trace.hpp"

namespace cotscope {

struct GroupKey {
  Domain domain = Domain::algebra;
  Source source = Source::llm;
  Correctness correct = Correctness::unknown;
  Metric metric = Metric::entropy;

  bool operator==(const GroupKey&) const = default;

  // Ordered by the exported text of each field.
  bool operator<(const GroupKey& o) const {
    return std::forward_as_tuple(to_string(domain), to_string(source),
                                 to_string(correct), to_string(metric)) <
           std::forward_as_tuple(to_string(o.domain), to_string(o.source),
                                 to_string(o.correct), to_string(o.metric));
  }
};

inline GroupKey group_key(const AlignedCurve& c) {
  return {c.domain, c.source, c.correct, c.metric};
}

/// Per-group mean and population standard deviation at each aligned step.
struct AggregateCurve {
  GroupKey key;
  std::size_t target_len = 0;
  double axis_steps = 0.0;
  std::vector<double> mean;
  std::vector<double> std;
  std::size_t n = 0;

  bool operator==(const AggregateCurve&) const = default;
};

namespace detail {

inline void check_alignment(const AlignedCurve& first, const AlignedCurve& c) {
  if (c.target_len != first.target_len || c.values.size() != c.target_len) {
    fail(ErrorCode::alignment_mismatch,
         "curve '" + c.chain_id + "' has target_len " +
             std::to_string(c.values.size()) + ", group expects " +
             std::to_string(first.target_len));
  }
  if (c.axis_steps != first.axis_steps) {
    fail(ErrorCode::alignment_mismatch,
         "curve '" + c.chain_id + "' has a different axis span than its group");
  }
}

inline std::map<GroupKey, std::vector<const AlignedCurve*>> group_curves(
    std::span<const AlignedCurve> curves) {
  std::map<GroupKey, std::vector<const AlignedCurve*>> groups;
  for (const auto& c : curves) {
    auto& members = groups[group_key(c)];
    if (!members.empty()) check_alignment(*members.front(), c);
    members.push_back(&c);
  }
  return groups;
}

// Running moments for one group; mergeable across partitions.
struct Moments {
  std::size_t n = 0;
  std::size_t target_len = 0;
  double axis_steps = 0.0;
  std::string first_id;
  std::vector<double> mean;
  std::vector<double> m2;

  void add(const AlignedCurve& c) {
    if (n == 0) {
      target_len = c.target_len;
      axis_steps = c.axis_steps;
      first_id = c.chain_id;
      mean.assign(c.target_len, 0.0);
      m2.assign(c.target_len, 0.0);
    } else if (c.target_len != target_len || c.axis_steps != axis_steps) {
      fail(ErrorCode::alignment_mismatch,
           "curve '" + c.chain_id + "' is not aligned with '" + first_id + "'");
    }
    if (c.values.size() != target_len) {
      fail(ErrorCode::alignment_mismatch,
           "curve '" + c.chain_id + "' value count differs from target_len");
    }
    ++n;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < target_len; ++j) {
      const double delta = c.values[j] - mean[j];
      mean[j] += delta * inv;
      m2[j] += delta * (c.values[j] - mean[j]);
    }
  }

  void merge(const Moments& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    if (o.target_len != target_len || o.axis_steps != axis_steps) {
      fail(ErrorCode::alignment_mismatch,
           "curve '" + o.first_id + "' is not aligned with '" + first_id + "'");
    }
    const double na = static_cast<double>(n);
    const double nb = static_cast<double>(o.n);
    const double total = na + nb;
    for (std::size_t j = 0; j < target_len; ++j) {
      const double delta = o.mean[j] - mean[j];
      mean[j] += delta * nb / total;
      m2[j] += o.m2[j] + delta * delta * na * nb / total;
    }
    n += o.n;
  }
};

}  // namespace detail

/// Two-pass mean and population std per (domain, source, correct, metric)
/// group, in group-key order.
inline std::vector<AggregateCurve> aggregate_curves(
    std::span<const AlignedCurve> curves) {
  std::vector<AggregateCurve> out;
  for (const auto& [key, members] : detail::group_curves(curves)) {
    AggregateCurve agg;
    agg.key = key;
    agg.target_len = members.front()->target_len;
    agg.axis_steps = members.front()->axis_steps;
    agg.n = members.size();
    agg.mean.assign(agg.target_len, 0.0);
    agg.std.assign(agg.target_len, 0.0);
    const double n = static_cast<double>(agg.n);
    for (std::size_t j = 0; j < agg.target_len; ++j) {
      double sum = 0.0;
      for (const auto* c : members) sum += c->values[j];
      const double mean = sum / n;
      double ss = 0.0;
      for (const auto* c : members) {
        const double d = c->values[j] - mean;
        ss += d * d;
      }
      agg.mean[j] = mean;
      agg.std[j] = std::sqrt(ss / n);
    }
    out.push_back(std::move(agg));
  }
  return out;
}

/// Map-reduce variant: each worker accumulates running moments over a
/// contiguous slice, and the partial results are merged in slice order.
inline std::vector<AggregateCurve> aggregate_curves_parallel(
    std::span<const AlignedCurve> curves, std::size_t workers) {
  workers = std::max<std::size_t>(1, std::min(workers, curves.size()));
  using Partial = std::map<GroupKey, detail::Moments>;
  std::vector<Partial> partials(workers);
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (curves.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          const std::size_t begin = std::min(curves.size(), w * chunk);
          const std::size_t end = std::min(curves.size(), begin + chunk);
          for (std::size_t i = begin; i < end; ++i) {
            partials[w][group_key(curves[i])].add(curves[i]);
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
  Partial merged;
  for (const auto& part : partials) {
    for (const auto& [key, moments] : part) merged[key].merge(moments);
  }
  std::vector<AggregateCurve> out;
  for (const auto& [key, m] : merged) {
    AggregateCurve agg;
    agg.key = key;
    agg.target_len = m.target_len;
    agg.axis_steps = m.axis_steps;
    agg.n = m.n;
    agg.mean = m.mean;
    agg.std.resize(m.target_len);
    for (std::size_t j = 0; j < m.target_len; ++j) {
      agg.std[j] = std::sqrt(std::max(0.0, m.m2[j] / static_cast<double>(m.n)));
    }
    out.push_back(std::move(agg));
  }
  return out;
}

enum class SlopeMode { ols, net };

inline std::optional<SlopeMode> parse_slope_mode(std::string_view s) {
  if (s == "ols") return SlopeMode::ols;
  if (s == "net") return SlopeMode::net;
  return std::nullopt;
}

inline constexpr std::string_view to_string(SlopeMode m) {
  return m == SlopeMode::ols ? "ols" : "net";
}

/// Ordinary least-squares slope of values against step indices 0..K.
///
/// Uses the symmetric form sum_{i<K/2} (K/2 - i)(y_{K-i} - y_i) / S_xx, which
/// is algebraically the OLS slope but is exactly 0 for constant input and
/// exactly negated for reversed input.
inline double slope(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) {
    fail(ErrorCode::insufficient_data,
         "slope needs at least 2 points, got " + std::to_string(n));
  }
  const std::size_t k = n - 1;
  double num = 0.0;
  for (std::size_t i = 0; 2 * i < k; ++i) {
    const double offset = static_cast<double>(k) / 2.0 - static_cast<double>(i);
    num += offset * (values[k - i] - values[i]);
  }
  // S_xx = sum (x - K/2)^2 = K (K+1) (K+2) / 12, a multiple of 1/2.
  const double sxx = static_cast<double>(k * (k + 1) * (k + 2)) / 12.0;
  return num / sxx;
}

inline double slope(const Trajectory& traj) { return slope(traj.values); }

/// values[K] - values[0].
inline double net_change(std::span<const double> values) {
  if (values.size() < 2) {
    fail(ErrorCode::insufficient_data, "net change needs at least 2 points");
  }
  return values.back() - values.front();
}

inline double trend(const Trajectory& traj, SlopeMode mode) {
  return mode == SlopeMode::ols ? slope(traj.values) : net_change(traj.values);
}

/// Mann-Whitney U for samples a and b: U counts pairs with a_i > b_j, ties
/// counted one half. Normal approximation with tie and continuity correction.
struct MannWhitney {
  double u = 0.0;
  double z = 0.0;
  double p_value = 1.0;  // two-sided
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

inline MannWhitney mann_whitney_u(std::span<const double> a,
                                  std::span<const double> b) {
  if (a.empty() || b.empty()) {
    fail(ErrorCode::insufficient_data, "Mann-Whitney U needs two non-empty samples");
  }
  struct Item {
    double value;
    bool from_a;
  };
  std::vector<Item> all;
  all.reserve(a.size() + b.size());
  for (double v : a) all.push_back({v, true});
  for (double v : b) all.push_back({v, false});
  std::sort(all.begin(), all.end(),
            [](const Item& x, const Item& y) { return x.value < y.value; });

  // Midranks; rank sums of half-integers stay exact in double.
  double rank_sum_a = 0.0;
  double tie_term = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].value == all[i].value) ++j;
    const double midrank = static_cast<double>(i + j + 1) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].from_a) rank_sum_a += midrank;
    }
    const double ties = static_cast<double>(j - i);
    tie_term += ties * ties * ties - ties;
    i = j;
  }
  MannWhitney r;
  r.n_a = a.size();
  r.n_b = b.size();
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double total = na + nb;
  r.u = rank_sum_a - na * (na + 1.0) / 2.0;
  const double mu = na * nb / 2.0;
  const double var =
      na * nb / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
  if (var > 0.0) {
    const double diff = r.u - mu;
    const double corrected =
        diff > 0.5 ? diff - 0.5 : (diff < -0.5 ? diff + 0.5 : 0.0);
    r.z = corrected / std::sqrt(var);
    r.p_value = std::erfc(std::abs(r.z) / std::sqrt(2.0));
  }
  return r;
}

/// Probability that a random correct-chain slope is more negative than a
/// random incorrect-chain slope (ties count one half).
inline double separability(std::span<const double> correct_slopes,
                           std::span<const double> incorrect_slopes) {
  if (correct_slopes.empty() || incorrect_slopes.empty()) {
    fail(ErrorCode::insufficient_data, "separability needs both slope groups");
  }
  const auto mw = mann_whitney_u(incorrect_slopes, correct_slopes);
  return mw.u / (static_cast<double>(correct_slopes.size()) *
                 static_cast<double>(incorrect_slopes.size()));
}

/// One row of the length/accuracy table. `correct == nullopt` marks the
/// all-chains row for its (domain, source).
struct StatsRow {
  Domain domain = Domain::algebra;
  Source source = Source::llm;
  std::optional<Correctness> correct;
  std::size_t chains = 0;
  double mean_token_count = 0.0;
  double mean_step_count = 0.0;
  std::size_t labeled_llm = 0;
  /// Correct fraction among labeled LLM chains; absent when there are none.
  std::optional<double> accuracy;

  bool operator==(const StatsRow&) const = default;
};

struct StatsTable {
  std::vector<StatsRow> rows;

  const StatsRow* find(Domain d, Source s,
                       std::optional<Correctness> c = std::nullopt) const {
    for (const auto& r : rows) {
      if (r.domain == d && r.source == s && r.correct == c) return &r;
    }
    return nullptr;
  }
};

inline std::string_view stats_correct_label(std::optional<Correctness> c) {
  return c ? to_string(*c) : std::string_view("all");
}

/// Per (domain, source) one `all` row followed by one row per correctness
/// label present. Rows with zero chains are omitted.
inline StatsTable length_stats(std::span<const ChainTrace> chains) {
  struct Acc {
    std::size_t chains = 0;
    double tokens = 0.0;
    double steps = 0.0;
    std::size_t labeled = 0;
    std::size_t correct = 0;
  };
  using Key = std::tuple<std::string_view, std::string_view, std::string_view>;
  std::map<Key, std::pair<StatsRow, Acc>> acc;
  auto bump = [&](const ChainTrace& c, std::optional<Correctness> label) {
    const Key key{to_string(c.domain), to_string(c.source),
                  label ? to_string(*label) : std::string_view("")};
    auto& [row, a] = acc[key];
    row.domain = c.domain;
    row.source = c.source;
    row.correct = label;
    ++a.chains;
    a.tokens += static_cast<double>(c.token_count);
    a.steps += static_cast<double>(c.step_count());
    if (c.source == Source::llm && c.correct != Correctness::unknown) {
      ++a.labeled;
      if (c.correct == Correctness::correct) ++a.correct;
    }
  };
  for (const auto& c : chains) {
    bump(c, std::nullopt);
    bump(c, c.correct);
  }
  StatsTable table;
  for (auto& [key, entry] : acc) {
    auto& [row, a] = entry;
    row.chains = a.chains;
    row.mean_token_count = a.tokens / static_cast<double>(a.chains);
    row.mean_step_count = a.steps / static_cast<double>(a.chains);
    row.labeled_llm = a.labeled;
    if (a.labeled > 0) {
      row.accuracy =
          static_cast<double>(a.correct) / static_cast<double>(a.labeled);
    }
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace cotscope
