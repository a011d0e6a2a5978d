#pragma once

// Puts trajectories of different lengths on a shared axis. A trajectory with
// K+1 points is sampled at target_len uniform positions over [0, K]: natural
// cubic spline for 4+ points, linear interpolation for 2-3 points, and plain
// replication for a single point.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cotscope/entropy.hpp"
#include "cotscope/error.hpp"
#include "cotscope/spline.hpp"
#include "cotscope/trace.hpp"

namespace cotscope {

enum class ResampleMethod { cubic, linear, constant };

inline constexpr std::string_view to_string(ResampleMethod m) {
  switch (m) {
    case ResampleMethod::cubic: return "cubic";
    case ResampleMethod::linear: return "linear";
    case ResampleMethod::constant: return "constant";
  }
  return "";
}

/// Fewest trajectory points that get a spline instead of linear interpolation.
inline constexpr std::size_t kMinSplinePoints = 4;

struct AlignedCurve {
  std::string chain_id;
  std::string problem_id;
  Metric metric = Metric::entropy;
  std::size_t target_len = 0;
  std::vector<double> values;
  ResampleMethod method = ResampleMethod::linear;
  Correctness correct = Correctness::unknown;
  Source source = Source::llm;
  Domain domain = Domain::algebra;
  std::size_t step_count = 0;
  std::int64_t token_count = 0;
  /// Nominal step count the shared axis represents; exported x positions are
  /// step_index * axis_steps / (target_len - 1).
  double axis_steps = 0.0;

  bool operator==(const AlignedCurve&) const = default;
};

/// Position of sample j on [0, span] for a grid of `len` points. j*span is an
/// exact integer, so knot-coincident positions and both ends are exact.
inline double grid_position(std::size_t j, std::size_t span, std::size_t len) {
  return static_cast<double>(j * span) / static_cast<double>(len - 1);
}

inline AlignedCurve resample(const Trajectory& traj, std::size_t target_len) {
  if (target_len < 2) {
    fail(ErrorCode::invalid_target,
         "target_len must be at least 2, got " + std::to_string(target_len));
  }
  const auto& y = traj.values;
  if (y.empty()) {
    fail(ErrorCode::insufficient_data,
         "trajectory '" + traj.chain_id + "' has no values");
  }

  AlignedCurve out;
  out.chain_id = traj.chain_id;
  out.problem_id = traj.problem_id;
  out.metric = traj.metric;
  out.target_len = target_len;
  out.correct = traj.correct;
  out.source = traj.source;
  out.domain = traj.domain;
  out.step_count = traj.step_count;
  out.token_count = traj.token_count;
  out.axis_steps = static_cast<double>(target_len - 1);
  out.values.resize(target_len);

  const std::size_t n = y.size();
  const std::size_t span = n - 1;
  if (n == 1) {
    out.method = ResampleMethod::constant;
    for (auto& v : out.values) v = y[0];
  } else if (n < kMinSplinePoints) {
    out.method = ResampleMethod::linear;
    for (std::size_t j = 0; j < target_len; ++j) {
      const double x = grid_position(j, span, target_len);
      std::size_t i = static_cast<std::size_t>(std::floor(x));
      if (i > n - 2) i = n - 2;
      const double t = x - static_cast<double>(i);
      out.values[j] = (1.0 - t) * y[i] + t * y[i + 1];
    }
  } else {
    out.method = ResampleMethod::cubic;
    const NaturalCubicSpline<double> spline(y);
    for (std::size_t j = 0; j < target_len; ++j) {
      out.values[j] = spline(grid_position(j, span, target_len));
    }
  }
  return out;
}

}  // namespace cotscope
