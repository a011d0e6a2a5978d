#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "cotscope/entropy.hpp"
#include "cotscope/error.hpp"
#include "cotscope/trace.hpp"

namespace cotscope {

inline constexpr double kMinVectorNorm = 1e-12;

/// Cosine similarity, clamped to [-1, 1].
inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    fail(ErrorCode::shape_mismatch, "cosine of vectors with dimensions " +
                                        std::to_string(u.size()) + " and " +
                                        std::to_string(v.size()));
  }
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  const double nu = std::sqrt(uu);
  const double nv = std::sqrt(vv);
  if (!(nu > kMinVectorNorm) || !(nv > kMinVectorNorm)) {
    fail(ErrorCode::degenerate_vector, "cosine of a near-zero vector");
  }
  return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

/// values[k] = cos(pooled(C_k), pooled(Y)) for k = 0..K.
inline Trajectory similarity_trajectory(const ChainTrace& chain) {
  if (!chain.answer_pooled_vec) {
    fail(ErrorCode::feature_unavailable,
         "chain '" + chain.chain_id + "' has no answer_pooled_vec");
  }
  Trajectory t = detail::trajectory_shell(chain, Metric::cosine);
  t.values.reserve(chain.step_records.size());
  for (const auto& step : chain.step_records) {
    if (!step.context_pooled_vec) {
      fail(ErrorCode::feature_unavailable,
           "chain '" + chain.chain_id + "' step " +
               std::to_string(step.step_index) + " has no context_pooled_vec");
    }
    t.values.push_back(cosine(*step.context_pooled_vec, *chain.answer_pooled_vec));
  }
  return t;
}

}  // namespace cotscope
