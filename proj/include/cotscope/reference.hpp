#pragma once

// Published per-domain statistics for the MATH dataset with Qwen2.5-32B
// solutions. Kept as documentation constants and as an optional source of
// default alignment lengths; nothing here is a computed target.

#include <array>
#include <optional>

#include "cotscope/trace.hpp"

namespace cotscope::reference {

struct DomainStats {
  Domain domain;
  int problems;
  int human_tokens;
  int human_steps;  // mean step count of human solutions, rounded
  int llm_tokens;
  int llm_steps;  // mean step count of model solutions, rounded
  double llm_accuracy;
};

inline constexpr std::array<DomainStats, 7> kMathTable = {{
    {Domain::counting_and_probability, 469, 466, 5, 1728, 9, 0.81},
    {Domain::number_theory, 540, 472, 5, 1565, 10, 0.84},
    {Domain::prealgebra, 864, 357, 5, 1281, 9, 0.92},
    {Domain::algebra, 1185, 370, 4, 1306, 10, 0.95},
    {Domain::intermediate_algebra, 903, 660, 7, 1860, 11, 0.63},
    {Domain::precalculus, 546, 780, 7, 1930, 10, 0.63},
    {Domain::geometry, 479, 726, 8, 1895, 10, 0.67},
}};

inline constexpr int kMathProblemCount = 4986;

inline constexpr const DomainStats& stats_for(Domain d) {
  for (const auto& row : kMathTable) {
    if (row.domain == d) return row;
  }
  return kMathTable[0];
}

/// Rounded mean step count for the given domain and solution source.
inline constexpr int mean_steps(Domain d, Source s) {
  const auto& row = stats_for(d);
  return s == Source::human ? row.human_steps : row.llm_steps;
}

}  // namespace cotscope::reference
