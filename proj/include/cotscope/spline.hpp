#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cotscope/error.hpp"

namespace cotscope {

/// Natural cubic spline through (i, y_i) for i = 0..n-1, unit knot spacing.
/// Second derivatives vanish at both ends, so affine data is reproduced
/// exactly (up to rounding) and the interpolant never extrapolates.
template <std::floating_point T>
class NaturalCubicSpline {
 public:
  explicit NaturalCubicSpline(std::span<const T> knots_y)
      : y_(knots_y.begin(), knots_y.end()), m_(knots_y.size(), T(0)) {
    const std::size_t n = y_.size();
    if (n < 2) {
      fail(ErrorCode::insufficient_knots,
           "natural cubic spline needs at least 2 knots, got " +
               std::to_string(n));
    }
    for (T v : y_) {
      if (!std::isfinite(v)) fail(ErrorCode::invalid_input, "non-finite knot value");
    }
    if (n > 2) solve_second_derivatives();
  }

  std::size_t knot_count() const { return y_.size(); }

  /// Upper end of the domain [0, n-1].
  T x_max() const { return static_cast<T>(y_.size() - 1); }

  /// Second derivative at each knot (both ends are zero).
  const std::vector<T>& second_derivatives() const { return m_; }

  T operator()(T x) const {
    if (!(x >= T(0) && x <= x_max())) {
      fail(ErrorCode::invalid_input, "spline evaluated outside [0, n-1]");
    }
    const std::size_t last = y_.size() - 2;
    std::size_t i = static_cast<std::size_t>(std::floor(x));
    if (i > last) i = last;
    const T t = x - static_cast<T>(i);
    const T s = T(1) - t;
    // At t = 0 and t = 1 the cubic terms vanish and the knot value is
    // returned exactly.
    return s * y_[i] + t * y_[i + 1] +
           ((s * s * s - s) * m_[i] + (t * t * t - t) * m_[i + 1]) / T(6);
  }

 private:
  // Interior equations with h = 1:
  //   M_{i-1} + 4 M_i + M_{i+1} = 6 (y_{i+1} - 2 y_i + y_{i-1}),
  // M_0 = M_{n-1} = 0. Thomas algorithm on the n-2 interior unknowns.
  void solve_second_derivatives() {
    const std::size_t n = y_.size();
    const std::size_t m = n - 2;
    std::vector<T> diag(m, T(4));
    std::vector<T> rhs(m);
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t i = k + 1;
      rhs[k] = T(6) * (y_[i + 1] - T(2) * y_[i] + y_[i - 1]);
    }
    for (std::size_t k = 1; k < m; ++k) {
      const T w = T(1) / diag[k - 1];
      diag[k] -= w;
      rhs[k] -= w * rhs[k - 1];
    }
    m_[m] = rhs[m - 1] / diag[m - 1];
    for (std::size_t k = m - 1; k-- > 0;) {
      m_[k + 1] = (rhs[k] - m_[k + 2]) / diag[k];
    }
  }

  std::vector<T> y_;
  std::vector<T> m_;
};

}  // namespace cotscope
