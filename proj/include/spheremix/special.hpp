#pragma once

// Standard normal helpers and the truncated Gaussian moments
//   M_n(a) = int_0^inf u^n phi(u - a) du
// that appear in the angular Gaussian normalizing constant.

#include <cmath>
#include <limits>
#include <numbers>

namespace spheremix {

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline constexpr double kMomentFloor = 1e-300;

/// M_order(alpha) via the closed forms for orders 0..2 and the recurrence
/// M_n = alpha M_{n-1} + (n-1) M_{n-2} above that. Floored at 1e-300.
inline double truncated_moment(int order, double alpha) {
  const double cdf = normal_cdf(alpha);
  const double pdf = normal_pdf(alpha);
  double m_prev = cdf;                // M_0
  double m_cur = alpha * cdf + pdf;   // M_1
  double value = m_prev;
  if (order == 1) {
    value = m_cur;
  } else if (order >= 2) {
    for (int n = 2; n <= order; ++n) {
      const double next = alpha * m_cur + (n - 1) * m_prev;
      m_prev = m_cur;
      m_cur = next;
    }
    value = m_cur;
  }
  return value > kMomentFloor ? value : kMomentFloor;
}

namespace detail {

// Mills-type scaled moments m_n(x) = M_n(-x) / phi(x) for large x > 0,
// where the direct closed forms cancel catastrophically.
inline double scaled_moment_negative(int order, double x) {
  if (x > 20.0) {
    const double r2 = 1.0 / (x * x);
    switch (order) {
      case 0:
        return (1.0 / x) * (1.0 + r2 * (-1.0 + r2 * (3.0 + r2 * (-15.0 + r2 * (105.0 - 945.0 * r2)))));
      case 1:
        return r2 * (1.0 + r2 * (-3.0 + r2 * (15.0 + r2 * (-105.0 + r2 * 945.0))));
      case 2:
        return (2.0 * r2 / x) * (1.0 + r2 * (-6.0 + r2 * (45.0 + r2 * (-420.0 + r2 * 4725.0))));
      default:
        break;
    }
  }
  // R(x) = Phi(-x) / phi(x); fine for x <= ~37 before phi underflows.
  const double mills = 0.5 * std::erfc(x / std::numbers::sqrt2) / normal_pdf(x);
  double m_prev = mills;          // m_0
  double m_cur = 1.0 - x * mills; // m_1
  if (order == 0) return m_prev;
  for (int n = 2; n <= order; ++n) {
    const double next = -x * m_cur + (n - 1) * m_prev;
    m_prev = m_cur;
    m_cur = next;
  }
  return m_cur;
}

}  // namespace detail

/// log M_order(alpha), accurate deep into the negative tail for orders <= 2.
inline double log_truncated_moment(int order, double alpha) {
  if (alpha >= -5.0) return std::log(truncated_moment(order, alpha));
  const double x = -alpha;
  const double m = detail::scaled_moment_negative(order, x);
  if (!(m > 0.0) || !std::isfinite(m)) return std::log(kMomentFloor);
  return -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * x * x + std::log(m);
}

}  // namespace spheremix
