#pragma once

// ESAG and SESPC densities on S^2, their constrained precision matrix,
// samplers, and the general-dimension angular Gaussian used for
// hyper-spherical simulation.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

#include <Eigen/Dense>

#include "spheremix/errors.hpp"
#include "spheremix/special.hpp"
#include "spheremix/sphere.hpp"

namespace spheremix {

enum class Kind { Esag, Sespc };

inline std::string_view to_string(Kind k) { return k == Kind::Esag ? "esag" : "sespc"; }

inline Kind kind_from_string(std::string_view s) {
  if (s == "esag" || s == "ESAG") return Kind::Esag;
  if (s == "sespc" || s == "SESPC") return Kind::Sespc;
  throw DomainError("unknown distribution kind '" + std::string(s) + "'");
}

/// Mean vector (its norm acts as concentration) and anisotropy pair gamma.
struct ComponentParams {
  Eigen::Vector3d mu = Eigen::Vector3d::UnitZ();
  Eigen::Vector2d gamma = Eigen::Vector2d::Zero();

  /// Packed (mu, gamma) as the 5-vector the optimizer works on.
  Eigen::Matrix<double, 5, 1> packed() const {
    Eigen::Matrix<double, 5, 1> v;
    v << mu, gamma;
    return v;
  }
  static ComponentParams unpack(const Eigen::Ref<const Eigen::VectorXd>& v) {
    ComponentParams p;
    p.mu = v.head<3>();
    p.gamma = v.segment<2>(3);
    return p;
  }
};

/// Eigenvalue ratio rho in (0, 1] and rotation psi in (0, pi] of the
/// symmetry axes; a bijection with gamma (psi is pinned to pi when rho = 1).
struct ShapeDecomposition {
  double rho = 1.0;
  double psi = std::numbers::pi;

  Eigen::Vector2d to_gamma() const {
    const double a = 0.5 * (1.0 / rho - rho);
    return {a * std::cos(2.0 * psi), a * std::sin(2.0 * psi)};
  }

  static ShapeDecomposition from_gamma(const Eigen::Vector2d& g) {
    const double s = g.norm();
    ShapeDecomposition d;
    d.rho = std::sqrt(s * s + 1.0) - s;
    if (s == 0.0) return d;
    double psi = 0.5 * std::atan2(g[1], g[0]);  // (-pi/2, pi/2]
    if (psi <= 0.0) psi += std::numbers::pi;
    d.psi = psi;
    return d;
  }
};

/// Inverse covariance V^{-1} with V mu = mu and |V| = 1.
struct PrecisionMatrix {
  Eigen::Matrix3d vinv = Eigen::Matrix3d::Identity();
};

/// Eigen-structure of V^{-1}: columns of `axes` are xi1, xi2, mu/|mu| with
/// eigenvalues sqrt(s^2+1)+s, sqrt(s^2+1)-s, 1 (s = |gamma|).
struct PrecisionSpectrum {
  Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();
  Eigen::Vector3d eigenvalues = Eigen::Vector3d::Ones();

  /// Symmetric square root of V (not V^{-1}), so V = S S^T.
  Eigen::Matrix3d covariance_sqrt() const {
    return axes * eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal() * axes.transpose();
  }
};

inline PrecisionMatrix build_precision(const ComponentParams& p) {
  const Frame f = orthonormal_frame(p.mu);  // throws on mu = 0
  const double g1 = p.gamma[0];
  const double g2 = p.gamma[1];
  const double c = std::sqrt(g1 * g1 + g2 * g2 + 1.0) - 1.0;
  const Eigen::Matrix3d a = f.xi1 * f.xi1.transpose();
  const Eigen::Matrix3d b = f.xi2 * f.xi2.transpose();
  const Eigen::Matrix3d ab = f.xi1 * f.xi2.transpose();
  PrecisionMatrix out;
  out.vinv = Eigen::Matrix3d::Identity() + g1 * (a - b) + g2 * (ab + ab.transpose()) + c * (a + b);
  return out;
}

inline PrecisionSpectrum precision_spectrum(const ComponentParams& p) {
  PrecisionSpectrum sp;
  if (p.mu.norm() == 0.0) return sp;  // SESPC uniform case
  const Frame f = orthonormal_frame(p.mu);
  const double s = p.gamma.norm();
  const double root = std::sqrt(s * s + 1.0);
  const double psi = s > 0.0 ? 0.5 * std::atan2(p.gamma[1], p.gamma[0]) : 0.0;
  sp.axes.col(0) = std::cos(psi) * f.xi1 + std::sin(psi) * f.xi2;
  sp.axes.col(1) = -std::sin(psi) * f.xi1 + std::cos(psi) * f.xi2;
  sp.axes.col(2) = p.mu.normalized();
  sp.eigenvalues = Eigen::Vector3d(root + s, root - s, 1.0);
  return sp;
}

/// Prepared log-density of one component; construction does the per-parameter
/// work so evaluation is a handful of flops plus one transcendental call.
class ComponentDensity {
 public:
  ComponentDensity(Kind kind, const ComponentParams& p) : kind_(kind), mu_(p.mu), mu2_(p.mu.squaredNorm()) {
    if (mu2_ == 0.0) {
      if (kind == Kind::Esag) throw DomainError("esag: mean vector must be non-zero");
      vinv_.setIdentity();
    } else {
      vinv_ = build_precision(p).vinv;
    }
    if (!vinv_.allFinite() || !std::isfinite(mu2_)) throw DomainError("component parameters are not finite");
  }

  Kind kind() const noexcept { return kind_; }

  /// No unit-norm check on y.
  double operator()(const Eigen::Vector3d& y) const {
    const double t = y.dot(mu_);
    const double b = y.dot(vinv_ * y);
    return kind_ == Kind::Esag ? esag(t, b) : sespc(t, b);
  }

 private:
  double esag(double t, double b) const {
    // C_3 / B^{3/2} exp(0.5 (t^2/B - |mu|^2)) M_2(t / sqrt(B)), C_3 = 1/(2 pi)
    static const double log_c = -std::log(2.0 * std::numbers::pi);
    const double root_b = std::sqrt(b);
    const double alpha = t / root_b;
    const double quad = log_c + 0.5 * (t * t / b - mu2_);
    if (alpha < -5.0) return quad - 1.5 * std::log(b) + log_truncated_moment(2, alpha);
    // Above 8.3, Phi(alpha) == 1 and alpha phi(alpha) is below 1e-16 relative.
    const double m2 = alpha > 8.3 ? 1.0 + alpha * alpha
                                  : (1.0 + alpha * alpha) * normal_cdf(alpha) + alpha * normal_pdf(alpha);
    return quad + std::log(m2 / (b * root_b));
  }

  double sespc(double t, double b) const {
    static const double log_4pi2 = std::log(4.0 * std::numbers::pi * std::numbers::pi);
    const double e = b * mu2_ + b - t * t;
    const double root_e = std::sqrt(e);
    double log_num;
    if (t >= 0.0) {
      const double bracket = std::atan2(root_e, -t) - std::atan2(root_e, t) + std::numbers::pi;
      log_num = std::log(b * (mu2_ + 1.0) * root_e * bracket + 2.0 * t * e);
    } else {
      // Rewritten as 2 E u g(a), u = -t, a = sqrt(E)/u, g(a) = (1+a^2) atan(a)/a - 1,
      // which avoids cancellation when y is nearly antipodal to a concentrated mean.
      const double u = -t;
      const double a = root_e / u;
      log_num = std::log(2.0 * e * u * cauchy_tail(a));
    }
    return log_num - log_4pi2 - std::log(b) - 2.0 * std::log(e);
  }

  static double cauchy_tail(double a) {
    if (a < 0.1) {
      const double a2 = a * a;
      double term = a2;
      double sum = 0.0;
      for (int k = 1; k <= 9; ++k) {
        sum += (k % 2 ? 2.0 : -2.0) * term / (4.0 * k * k - 1.0);
        term *= a2;
      }
      return sum;
    }
    return (1.0 + a * a) * std::atan(a) / a - 1.0;
  }

  Kind kind_;
  Eigen::Vector3d mu_;
  double mu2_;
  Eigen::Matrix3d vinv_;
};

namespace detail {
inline void require_unit(const Eigen::Vector3d& y, const char* who) {
  if (std::abs(y.norm() - 1.0) > kUnitTolerance) throw DomainError(std::string(who) + ": observation is not a unit vector");
}
}  // namespace detail

inline double esag_logpdf(const Eigen::Vector3d& y, const ComponentParams& p) {
  detail::require_unit(y, "esag_logpdf");
  return ComponentDensity(Kind::Esag, p)(y);
}

inline double sespc_logpdf(const Eigen::Vector3d& y, const ComponentParams& p) {
  detail::require_unit(y, "sespc_logpdf");
  return ComponentDensity(Kind::Sespc, p)(y);
}

inline double logpdf(Kind kind, const Eigen::Vector3d& y, const ComponentParams& p) {
  return kind == Kind::Esag ? esag_logpdf(y, p) : sespc_logpdf(y, p);
}

namespace detail {

template <class Draw>
DataMatrix sample_projected(std::size_t n, const ComponentParams& p, std::uint64_t seed, Draw&& radial_scale) {
  if (n < 1) throw DomainError("sampler: n must be at least 1");
  const Eigen::Matrix3d root = precision_spectrum(p).covariance_sqrt();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    Eigen::Vector3d z(normal(rng), normal(rng), normal(rng));
    const double scale = radial_scale(rng, normal);
    Eigen::Vector3d x = p.mu + root * z * scale;
    double nx = x.norm();
    while (!(nx > 0.0)) {  // probability zero, but keep rows valid
      z = Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
      x = p.mu + root * z * scale;
      nx = x.norm();
    }
    out.row(i) = (x / nx).transpose();
  }
  return DataMatrix(std::move(out));
}

}  // namespace detail

/// Draws N_3(mu, V) and projects radially onto S^2.
inline DataMatrix sample_esag(std::size_t n, const ComponentParams& p, std::uint64_t seed) {
  if (p.mu.norm() == 0.0) throw DomainError("sample_esag: mean vector must be non-zero");
  return detail::sample_projected(n, p, seed, [](auto&, auto&) { return 1.0; });
}

/// Draws the trivariate Cauchy mu + L Z / |W| and projects onto S^2.
inline DataMatrix sample_sespc(std::size_t n, const ComponentParams& p, std::uint64_t seed) {
  return detail::sample_projected(n, p, seed, [](auto& rng, auto& normal) {
    double w = 0.0;
    while (w == 0.0) w = std::abs(normal(rng));
    return 1.0 / w;
  });
}

inline DataMatrix sample(Kind kind, std::size_t n, const ComponentParams& p, std::uint64_t seed) {
  return kind == Kind::Esag ? sample_esag(n, p, seed) : sample_sespc(n, p, seed);
}

/// Angular Gaussian in R^(d+1), d+1 >= 4: V has eigenvalue 1 along mu/|mu| and
/// exp(log_rho) on a basis of mu-perp (product of those eigenvalues is 1).
struct GeneralAngularParams {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_rho;
  std::uint64_t frame_seed = 0;
};

namespace detail {

inline void validate_general(const GeneralAngularParams& g) {
  if (g.mu.size() < 4) throw DomainError("general angular: dimension must be at least 4");
  if (g.log_rho.size() != g.mu.size() - 1) throw DomainError("general angular: log_rho must have length dim - 1");
  if (!(g.mu.norm() > 0.0)) throw DomainError("general angular: mean vector must be non-zero");
  if (std::abs(g.log_rho.sum()) > 1e-10) throw ConstraintError("general angular: log_rho must sum to 0");
}

// Orthonormal basis of mu-perp; frame_seed 0 is the Householder basis, any
// other seed applies a seeded random rotation within mu-perp.
inline Eigen::MatrixXd general_basis(const GeneralAngularParams& g) {
  Eigen::MatrixXd basis = orthogonal_complement(g.mu);
  if (g.frame_seed == 0) return basis;
  const Eigen::Index m = basis.cols();
  std::mt19937_64 rng(g.frame_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(m, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < m; ++i) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, m);
  return basis * q;
}

}  // namespace detail

/// Covariance V of the general angular Gaussian.
inline Eigen::MatrixXd general_covariance(const GeneralAngularParams& g) {
  detail::validate_general(g);
  const Eigen::MatrixXd basis = detail::general_basis(g);
  const Eigen::VectorXd dir = g.mu.normalized();
  return dir * dir.transpose() + basis * g.log_rho.array().exp().matrix().asDiagonal() * basis.transpose();
}

inline DataMatrix sample_general_angular(std::size_t n, const GeneralAngularParams& g, std::uint64_t seed) {
  detail::validate_general(g);
  if (n < 1) throw DomainError("sampler: n must be at least 1");
  const Eigen::MatrixXd basis = detail::general_basis(g);
  const Eigen::VectorXd dir = g.mu.normalized();
  const Eigen::VectorXd sd = (0.5 * g.log_rho.array()).exp().matrix();
  const Eigen::Index dim = g.mu.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), dim);
  Eigen::VectorXd z(dim - 1);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    Eigen::VectorXd x;
    double nx = 0.0;
    while (!(nx > 0.0)) {
      const double z0 = normal(rng);
      for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
      x = g.mu + z0 * dir + basis * sd.cwiseProduct(z);
      nx = x.norm();
    }
    out.row(i) = (x / nx).transpose();
  }
  return DataMatrix(std::move(out));
}

/// Angular Gaussian log-density in R^D with |V| = 1 and V mu = mu, using
/// M_{D-1} from the moment recurrence.
inline double general_angular_logpdf(const Eigen::VectorXd& y, const GeneralAngularParams& g) {
  const Eigen::MatrixXd vinv = general_covariance(g).inverse();
  const double dim = static_cast<double>(y.size());
  const double t = y.dot(g.mu);
  const double b = y.dot(vinv * y);
  const double log_c = -0.5 * (dim - 1.0) * std::log(2.0 * std::numbers::pi);
  return log_c - 0.5 * dim * std::log(b) + 0.5 * (t * t / b - g.mu.squaredNorm()) +
         log_truncated_moment(static_cast<int>(y.size()) - 1, t / std::sqrt(b));
}

}  // namespace spheremix
