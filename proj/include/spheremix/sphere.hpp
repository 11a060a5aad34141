#pragma once

// Geometry on the unit (hyper)sphere: unit vectors, geographic conversion,
// orthonormal frames around a mean direction and projection of
// high-dimensional directional data down to S^2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spheremix/errors.hpp"

namespace spheremix {

inline constexpr double kUnitTolerance = 1e-9;

/// A point on S^(d-1) stored as its Cartesian coordinates.
class UnitVector {
 public:
  /// Wraps already-normalized coordinates; throws DomainError otherwise.
  explicit UnitVector(Eigen::VectorXd coords) : coords_(std::move(coords)) {
    if (coords_.size() < 2 || std::abs(coords_.norm() - 1.0) > kUnitTolerance) {
      throw DomainError("UnitVector: coordinates do not have unit norm");
    }
  }

  /// Divides by the Euclidean norm; throws DomainError for the zero vector.
  static UnitVector normalized(const Eigen::VectorXd& v) {
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("UnitVector: cannot normalize zero vector");
    return UnitVector(v / n);
  }

  const Eigen::VectorXd& coords() const noexcept { return coords_; }
  Eigen::Index dim() const noexcept { return coords_.size(); }
  double operator[](Eigen::Index i) const { return coords_[i]; }

  Eigen::Vector3d as3() const {
    if (coords_.size() != 3) throw DomainError("UnitVector: expected a point on S^2");
    return coords_.head<3>();
  }

 private:
  Eigen::VectorXd coords_;
};

/// Geographic position in degrees.
struct GeoCoord {
  double lat = 0.0;  // [-90, 90]
  double lon = 0.0;  // (-180, 180]
};

/// n observations on S^(d-1), one per row.
class DataMatrix {
 public:
  DataMatrix() = default;

  /// Throws DegenerateError naming the first row whose norm is not 1.
  explicit DataMatrix(Eigen::MatrixXd rows) : rows_(std::move(rows)) {
    for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
      if (std::abs(rows_.row(i).norm() - 1.0) > kUnitTolerance) {
        throw DegenerateError("DataMatrix: row " + std::to_string(i) + " is not a unit vector",
                              static_cast<std::size_t>(i));
      }
    }
  }

  const Eigen::MatrixXd& matrix() const noexcept { return rows_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(rows_.rows()); }
  Eigen::Index dim() const noexcept { return rows_.cols(); }
  Eigen::VectorXd row(std::size_t i) const { return rows_.row(static_cast<Eigen::Index>(i)).transpose(); }

  /// Rows as 3-vectors; throws DomainError unless the data live on S^2.
  std::vector<Eigen::Vector3d> points3() const {
    if (rows_.cols() != 3) throw DomainError("DataMatrix: expected 3 columns (data on S^2)");
    std::vector<Eigen::Vector3d> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = rows_.row(static_cast<Eigen::Index>(i)).transpose();
    return out;
  }

  /// Selects rows by index, keeping their order.
  DataMatrix subset(const std::vector<std::size_t>& idx) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(idx.size()), rows_.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) m.row(static_cast<Eigen::Index>(k)) = rows_.row(static_cast<Eigen::Index>(idx[k]));
    return DataMatrix(std::move(m));
  }

 private:
  Eigen::MatrixXd rows_;
};

namespace detail {
inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }
}  // namespace detail

inline UnitVector geo_to_cart(const GeoCoord& g) {
  if (!(g.lat >= -90.0 && g.lat <= 90.0) || !(g.lon > -180.0 && g.lon <= 180.0)) {
    throw DomainError("geo_to_cart: latitude/longitude out of bounds");
  }
  const double la = detail::deg2rad(g.lat);
  const double lo = detail::deg2rad(g.lon);
  Eigen::VectorXd v(3);
  v << std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo), std::sin(la);
  return UnitVector::normalized(v);
}

inline GeoCoord cart_to_geo(const UnitVector& u) {
  const Eigen::Vector3d v = u.as3();
  GeoCoord g;
  g.lat = detail::rad2deg(std::asin(std::clamp(v.z(), -1.0, 1.0)));
  g.lon = detail::rad2deg(std::atan2(v.y(), v.x()));
  if (g.lon <= -180.0) g.lon += 360.0;
  return g;
}

/// Divides each row by its norm. Zero (or non-finite) rows raise DegenerateError.
inline DataMatrix normalize_rows(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw DegenerateError("normalize_rows: row " + std::to_string(i) + " has zero or non-finite norm",
                            static_cast<std::size_t>(i));
    }
    out.row(i) /= n;
  }
  return DataMatrix(std::move(out));
}

/// Pair of unit vectors orthogonal to each other and to the mean direction.
struct Frame {
  Eigen::Vector3d xi1;
  Eigen::Vector3d xi2;
};

inline constexpr double kFrameFallbackThreshold = 1e-10;

namespace detail {
inline Frame frame_unchecked(const Eigen::Vector3d& mu, double norm) {
  const double m0 = std::hypot(mu[1], mu[2]);
  Frame f;
  f.xi1 = Eigen::Vector3d(-m0 * m0, mu[0] * mu[1], mu[0] * mu[2]) / (m0 * norm);
  f.xi2 = Eigen::Vector3d(0.0, -mu[2], mu[1]) / m0;
  return f;
}
}  // namespace detail

/// Frame (xi1, xi2) for mean vector mu. When (mu_2^2 + mu_3^2)^(1/2) is below
/// 1e-10 the coordinates are cycled (1,2,3)->(2,3,1) first and the result is
/// mapped back.
inline Frame orthonormal_frame(const Eigen::Vector3d& mu) {
  const double norm = mu.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw DomainError("orthonormal_frame: mean vector has zero norm");
  if (std::hypot(mu[1], mu[2]) >= kFrameFallbackThreshold) return detail::frame_unchecked(mu, norm);

  const Eigen::Vector3d p(mu[1], mu[2], mu[0]);
  const Frame fp = detail::frame_unchecked(p, norm);
  auto back = [](const Eigen::Vector3d& v) { return Eigen::Vector3d(v[2], v[0], v[1]); };
  return {back(fp.xi1), back(fp.xi2)};
}

/// Deterministic orthonormal basis of the complement of `dir` (columns),
/// built from a Householder reflection. For 3-vectors this is the frame above.
inline Eigen::MatrixXd orthogonal_complement(const Eigen::VectorXd& dir) {
  const Eigen::Index d = dir.size();
  const double norm = dir.norm();
  if (!(norm > 0.0)) throw DomainError("orthogonal_complement: zero direction");
  if (d == 3) {
    const Frame f = orthonormal_frame(dir);
    Eigen::MatrixXd b(3, 2);
    b.col(0) = f.xi1;
    b.col(1) = f.xi2;
    return b;
  }
  const Eigen::VectorXd u = dir / norm;
  // H = I - 2 v v^T maps u to -sign(u_0) e_0; its other columns span u-perp.
  Eigen::VectorXd v = u;
  v[0] += (u[0] >= 0.0 ? 1.0 : -1.0);
  v.normalize();
  const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(d, d) - 2.0 * v * v.transpose();
  return h.rightCols(d - 1);
}

/// Unit vector at angle omega (degrees) from mu1, rotating towards the first
/// vector of mu1's deterministic orthogonal complement.
inline UnitVector mean_at_angle(const UnitVector& mu1, double omega_deg) {
  if (!(omega_deg >= 0.0 && omega_deg <= 180.0)) throw DomainError("mean_at_angle: omega must lie in [0, 180]");
  const Eigen::VectorXd& m = mu1.coords();
  const Eigen::VectorXd v = orthogonal_complement(m).col(0);
  const double w = detail::deg2rad(omega_deg);
  return UnitVector::normalized(std::cos(w) * m + std::sin(w) * v);
}

namespace detail {
// Flip each column so its largest-magnitude entry is positive.
inline void canonical_signs(Eigen::MatrixXd& cols) {
  for (Eigen::Index j = 0; j < cols.cols(); ++j) {
    Eigen::Index k = 0;
    cols.col(j).cwiseAbs().maxCoeff(&k);
    if (cols(k, j) < 0.0) cols.col(j) *= -1.0;
  }
}
}  // namespace detail

struct SphereProjection {
  DataMatrix data;        ///< projected rows on S^2
  Eigen::MatrixXd basis;  ///< (d+1) x 3, orthonormal columns
};

/// Projects rows onto the span of the top-3 right singular vectors of the
/// uncentered data matrix, then renormalizes each row.
inline SphereProjection pca_project_to_sphere(const DataMatrix& x, Eigen::Index target = 3) {
  if (target != 3) throw DomainError("pca_project_to_sphere: only target dimension 3 is supported");
  if (x.dim() < 3 || x.size() < 3) throw DomainError("pca_project_to_sphere: need at least 3 columns and 3 rows");

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x.matrix(), Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  if (s.size() < 3 || !(s[2] > 1e-10 * s[0])) {
    throw DegenerateError("pca_project_to_sphere: data span fewer than 3 dimensions");
  }
  Eigen::MatrixXd basis = svd.matrixV().leftCols(3);
  detail::canonical_signs(basis);
  const Eigen::MatrixXd proj = x.matrix() * basis;
  for (Eigen::Index i = 0; i < proj.rows(); ++i) {
    if (!(proj.row(i).norm() > 1e-12)) {
      throw DegenerateError("pca_project_to_sphere: row " + std::to_string(i) + " is orthogonal to the subspace",
                            static_cast<std::size_t>(i));
    }
  }
  return {normalize_rows(proj), std::move(basis)};
}

/// Scores on the first two principal components of the centered coordinates.
inline Eigen::MatrixXd pca_2d_coords(const DataMatrix& x) {
  if (x.size() < 2) throw DomainError("pca_2d_coords: need at least 2 rows");
  if (x.dim() < 2) throw DomainError("pca_2d_coords: need at least 2 columns");
  const Eigen::MatrixXd centered = x.matrix().rowwise() - x.matrix().colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues come back ascending.
  Eigen::MatrixXd top(x.dim(), 2);
  top.col(0) = eig.eigenvectors().col(x.dim() - 1);
  top.col(1) = eig.eigenvectors().col(x.dim() - 2);
  detail::canonical_signs(top);
  return centered * top;
}

}  // namespace spheremix
