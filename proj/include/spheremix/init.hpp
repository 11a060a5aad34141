#pragma once

// Starting values for EM: k-means++ / Lloyd on the Cartesian coordinates,
// optionally refined by a full-covariance Gaussian mixture.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "spheremix/model.hpp"
#include "spheremix/parallel.hpp"

namespace spheremix {

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centers;  // K x D
  std::size_t iterations = 0;
};

namespace detail {

inline bool lloyd_once(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed, std::size_t max_iter, KMeansResult& out) {
  const Eigen::Index n = x.rows();
  const Eigen::Index K = static_cast<Eigen::Index>(k);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // k-means++ seeding
  Eigen::MatrixXd centers(K, x.cols());
  centers.row(0) = x.row(static_cast<Eigen::Index>(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng)));
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (Eigen::Index c = 1; c < K; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      double u = unif(rng) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2[i];
        if (u <= 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
    }
    centers.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  std::size_t it = 0;
  for (; it < max_iter; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centers.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (labels[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, x.cols());
    std::vector<std::size_t> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) return false;
      centers.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
    }
    if (!changed) break;
  }
  out.labels = std::move(labels);
  out.centers = std::move(centers);
  out.iterations = it;
  return true;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding. An empty cluster triggers a
/// reseed, up to 10 attempts.
inline KMeansResult kmeans(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed, std::size_t max_iter = 50) {
  if (k < 1 || static_cast<Eigen::Index>(k) > x.rows()) throw DomainError("kmeans: need 1 <= K <= n");
  KMeansResult out;
  for (std::uint64_t attempt = 0; attempt < 10; ++attempt) {
    if (detail::lloyd_once(x, k, derive_seed(seed, attempt, 0x6b6d), max_iter, out)) return out;
  }
  throw FitError("kmeans: empty cluster after 10 reseeding attempts");
}

/// Mean direction scaled by a moment-based concentration derived from the
/// weighted mean resultant length R: tau = R / sqrt(1 - R).
inline ComponentParams params_from_weights(const Points& y, const Eigen::VectorXd& w) {
  Eigen::Vector3d m = Eigen::Vector3d::Zero();
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    m += w[static_cast<Eigen::Index>(i)] * y[i];
    total += w[static_cast<Eigen::Index>(i)];
  }
  ComponentParams p;
  if (!(total > 0.0) || !(m.norm() > 0.0)) {
    p.mu = Eigen::Vector3d(0.0, 0.0, 0.05);
    return p;
  }
  m /= total;
  const double r = std::min(m.norm(), 1.0 - 1e-8);
  const double tau = std::clamp(r / std::sqrt(1.0 - r), 0.05, 1e3);
  p.mu = tau * m.normalized();
  return p;
}

namespace detail {
inline Eigen::MatrixXd one_hot(const std::vector<int>& labels, std::size_t k) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < labels.size(); ++i) w(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return w;
}

inline Eigen::MatrixXd points_matrix(const Points& y) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(y.size()), 3);
  for (std::size_t i = 0; i < y.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = y[i].transpose();
  return x;
}

inline MixtureModel model_from_soft(const Points& y, const Eigen::MatrixXd& w, Kind kind) {
  MixtureModel m;
  m.kind = kind;
  m.weights = m_step_weights(w);
  for (Eigen::Index j = 0; j < w.cols(); ++j) m.components.push_back(params_from_weights(y, w.col(j)));
  // keep weights strictly positive
  m.weights = m.weights.cwiseMax(1e-12);
  m.weights /= m.weights.sum();
  return m;
}
}  // namespace detail

inline MixtureModel init_kmeans(const Points& y, std::size_t k, Kind kind, std::uint64_t seed) {
  if (y.size() < 3 * k) throw DomainError("init_kmeans: need n >= 3K");
  const KMeansResult km = kmeans(detail::points_matrix(y), k, seed);
  return detail::model_from_soft(y, detail::one_hot(km.labels, k), kind);
}

inline MixtureModel init_kmeans(const DataMatrix& x, std::size_t k, Kind kind, std::uint64_t seed) {
  return init_kmeans(x.points3(), k, kind, seed);
}

/// Responsibilities of a full-covariance Gaussian mixture on the Cartesian
/// coordinates after `iters` EM steps started from k-means.
inline Eigen::MatrixXd gaussian_mixture_responsibilities(const Points& y, std::size_t k, std::uint64_t seed, std::size_t iters = 25) {
  const Eigen::MatrixXd x = detail::points_matrix(y);
  const Eigen::Index n = x.rows();
  const Eigen::Index K = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd w = detail::one_hot(kmeans(x, k, seed).labels, k);
  constexpr double ridge = 1e-6;
  const double log2pi = std::log(2.0 * std::numbers::pi);

  for (std::size_t it = 0; it <= iters; ++it) {
    // M-step from current responsibilities, then E-step.
    Eigen::MatrixXd logp(n, K);
    for (Eigen::Index j = 0; j < K; ++j) {
      const double nj = w.col(j).sum();
      const double pj = std::max(nj / static_cast<double>(n), 1e-12);
      Eigen::Vector3d mean = Eigen::Vector3d::Zero();
      if (nj > 0.0) mean = (x.transpose() * w.col(j)) / nj;
      Eigen::Matrix3d cov = ridge * Eigen::Matrix3d::Identity();
      if (nj > 0.0) {
        const Eigen::MatrixXd c = x.rowwise() - mean.transpose();
        cov += (c.transpose() * w.col(j).asDiagonal() * c) / nj;
      } else {
        cov = Eigen::Matrix3d::Identity();
      }
      const Eigen::LLT<Eigen::Matrix3d> llt(cov);
      const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Vector3d d = x.row(i).transpose() - mean;
        const double maha = d.dot(llt.solve(d));
        logp(i, j) = std::log(pj) - 0.5 * (3.0 * log2pi + logdet + maha);
      }
    }
    w = responsibilities_from_logs(Eigen::MatrixXd::Zero(n, K), logp).w;
  }
  return w;
}

/// Gaussian-mixture responsibilities converted to ESAG/SESPC starting values
/// through one numeric M-step per component.
inline MixtureModel init_gmm(const Points& y, std::size_t k, Kind kind, std::uint64_t seed, const FitConfig& cfg = {}) {
  if (y.size() < 3 * k) throw DomainError("init_gmm: need n >= 3K");
  const Eigen::MatrixXd w = gaussian_mixture_responsibilities(y, k, seed);
  MixtureModel m = detail::model_from_soft(y, w, kind);
  for (std::size_t j = 0; j < k; ++j) {
    m.components[j] = m_step_component(y, w.col(static_cast<Eigen::Index>(j)), m.components[j], kind, cfg).params;
  }
  return m;
}

inline MixtureModel init_gmm(const DataMatrix& x, std::size_t k, Kind kind, std::uint64_t seed, const FitConfig& cfg = {}) {
  return init_gmm(x.points3(), k, kind, seed, cfg);
}

}  // namespace spheremix
