#pragma once

// Mixture model types, the E-step, mixing-weight update, the numeric
// per-component M-step, and the information criteria.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "spheremix/distributions.hpp"
#include "spheremix/errors.hpp"
#include "spheremix/nelder_mead.hpp"
#include "spheremix/sphere.hpp"

namespace spheremix {

using Points = std::vector<Eigen::Vector3d>;

struct MixtureModel {
  Kind kind = Kind::Esag;
  std::vector<ComponentParams> components;
  Eigen::VectorXd weights;  // p_j > 0, sum 1

  std::size_t size() const noexcept { return components.size(); }
};

enum class InitMethod { KMeans, Gmm };

struct FitConfig {
  std::size_t max_em_iters = 500;
  double em_tol = 1e-6;     // relative log-likelihood change
  double mstep_tol = 1e-5;  // improvement threshold between optimizer restarts
  std::size_t n_starts = 5;
  InitMethod init = InitMethod::Gmm;
  std::uint64_t seed = 0;

  std::size_t mstep_max_evals = 1000;  // per optimizer restart
  double mstep_step = 0.1;             // initial simplex edge
  std::size_t mstep_max_restarts = 50;
  std::size_t workers = 1;  // select_k may fit different K concurrently

  void validate() const {
    if (!(em_tol > 0.0) || !(mstep_tol > 0.0)) throw DomainError("FitConfig: tolerances must be positive");
    if (n_starts < 1) throw DomainError("FitConfig: n_starts must be at least 1");
    if (max_em_iters < 1) throw DomainError("FitConfig: max_em_iters must be at least 1");
  }
};

struct FitResult {
  MixtureModel model;
  double loglik = -std::numeric_limits<double>::infinity();
  std::vector<double> loglik_trace;
  Eigen::MatrixXd responsibilities;  // n x K
  std::vector<int> labels;
  double bic = 0.0;
  double icl = 0.0;
  std::size_t n_params = 0;
  std::size_t iterations = 0;
  bool converged = false;
  bool mstep_warning = false;
  std::size_t start_index = 0;
};

/// Free parameters of a K-component mixture on S^2: 5 per component plus
/// K-1 mixing parameters, each of which carries q slopes when a concomitant
/// model with q covariates is used.
inline std::size_t parameter_count(std::size_t k, std::size_t covariates = 0) {
  return 5 * k + (k - 1) * (covariates + 1);
}

/// -sum w log w with 0 log 0 = 0.
inline double responsibility_entropy(const Eigen::MatrixXd& w) {
  double ent = 0.0;
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      const double v = w(i, j);
      if (v > 0.0) ent -= v * std::log(v);
    }
  return ent;
}

/// -2 loglik + nu log n (lower is better).
inline double bic(const FitResult& r, std::size_t n) {
  return -2.0 * r.loglik + static_cast<double>(r.n_params) * std::log(static_cast<double>(n));
}

/// BIC plus twice the soft-assignment entropy.
inline double icl(const FitResult& r, std::size_t n) {
  return bic(r, n) + 2.0 * responsibility_entropy(r.responsibilities);
}

inline std::vector<int> map_labels(const Eigen::MatrixXd& w) {
  std::vector<int> labels(static_cast<std::size_t>(w.rows()));
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    Eigen::Index j = 0;
    w.row(i).maxCoeff(&j);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(j);
  }
  return labels;
}

/// Log-densities log f(y_i; theta_j) as an n x K matrix. A component whose
/// parameters are outside the density's domain gets -inf everywhere.
inline Eigen::MatrixXd component_log_densities(const Points& y, Kind kind, const std::vector<ComponentParams>& comps) {
  Eigen::MatrixXd logf(static_cast<Eigen::Index>(y.size()), static_cast<Eigen::Index>(comps.size()));
  for (std::size_t j = 0; j < comps.size(); ++j) {
    try {
      const ComponentDensity dens(kind, comps[j]);
      for (std::size_t i = 0; i < y.size(); ++i) logf(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dens(y[i]);
    } catch (const DomainError&) {
      logf.col(static_cast<Eigen::Index>(j)).setConstant(-std::numeric_limits<double>::infinity());
    }
  }
  return logf;
}

struct EStepOutput {
  Eigen::MatrixXd w;
  double loglik = 0.0;
};

/// Responsibilities and observed log-likelihood from log mixing weights and
/// log densities (both n x K), with a per-point max shift.
inline EStepOutput responsibilities_from_logs(const Eigen::MatrixXd& log_mix, const Eigen::MatrixXd& logf) {
  EStepOutput out;
  out.w.resize(logf.rows(), logf.cols());
  for (Eigen::Index i = 0; i < logf.rows(); ++i) {
    const Eigen::RowVectorXd a = log_mix.row(i) + logf.row(i);
    const double mx = a.maxCoeff();
    if (!std::isfinite(mx)) {
      throw EvaluationError("all component densities underflow or are non-finite", static_cast<std::size_t>(i));
    }
    const Eigen::RowVectorXd e = (a.array() - mx).exp().matrix();
    const double s = e.sum();
    out.w.row(i) = e / s;
    out.loglik += mx + std::log(s);
  }
  return out;
}

inline Eigen::MatrixXd broadcast_log_weights(const Eigen::VectorXd& p, Eigen::Index n) {
  const Eigen::RowVectorXd lp = p.array().log().matrix().transpose();
  return lp.replicate(n, 1);
}

inline void validate_model(const MixtureModel& m) {
  if (m.components.empty() || static_cast<std::size_t>(m.weights.size()) != m.components.size()) {
    throw DomainError("MixtureModel: weights and components disagree in size");
  }
  if ((m.weights.array() <= 0.0).any() || std::abs(m.weights.sum() - 1.0) > 1e-12) {
    throw DomainError("MixtureModel: weights must be positive and sum to 1");
  }
}

/// sum_i log sum_j p_j f(y_i; theta_j).
inline double observed_loglik(const DataMatrix& x, const MixtureModel& m) {
  validate_model(m);
  const Points y = x.points3();
  const Eigen::MatrixXd logf = component_log_densities(y, m.kind, m.components);
  return responsibilities_from_logs(broadcast_log_weights(m.weights, logf.rows()), logf).loglik;
}

/// Posterior membership probabilities w_ij (rows sum to 1).
inline Eigen::MatrixXd e_step(const DataMatrix& x, const MixtureModel& m) {
  validate_model(m);
  const Points y = x.points3();
  const Eigen::MatrixXd logf = component_log_densities(y, m.kind, m.components);
  return responsibilities_from_logs(broadcast_log_weights(m.weights, logf.rows()), logf).w;
}

/// p_j = column means of the responsibility matrix.
inline Eigen::VectorXd m_step_weights(const Eigen::MatrixXd& w) {
  return w.colwise().mean().transpose();
}

struct MStepResult {
  ComponentParams params;
  double objective = 0.0;        // Q_j at params
  double start_objective = 0.0;  // Q_j at start
  std::size_t evals = 0;
  bool warning = false;  // degenerate weights or optimizer budget exhausted
};

/// Weighted log-likelihood sum_i w_i log f(y_i; theta) restricted to the
/// points with non-zero weight. Out-of-domain parameters give -inf.
class WeightedObjective {
 public:
  WeightedObjective(const Points& y, const Eigen::VectorXd& w, Kind kind) : kind_(kind) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double wi = w[static_cast<Eigen::Index>(i)];
      if (wi > 0.0) {
        pts_.push_back(y[i]);
        wts_.push_back(wi);
      }
    }
  }

  double operator()(const ComponentParams& p) const {
    if (!p.mu.allFinite() || !p.gamma.allFinite()) return -std::numeric_limits<double>::infinity();
    try {
      const ComponentDensity dens(kind_, p);
      double q = 0.0;
      for (std::size_t i = 0; i < pts_.size(); ++i) q += wts_[i] * dens(pts_[i]);
      return std::isfinite(q) ? q : -std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
      return -std::numeric_limits<double>::infinity();
    }
  }

 private:
  Kind kind_;
  Points pts_;
  std::vector<double> wts_;
};

/// Restarted Nelder-Mead ascent of a generic objective from `start`; restarts
/// from its own optimum until the gain between runs falls below cfg.mstep_tol.
template <class Objective>
inline Eigen::VectorXd restarted_ascent(Objective&& q, const Eigen::VectorXd& start, const FitConfig& cfg,
                                        double& best_value, std::size_t& evals, bool& warning) {
  NelderMeadOptions opt;
  opt.initial_step = cfg.mstep_step;
  opt.max_evals = cfg.mstep_max_evals;
  auto neg = [&](const Eigen::VectorXd& v) { return -q(v); };
  Eigen::VectorXd x = start;
  double best = -best_value;
  for (std::size_t r = 0; r < cfg.mstep_max_restarts; ++r) {
    const NelderMeadResult res = nelder_mead(neg, x, opt);
    evals += res.evals;
    if (!res.converged) warning = true;
    const double gain = best - res.value;
    if (res.value < best) {
      best = res.value;
      x = res.x;
    }
    if (!(gain >= cfg.mstep_tol)) break;
  }
  best_value = -best;
  return x;
}

/// Numeric maximization of Q_j over the unconstrained (mu, gamma) in R^5.
inline MStepResult m_step_component(const Points& y, const Eigen::VectorXd& w_col, const ComponentParams& start, Kind kind,
                                    const FitConfig& cfg) {
  MStepResult out;
  out.params = start;
  const WeightedObjective q(y, w_col, kind);
  out.start_objective = q(start);
  out.objective = out.start_objective;
  if (!(w_col.sum() >= 3.0)) {
    out.warning = true;
    return out;
  }
  auto qv = [&](const Eigen::VectorXd& v) { return q(ComponentParams::unpack(v)); };
  double best = out.start_objective;
  const Eigen::VectorXd x = restarted_ascent(qv, start.packed(), cfg, best, out.evals, out.warning);
  out.params = ComponentParams::unpack(x);
  out.objective = best;
  return out;
}

inline MStepResult m_step_component(const DataMatrix& x, const Eigen::VectorXd& w_col, const ComponentParams& start, Kind kind,
                                    const FitConfig& cfg) {
  return m_step_component(x.points3(), w_col, start, kind, cfg);
}

}  // namespace spheremix
