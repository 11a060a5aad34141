#pragma once

// Covariate extensions: a concomitant (multinomial logit) model for the mixing
// probabilities, and mixtures of regressions on the mean vector.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "spheremix/em.hpp"

namespace spheremix {

/// Multinomial-logit coefficients with component 0 as reference. Row j-1
/// holds (intercept, slopes) of component j.
struct ConcomitantCoefficients {
  Eigen::MatrixXd beta;  // (K-1) x (q+1)

  std::size_t components() const noexcept { return static_cast<std::size_t>(beta.rows()) + 1; }
  std::size_t covariates() const noexcept { return beta.cols() > 0 ? static_cast<std::size_t>(beta.cols()) - 1 : 0; }

  static ConcomitantCoefficients zeros(std::size_t k, std::size_t q) {
    return {Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k) - 1, static_cast<Eigen::Index>(q) + 1)};
  }
};

namespace detail {

inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z(x.rows(), x.cols() + 1);
  z.col(0).setOnes();
  z.rightCols(x.cols()) = x;
  return z;
}

/// Row-wise log-softmax of (0, Z beta^T).
inline Eigen::MatrixXd log_softmax_ref(const Eigen::MatrixXd& z, const Eigen::MatrixXd& beta) {
  const Eigen::Index n = z.rows();
  const Eigen::Index k = beta.rows() + 1;
  Eigen::MatrixXd eta(n, k);
  eta.col(0).setZero();
  if (k > 1) eta.rightCols(k - 1) = z * beta.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = eta.row(i).maxCoeff();
    const double lse = mx + std::log((eta.row(i).array() - mx).exp().sum());
    eta.row(i).array() -= lse;
  }
  return eta;
}

inline double multinomial_objective(const Eigen::MatrixXd& w, const Eigen::MatrixXd& logp) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      if (w(i, j) > 0.0) s += w(i, j) * logp(i, j);
  return s;
}

}  // namespace detail

/// Mixing probabilities p_j(x) for one covariate row x (length q).
inline Eigen::VectorXd concomitant_probs(const Eigen::VectorXd& x, const ConcomitantCoefficients& c) {
  if (static_cast<std::size_t>(x.size()) != c.covariates()) throw DomainError("concomitant_probs: covariate row has the wrong length");
  Eigen::MatrixXd z(1, x.size() + 1);
  z(0, 0) = 1.0;
  z.block(0, 1, 1, x.size()) = x.transpose();
  return detail::log_softmax_ref(z, c.beta).row(0).array().exp().transpose();
}

inline constexpr double kSeparationBound = 50.0;

struct ConcomitantStep {
  ConcomitantCoefficients coef;
  double objective = 0.0;
  double start_objective = 0.0;
  std::size_t iterations = 0;
  bool separation = false;  // coefficients were clamped at norm kSeparationBound
};

/// Newton ascent of sum_i sum_j w_ij log p_j(x_i) from `start`, with step
/// halving. A step leaving the ball ||beta|| <= 50 is cut at the boundary and
/// iteration stops with the separation flag set.
inline ConcomitantStep fit_concomitant_step(const Eigen::MatrixXd& w, const Eigen::MatrixXd& xcov, const ConcomitantCoefficients& start,
                                            std::size_t max_iter = 100) {
  const Eigen::Index n = w.rows();
  const Eigen::Index k = w.cols();
  const Eigen::Index q1 = xcov.cols() + 1;
  if (xcov.rows() != n) throw DomainError("fit_concomitant_step: covariate rows do not match responsibilities");
  if (start.beta.rows() != k - 1 || start.beta.cols() != q1) throw DomainError("fit_concomitant_step: start has the wrong shape");

  const Eigen::MatrixXd z = detail::with_intercept(xcov);
  const Eigen::Index dim = (k - 1) * q1;
  auto objective = [&](const Eigen::MatrixXd& beta) { return detail::multinomial_objective(w, detail::log_softmax_ref(z, beta)); };
  auto flat = [&](const Eigen::MatrixXd& beta) {
    Eigen::VectorXd v(dim);
    for (Eigen::Index j = 0; j < k - 1; ++j) v.segment(j * q1, q1) = beta.row(j).transpose();
    return v;
  };
  auto shape = [&](const Eigen::VectorXd& v) {
    Eigen::MatrixXd beta(k - 1, q1);
    for (Eigen::Index j = 0; j < k - 1; ++j) beta.row(j) = v.segment(j * q1, q1).transpose();
    return beta;
  };

  ConcomitantStep out;
  out.coef = start;
  out.start_objective = objective(start.beta);
  out.objective = out.start_objective;
  if (k == 1) return out;

  Eigen::VectorXd theta = flat(start.beta);
  const Eigen::VectorXd r = w.rowwise().sum();
  for (std::size_t it = 0; it < max_iter; ++it) {
    out.iterations = it + 1;
    const Eigen::MatrixXd p = detail::log_softmax_ref(z, shape(theta)).array().exp().matrix();
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd zi = z.row(i).transpose();
      const Eigen::MatrixXd zz = zi * zi.transpose();
      for (Eigen::Index a = 1; a < k; ++a) {
        grad.segment((a - 1) * q1, q1) += (w(i, a) - r[i] * p(i, a)) * zi;
        for (Eigen::Index b = 1; b < k; ++b) {
          const double c = r[i] * ((a == b ? p(i, a) : 0.0) - p(i, a) * p(i, b));
          info.block((a - 1) * q1, (b - 1) * q1, q1, q1) += c * zz;
        }
      }
    }
    if (grad.norm() < 1e-12 * (1.0 + std::abs(out.objective))) break;

    info.diagonal().array() += 1e-12 * (1.0 + info.diagonal().cwiseAbs().maxCoeff());
    Eigen::VectorXd delta = info.ldlt().solve(grad);
    if (!delta.allFinite() || grad.dot(delta) <= 0.0) delta = grad;

    double t = 1.0;
    Eigen::VectorXd cand;
    double cand_obj = -std::numeric_limits<double>::infinity();
    for (int h = 0; h < 60; ++h, t *= 0.5) {
      cand = theta + t * delta;
      cand_obj = objective(shape(cand));
      if (cand_obj >= out.objective) break;
    }
    if (!(cand_obj >= out.objective)) break;

    if (cand.norm() > kSeparationBound) {
      // largest s in [0, 1] with ||theta + s (cand - theta)|| = bound; the
      // objective is concave along the segment, so it cannot drop below start
      const Eigen::VectorXd d = cand - theta;
      const double a = d.squaredNorm();
      const double b = 2.0 * theta.dot(d);
      const double c = theta.squaredNorm() - kSeparationBound * kSeparationBound;
      const double s = std::clamp((-b + std::sqrt(std::max(b * b - 4.0 * a * c, 0.0))) / (2.0 * a), 0.0, 1.0);
      const Eigen::VectorXd clamped = theta + s * d;
      const double clamped_obj = objective(shape(clamped));
      if (clamped_obj >= out.objective) {
        theta = clamped;
        out.objective = clamped_obj;
      }
      out.separation = true;
      break;
    }
    const double gain = cand_obj - out.objective;
    theta = cand;
    out.objective = cand_obj;
    if (gain <= 1e-13 * (1.0 + std::abs(cand_obj))) break;
  }
  out.coef.beta = shape(theta);
  return out;
}

/// Column-wise centering and scaling used internally by the covariate fits.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer from(const Eigen::MatrixXd& x) {
    if (x.rows() < 2) throw DomainError("covariates: need at least two rows");
    if (!x.allFinite()) throw DomainError("covariates: non-finite covariate value");
    Standardizer s;
    s.mean = x.colwise().mean();
    const Eigen::MatrixXd c = x.rowwise() - s.mean;
    s.scale = (c.colwise().squaredNorm() / static_cast<double>(x.rows() - 1)).cwiseSqrt();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (!(s.scale[j] > 0.0)) throw DomainError("covariates: column " + std::to_string(j) + " is constant");
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    return (x.rowwise() - mean).array().rowwise() / scale.array();
  }

  /// Maps rows (intercept, slopes) fitted on standardized covariates to the
  /// original scale. Works for any matrix with q+1 columns.
  Eigen::MatrixXd unstandardize_rows(const Eigen::MatrixXd& coef) const {
    Eigen::MatrixXd out = coef;
    for (Eigen::Index c = 0; c < mean.size(); ++c) {
      out.col(c + 1) = coef.col(c + 1) / scale[c];
      out.col(0) -= coef.col(c + 1) * (mean[c] / scale[c]);
    }
    return out;
  }
};

struct ConcomitantOptions {
  // Slopes fixed at 0: mixing weights are then updated exactly as in the
  // plain mixture and the intercepts are reported as log(p_j / p_1).
  bool freeze_slopes = false;
};

/// EM state of the concomitant mixture. Covariates are already standardized.
class ConcomitantState {
 public:
  ConcomitantState(const Points& y, const Eigen::MatrixXd& z, MixtureModel init, const FitConfig& cfg, ConcomitantOptions opt)
      : y_(y), z_(z), model_(std::move(init)), cfg_(cfg), opt_(opt) {
    const Eigen::Index k = static_cast<Eigen::Index>(model_.size());
    beta_ = Eigen::MatrixXd::Zero(k - 1, z_.cols() + 1);
    for (Eigen::Index j = 1; j < k; ++j) beta_(j - 1, 0) = std::log(model_.weights[j] / model_.weights[0]);
  }

  Eigen::MatrixXd log_densities() const { return component_log_densities(y_, model_.kind, model_.components); }

  Eigen::MatrixXd log_mixing() const {
    if (opt_.freeze_slopes) return broadcast_log_weights(model_.weights, z_.rows());
    return detail::log_softmax_ref(detail::with_intercept(z_), beta_);
  }

  bool update_mixing(const Eigen::MatrixXd& w) {
    if (opt_.freeze_slopes) {
      model_.weights = m_step_weights(w);
      for (Eigen::Index j = 1; j < beta_.rows() + 1; ++j) beta_(j - 1, 0) = std::log(model_.weights[j] / model_.weights[0]);
      return false;
    }
    const ConcomitantStep step = fit_concomitant_step(w, z_, {beta_});
    beta_ = step.coef.beta;
    separation_ |= step.separation;
    model_.weights = detail::log_softmax_ref(detail::with_intercept(z_), beta_).array().exp().colwise().mean().transpose();
    return false;
  }

  bool update_component(std::size_t j, const Eigen::VectorXd& w_col) {
    const MStepResult r = m_step_component(y_, w_col, model_.components[j], model_.kind, cfg_);
    model_.components[j] = r.params;
    return r.warning;
  }

  /// Components plus the average mixing probabilities.
  const MixtureModel& model() const noexcept { return model_; }
  const Eigen::MatrixXd& beta() const noexcept { return beta_; }
  bool separation() const noexcept { return separation_; }

 private:
  const Points& y_;
  const Eigen::MatrixXd& z_;
  MixtureModel model_;
  Eigen::MatrixXd beta_;
  const FitConfig& cfg_;
  ConcomitantOptions opt_;
  bool separation_ = false;
};

struct ConcomitantFit {
  FitResult fit;
  ConcomitantCoefficients coef;  // original covariate scale
  bool separation = false;
};

namespace detail {

inline void check_covariates(std::size_t n, const Eigen::MatrixXd& xcov) {
  if (static_cast<std::size_t>(xcov.rows()) != n) throw DomainError("covariate rows do not match data rows");
  if (xcov.cols() < 1) throw DomainError("at least one covariate column is required");
}

inline ConcomitantFit finish_concomitant(FitResult r, const ConcomitantState& state, const Standardizer& st, std::size_t n) {
  ConcomitantFit out;
  out.coef.beta = st.unstandardize_rows(state.beta());
  out.separation = state.separation();
  r.n_params = parameter_count(r.model.size(), static_cast<std::size_t>(st.mean.size()));
  finalize_result(r, n);
  out.fit = std::move(r);
  return out;
}

}  // namespace detail

/// Multi-start EM for the concomitant mixture; starts and seeds match fit().
inline ConcomitantFit fit_concomitant_mixture(const Points& y, const Eigen::MatrixXd& xcov, std::size_t k, Kind kind, const FitConfig& cfg,
                                              ConcomitantOptions opt = {}) {
  detail::check_covariates(y.size(), xcov);
  const Standardizer st = Standardizer::from(xcov);
  const Eigen::MatrixXd z = st.apply(xcov);
  auto out = best_of_starts<ConcomitantState>(y, k, kind, cfg, [&](MixtureModel m) { return ConcomitantState(y, z, std::move(m), cfg, opt); });
  return detail::finish_concomitant(std::move(out.result), *out.state, st, y.size());
}

inline ConcomitantFit fit_concomitant_mixture(const DataMatrix& x, const Eigen::MatrixXd& xcov, std::size_t k, Kind kind,
                                              const FitConfig& cfg, ConcomitantOptions opt = {}) {
  const Points y = x.points3();
  return fit_concomitant_mixture(y, xcov, k, kind, cfg, opt);
}

/// Single EM run of the concomitant mixture started at a fitted plain
/// mixture with all slopes 0. The log-likelihood cannot fall below the plain one.
inline ConcomitantFit fit_concomitant_from(const Points& y, const Eigen::MatrixXd& xcov, const FitResult& plain, const FitConfig& cfg) {
  detail::check_covariates(y.size(), xcov);
  cfg.validate();
  const Standardizer st = Standardizer::from(xcov);
  const Eigen::MatrixXd z = st.apply(xcov);
  ConcomitantState state(y, z, plain.model, cfg, {});
  EmRun run = run_em(state, cfg);
  if (run.collapsed) throw FitError("fit_concomitant_from: a component collapsed");
  FitResult r;
  r.model = state.model();
  r.loglik = run.loglik;
  r.loglik_trace = std::move(run.trace);
  r.responsibilities = std::move(run.w);
  r.iterations = run.iterations;
  r.converged = run.converged;
  r.mstep_warning = run.warning;
  return detail::finish_concomitant(std::move(r), state, st, y.size());
}

/// Per-component regression of the mean vector on covariates:
/// mu_j(x) = B_j^T (1, x).
struct RegressionComponent {
  Eigen::MatrixXd b;  // (q+1) x 3
  Eigen::Vector2d gamma = Eigen::Vector2d::Zero();

  Eigen::Vector3d mean_at(const Eigen::VectorXd& x_with_intercept) const { return b.transpose() * x_with_intercept; }

  /// Row-major vec(B) followed by gamma. With q = 0 this equals
  /// ComponentParams::packed() of the intercept row.
  Eigen::VectorXd packed() const {
    Eigen::VectorXd v(b.size() + 2);
    Eigen::Index t = 0;
    for (Eigen::Index r = 0; r < b.rows(); ++r)
      for (Eigen::Index c = 0; c < 3; ++c) v[t++] = b(r, c);
    v[t] = gamma[0];
    v[t + 1] = gamma[1];
    return v;
  }

  static RegressionComponent unpack(const Eigen::VectorXd& v, Eigen::Index rows) {
    RegressionComponent rc;
    rc.b.resize(rows, 3);
    Eigen::Index t = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < 3; ++c) rc.b(r, c) = v[t++];
    rc.gamma = Eigen::Vector2d(v[t], v[t + 1]);
    return rc;
  }
};

struct RegressionCoefficients {
  std::vector<RegressionComponent> components;  // original covariate scale
};

/// Mean vector of component j at the covariate row x (length q).
inline Eigen::Vector3d regression_mean(const RegressionCoefficients& c, std::size_t j, const Eigen::VectorXd& x) {
  Eigen::VectorXd xi(x.size() + 1);
  xi[0] = 1.0;
  xi.tail(x.size()) = x;
  return c.components.at(j).mean_at(xi);
}

inline std::size_t regression_parameter_count(std::size_t k, std::size_t q) { return k * (3 * (q + 1) + 2) + (k - 1); }

/// Weighted log-likelihood of one regression component; points with zero
/// weight are skipped. Returns -inf when some mean vector vanishes.
class RegressionObjective {
 public:
  RegressionObjective(const Points& y, const Eigen::MatrixXd& z, const Eigen::VectorXd& w, Kind kind) : z_(z), kind_(kind) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double wi = w[static_cast<Eigen::Index>(i)];
      if (wi > 0.0) {
        idx_.push_back(static_cast<Eigen::Index>(i));
        pts_.push_back(y[i]);
        wts_.push_back(wi);
      }
    }
  }

  double operator()(const RegressionComponent& rc) const {
    if (!rc.b.allFinite() || !rc.gamma.allFinite()) return -std::numeric_limits<double>::infinity();
    try {
      double q = 0.0;
      if (z_.cols() == 1) {
        const ComponentDensity dens(kind_, {rc.b.row(0).transpose(), rc.gamma});
        for (std::size_t i = 0; i < pts_.size(); ++i) q += wts_[i] * dens(pts_[i]);
      } else {
        for (std::size_t i = 0; i < pts_.size(); ++i) {
          const Eigen::Vector3d mu = rc.mean_at(z_.row(idx_[i]).transpose());
          if (!(mu.norm() > 0.0)) return -std::numeric_limits<double>::infinity();
          q += wts_[i] * ComponentDensity(kind_, {mu, rc.gamma})(pts_[i]);
        }
      }
      return std::isfinite(q) ? q : -std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
      return -std::numeric_limits<double>::infinity();
    }
  }

 private:
  const Eigen::MatrixXd& z_;
  Kind kind_;
  std::vector<Eigen::Index> idx_;
  Points pts_;
  std::vector<double> wts_;
};

/// EM state of the mixture of regressions. z carries the intercept column.
class RegressionState {
 public:
  RegressionState(const Points& y, const Eigen::MatrixXd& z, const MixtureModel& init, const FitConfig& cfg)
      : y_(y), z_(z), kind_(init.kind), weights_(init.weights), cfg_(cfg) {
    for (const ComponentParams& p : init.components) {
      RegressionComponent rc;
      rc.b = Eigen::MatrixXd::Zero(z_.cols(), 3);
      rc.b.row(0) = p.mu.transpose();
      rc.gamma = p.gamma;
      comps_.push_back(std::move(rc));
    }
  }

  /// Throws EvaluationError when a mean vector vanishes at a design point.
  Eigen::MatrixXd log_densities() const {
    const Eigen::Index n = static_cast<Eigen::Index>(y_.size());
    Eigen::MatrixXd logf(n, static_cast<Eigen::Index>(comps_.size()));
    for (std::size_t j = 0; j < comps_.size(); ++j) {
      const RegressionComponent& rc = comps_[j];
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Vector3d mu = rc.mean_at(z_.row(i).transpose());
        if (!(mu.norm() > 0.0)) throw EvaluationError("regression mean vector is zero", static_cast<std::size_t>(i));
        logf(i, static_cast<Eigen::Index>(j)) = ComponentDensity(kind_, {mu, rc.gamma})(y_[static_cast<std::size_t>(i)]);
      }
    }
    return logf;
  }

  Eigen::MatrixXd log_mixing() const { return broadcast_log_weights(weights_, static_cast<Eigen::Index>(y_.size())); }

  bool update_mixing(const Eigen::MatrixXd& w) {
    weights_ = m_step_weights(w);
    return false;
  }

  bool update_component(std::size_t j, const Eigen::VectorXd& w_col) {
    const RegressionObjective q(y_, z_, w_col, kind_);
    if (!(w_col.sum() >= 3.0)) return true;
    const Eigen::Index rows = z_.cols();
    auto qv = [&](const Eigen::VectorXd& v) { return q(RegressionComponent::unpack(v, rows)); };
    double best = q(comps_[j]);
    std::size_t evals = 0;
    bool warning = false;
    const Eigen::VectorXd x = restarted_ascent(qv, comps_[j].packed(), cfg_, best, evals, warning);
    comps_[j] = RegressionComponent::unpack(x, rows);
    return warning;
  }

  /// Components evaluated at the covariate mean (intercept row).
  MixtureModel model() const {
    MixtureModel m;
    m.kind = kind_;
    m.weights = weights_;
    for (const auto& rc : comps_) m.components.push_back({rc.b.row(0).transpose(), rc.gamma});
    return m;
  }

  const std::vector<RegressionComponent>& components() const noexcept { return comps_; }

 private:
  const Points& y_;
  const Eigen::MatrixXd& z_;
  Kind kind_;
  std::vector<RegressionComponent> comps_;
  Eigen::VectorXd weights_;
  const FitConfig& cfg_;
};

struct RegressionFit {
  FitResult fit;
  RegressionCoefficients coef;  // original covariate scale
};

/// Multi-start EM for the mixture of regressions. xcov may have zero columns,
/// in which case the fit coincides with fit().
inline RegressionFit fit_regression_mixture(const Points& y, const Eigen::MatrixXd& xcov, std::size_t k, Kind kind, const FitConfig& cfg) {
  if (static_cast<std::size_t>(xcov.rows()) != y.size()) throw DomainError("covariate rows do not match data rows");
  const std::size_t q = static_cast<std::size_t>(xcov.cols());
  std::optional<Standardizer> st;
  Eigen::MatrixXd z;
  if (q > 0) {
    st = Standardizer::from(xcov);
    z = detail::with_intercept(st->apply(xcov));
  } else {
    z = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(y.size()), 1);
  }
  auto out = best_of_starts<RegressionState>(y, k, kind, cfg, [&](const MixtureModel& m) { return RegressionState(y, z, m, cfg); });
  RegressionFit rf;
  for (RegressionComponent rc : out.state->components()) {
    if (st) rc.b = st->unstandardize_rows(rc.b.transpose()).transpose();
    rf.coef.components.push_back(std::move(rc));
  }
  out.result.n_params = regression_parameter_count(k, q);
  finalize_result(out.result, y.size());
  rf.fit = std::move(out.result);
  return rf;
}

inline RegressionFit fit_regression_mixture(const DataMatrix& x, const Eigen::MatrixXd& xcov, std::size_t k, Kind kind, const FitConfig& cfg) {
  const Points y = x.points3();
  return fit_regression_mixture(y, xcov, k, kind, cfg);
}

}  // namespace spheremix
