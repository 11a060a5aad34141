#pragma once

// EM driver shared by the plain, concomitant and regression mixtures, plus
// multi-start fitting and ICL-based selection of K.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spheremix/init.hpp"
#include "spheremix/model.hpp"
#include "spheremix/parallel.hpp"

namespace spheremix {

struct EmRun {
  std::vector<double> trace;
  Eigen::MatrixXd w;
  double loglik = -std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  bool converged = false;
  bool collapsed = false;
  bool warning = false;
};

/// Alternates E-step and M-step on `state` until the relative change of the
/// observed log-likelihood drops below cfg.em_tol or cfg.max_em_iters E-steps
/// have run. The state must provide
///   Eigen::MatrixXd log_densities() const;   // n x K
///   Eigen::MatrixXd log_mixing() const;      // n x K
///   bool update_mixing(const Eigen::MatrixXd& w);
///   bool update_component(std::size_t j, const Eigen::VectorXd& w_col);
/// where the bools report non-fatal optimizer warnings. On return the state
/// holds the parameters that produced run.w and run.loglik.
template <class State>
EmRun run_em(State& state, const FitConfig& cfg) {
  EmRun run;
  Eigen::MatrixXd logf = state.log_densities();
  const Eigen::Index n = logf.rows();
  const Eigen::Index k = logf.cols();
  std::vector<int> low_streak(static_cast<std::size_t>(k), 0);

  for (std::size_t it = 0;; ++it) {
    EStepOutput e = responsibilities_from_logs(state.log_mixing(), logf);
    run.trace.push_back(e.loglik);
    run.loglik = e.loglik;
    run.w = std::move(e.w);
    run.iterations = it;
    if (it > 0) {
      const double prev = run.trace[it - 1];
      const double scale = std::max(std::abs(run.loglik), std::numeric_limits<double>::min());
      if (std::abs(run.loglik - prev) / scale < cfg.em_tol) {
        run.converged = true;
        break;
      }
    }
    if (it + 1 >= cfg.max_em_iters) break;

    const Eigen::VectorXd p = m_step_weights(run.w);
    for (Eigen::Index j = 0; j < k; ++j) {
      int& streak = low_streak[static_cast<std::size_t>(j)];
      streak = p[j] < 1.0 / static_cast<double>(n) ? streak + 1 : 0;
      if (streak >= 3) {
        run.collapsed = true;
        return run;
      }
    }

    run.warning |= state.update_mixing(run.w);
    for (Eigen::Index j = 0; j < k; ++j) run.warning |= state.update_component(static_cast<std::size_t>(j), run.w.col(j));
    logf = state.log_densities();
  }
  return run;
}

/// EM state for the mixture with constant mixing weights.
class PlainMixtureState {
 public:
  PlainMixtureState(const Points& y, MixtureModel m, const FitConfig& cfg) : y_(y), model_(std::move(m)), cfg_(cfg) {}

  Eigen::MatrixXd log_densities() const { return component_log_densities(y_, model_.kind, model_.components); }
  Eigen::MatrixXd log_mixing() const { return broadcast_log_weights(model_.weights, static_cast<Eigen::Index>(y_.size())); }

  bool update_mixing(const Eigen::MatrixXd& w) {
    model_.weights = m_step_weights(w);
    return false;
  }

  bool update_component(std::size_t j, const Eigen::VectorXd& w_col) {
    const MStepResult r = m_step_component(y_, w_col, model_.components[j], model_.kind, cfg_);
    model_.components[j] = r.params;
    return r.warning;
  }

  const MixtureModel& model() const noexcept { return model_; }

 private:
  const Points& y_;
  MixtureModel model_;
  const FitConfig& cfg_;
};

inline MixtureModel initial_model(const Points& y, std::size_t k, Kind kind, std::uint64_t seed, const FitConfig& cfg) {
  return cfg.init == InitMethod::Gmm ? init_gmm(y, k, kind, seed, cfg) : init_kmeans(y, k, kind, seed);
}

inline std::uint64_t start_seed(const FitConfig& cfg, std::size_t k, std::size_t start) { return derive_seed(cfg.seed, k, start); }

/// Fills labels and the information criteria once loglik, w and n_params are set.
inline void finalize_result(FitResult& r, std::size_t n) {
  r.labels = map_labels(r.responsibilities);
  r.bic = bic(r, n);
  r.icl = icl(r, n);
}

template <class State>
struct StartOutcome {
  FitResult result;
  std::optional<State> state;
};

/// Runs EM from cfg.n_starts initializations and keeps the start with the
/// highest final log-likelihood (earliest start on ties). Starts whose
/// components collapse are discarded. `make` turns an initial plain mixture
/// into an EM state; the state must also expose model().
template <class State, class Make>
StartOutcome<State> best_of_starts(const Points& y, std::size_t k, Kind kind, const FitConfig& cfg, Make&& make) {
  cfg.validate();
  if (k < 1) throw DomainError("fit: K must be at least 1");
  if (y.size() < 3 * k) throw DomainError("fit: need n >= 3K observations");

  StartOutcome<State> best;
  bool have = false;
  std::string last_error = "every start collapsed";
  for (std::size_t s = 0; s < cfg.n_starts; ++s) {
    try {
      State state = make(initial_model(y, k, kind, start_seed(cfg, k, s), cfg));
      EmRun run = run_em(state, cfg);
      if (run.collapsed) continue;
      if (!have || run.loglik > best.result.loglik) {
        FitResult r;
        r.model = state.model();
        r.loglik = run.loglik;
        r.loglik_trace = std::move(run.trace);
        r.responsibilities = std::move(run.w);
        r.iterations = run.iterations;
        r.converged = run.converged;
        r.mstep_warning = run.warning;
        r.start_index = s;
        best.result = std::move(r);
        best.state.emplace(std::move(state));
        have = true;
      }
    } catch (const Error& e) {
      last_error = e.what();
    }
  }
  if (!have) throw FitError("fit: no usable start for K=" + std::to_string(k) + ": " + last_error);
  return best;
}

inline FitResult fit(const Points& y, std::size_t k, Kind kind, const FitConfig& cfg) {
  auto out = best_of_starts<PlainMixtureState>(y, k, kind, cfg, [&](MixtureModel m) { return PlainMixtureState(y, std::move(m), cfg); });
  out.result.n_params = parameter_count(k);
  finalize_result(out.result, y.size());
  return std::move(out.result);
}

inline FitResult fit(const DataMatrix& x, std::size_t k, Kind kind, const FitConfig& cfg) { return fit(x.points3(), k, kind, cfg); }

struct KSelectionRow {
  std::size_t k = 0;
  bool ok = false;
  double loglik = std::numeric_limits<double>::quiet_NaN();
  double bic = std::numeric_limits<double>::quiet_NaN();
  double icl = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_params = 0;
  std::string error;
};

struct KSelection {
  std::vector<KSelectionRow> table;
  std::vector<std::optional<FitResult>> fits;  // aligned with table
  std::size_t chosen_k = 0;
  std::size_t chosen_index = 0;

  const FitResult& best() const { return *fits.at(chosen_index); }
};

/// Fits every K in [k_min, k_max] with `fit_k` (possibly concurrently) and
/// picks the minimum ICL; the smaller K wins ties. Failed K are excluded.
inline KSelection select_k_with(std::size_t k_min, std::size_t k_max, std::size_t workers,
                                const std::function<FitResult(std::size_t)>& fit_k) {
  if (k_min < 1 || k_max < k_min) throw DomainError("select_k: need 1 <= k_min <= k_max");
  const std::size_t count = k_max - k_min + 1;
  KSelection sel;
  sel.table.resize(count);
  sel.fits.resize(count);
  parallel_for(count, workers, [&](std::size_t idx) {
    KSelectionRow& row = sel.table[idx];
    row.k = k_min + idx;
    try {
      FitResult r = fit_k(row.k);
      row.ok = true;
      row.loglik = r.loglik;
      row.bic = r.bic;
      row.icl = r.icl;
      row.n_params = r.n_params;
      sel.fits[idx] = std::move(r);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  bool any = false;
  for (std::size_t idx = 0; idx < count; ++idx) {
    const KSelectionRow& row = sel.table[idx];
    if (!row.ok) continue;
    if (!any || row.icl < sel.table[sel.chosen_index].icl) {
      sel.chosen_index = idx;
      any = true;
    }
  }
  if (!any) throw FitError("select_k: every K failed");
  sel.chosen_k = sel.table[sel.chosen_index].k;
  return sel;
}

inline KSelection select_k(const Points& y, std::size_t k_min, std::size_t k_max, Kind kind, const FitConfig& cfg) {
  return select_k_with(k_min, k_max, cfg.workers, [&](std::size_t k) { return fit(y, k, kind, cfg); });
}

inline KSelection select_k(const DataMatrix& x, std::size_t k_min, std::size_t k_max, Kind kind, const FitConfig& cfg) {
  const Points y = x.points3();
  return select_k(y, k_min, k_max, kind, cfg);
}

}  // namespace spheremix
