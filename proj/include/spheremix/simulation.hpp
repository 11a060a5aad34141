#pragma once

// Two-cluster simulation designs, replicated K-selection experiments and the
// timing benchmark.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spheremix/ari.hpp"
#include "spheremix/em.hpp"
#include "spheremix/parallel.hpp"
#include "spheremix/sphere.hpp"

namespace spheremix {

enum class SimKind { Esag, Sespc, GeneralAngular };

inline std::string_view to_string(SimKind k) {
  switch (k) {
    case SimKind::Esag: return "esag";
    case SimKind::Sespc: return "sespc";
    case SimKind::GeneralAngular: return "general";
  }
  return "?";
}

inline SimKind sim_kind_from_string(std::string_view s) {
  if (s == "esag") return SimKind::Esag;
  if (s == "sespc") return SimKind::Sespc;
  if (s == "general" || s == "general_angular") return SimKind::GeneralAngular;
  throw DomainError("unknown simulation kind '" + std::string(s) + "'");
}

enum class WeightScheme { Equal, Dirichlet };

/// Reference mean direction used throughout the spherical experiments.
inline Eigen::VectorXd default_mean_direction() {
  Eigen::VectorXd m(3);
  m << -0.927, -0.282, 0.249;
  return m.normalized();
}

struct TwoClusterSpec {
  SimKind kind = SimKind::Esag;
  std::size_t n = 200;
  Eigen::VectorXd mu1 = default_mean_direction();  // normalized on use
  double omega = 45.0;                              // degrees
  std::array<double, 2> tau{5.0, 5.0};
  std::array<Eigen::Vector2d, 2> gammas{Eigen::Vector2d(1.0, 1.0), Eigen::Vector2d(1.0, 1.0)};
  std::array<Eigen::VectorXd, 2> log_rho;  // GeneralAngular spectra, length dim-1 each
  WeightScheme weights = WeightScheme::Equal;
  std::array<double, 2> dirichlet_alpha{1.0, 1.0};
  std::uint64_t seed = 1;

  void validate() const {
    if (!(tau[0] > 0.0) || !(tau[1] > 0.0)) throw DomainError("TwoClusterSpec: concentrations must be positive");
    if (n < 20) throw DomainError("TwoClusterSpec: n must be at least 20");
    if (!(omega >= 0.0 && omega <= 180.0)) throw DomainError("TwoClusterSpec: omega must lie in [0, 180]");
    if (kind != SimKind::GeneralAngular && mu1.size() != 3) throw DomainError("TwoClusterSpec: mu1 must be a 3-vector");
    if (kind == SimKind::GeneralAngular) {
      if (mu1.size() < 4) throw DomainError("TwoClusterSpec: general angular data need dimension >= 4");
      for (const auto& lr : log_rho)
        if (lr.size() != mu1.size() - 1) throw DomainError("TwoClusterSpec: log_rho must have length dim-1");
    }
    if (weights == WeightScheme::Dirichlet && (!(dirichlet_alpha[0] > 0.0) || !(dirichlet_alpha[1] > 0.0))) {
      throw DomainError("TwoClusterSpec: Dirichlet parameters must be positive");
    }
  }
};

/// Hyper-spherical design: dimension `dim`, tau = (20, 20), omega = 45, a
/// seeded random mean direction and seeded log-spectra (sd 0.5, centered).
inline TwoClusterSpec hyperspherical_spec(std::size_t dim = 10, std::uint64_t design_seed = 2024) {
  TwoClusterSpec s;
  s.kind = SimKind::GeneralAngular;
  s.tau = {20.0, 20.0};
  std::mt19937_64 rng(design_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  s.mu1 = Eigen::VectorXd(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < s.mu1.size(); ++i) s.mu1[i] = normal(rng);
  s.mu1.normalize();
  for (auto& lr : s.log_rho) {
    lr = Eigen::VectorXd(static_cast<Eigen::Index>(dim) - 1);
    for (Eigen::Index i = 0; i < lr.size(); ++i) lr[i] = 0.5 * normal(rng);
    lr.array() -= lr.mean();
  }
  return s;
}

struct SimulatedData {
  DataMatrix data;
  std::vector<int> labels;  // 0 or 1
};

inline constexpr std::size_t kMinClusterSize = 10;

/// Draws the two cluster sizes (multinomially from equal or Dirichlet
/// weights, redrawing while a cluster has fewer than 10 points), samples each
/// cluster, and shuffles rows with the same seed.
inline SimulatedData generate_two_cluster(const TwoClusterSpec& s) {
  s.validate();
  std::mt19937_64 rng(derive_seed(s.seed, 0x5157));
  std::size_t n1 = 0;
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    double p1 = 0.5;
    if (s.weights == WeightScheme::Dirichlet) {
      std::gamma_distribution<double> g1(s.dirichlet_alpha[0], 1.0);
      std::gamma_distribution<double> g2(s.dirichlet_alpha[1], 1.0);
      const double a = g1(rng);
      const double b = g2(rng);
      p1 = a / (a + b);
    }
    n1 = std::binomial_distribution<std::size_t>(s.n, p1)(rng);
    ok = n1 >= kMinClusterSize && s.n - n1 >= kMinClusterSize;
  }
  if (!ok) throw DomainError("generate_two_cluster: could not draw clusters with at least 10 points each");
  const std::array<std::size_t, 2> sizes{n1, s.n - n1};

  const Eigen::VectorXd m1 = s.mu1.normalized();
  const UnitVector u1(m1);
  const UnitVector u2 = mean_at_angle(u1, s.omega);
  const std::array<Eigen::VectorXd, 2> dirs{u1.coords(), u2.coords()};

  Eigen::MatrixXd all(static_cast<Eigen::Index>(s.n), m1.size());
  std::vector<int> labels(s.n);
  Eigen::Index row = 0;
  for (int c = 0; c < 2; ++c) {
    const std::uint64_t cs = derive_seed(s.seed, 0xc1, static_cast<std::uint64_t>(c));
    DataMatrix part;
    if (s.kind == SimKind::GeneralAngular) {
      GeneralAngularParams g{s.tau[c] * dirs[c], s.log_rho[c], derive_seed(s.seed, 0xf7, static_cast<std::uint64_t>(c)) | 1u};
      part = sample_general_angular(sizes[c], g, cs);
    } else {
      const ComponentParams p{s.tau[c] * dirs[c].head<3>(), s.gammas[c]};
      part = sample(s.kind == SimKind::Esag ? Kind::Esag : Kind::Sespc, sizes[c], p, cs);
    }
    for (std::size_t i = 0; i < sizes[c]; ++i, ++row) {
      all.row(row) = part.matrix().row(static_cast<Eigen::Index>(i));
      labels[static_cast<std::size_t>(row)] = c;
    }
  }

  std::vector<std::size_t> perm(s.n);
  for (std::size_t i = 0; i < s.n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd shuffled(all.rows(), all.cols());
  std::vector<int> shuffled_labels(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    shuffled.row(static_cast<Eigen::Index>(i)) = all.row(static_cast<Eigen::Index>(perm[i]));
    shuffled_labels[i] = labels[perm[i]];
  }
  return {DataMatrix(std::move(shuffled)), std::move(shuffled_labels)};
}

/// Type-7 (linear interpolation) sample quantile; NaN for empty input.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

struct ExperimentRecord {
  std::size_t replicate = 0;
  Kind fit_kind = Kind::Esag;
  std::size_t n = 0;
  bool ok = false;
  std::size_t chosen_k = 0;
  double ari = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  std::string error;
};

struct ExperimentSummary {
  Kind fit_kind = Kind::Esag;
  std::size_t n = 0;
  std::size_t completed = 0;
  double ari_q1 = 0.0, ari_median = 0.0, ari_q3 = 0.0;
  double seconds_median = 0.0;
  double true_k_rate = 0.0;  // fraction of completed replicates choosing K = 2
};

struct ExperimentReport {
  std::vector<ExperimentRecord> records;
  std::vector<ExperimentSummary> summaries;

  const ExperimentSummary& summary(Kind k, std::size_t n = 0) const {
    for (const auto& s : summaries)
      if (s.fit_kind == k && (n == 0 || s.n == n)) return s;
    throw DomainError("ExperimentReport: no summary for the requested kind");
  }

  std::vector<double> aris(Kind k) const {
    std::vector<double> out;
    for (const auto& r : records)
      if (r.fit_kind == k && r.ok) out.push_back(r.ari);
    return out;
  }
};

struct ExperimentOptions {
  std::size_t replicates = 20;
  std::size_t k_min = 1;
  std::size_t k_max = 4;
  std::vector<Kind> fit_kinds{Kind::Esag, Kind::Sespc};
  bool project_to_sphere = false;  // required for data of dimension > 3
  std::size_t workers = 1;         // replicates evaluated concurrently
};

inline std::vector<ExperimentSummary> summarize(const std::vector<ExperimentRecord>& records) {
  std::vector<ExperimentSummary> out;
  std::set<std::pair<std::size_t, int>> keys;
  for (const auto& r : records) keys.insert({r.n, static_cast<int>(r.fit_kind)});
  for (const auto& [n, kind] : keys) {
    ExperimentSummary s;
    s.fit_kind = static_cast<Kind>(kind);
    s.n = n;
    std::vector<double> aris, secs;
    std::size_t hits = 0;
    for (const auto& r : records) {
      if (r.n != n || r.fit_kind != s.fit_kind || !r.ok) continue;
      aris.push_back(r.ari);
      secs.push_back(r.seconds);
      hits += r.chosen_k == 2 ? 1 : 0;
    }
    s.completed = aris.size();
    s.ari_q1 = quantile(aris, 0.25);
    s.ari_median = quantile(aris, 0.5);
    s.ari_q3 = quantile(aris, 0.75);
    s.seconds_median = median(secs);
    s.true_k_rate = aris.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(aris.size());
    out.push_back(s);
  }
  return out;
}

/// For each replicate r: data from spec with seed derive(spec.seed, r), then
/// select_k per fit kind with cfg.seed derived from (cfg.seed, r). Failed
/// replicates are kept as records with ok = false.
inline ExperimentReport run_k_selection_experiment(const TwoClusterSpec& spec, const ExperimentOptions& opt, const FitConfig& cfg) {
  if (opt.replicates < 1) throw DomainError("experiment: need at least one replicate");
  spec.validate();
  const std::size_t kinds = opt.fit_kinds.size();
  std::vector<ExperimentRecord> records(opt.replicates * kinds);

  parallel_for(opt.replicates, opt.workers, [&](std::size_t r) {
    TwoClusterSpec s = spec;
    s.seed = derive_seed(spec.seed, r, 0xda7a);
    std::optional<SimulatedData> sim;
    std::string data_error;
    try {
      sim = generate_two_cluster(s);
      if (opt.project_to_sphere || sim->data.dim() != 3) sim->data = pca_project_to_sphere(sim->data).data;
    } catch (const std::exception& e) {
      data_error = e.what();
    }
    for (std::size_t k = 0; k < kinds; ++k) {
      ExperimentRecord& rec = records[r * kinds + k];
      rec.replicate = r;
      rec.fit_kind = opt.fit_kinds[k];
      rec.n = spec.n;
      if (!sim) {
        rec.error = data_error;
        continue;
      }
      FitConfig c = cfg;
      c.seed = derive_seed(cfg.seed, r, 0xf17);
      c.workers = 1;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const Points y = sim->data.points3();
        const KSelection sel = select_k(y, opt.k_min, opt.k_max, rec.fit_kind, c);
        rec.chosen_k = sel.chosen_k;
        rec.ari = adjusted_rand_index(sel.best().labels, sim->labels);
        rec.ok = true;
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  });

  ExperimentReport rep;
  rep.records = std::move(records);
  rep.summaries = summarize(rep.records);
  return rep;
}

struct TimingOptions {
  std::vector<std::size_t> n_grid{200, 500, 1000};
  std::size_t k_min = 1;
  std::size_t k_max = 4;
  std::vector<Kind> kinds{Kind::Esag, Kind::Sespc};
  std::size_t repeats = 10;
  std::size_t workers = 1;  // worker threads inside select_k (K values)
};

/// Wall time of select_k per (n, kind, repeat). Each repeat draws fresh data
/// of the fitted kind from `base` (same design, seed derived from repeat and n).
inline ExperimentReport run_timing_benchmark(const TwoClusterSpec& base, const TimingOptions& opt, const FitConfig& cfg) {
  if (opt.repeats < 3) throw DomainError("timing benchmark: need at least 3 repeats");
  ExperimentReport rep;
  for (std::size_t n : opt.n_grid) {
    for (Kind kind : opt.kinds) {
      for (std::size_t r = 0; r < opt.repeats; ++r) {
        TwoClusterSpec s = base;
        s.n = n;
        s.kind = kind == Kind::Esag ? SimKind::Esag : SimKind::Sespc;
        s.seed = derive_seed(base.seed, r, n);
        ExperimentRecord rec;
        rec.replicate = r;
        rec.fit_kind = kind;
        rec.n = n;
        FitConfig c = cfg;
        c.seed = derive_seed(cfg.seed, r, n);
        c.workers = opt.workers;
        try {
          const SimulatedData sim = generate_two_cluster(s);
          const Points y = sim.data.points3();
          const auto t0 = std::chrono::steady_clock::now();
          const KSelection sel = select_k(y, opt.k_min, opt.k_max, kind, c);
          rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          rec.chosen_k = sel.chosen_k;
          rec.ari = adjusted_rand_index(sel.best().labels, sim.labels);
          rec.ok = true;
        } catch (const std::exception& e) {
          rec.error = e.what();
        }
        rep.records.push_back(std::move(rec));
      }
    }
  }
  rep.summaries = summarize(rep.records);
  return rep;
}

}  // namespace spheremix
