// Acceptance run: one PASS/FAIL line per criterion. Criterion names given on
// the command line restrict the run to those criteria.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "spheremix/io.hpp"

using namespace spheremix;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

constexpr std::uint64_t kDataSeed = 1;
constexpr std::uint64_t kFitSeed = 1;

ComponentParams random_params(std::mt19937_64& rng, double mu_lo, double mu_hi, double gamma_max) {
  std::uniform_real_distribution<double> len(mu_lo, mu_hi);
  std::uniform_real_distribution<double> g(0.0, gamma_max);
  std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
  const double s = g(rng);
  const double a = ang(rng);
  return {len(rng) * oracle::random_direction(rng), Eigen::Vector2d(s * std::cos(a), s * std::sin(a))};
}

FitConfig default_config() {
  FitConfig c;
  c.seed = kFitSeed;
  return c;
}

// Replicated K-selection on the reference design, memoized by (data kind, n, tau).
struct ExperimentKey {
  SimKind kind;
  std::size_t n;
  double tau;
  auto operator<=>(const ExperimentKey&) const = default;
};

struct TimedReport {
  ExperimentReport report;
  double seconds = 0.0;
};

const TimedReport& experiment(SimKind kind, std::size_t n, double tau) {
  static std::map<ExperimentKey, TimedReport> cache;
  const ExperimentKey key{kind, n, tau};
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  TwoClusterSpec s;
  s.kind = kind;
  s.n = n;
  s.tau = {tau, tau};
  s.seed = kDataSeed;
  ExperimentOptions opt;
  const auto t0 = Clock::now();
  TimedReport tr{run_k_selection_experiment(s, opt, default_config()), 0.0};
  tr.seconds = seconds_since(t0);
  return cache.emplace(key, std::move(tr)).first->second;
}

std::string describe(const ExperimentReport& r, Kind k) {
  const ExperimentSummary& s = r.summary(k);
  return std::string(to_string(k)) + " fit: K=2 rate " + num(s.true_k_rate) + ", median ARI " + num(s.ari_median) + " (" +
         std::to_string(s.completed) + " completed)";
}

Outcome density_normalization() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const ComponentParams p = random_params(rng, 0.5, 10.0, 3.0);
    for (Kind k : {Kind::Esag, Kind::Sespc}) {
      const ComponentDensity d(k, p);
      const double total = oracle::sphere_integral([&](const Eigen::Vector3d& y) { return std::exp(d(y)); }, 200, 400);
      worst = std::max(worst, std::abs(total - 1.0));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-5 && secs < 60.0, "max |integral - 1| = " + num(worst, 3) + " over 20 sets per kind, " + num(secs, 3) + " s"};
}

Outcome constraint_suite() {
  std::mt19937_64 rng(102);
  double worst_det = 0.0, worst_fix = 0.0, worst_eig = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const ComponentParams p = random_params(rng, 0.05, 20.0, 5.0);
    const Eigen::Matrix3d vinv = build_precision(p).vinv;
    const Eigen::Matrix3d v = vinv.inverse();
    worst_det = std::max(worst_det, std::abs(v.determinant() - 1.0));
    worst_fix = std::max(worst_fix, (v * p.mu - p.mu).norm() / std::max(1.0, p.mu.norm()));
    const double s = p.gamma.norm();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(v);
    const Eigen::Vector3d expected(std::sqrt(s * s + 1) - s, 1.0, s + std::sqrt(s * s + 1));
    worst_eig = std::max(worst_eig, (es.eigenvalues() - expected).cwiseAbs().maxCoeff());
  }
  const bool ok = worst_det <= 1e-8 && worst_fix <= 1e-8 && worst_eig <= 1e-8;
  return {ok, "1000 draws: |det V - 1| " + num(worst_det, 3) + ", |V mu - mu| " + num(worst_fix, 3) + ", eigenvalues " + num(worst_eig, 3)};
}

Outcome moment_suite() {
  double worst = 0.0;
  for (double a = -5.0; a <= 5.0; a += 0.05) {
    const double Phi = 0.5 * std::erfc(-a / std::numbers::sqrt2);
    const double phi = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
    const double closed[3] = {Phi, a * Phi + phi, (1 + a * a) * Phi + a * phi};
    for (int n = 0; n < 3; ++n) worst = std::max(worst, std::abs(truncated_moment(n, a) - closed[n]) / std::max(1.0, closed[n]));
    for (int n = 0; n <= 9; ++n) {
      const double ref = oracle::truncated_moment(n, a);
      worst = std::max(worst, std::abs(truncated_moment(n, a) - ref) / std::max(1.0, std::abs(ref)));
    }
  }
  return {worst <= 1e-8, "orders 0..9, alpha in [-5, 5]: max error " + num(worst, 3)};
}

Outcome sampler_agreement() {
  const ComponentParams p{Eigen::Vector3d(1.0, -2.0, 4.0), Eigen::Vector2d(1.0, 0.5)};
  std::string detail;
  bool ok = true;
  for (Kind k : {Kind::Esag, Kind::Sespc}) {
    const ComponentDensity d(k, p);
    const oracle::MarginalCdf cdf([&](const Eigen::Vector3d& y) { return std::exp(d(y)); }, p.mu);
    const DataMatrix x = sample(k, 100000, p, 103);
    const Eigen::Vector3d u = p.mu.normalized();
    std::vector<double> t(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) t[i] = x.matrix().row(static_cast<Eigen::Index>(i)).dot(u.transpose());
    const double ks = oracle::ks_distance(t, [&](double v) { return cdf(v) / cdf.total(); });
    ok &= ks < 0.01;
    detail += std::string(detail.empty() ? "" : ", ") + std::string(to_string(k)) + " KS " + num(ks, 3);
  }
  return {ok, detail + " at n = 1e5"};
}

Outcome em_monotonicity() {
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> omega(20.0, 120.0);
  std::uniform_real_distribution<double> tau(1.0, 10.0);
  std::uniform_int_distribution<int> kdist(1, 3);
  double worst = 0.0;
  std::size_t fits = 0, failures = 0;
  for (Kind kind : {Kind::Esag, Kind::Sespc}) {
    for (int i = 0; i < 50; ++i) {
      TwoClusterSpec s;
      s.kind = kind == Kind::Esag ? SimKind::Esag : SimKind::Sespc;
      s.omega = omega(rng);
      s.tau = {tau(rng), tau(rng)};
      s.seed = rng();
      FitConfig cfg = default_config();
      cfg.n_starts = 1;
      cfg.seed = rng();
      const std::size_t k = static_cast<std::size_t>(kdist(rng));
      try {
        const FitResult r = fit(generate_two_cluster(s).data.points3(), k, kind, cfg);
        for (std::size_t t = 1; t < r.loglik_trace.size(); ++t) worst = std::max(worst, r.loglik_trace[t - 1] - r.loglik_trace[t]);
        ++fits;
      } catch (const FitError&) {
        ++failures;
      }
    }
  }
  return {worst <= 1e-8 && fits > 0,
          std::to_string(fits) + " fits (" + std::to_string(failures) + " collapsed), largest decrease " + num(worst, 3)};
}

Outcome k_selection() {
  const TimedReport& t = experiment(SimKind::Esag, 200, 5.0);
  bool ok = t.seconds < 15 * 60;
  for (Kind k : {Kind::Esag, Kind::Sespc}) {
    const ExperimentSummary& s = t.report.summary(k);
    ok &= s.completed == 20 && s.true_k_rate >= 0.9 && s.ari_median >= 0.8;
  }
  return {ok, describe(t.report, Kind::Esag) + "; " + describe(t.report, Kind::Sespc) + "; " + num(t.seconds / 60, 3) + " min"};
}

Outcome low_concentration() {
  const ExperimentReport& hi = experiment(SimKind::Esag, 200, 5.0).report;
  const ExperimentReport& lo = experiment(SimKind::Esag, 200, 2.0).report;
  bool ok = true;
  std::string detail;
  for (Kind k : {Kind::Esag, Kind::Sespc}) {
    const double a = lo.summary(k).ari_median;
    const double b = hi.summary(k).ari_median;
    ok &= a < b;
    detail += std::string(detail.empty() ? "" : "; ") + std::string(to_string(k)) + " fit median ARI tau=2: " + num(a) + " vs tau=5: " + num(b);
  }
  return {ok, detail};
}

Outcome sample_size_effect() {
  bool ok = true;
  std::string detail;
  for (Kind k : {Kind::Esag, Kind::Sespc}) {
    double prev = -1.0;
    detail += std::string(detail.empty() ? "" : "; ") + std::string(to_string(k)) + " fit medians";
    for (std::size_t n : {100u, 200u, 500u}) {
      const double m = experiment(SimKind::Esag, n, 5.0).report.summary(k).ari_median;
      ok &= m >= prev;
      prev = m;
      detail += " n=" + std::to_string(n) + ":" + num(m);
    }
  }
  return {ok, detail};
}

Outcome cross_model() {
  const ExperimentReport& r = experiment(SimKind::Sespc, 200, 5.0).report;
  const double sespc = r.summary(Kind::Sespc).ari_median;
  const double esag = r.summary(Kind::Esag).ari_median;
  return {sespc >= esag, "SESPC data: SESPC fit median ARI " + num(sespc) + ", ESAG fit " + num(esag)};
}

Outcome timing() {
  TimingOptions opt;
  FitConfig cfg = default_config();
  cfg.n_starts = 1;
  const ExperimentReport r = run_timing_benchmark(TwoClusterSpec{}, opt, cfg);
  bool ok = true;
  std::string detail = "median seconds (1 start per K)";
  std::map<Kind, double> prev{{Kind::Esag, 0.0}, {Kind::Sespc, 0.0}};
  for (std::size_t n : opt.n_grid) {
    const double e = r.summary(Kind::Esag, n).seconds_median;
    const double s = r.summary(Kind::Sespc, n).seconds_median;
    ok &= s <= e && e > prev[Kind::Esag] && s > prev[Kind::Sespc];
    prev[Kind::Esag] = e;
    prev[Kind::Sespc] = s;
    detail += " n=" + std::to_string(n) + ": esag " + num(e, 3) + " sespc " + num(s, 3) + ";";
  }
  return {ok, detail};
}

Outcome hyperspherical() {
  TwoClusterSpec s = hyperspherical_spec(10);
  s.seed = kDataSeed;
  ExperimentOptions opt;
  opt.k_min = opt.k_max = 2;
  opt.project_to_sphere = true;
  const ExperimentReport r = run_k_selection_experiment(s, opt, default_config());
  bool ok = true;
  std::string detail = "threshold 0.7 from pilot;";
  for (Kind k : {Kind::Esag, Kind::Sespc}) {
    const ExperimentSummary& m = r.summary(k);
    ok &= m.completed == 20 && m.ari_median >= 0.7;
    detail += " " + std::string(to_string(k)) + " median ARI " + num(m.ari_median) + " (" + std::to_string(m.completed) + " completed);";
  }
  return {ok, detail};
}

Outcome concomitant_nesting() {
  double worst = 0.0;
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    TwoClusterSpec s;
    s.seed = derive_seed(kDataSeed, rep, 0xc0);
    const Points y = generate_two_cluster(s).data.points3();
    std::mt19937_64 rng(rep);
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd x(200, 2);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = nd(rng);
    for (Kind kind : {Kind::Esag, Kind::Sespc}) {
      FitConfig cfg = default_config();
      cfg.seed = rep;
      const FitResult plain = fit(y, 2, kind, cfg);
      const ConcomitantFit frozen = fit_concomitant_mixture(y, x, 2, kind, cfg, {.freeze_slopes = true});
      worst = std::max(worst, std::abs(frozen.fit.loglik - plain.loglik));
    }
  }

  TwoClusterSpec s;
  s.seed = kDataSeed;
  const Points y = generate_two_cluster(s).data.points3();
  Eigen::MatrixXd x(200, 2);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = nd(rng);
  FitConfig cfg = default_config();
  cfg.n_starts = 1;
  const KSelection sel = select_k_with(1, 3, 1, [&](std::size_t k) { return fit_concomitant_mixture(y, x, k, Kind::Sespc, cfg).fit; });
  const std::filesystem::path tmp = std::filesystem::temp_directory_path() / "spheremix_acceptance_icl.csv";
  io::write_icl_table(tmp.string(), sel);
  const io::Table t = io::read_csv(tmp.string());
  std::filesystem::remove(tmp);
  bool nu_ok = t.values.rows() == 3;
  for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
    const double k = t.values(i, t.require("K"));
    nu_ok &= t.values(i, t.require("nu")) == 5 * k + (k - 1) * 3;
  }
  return {worst <= 1e-8 && nu_ok, "max |loglik difference| " + num(worst, 3) + " over 10 fits; nu column " + (nu_ok ? "= 5K+(K-1)(q+1)" : "wrong")};
}

Outcome ari_oracle() {
  std::mt19937_64 rng(105);
  std::uniform_int_distribution<int> len(1, 12);
  std::uniform_int_distribution<int> nlab(1, 5);
  int mismatches = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = static_cast<std::size_t>(len(rng));
    std::uniform_int_distribution<int> la(1, nlab(rng));
    std::uniform_int_distribution<int> lb(1, nlab(rng));
    std::vector<int> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = la(rng);
      b[i] = lb(rng);
    }
    const oracle::PairRatio r = oracle::brute_force_ari(a, b);
    const double expected = r.den == 0 ? (r.num == 0 ? 1.0 : 0.0) : static_cast<double>(r.num) / static_cast<double>(r.den);
    mismatches += adjusted_rand_index(a, b) != expected;
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches in 200 pairs"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"density_normalization", density_normalization},
      {"constraint_suite", constraint_suite},
      {"moment_suite", moment_suite},
      {"sampler_density_agreement", sampler_agreement},
      {"em_monotonicity", em_monotonicity},
      {"k_selection_esag_data", k_selection},
      {"low_concentration_degradation", low_concentration},
      {"sample_size_effect", sample_size_effect},
      {"cross_model_asymmetry", cross_model},
      {"timing_ordering", timing},
      {"hyperspherical_pipeline", hyperspherical},
      {"concomitant_nesting", concomitant_nesting},
      {"ari_oracle", ari_oracle},
  };
  const std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << num(seconds_since(t0), 4) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
