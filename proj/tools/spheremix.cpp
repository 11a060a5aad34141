// spheremix: fit, select, simulate, project, eval, experiment, bench.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spheremix/io.hpp"

namespace fs = std::filesystem;
namespace sm = spheremix;
using sm::io::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

struct Failure {
  int code;
  std::string message;
};

template <class F>
auto stage(int code, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Failure&) {
    throw;
  } catch (const std::exception& e) {
    throw Failure{code, e.what()};
  }
}

std::uint64_t default_seed() {
  if (const char* s = std::getenv("SPHEREMIX_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw Failure{kUsage, "SPHEREMIX_SEED is not an unsigned integer"};
    }
  }
  return 0;
}

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

fs::path prepare_out(const std::string& dir) {
  return stage(kData, [&] {
    fs::create_directories(dir);
    return fs::path(dir);
  });
}

void write_manifest(const fs::path& out, const std::string& command, const std::vector<std::string>& inputs, const json& config,
                    std::uint64_t seed) {
  json m = {{"command", command},
            {"inputs", inputs},
            {"config", config},
            {"seed", seed},
            {"version", SPHEREMIX_VERSION},
            {"timestamp", timestamp()}};
  sm::io::write_json((out / "manifest.json").string(), m);
}

// Options shared by fit and select.
struct FitOptions {
  std::string input;
  std::string kind = "esag";
  std::string init = "gmm";
  std::size_t starts = 5;
  std::optional<std::uint64_t> seed;
  std::size_t max_iter = 500;
  double tol = 1e-6;
  std::vector<std::string> covariates;
  std::string covariate_model = "concomitant";
  std::size_t parallel = 1;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("input", input, "CSV with lat/lon or Cartesian columns")->required();
    app->add_option("--kind", kind, "Component family")->check(CLI::IsMember({"esag", "sespc"}));
    app->add_option("--init", init, "Initialization")->check(CLI::IsMember({"kmeans", "gmm"}));
    app->add_option("--starts", starts, "Random starts")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "Base seed (default: $SPHEREMIX_SEED or 0)");
    app->add_option("--max-iter", max_iter, "EM iteration cap")->check(CLI::PositiveNumber);
    app->add_option("--tol", tol, "Relative log-likelihood tolerance")->check(CLI::PositiveNumber);
    app->add_option("--covariates", covariates, "Covariate column names")->delimiter(',');
    app->add_option("--covariate-model", covariate_model, "How covariates enter")->check(CLI::IsMember({"concomitant", "regression"}));
    app->add_option("--parallel", parallel, "Worker threads")->check(CLI::PositiveNumber);
    app->add_option("--out", out, "Output directory")->required();
  }

  sm::FitConfig config() const {
    sm::FitConfig c;
    c.n_starts = starts;
    c.init = init == "kmeans" ? sm::InitMethod::KMeans : sm::InitMethod::Gmm;
    c.seed = seed ? *seed : default_seed();
    c.max_em_iters = max_iter;
    c.em_tol = tol;
    c.workers = parallel;
    return c;
  }

  json echo(const sm::FitConfig& c) const {
    return {{"kind", kind},       {"init", init},         {"starts", starts},
            {"max_iter", max_iter}, {"tol", tol},         {"covariates", covariates},
            {"covariate_model", covariates.empty() ? std::string() : covariate_model},
            {"parallel", c.workers}};
  }
};

struct Input {
  sm::io::Table table;
  sm::io::LoadedData data;
  Eigen::MatrixXd covariates;
};

Input load_input(const FitOptions& o) {
  return stage(kData, [&] {
    Input in;
    in.table = sm::io::read_csv(o.input);
    in.data = sm::io::load_points(in.table, o.covariates);
    if (in.data.data.dim() != 3) throw sm::DomainError("expected 3 Cartesian columns; use 'project' for higher dimensions");
    in.covariates = o.covariates.empty() ? Eigen::MatrixXd(in.table.values.rows(), 0) : sm::io::select_columns(in.table, o.covariates);
    if (in.data.renormalized) std::cerr << "warning: some rows were not unit length and have been normalized\n";
    return in;
  });
}

// A fitted model with its JSON representation.
struct Fitted {
  sm::FitResult fit;
  json model;
};

Fitted fit_one(const FitOptions& o, const Input& in, const sm::Points& y, std::size_t k, const sm::FitConfig& cfg) {
  const sm::Kind kind = sm::kind_from_string(o.kind);
  Fitted f;
  if (o.covariates.empty()) {
    f.fit = sm::fit(y, k, kind, cfg);
    f.model = sm::io::model_json(f.fit, y.size(), cfg.seed);
  } else if (o.covariate_model == "concomitant") {
    sm::ConcomitantFit c = sm::fit_concomitant_mixture(y, in.covariates, k, kind, cfg);
    if (c.separation) std::cerr << "warning: K=" << k << ": mixing coefficients hit the separation bound\n";
    f.fit = std::move(c.fit);
    f.model = sm::io::model_json(f.fit, y.size(), cfg.seed);
    sm::io::add_concomitant(f.model, c.coef, o.covariates);
  } else {
    sm::RegressionFit r = sm::fit_regression_mixture(y, in.covariates, k, kind, cfg);
    f.fit = std::move(r.fit);
    f.model = sm::io::model_json(f.fit, y.size(), cfg.seed);
    sm::io::add_regression(f.model, r.coef, o.covariates);
  }
  if (f.fit.mstep_warning) std::cerr << "warning: K=" << k << ": an M-step hit its evaluation budget or had too little weight\n";
  return f;
}

void write_fit_outputs(const fs::path& out, const Fitted& f) {
  stage(kData, [&] {
    sm::io::write_json((out / "model.json").string(), f.model);
    sm::io::write_labels((out / "labels.csv").string(), f.fit.responsibilities);
    sm::io::write_responsibilities((out / "responsibilities.csv").string(), f.fit.responsibilities);
    return 0;
  });
}

int cmd_fit(const FitOptions& o, std::size_t k) {
  const sm::FitConfig cfg = o.config();
  const Input in = load_input(o);
  const fs::path out = prepare_out(o.out);
  const sm::Points y = in.data.data.points3();
  const Fitted f = stage(kNumeric, [&] { return fit_one(o, in, y, k, cfg); });
  write_fit_outputs(out, f);
  json echo = o.echo(cfg);
  echo["k"] = k;
  write_manifest(out, "fit", {o.input}, echo, cfg.seed);
  std::cout << "K=" << k << " loglik=" << sm::io::fmt(f.fit.loglik) << " icl=" << sm::io::fmt(f.fit.icl) << '\n';
  return kOk;
}

int cmd_select(const FitOptions& o, std::size_t kmin, std::size_t kmax) {
  if (kmin < 1 || kmax < kmin) throw Failure{kUsage, "need 1 <= kmin <= kmax"};
  const sm::FitConfig cfg = o.config();
  const Input in = load_input(o);
  const fs::path out = prepare_out(o.out);
  const sm::Points y = in.data.data.points3();
  std::vector<json> models(kmax - kmin + 1);
  const sm::KSelection sel = stage(kNumeric, [&] {
    return sm::select_k_with(kmin, kmax, cfg.workers, [&](std::size_t k) {
      Fitted f = fit_one(o, in, y, k, cfg);
      models[k - kmin] = std::move(f.model);
      return std::move(f.fit);
    });
  });
  for (const auto& row : sel.table)
    if (!row.ok) std::cerr << "warning: K=" << row.k << " failed: " << row.error << '\n';
  write_fit_outputs(out, {sel.best(), models[sel.chosen_index]});
  stage(kData, [&] {
    sm::io::write_icl_table((out / "icl_table.csv").string(), sel);
    return 0;
  });
  json echo = o.echo(cfg);
  echo["kmin"] = kmin;
  echo["kmax"] = kmax;
  write_manifest(out, "select", {o.input}, echo, cfg.seed);
  std::cout << "chosen K=" << sel.chosen_k << '\n';
  return kOk;
}

struct SimOptions {
  std::string kind = "esag";
  std::size_t n = 200;
  double omega = 45.0;
  std::vector<double> tau{5.0, 5.0};
  std::vector<double> gamma1{1.0, 1.0};
  std::vector<double> gamma2{1.0, 1.0};
  std::vector<double> mu1;
  std::string weights = "equal";
  std::vector<double> alpha{1.0, 1.0};
  std::size_t dim = 10;
  std::uint64_t design_seed = 2024;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--kind", kind, "Generating family")->check(CLI::IsMember({"esag", "sespc", "general"}));
    app->add_option("--n", n, "Total sample size");
    app->add_option("--omega", omega, "Angle between the mean directions (degrees)");
    app->add_option("--tau", tau, "Concentrations tau1,tau2")->delimiter(',')->expected(2);
    app->add_option("--gamma1", gamma1, "Shape of cluster 1")->delimiter(',')->expected(2);
    app->add_option("--gamma2", gamma2, "Shape of cluster 2")->delimiter(',')->expected(2);
    app->add_option("--mu1", mu1, "First mean direction (normalized)")->delimiter(',');
    app->add_option("--weights", weights, "Cluster proportions")->check(CLI::IsMember({"equal", "dirichlet"}));
    app->add_option("--alpha", alpha, "Dirichlet parameters")->delimiter(',')->expected(2);
    app->add_option("--dim", dim, "Ambient dimension for --kind general");
    app->add_option("--design-seed", design_seed, "Seed of the random mean and spectra for --kind general");
    app->add_option("--seed", seed, "Sampling seed (default: $SPHEREMIX_SEED or 0)");
  }

  sm::TwoClusterSpec spec() const {
    sm::TwoClusterSpec s;
    if (kind == "general") {
      if (dim < 4) throw Failure{kUsage, "--dim must be at least 4"};
      s = sm::hyperspherical_spec(dim, design_seed);
    }
    s.kind = sm::sim_kind_from_string(kind);
    s.n = n;
    s.omega = omega;
    s.tau = {tau[0], tau[1]};
    s.gammas = {Eigen::Vector2d(gamma1[0], gamma1[1]), Eigen::Vector2d(gamma2[0], gamma2[1])};
    if (!mu1.empty()) s.mu1 = Eigen::Map<const Eigen::VectorXd>(mu1.data(), static_cast<Eigen::Index>(mu1.size()));
    s.weights = weights == "dirichlet" ? sm::WeightScheme::Dirichlet : sm::WeightScheme::Equal;
    s.dirichlet_alpha = {alpha[0], alpha[1]};
    s.seed = seed ? *seed : default_seed();
    stage(kUsage, [&] {
      if (!mu1.empty() && !(s.mu1.norm() > 0.0)) throw sm::DomainError("--mu1 must be non-zero");
      s.validate();
      return 0;
    });
    return s;
  }

  json echo() const {
    return {{"kind", kind},   {"n", n},       {"omega", omega},     {"tau", tau}, {"gamma1", gamma1}, {"gamma2", gamma2},
            {"mu1", mu1},     {"weights", weights}, {"alpha", alpha}, {"dim", dim}, {"design_seed", design_seed}};
  }
};

int cmd_simulate(const SimOptions& o, const std::string& out_dir) {
  const sm::TwoClusterSpec s = o.spec();
  const fs::path out = prepare_out(out_dir);
  const sm::SimulatedData sim = stage(kNumeric, [&] { return sm::generate_two_cluster(s); });
  stage(kData, [&] {
    sm::io::write_points((out / "data.csv").string(), sim.data);
    sm::io::write_truth((out / "truth.csv").string(), sim.labels);
    return 0;
  });
  write_manifest(out, "simulate", {}, o.echo(), s.seed);
  return kOk;
}

int cmd_project(const std::string& input, const std::string& out_dir) {
  const sm::io::LoadedData in = stage(kData, [&] { return sm::io::load_points(sm::io::read_csv(input)); });
  if (in.data.dim() < 4) throw Failure{kData, "project needs more than 3 coordinate columns"};
  const fs::path out = prepare_out(out_dir);
  const sm::SphereProjection p = stage(kNumeric, [&] { return sm::pca_project_to_sphere(in.data); });
  stage(kData, [&] {
    sm::io::write_points((out / "projected.csv").string(), p.data);
    Eigen::MatrixXd basis(p.basis.rows(), p.basis.cols() + 1);
    for (Eigen::Index r = 0; r < basis.rows(); ++r) basis(r, 0) = static_cast<double>(r + 1);
    basis.rightCols(p.basis.cols()) = p.basis;
    sm::io::write_matrix((out / "basis.csv").string(), {"coordinate", "pc1", "pc2", "pc3"}, basis);
    return 0;
  });
  write_manifest(out, "project", {input}, json::object(), 0);
  return kOk;
}

int cmd_eval(const std::string& a, const std::string& b) {
  const auto la = stage(kData, [&] { return sm::io::read_labels(a); });
  const auto lb = stage(kData, [&] { return sm::io::read_labels(b); });
  const double ari = stage(kData, [&] { return sm::adjusted_rand_index(la, lb); });
  std::cout << std::fixed << std::setprecision(6) << ari << '\n';
  return kOk;
}

struct RunOptions {
  std::size_t kmin = 1;
  std::size_t kmax = 4;
  std::vector<std::string> kinds{"esag", "sespc"};
  std::size_t starts = 5;
  std::size_t parallel = 1;
  std::optional<std::uint64_t> fit_seed;

  void attach(CLI::App* app) {
    app->add_option("--kmin", kmin, "Smallest K")->check(CLI::PositiveNumber);
    app->add_option("--kmax", kmax, "Largest K")->check(CLI::PositiveNumber);
    app->add_option("--fit-kinds", kinds, "Fitted families")->delimiter(',')->check(CLI::IsMember({"esag", "sespc"}));
    app->add_option("--starts", starts, "Random starts per K")->check(CLI::PositiveNumber);
    app->add_option("--parallel", parallel, "Worker threads (1 = sequential)")->check(CLI::PositiveNumber);
    app->add_option("--fit-seed", fit_seed, "Base seed of the fits (default: $SPHEREMIX_SEED or 0)");
  }

  std::vector<sm::Kind> fit_kinds() const {
    std::vector<sm::Kind> out;
    for (const auto& k : kinds) out.push_back(sm::kind_from_string(k));
    return out;
  }

  sm::FitConfig config() const {
    if (kmin > kmax) throw Failure{kUsage, "need kmin <= kmax"};
    sm::FitConfig c;
    c.n_starts = starts;
    c.seed = fit_seed ? *fit_seed : default_seed();
    return c;
  }
};

void write_report(const fs::path& out, const std::string& csv, const sm::ExperimentReport& rep) {
  stage(kData, [&] {
    sm::io::write_experiment((out / csv).string(), rep);
    sm::io::write_json((out / "summary.json").string(), sm::io::experiment_summary_json(rep));
    return 0;
  });
  for (const auto& s : rep.summaries) {
    std::cout << sm::to_string(s.fit_kind) << " n=" << s.n << " median_ari=" << sm::io::fmt(s.ari_median)
              << " k2_rate=" << sm::io::fmt(s.true_k_rate) << " median_seconds=" << sm::io::fmt(s.seconds_median) << '\n';
  }
}

int cmd_experiment(const SimOptions& so, const RunOptions& ro, std::size_t replicates, bool project, const std::string& out_dir) {
  const sm::TwoClusterSpec s = so.spec();
  const sm::FitConfig cfg = ro.config();
  sm::ExperimentOptions eo;
  eo.replicates = replicates;
  eo.k_min = ro.kmin;
  eo.k_max = ro.kmax;
  eo.fit_kinds = ro.fit_kinds();
  eo.project_to_sphere = project;
  eo.workers = ro.parallel;
  const fs::path out = prepare_out(out_dir);
  const sm::ExperimentReport rep = stage(kNumeric, [&] { return sm::run_k_selection_experiment(s, eo, cfg); });
  write_report(out, "report.csv", rep);
  json echo = so.echo();
  echo["replicates"] = replicates;
  echo["kmin"] = ro.kmin;
  echo["kmax"] = ro.kmax;
  echo["fit_kinds"] = ro.kinds;
  echo["starts"] = ro.starts;
  echo["fit_seed"] = cfg.seed;
  write_manifest(out, "experiment", {}, echo, s.seed);
  return kOk;
}

int cmd_bench(const SimOptions& so, const RunOptions& ro, const std::vector<std::size_t>& grid, std::size_t repeats,
              const std::string& out_dir) {
  const sm::TwoClusterSpec s = so.spec();
  const sm::FitConfig cfg = ro.config();
  sm::TimingOptions to;
  to.n_grid = grid;
  to.k_min = ro.kmin;
  to.k_max = ro.kmax;
  to.kinds = ro.fit_kinds();
  to.repeats = repeats;
  to.workers = ro.parallel;
  if (repeats < 3) throw Failure{kUsage, "--repeats must be at least 3"};
  const fs::path out = prepare_out(out_dir);
  const sm::ExperimentReport rep = stage(kNumeric, [&] { return sm::run_timing_benchmark(s, to, cfg); });
  write_report(out, "timing.csv", rep);
  json echo = so.echo();
  echo["n_grid"] = grid;
  echo["repeats"] = repeats;
  echo["kmin"] = ro.kmin;
  echo["kmax"] = ro.kmax;
  echo["fit_kinds"] = ro.kinds;
  echo["starts"] = ro.starts;
  echo["parallel"] = ro.parallel;
  echo["fit_seed"] = cfg.seed;
  write_manifest(out, "bench", {}, echo, s.seed);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-based clustering of directional data on the sphere"};
  app.set_version_flag("--version", std::string(SPHEREMIX_VERSION));
  app.require_subcommand(1);

  FitOptions fit_opt;
  std::size_t fit_k = 0;
  auto* fit = app.add_subcommand("fit", "Fit a mixture with a fixed number of components");
  fit_opt.attach(fit);
  fit->add_option("--k", fit_k, "Number of components")->required()->check(CLI::PositiveNumber);

  FitOptions sel_opt;
  std::size_t kmin = 1;
  std::size_t kmax = 4;
  auto* select = app.add_subcommand("select", "Choose K by ICL");
  sel_opt.attach(select);
  select->add_option("--kmin", kmin, "Smallest K")->check(CLI::PositiveNumber);
  select->add_option("--kmax", kmax, "Largest K")->check(CLI::PositiveNumber);

  SimOptions sim_opt;
  std::string sim_out;
  auto* simulate = app.add_subcommand("simulate", "Draw a two-cluster data set");
  sim_opt.attach(simulate);
  simulate->add_option("--out", sim_out, "Output directory")->required();

  std::string proj_in;
  std::string proj_out;
  auto* project = app.add_subcommand("project", "Project d-dimensional directions onto the sphere");
  project->add_option("input", proj_in, "CSV with more than 3 numeric columns")->required();
  project->add_option("--out", proj_out, "Output directory")->required();

  std::string eval_a;
  std::string eval_b;
  auto* eval = app.add_subcommand("eval", "Adjusted Rand index of two label files");
  eval->add_option("labels_a", eval_a, "CSV with a 'label' column")->required();
  eval->add_option("labels_b", eval_b, "CSV with a 'label' column")->required();

  SimOptions exp_sim;
  RunOptions exp_run;
  std::size_t replicates = 20;
  bool exp_project = false;
  std::string exp_out;
  auto* experiment = app.add_subcommand("experiment", "Replicated K selection on simulated data");
  exp_sim.attach(experiment);
  exp_run.attach(experiment);
  experiment->add_option("--replicates", replicates, "Replicates")->check(CLI::PositiveNumber);
  experiment->add_flag("--project", exp_project, "Project to the sphere before fitting (implied for dimension > 3)");
  experiment->add_option("--out", exp_out, "Output directory")->required();

  SimOptions bench_sim;
  RunOptions bench_run;
  std::vector<std::size_t> grid{200, 500, 1000};
  std::size_t repeats = 10;
  std::string bench_out;
  auto* bench = app.add_subcommand("bench", "Time K selection over sample sizes");
  bench_sim.attach(bench);
  bench_run.attach(bench);
  bench->add_option("--n-grid", grid, "Sample sizes")->delimiter(',');
  bench->add_option("--repeats", repeats, "Repeats per (n, kind)");
  bench->add_option("--out", bench_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*fit) return cmd_fit(fit_opt, fit_k);
    if (*select) return cmd_select(sel_opt, kmin, kmax);
    if (*simulate) return cmd_simulate(sim_opt, sim_out);
    if (*project) return cmd_project(proj_in, proj_out);
    if (*eval) return cmd_eval(eval_a, eval_b);
    if (*experiment) return cmd_experiment(exp_sim, exp_run, replicates, exp_project, exp_out);
    if (*bench) return cmd_bench(bench_sim, bench_run, grid, repeats, bench_out);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  }
  return kUsage;
}
