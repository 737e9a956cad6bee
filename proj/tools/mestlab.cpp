// mestlab: command-line front end for the M-estimation toolkit.
//
// Exit codes: 0 success, 2 invalid input (bad flags, files, specs),
// 3 numerical failure (rank deficiency, non-convergence).

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mestlab/design_suite.hpp"
#include "mestlab/error_models.hpp"
#include "mestlab/errors.hpp"
#include "mestlab/experiment.hpp"
#include "mestlab/io.hpp"
#include "mestlab/leave_one_out.hpp"
#include "mestlab/loss.hpp"
#include "mestlab/mestimator.hpp"
#include "mestlab/parallel.hpp"
#include "mestlab/sensitivity.hpp"

#ifndef MESTLAB_VERSION
#define MESTLAB_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mestlab;

namespace {

struct Common {
  unsigned threads = 0;
  bool threads_given = false;
  bool verbose = false;
};

std::string version_text() {
  std::ostringstream os;
  os << "mestlab " << MESTLAB_VERSION << "\n"
     << "compiler: "
#if defined(__clang__)
     << "clang " << __clang_major__ << "." << __clang_minor__ << "." << __clang_patchlevel__
#elif defined(__GNUC__)
     << "gcc " << __GNUC__ << "." << __GNUC_MINOR__ << "." << __GNUC_PATCHLEVEL__
#else
     << "unknown"
#endif
     << "\n"
     << "eigen: " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "." << EIGEN_MINOR_VERSION
     << "\n"
     << "built: " << __DATE__ << " " << __TIME__ << "\n";
  return os.str();
}

// Collects output files and writes the manifest next to them.
class Manifest {
 public:
  Manifest(std::string subcommand, const Common& common)
      : start_(std::chrono::steady_clock::now()) {
    doc_["tool"] = "mestlab";
    doc_["version"] = MESTLAB_VERSION;
    doc_["subcommand"] = std::move(subcommand);
    doc_["threads"] = resolve_threads(common.threads);
    doc_["config"] = json::object();
    doc_["outputs"] = json::array();
  }

  void set(const std::string& key, const std::string& value) { doc_["config"][key] = value; }

  void write_output(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    io::write_text(path, content);
    doc_["outputs"].push_back({{"path", path.string()}, {"bytes", content.size()},
                               {"git_blob_sha1", io::git_blob_hash(content)}});
  }

  void finish(const fs::path& manifest_path) {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    doc_["runtime_seconds"] = secs;
    if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
    io::write_text(manifest_path, doc_.dump(2) + "\n");
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

fs::path manifest_for_file(const fs::path& out) {
  return fs::path(out.string() + ".manifest.json");
}

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

// "all" or a 1-based list such as "1,2,5..8"; returned 0-based.
std::vector<Eigen::Index> parse_coords(const std::string& text, const DesignMatrix& design) {
  if (text.empty() || text == "all") return design.Jn();
  std::vector<Eigen::Index> out;
  for (long long j : io::parse_int_list(text)) {
    if (j < 1 || j > design.p()) {
      throw InvalidSpec("coordinate " + std::to_string(j) + " outside 1.." + std::to_string(design.p()));
    }
    out.push_back(static_cast<Eigen::Index>(j - 1));
  }
  return out;
}

std::string coords_text(const std::vector<Eigen::Index>& coords) {
  std::string s;
  for (Eigen::Index j : coords) s += (s.empty() ? "" : ",") + std::to_string(j + 1);
  return s;
}

DesignMatrix load_design(const std::string& path, bool intercept) {
  return DesignMatrix(io::read_matrix_csv(path), intercept);
}

SolverOptions solver_options(double tol, int max_iter) {
  SolverOptions o;
  o.tol = tol;
  o.max_iter = max_iter;
  return o;
}

// fit --------------------------------------------------------------------

struct FitArgs {
  std::string design, response, loss = "huber", out;
  bool intercept = false;
  double tol = 1e-10;
  int max_iter = 200;
};

void run_fit(const FitArgs& a, const Common& common) {
  Manifest man("fit", common);
  const DesignMatrix design = load_design(a.design, a.intercept);
  const Eigen::VectorXd y = io::read_vector_csv(a.response);
  const LossSpec loss = parse_loss(a.loss);
  man.set("design", a.design);
  man.set("response", a.response);
  man.set("loss", loss.describe());
  man.set("intercept", a.intercept ? "true" : "false");
  man.set("tol", io::format_double(a.tol));
  man.set("max_iter", std::to_string(a.max_iter));

  const FitResult f = fit(design, y, loss, solver_options(a.tol, a.max_iter));
  json doc;
  doc["n"] = design.n();
  doc["p"] = design.p();
  doc["loss"] = loss.describe();
  doc["converged"] = f.converged;
  doc["iterations"] = f.iterations;
  doc["objective"] = f.objective;
  doc["grad_norm"] = f.grad_norm;
  doc["beta"] = to_vector(f.beta_hat);
  doc["residuals"] = to_vector(f.residuals);
  doc["weights"] = to_vector(f.d_weights);
  doc["dtilde_weights"] = to_vector(f.dtilde_weights);
  json trace = json::array();
  for (const auto& t : f.trace) {
    trace.push_back({{"objective", t.objective}, {"grad_norm", t.grad_norm},
                     {"decrement", t.decrement}, {"step", t.step},
                     {"decrease", t.decrease}});
  }
  doc["trace"] = trace;
  man.write_output(a.out, doc.dump(2) + "\n");
  man.finish(manifest_for_file(a.out));
}

// loo --------------------------------------------------------------------

struct LooArgs {
  std::string design, response, loss = "huber", coords = "all", out;
  bool intercept = false;
};

void run_loo(const LooArgs& a, const Common& common) {
  Manifest man("loo", common);
  const DesignMatrix base = load_design(a.design, a.intercept);
  const DesignMatrix design = base.with_Jn(parse_coords(a.coords, base));
  const Eigen::VectorXd y = io::read_vector_csv(a.response);
  const LossSpec loss = parse_loss(a.loss);
  man.set("design", a.design);
  man.set("response", a.response);
  man.set("loss", loss.describe());
  man.set("coords", coords_text(design.Jn()));

  LooOptions opts;
  opts.threads = common.threads;
  const LooAnalysis an = analyze_loo(design, y, loss, opts);
  const BoundsReport b = deterministic_bounds(design, y, loss, an);
  std::ostringstream os;
  os << "j,bj,beta_j,Nj,xij,delta_c_contrib,bound_i_pass,bound_ii_pass,bound_iii_pass,bound_iv_pass\n";
  for (std::size_t k = 0; k < an.loo.size(); ++k) {
    const LooResult& r = an.loo[k];
    const double contrib = std::max(an.delta.per_j_h0[k], an.delta.per_ij_h1[k]);
    os << r.j + 1 << ',' << io::format_double(r.bj) << ',' << io::format_double(an.full.beta_hat(r.j))
       << ',' << io::format_double(r.Nj) << ',' << io::format_double(r.xij) << ','
       << io::format_double(contrib) << ',' << b.norm_beta.pass << ',' << b.max_bj.pass << ','
       << b.max_beta_gap.pass << ',' << b.max_resid_gap.pass << '\n';
  }
  man.write_output(a.out, os.str());
  man.finish(manifest_for_file(a.out));
}

// sensitivity ------------------------------------------------------------

struct SensArgs {
  std::string design, loss = "huber", errors = "gaussian", coords = "all", out;
  bool intercept = false;
  int reps = 500;
  std::uint64_t seed = 0;
};

void run_sensitivity(const SensArgs& a, const Common& common) {
  Manifest man("sensitivity", common);
  const DesignMatrix design = load_design(a.design, a.intercept);
  const auto coords = parse_coords(a.coords, design);
  const LossSpec loss = parse_loss(a.loss);
  const ErrorModel errors = parse_error_model(a.errors);
  man.set("design", a.design);
  man.set("loss", loss.describe());
  man.set("errors", errors.describe());
  man.set("coords", coords_text(coords));
  man.set("reps", std::to_string(a.reps));
  man.set("seed", std::to_string(a.seed));

  SopiOptions opts;
  opts.reps = a.reps;
  opts.seed = a.seed;
  opts.threads = common.threads;
  const SopiReport rep = sopi_moments(design, loss, errors, coords, opts);
  std::ostringstream os;
  os << "j,kappa0,kappa1,kappa2,Mj,var_hat,sopi_bound,se_kappa0,se_kappa1,se_kappa2,se_Mj\n";
  auto f = [](double v) { return io::format_double(v); };
  for (const auto& m : rep.coords) {
    os << m.j + 1 << ',' << f(m.kappa0) << ',' << f(m.kappa1) << ',' << f(m.kappa2) << ','
       << f(m.Mj) << ',' << f(m.var_hat) << ',' << (m.sopi_bound ? f(*m.sopi_bound) : "NA") << ','
       << f(m.se_kappa0) << ',' << f(m.se_kappa1) << ',' << f(m.se_kappa2) << ',' << f(m.se_Mj)
       << '\n';
  }
  man.write_output(a.out, os.str());
  man.finish(manifest_for_file(a.out));
}

// design gen / check -----------------------------------------------------

struct GenArgs {
  std::string family = "iid(gaussian)", out;
  Eigen::Index n = 0, p = 0;
  std::uint64_t seed = 0;
  bool intercept = false;
};

void run_design_gen(const GenArgs& a, const Common& common) {
  Manifest man("design gen", common);
  const DesignSpec spec = parse_design_spec(a.family, a.n, a.p, a.seed, a.intercept);
  man.set("family", spec.describe());
  man.set("n", std::to_string(a.n));
  man.set("p", std::to_string(a.p));
  man.set("seed", std::to_string(a.seed));
  man.set("intercept", a.intercept ? "true" : "false");
  const DesignMatrix d = generate(spec);
  std::string csv;
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    for (Eigen::Index j = 0; j < d.p(); ++j) {
      if (j > 0) csv += ',';
      csv += io::format_double(d.X()(i, j));
    }
    csv += '\n';
  }
  man.write_output(a.out, csv);
  man.finish(manifest_for_file(a.out));
}

struct CheckArgs {
  std::string design, loss = "huber", errors = "gaussian", coords = "all", out;
  bool intercept = false;
  int qj_reps = 200, delta_reps = 10;
  std::uint64_t seed = 0;
};

void run_design_check(const CheckArgs& a, const Common& common) {
  Manifest man("design check", common);
  const DesignMatrix base = load_design(a.design, a.intercept);
  const DesignMatrix design = base.with_Jn(parse_coords(a.coords, base));
  const LossSpec loss = parse_loss(a.loss);
  const ErrorModel errors = parse_error_model(a.errors);
  man.set("design", a.design);
  man.set("loss", loss.describe());
  man.set("errors", errors.describe());
  man.set("coords", coords_text(design.Jn()));
  man.set("qj_reps", std::to_string(a.qj_reps));
  man.set("delta_reps", std::to_string(a.delta_reps));
  man.set("seed", std::to_string(a.seed));

  AssumptionOptions opts;
  opts.qj_reps = a.qj_reps;
  opts.delta_reps = a.delta_reps;
  opts.seed = a.seed;
  opts.threads = common.threads;
  const AssumptionReport rep = check_assumptions(design, loss, errors, opts);
  json doc;
  doc["n"] = rep.n;
  doc["p"] = rep.p;
  std::vector<Eigen::Index> one_based;
  for (Eigen::Index j : rep.coords) one_based.push_back(j + 1);
  doc["coords"] = one_based;
  doc["lambda_plus"] = rep.lambda_plus;
  doc["lambda_minus"] = rep.lambda_minus;
  doc["lambda_tilde_plus"] = rep.lambda_tilde_plus;
  doc["lambda_tilde_minus"] = rep.lambda_tilde_minus;
  doc["sj"] = rep.sj;
  doc["a4_ratio_per_j"] = rep.a4_ratio_per_j;
  doc["a4_ratio_se"] = rep.a4_ratio_se;
  doc["delta_c_moment"] = rep.delta_c_moment;
  doc["delta_c_moment_se"] = rep.delta_c_moment_se;
  doc["delta_c_max"] = rep.delta_c_max;
  doc["contrast_concentration"] = rep.contrast_concentration;
  json verdicts = json::array();
  for (const auto& v : rep.verdicts) {
    verdicts.push_back({{"name", v.name}, {"status", v.status}, {"value", v.value},
                        {"threshold", v.threshold}, {"note", v.note}});
  }
  doc["verdicts"] = verdicts;
  doc["notes"] = rep.notes;
  man.write_output(a.out, doc.dump(2) + "\n");
  man.finish(manifest_for_file(a.out));
}

// coverage / ks ----------------------------------------------------------

ExperimentConfig load_config(const std::string& path, const Common& common) {
  ExperimentConfig c = load_experiment_config(io::KeyValueConfig::load(path));
  if (common.threads_given) c.threads = common.threads;
  return c;
}

void echo_config(Manifest& man, const std::string& path, const ExperimentConfig& c) {
  man.set("config_file", path);
  for (const auto& [k, v] : c.echo()) man.set(k, v);
}

void run_coverage_cmd(const std::string& config, const std::string& out, const Common& common) {
  const ExperimentConfig c = load_config(config, common);
  Manifest man("coverage", common);
  echo_config(man, config, c);
  const CoverageReport rep = run_coverage(c);
  const fs::path dir(out);
  man.write_output(dir / "coverage_rows.csv", coverage_rows_csv(c, rep));
  man.write_output(dir / "coverage_summary.csv", coverage_summary_csv(c, rep));
  man.finish(dir / "manifest.json");
  for (const auto& cell : rep.cells) {
    if (!cell.valid) {
      std::cerr << "warning: n=" << cell.n << ": " << cell.failures << " of " << cell.fits
                << " fits failed; cell marked invalid\n";
    }
    if (common.verbose) {
      std::cerr << "n=" << cell.n << " p=" << cell.p << " mean coverage "
                << cell.coverage_summary.mean << "\n";
    }
  }
}

void run_ks_cmd(const std::string& config, const std::string& out, int seeds, const Common& common) {
  const ExperimentConfig c = load_config(config, common);
  if (seeds < 1) throw InvalidSpec("--seeds must be at least 1");
  Manifest man("ks", common);
  echo_config(man, config, c);
  man.set("seeds", std::to_string(seeds));
  std::vector<KsReport> reports;
  for (int s = 0; s < seeds; ++s) {
    reports.push_back(run_ks_comparison(c, c.master_seed + static_cast<std::uint64_t>(s)));
    if (common.verbose) {
      std::cerr << "seed " << reports.back().seed << ": KS1=" << reports.back().ks1.statistic
                << " KS2=" << reports.back().ks2.statistic << "\n";
    }
  }
  const fs::path dir(out);
  man.write_output(dir / "ks.csv", ks_csv(reports));
  man.write_output(dir / "ks_samples.csv", ks_samples_csv(reports));
  man.finish(dir / "manifest.json");
}

// jackknife --------------------------------------------------------------

struct JackArgs {
  std::string design, response, loss = "huber", coords = "all", out;
  bool intercept = false;
};

void run_jackknife(const JackArgs& a, const Common& common) {
  Manifest man("jackknife", common);
  const DesignMatrix design = load_design(a.design, a.intercept);
  const auto coords = parse_coords(a.coords, design);
  const Eigen::VectorXd y = io::read_vector_csv(a.response);
  const LossSpec loss = parse_loss(a.loss);
  man.set("design", a.design);
  man.set("response", a.response);
  man.set("loss", loss.describe());
  man.set("coords", coords_text(coords));
  const auto v = jackknife_variances(design, y, loss, coords, {}, common.threads);
  std::ostringstream os;
  os << "j,jackknife_variance\n";
  for (std::size_t k = 0; k < coords.size(); ++k) {
    os << coords[k] + 1 << ',' << io::format_double(v[k]) << '\n';
  }
  man.write_output(a.out, os.str());
  man.finish(manifest_for_file(a.out));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"M-estimation toolkit for fixed designs with p/n bounded away from 0"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  bool show_version = false;
  app.add_flag("--version", show_version, "Print build metadata and exit");
  auto* threads_opt = app.add_option("--threads", common.threads, "Worker threads (0 = all cores)");
  app.add_flag("-v,--verbose", common.verbose, "Progress messages on stderr");

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit an M-estimator");
  fit_cmd->add_option("--design", fa.design, "Design matrix CSV")->required();
  fit_cmd->add_option("--response", fa.response, "Response vector CSV")->required();
  fit_cmd->add_option("--loss", fa.loss, "Loss, e.g. \"huber(k=1.345, eps=0.05, delta=0.1)\"");
  fit_cmd->add_flag("--intercept", fa.intercept, "First design column is an intercept");
  fit_cmd->add_option("--tol", fa.tol, "Relative gradient tolerance");
  fit_cmd->add_option("--max-iter", fa.max_iter, "Newton iteration cap");
  fit_cmd->add_option("--out", fa.out, "Output JSON")->required();

  LooArgs la;
  auto* loo_cmd = app.add_subcommand("loo", "Leave-one-predictor-out analysis and bounds");
  loo_cmd->add_option("--design", la.design)->required();
  loo_cmd->add_option("--response", la.response)->required();
  loo_cmd->add_option("--loss", la.loss);
  loo_cmd->add_option("--coords", la.coords, "\"all\" or 1-based list, e.g. 1,2,5..8");
  loo_cmd->add_flag("--intercept", la.intercept);
  loo_cmd->add_option("--out", la.out, "Output CSV")->required();

  SensArgs sa;
  auto* sens_cmd = app.add_subcommand("sensitivity", "Monte Carlo derivative moments");
  sens_cmd->add_option("--design", sa.design)->required();
  sens_cmd->add_option("--loss", sa.loss);
  sens_cmd->add_option("--errors", sa.errors, "gaussian(1.0) | t(2) | cauchy | uniform01");
  sens_cmd->add_option("--reps", sa.reps);
  sens_cmd->add_option("--seed", sa.seed);
  sens_cmd->add_option("--coords", sa.coords);
  sens_cmd->add_flag("--intercept", sa.intercept);
  sens_cmd->add_option("--out", sa.out, "Output CSV")->required();

  auto* design_cmd = app.add_subcommand("design", "Generate or check designs");
  design_cmd->require_subcommand(1);
  GenArgs ga;
  auto* gen_cmd = design_cmd->add_subcommand("gen", "Generate a design matrix");
  gen_cmd->add_option("--family", ga.family, "iid(...) | elliptical(...) | matrix_normal(...) | hadamard | anova([...]) | fixed(path)");
  gen_cmd->add_option("--n", ga.n)->required();
  gen_cmd->add_option("--p", ga.p, "Columns, including the intercept")->required();
  gen_cmd->add_option("--seed", ga.seed);
  gen_cmd->add_flag("--intercept", ga.intercept);
  gen_cmd->add_option("--out", ga.out, "Output CSV")->required();
  CheckArgs ca;
  auto* check_cmd = design_cmd->add_subcommand("check", "Assumption diagnostics");
  check_cmd->add_option("--design", ca.design)->required();
  check_cmd->add_option("--loss", ca.loss);
  check_cmd->add_option("--errors", ca.errors);
  check_cmd->add_option("--coords", ca.coords);
  check_cmd->add_option("--qj-reps", ca.qj_reps);
  check_cmd->add_option("--delta-reps", ca.delta_reps);
  check_cmd->add_option("--seed", ca.seed);
  check_cmd->add_flag("--intercept", ca.intercept);
  check_cmd->add_option("--out", ca.out, "Output JSON")->required();

  std::string cov_config, cov_out;
  auto* cov_cmd = app.add_subcommand("coverage", "Confidence-interval coverage experiment");
  cov_cmd->add_option("--config", cov_config, "key = value experiment file")->required();
  cov_cmd->add_option("--out", cov_out, "Output directory")->required();

  std::string ks_config, ks_out;
  int ks_seeds = 1;
  auto* ks_cmd = app.add_subcommand("ks", "Kolmogorov-Smirnov regime comparison");
  ks_cmd->add_option("--config", ks_config)->required();
  ks_cmd->add_option("--seeds", ks_seeds, "Seeds seed, seed+1, ...");
  ks_cmd->add_option("--out", ks_out, "Output directory")->required();

  JackArgs ja;
  auto* jack_cmd = app.add_subcommand("jackknife", "Delete-one jackknife variance");
  jack_cmd->add_option("--design", ja.design)->required();
  jack_cmd->add_option("--response", ja.response)->required();
  jack_cmd->add_option("--loss", ja.loss);
  jack_cmd->add_option("--coords", ja.coords);
  jack_cmd->add_flag("--intercept", ja.intercept);
  jack_cmd->add_option("--out", ja.out, "Output CSV")->required();

  // --version must work without a subcommand.
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--version") {
      std::cout << version_text();
      return 0;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  common.threads_given = threads_opt->count() > 0;

  try {
    if (*fit_cmd) run_fit(fa, common);
    if (*loo_cmd) run_loo(la, common);
    if (*sens_cmd) run_sensitivity(sa, common);
    if (*gen_cmd) run_design_gen(ga, common);
    if (*check_cmd) run_design_check(ca, common);
    if (*cov_cmd) run_coverage_cmd(cov_config, cov_out, common);
    if (*ks_cmd) run_ks_cmd(ks_config, ks_out, ks_seeds, common);
    if (*jack_cmd) run_jackknife(ja, common);
  } catch (const NumericalError& e) {
    std::cerr << "mestlab: numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "mestlab: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "mestlab: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
