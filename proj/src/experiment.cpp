#include "mestlab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mestlab/errors.hpp"
#include "mestlab/parallel.hpp"
#include "mestlab/rng.hpp"
#include "mestlab/stats.hpp"

namespace mestlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) { return io::format_double(v); }

}  // namespace

Eigen::Index ExperimentConfig::p_for(Eigen::Index n) const {
  return static_cast<Eigen::Index>(std::floor(kappa * static_cast<double>(n) + 1e-9));
}

std::vector<Eigen::Index> ExperimentConfig::resolved_coords() const {
  if (!coords.empty()) return coords;
  return {include_intercept ? Eigen::Index{1} : Eigen::Index{0}};
}

void ExperimentConfig::validate() const {
  if (!(kappa > 0.0 && kappa < 1.0)) throw InvalidSpec("kappa must lie in (0, 1)");
  if (n_list.empty()) throw InvalidSpec("no sample sizes given");
  if (inner_reps < 30) throw InvalidSpec("inner_reps must be at least 30");
  if (outer_reps < 1) throw InvalidSpec("outer_reps must be at least 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidSpec("alpha must lie in (0, 1]");
  const auto cs = resolved_coords();
  for (Eigen::Index n : n_list) {
    const Eigen::Index p = p_for(n);
    if (p < 1) throw InvalidSpec("floor(kappa * n) must be at least 1 for n = " + std::to_string(n));
    for (Eigen::Index j : cs) {
      if (j < 0 || j >= p) {
        throw InvalidSpec("coordinate " + std::to_string(j + 1) + " exceeds p = " + std::to_string(p));
      }
      if (include_intercept && j == 0) throw InvalidSpec("coordinates exclude the intercept");
    }
  }
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::echo() const {
  std::string ns, cs;
  for (Eigen::Index n : n_list) ns += (ns.empty() ? "" : ",") + std::to_string(n);
  for (Eigen::Index j : resolved_coords()) cs += (cs.empty() ? "" : ",") + std::to_string(j + 1);
  return {{"design", design},
          {"intercept", include_intercept ? "true" : "false"},
          {"errors", errors.describe()},
          {"loss", loss.describe()},
          {"n", ns},
          {"kappa", num(kappa)},
          {"outer_reps", std::to_string(outer_reps)},
          {"inner_reps", std::to_string(inner_reps)},
          {"coords", cs},
          {"alpha", num(alpha)},
          {"bonferroni", bonferroni ? "true" : "false"},
          {"seed", std::to_string(master_seed)},
          {"tol", num(solver.tol)},
          {"max_iter", std::to_string(solver.max_iter)},
          {"ks_n0", std::to_string(ks_n0)},
          {"ks_n", std::to_string(ks_n)},
          {"ks_reps", std::to_string(ks_reps)}};
}

ExperimentConfig load_experiment_config(const io::KeyValueConfig& cfg) {
  ExperimentConfig c;
  c.design = cfg.get("design", c.design);
  c.include_intercept = io::parse_bool(cfg.get("intercept", "false"));
  if (cfg.has("errors")) c.errors = parse_error_model(cfg.get("errors", ""));
  if (cfg.has("loss")) c.loss = parse_loss(cfg.get("loss", ""));
  if (cfg.has("n")) {
    c.n_list.clear();
    for (long long n : io::parse_int_list(cfg.get("n", ""))) c.n_list.push_back(n);
  }
  c.kappa = io::parse_double(cfg.get("kappa", "0.5"));
  c.outer_reps = static_cast<int>(io::parse_int(cfg.get("outer_reps", "50")));
  c.inner_reps = static_cast<int>(io::parse_int(cfg.get("inner_reps", "300")));
  if (cfg.has("coords")) {
    for (long long j : io::parse_int_list(cfg.get("coords", ""))) {
      if (j < 1) throw InvalidSpec("coords are 1-based");
      c.coords.push_back(j - 1);
    }
  }
  c.alpha = io::parse_double(cfg.get("alpha", "0.05"));
  c.bonferroni = io::parse_bool(cfg.get("bonferroni", "false"));
  c.master_seed = io::parse_uint(cfg.get("seed", "0"));
  c.threads = static_cast<unsigned>(io::parse_uint(cfg.get("threads", "0")));
  c.solver.tol = io::parse_double(cfg.get("tol", num(c.solver.tol)));
  c.solver.max_iter = static_cast<int>(io::parse_int(cfg.get("max_iter", std::to_string(c.solver.max_iter))));
  c.ks_n0 = io::parse_int(cfg.get("ks_n0", "50"));
  c.ks_n = io::parse_int(cfg.get("ks_n", "500"));
  c.ks_reps = static_cast<int>(io::parse_int(cfg.get("ks_reps", "100")));
  const auto unused = cfg.unused_keys();
  if (!unused.empty()) throw ParseError("unknown config key '" + unused.front() + "'");
  c.validate();
  return c;
}

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  s.mean = stats::mean(xs);
  s.q25 = stats::quantile(xs, 0.25);
  s.median = stats::quantile(xs, 0.5);
  s.q75 = stats::quantile(xs, 0.75);
  s.min = *std::min_element(xs.begin(), xs.end());
  s.max = *std::max_element(xs.begin(), xs.end());
  return s;
}

CoverageReport run_coverage(const ExperimentConfig& config) {
  config.validate();
  const auto coords = config.resolved_coords();
  const std::size_t m = coords.size();
  const int K = config.inner_reps;
  const double z = stats::normal_quantile(1.0 - config.alpha / 2.0);
  const double z_bonf = stats::normal_quantile(1.0 - config.alpha / (2.0 * static_cast<double>(m)));
  SolverOptions solver = config.solver;
  solver.check_rank = false;

  CoverageReport report;
  for (Eigen::Index n : config.n_list) {
    CoverageCell cell;
    cell.n = n;
    cell.p = config.p_for(n);
    cell.coords = coords;
    const int R = config.outer_reps;
    cell.per_design_coverage.resize(R, static_cast<Eigen::Index>(m));
    cell.sd_hat.resize(R, static_cast<Eigen::Index>(m));
    cell.mean_beta.resize(R, static_cast<Eigen::Index>(m));
    cell.bonferroni_marginal.resize(R, static_cast<Eigen::Index>(m));
    std::vector<double> all_coverage;

    for (int outer = 0; outer < R; ++outer) {
      const auto o = static_cast<std::uint64_t>(outer);
      const auto nn = static_cast<std::uint64_t>(n);
      DesignSpec spec = parse_design_spec(config.design, n, cell.p,
                                          stream_key(config.master_seed, {nn, o, 0xDE51}),
                                          config.include_intercept);
      spec.Jn = coords;
      const DesignMatrix design = generate(spec);
      design.require_full_rank(config.solver.rank_tol);

      // Slot (b, k) holds coordinate b of the fit to error vector k of block b.
      std::vector<double> est(m * static_cast<std::size_t>(K), kNaN);
      parallel_for(est.size(), config.threads, [&](std::size_t t) {
        const std::size_t b = t / static_cast<std::size_t>(K);
        const std::size_t k = t % static_cast<std::size_t>(K);
        const Eigen::VectorXd y =
            draw(config.errors, n, config.master_seed, {nn, o, static_cast<std::uint64_t>(b), k});
        try {
          est[t] = fit_matrix(design.X(), y, config.loss, solver).beta_hat(coords[b]);
        } catch (const NumericalError&) {
        }
      });

      std::vector<double> sd(m);
      for (std::size_t b = 0; b < m; ++b) {
        std::vector<double> v;
        for (int k = 0; k < K; ++k) {
          const double e = est[b * K + k];
          if (std::isnan(e)) {
            ++cell.failures;
          } else {
            v.push_back(e);
          }
        }
        cell.fits += K;
        sd[b] = stats::sample_sd(v);
        long covered = 0, covered_bonf = 0;
        for (double e : v) {
          covered += std::abs(e) <= z * sd[b];
          covered_bonf += std::abs(e) <= z_bonf * sd[b];
        }
        const double cnt = v.empty() ? 1.0 : static_cast<double>(v.size());
        cell.per_design_coverage(outer, b) = static_cast<double>(covered) / cnt;
        cell.bonferroni_marginal(outer, b) = static_cast<double>(covered_bonf) / cnt;
        cell.sd_hat(outer, b) = sd[b];
        cell.mean_beta(outer, b) = stats::mean(v);
        all_coverage.push_back(cell.per_design_coverage(outer, b));
      }
      cell.min_coverage.push_back(cell.per_design_coverage.row(outer).minCoeff());

      long joint = 0, joint_bonf = 0, usable = 0;
      for (int k = 0; k < K; ++k) {
        bool ok = true, all_in = true, all_in_bonf = true;
        for (std::size_t b = 0; b < m; ++b) {
          const double e = est[b * K + k];
          if (std::isnan(e)) {
            ok = false;
            break;
          }
          all_in = all_in && std::abs(e) <= z * sd[b];
          all_in_bonf = all_in_bonf && std::abs(e) <= z_bonf * sd[b];
        }
        if (!ok) continue;
        ++usable;
        joint += all_in;
        joint_bonf += all_in_bonf;
      }
      const double u = usable == 0 ? 1.0 : static_cast<double>(usable);
      cell.simultaneous_coverage.push_back(static_cast<double>(joint) / u);
      cell.bonferroni_coverage.push_back(static_cast<double>(joint_bonf) / u);
    }
    cell.valid = cell.failures <= 0.02 * static_cast<double>(cell.fits);
    cell.coverage_summary = summarize(all_coverage);
    cell.min_summary = summarize(cell.min_coverage);
    cell.bonferroni_summary = summarize(cell.bonferroni_coverage);
    report.cells.push_back(std::move(cell));
  }
  return report;
}

KsResult two_sample_ks(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw EmptySample("two_sample_ks: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return {std::sqrt(na * nb / (na + nb)) * d, d};
}

KsReport run_ks_comparison(const ExperimentConfig& config, std::uint64_t seed) {
  if (!(config.kappa > 0.0 && config.kappa < 1.0)) throw InvalidSpec("kappa must lie in (0, 1)");
  if (config.ks_reps < 2) throw InvalidSpec("ks_reps must be at least 2");
  KsReport rep;
  rep.kappa = config.kappa;
  rep.seed = seed;
  rep.n0 = config.ks_n0;
  rep.p0 = config.p_for(config.ks_n0);
  rep.n1 = config.ks_n;
  rep.p1 = rep.p0;
  rep.n2 = config.ks_n;
  rep.p2 = config.p_for(config.ks_n);
  if (rep.p0 < 1) throw InvalidSpec("floor(kappa * n0) must be at least 1");
  const Eigen::Index coord = config.resolved_coords().front();

  const Eigen::Index dims[3][2] = {{rep.n0, rep.p0}, {rep.n1, rep.p1}, {rep.n2, rep.p2}};
  std::vector<double>* samples[3] = {&rep.sample0, &rep.sample1, &rep.sample2};
  SolverOptions solver = config.solver;
  solver.check_rank = false;
  const auto K = static_cast<std::size_t>(config.ks_reps);
  for (std::uint64_t r = 0; r < 3; ++r) {
    const Eigen::Index n = dims[r][0];
    DesignSpec spec = parse_design_spec(config.design, n, dims[r][1], stream_key(seed, {r, 0xDE51}),
                                        config.include_intercept);
    spec.Jn = {coord};
    const DesignMatrix design = generate(spec);
    design.require_full_rank(config.solver.rank_tol);
    const double scale = std::sqrt(static_cast<double>(n));
    std::vector<double> est(K, kNaN);
    parallel_for(K, config.threads, [&](std::size_t k) {
      const Eigen::VectorXd y = draw(config.errors, n, seed, {r, k});
      try {
        est[k] = scale * fit_matrix(design.X(), y, config.loss, solver).beta_hat(coord);
      } catch (const NumericalError&) {
      }
    });
    for (double e : est) {
      if (std::isnan(e)) {
        ++rep.failures;
      } else {
        samples[r]->push_back(e);
      }
    }
  }
  rep.ks1 = two_sample_ks(rep.sample0, rep.sample1);
  rep.ks2 = two_sample_ks(rep.sample0, rep.sample2);
  return rep;
}

std::vector<double> jackknife_variances(const DesignMatrix& design, const Eigen::VectorXd& y,
                                        const LossSpec& loss,
                                        const std::vector<Eigen::Index>& coords,
                                        const SolverOptions& opts, unsigned threads) {
  const Eigen::Index n = design.n();
  if (n < 3) throw InvalidSpec("jackknife needs n >= 3");
  for (Eigen::Index j : coords) {
    if (j < 0 || j >= design.p()) throw InvalidSpec("coordinate out of range");
  }
  const FitResult full = fit(design, y, loss, opts);
  SolverOptions inner = opts;
  inner.check_rank = false;
  const Eigen::MatrixXd& X = design.X();
  Eigen::MatrixXd deleted(n, static_cast<Eigen::Index>(coords.size()));
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t t) {
    const auto i = static_cast<Eigen::Index>(t);
    Eigen::MatrixXd Xi(n - 1, X.cols());
    Eigen::VectorXd yi(n - 1);
    Xi.topRows(i) = X.topRows(i);
    Xi.bottomRows(n - i - 1) = X.bottomRows(n - i - 1);
    yi.head(i) = y.head(i);
    yi.tail(n - i - 1) = y.tail(n - i - 1);
    const FitResult f = fit_matrix(Xi, yi, loss, inner, &full.beta_hat);
    for (std::size_t c = 0; c < coords.size(); ++c) {
      deleted(i, static_cast<Eigen::Index>(c)) = f.beta_hat(coords[c]);
    }
  });
  std::vector<double> out;
  const double nd = static_cast<double>(n);
  for (Eigen::Index c = 0; c < deleted.cols(); ++c) {
    const double mean = deleted.col(c).mean();
    out.push_back((nd - 1.0) / nd * (deleted.col(c).array() - mean).square().sum());
  }
  return out;
}

double jackknife_variance(const DesignMatrix& design, const Eigen::VectorXd& y,
                          const LossSpec& loss, Eigen::Index j, const SolverOptions& opts,
                          unsigned threads) {
  return jackknife_variances(design, y, loss, {j}, opts, threads).front();
}

std::string coverage_rows_csv(const ExperimentConfig& config, const CoverageReport& report) {
  std::ostringstream os;
  os << "design,errors,loss,n,p,kappa,design_rep,coord,coverage,bonferroni_marginal,sd_hat,mean_beta\n";
  for (const auto& c : report.cells) {
    for (Eigen::Index r = 0; r < c.per_design_coverage.rows(); ++r) {
      for (Eigen::Index b = 0; b < c.per_design_coverage.cols(); ++b) {
        os << '"' << config.design << "\",\"" << config.errors.describe() << "\",\""
           << config.loss.describe() << "\"," << c.n << ',' << c.p << ',' << num(config.kappa)
           << ',' << r + 1 << ',' << c.coords[static_cast<std::size_t>(b)] + 1 << ','
           << num(c.per_design_coverage(r, b)) << ',' << num(c.bonferroni_marginal(r, b)) << ','
           << num(c.sd_hat(r, b)) << ',' << num(c.mean_beta(r, b)) << '\n';
      }
    }
  }
  return os.str();
}

std::string coverage_summary_csv(const ExperimentConfig& config, const CoverageReport& report) {
  std::ostringstream os;
  os << "n,p,kappa,metric,mean,q25,median,q75,min,max,fits,failures,valid\n";
  for (const auto& c : report.cells) {
    auto row = [&](const char* metric, const Summary& s) {
      os << c.n << ',' << c.p << ',' << num(config.kappa) << ',' << metric << ',' << num(s.mean)
         << ',' << num(s.q25) << ',' << num(s.median) << ',' << num(s.q75) << ',' << num(s.min)
         << ',' << num(s.max) << ',' << c.fits << ',' << c.failures << ','
         << (c.valid ? "true" : "false") << '\n';
    };
    row("coverage", c.coverage_summary);
    row("min_coverage", c.min_summary);
    row("simultaneous_coverage", summarize(c.simultaneous_coverage));
    if (config.bonferroni) row("bonferroni_coverage", c.bonferroni_summary);
  }
  return os.str();
}

std::string ks_csv(const std::vector<KsReport>& reports) {
  std::ostringstream os;
  os << "seed,kappa,n0,p0,n1,p1,n2,p2,ks1,ks2,sup1,sup2,failures\n";
  for (const auto& r : reports) {
    os << r.seed << ',' << num(r.kappa) << ',' << r.n0 << ',' << r.p0 << ',' << r.n1 << ','
       << r.p1 << ',' << r.n2 << ',' << r.p2 << ',' << num(r.ks1.statistic) << ','
       << num(r.ks2.statistic) << ',' << num(r.ks1.sup_distance) << ','
       << num(r.ks2.sup_distance) << ',' << r.failures << '\n';
  }
  return os.str();
}

std::string ks_samples_csv(const std::vector<KsReport>& reports) {
  std::ostringstream os;
  os << "seed,kappa,design,rep,scaled_beta\n";
  for (const auto& r : reports) {
    const std::vector<double>* s[3] = {&r.sample0, &r.sample1, &r.sample2};
    for (int d = 0; d < 3; ++d) {
      for (std::size_t k = 0; k < s[d]->size(); ++k) {
        os << r.seed << ',' << num(r.kappa) << ',' << d << ',' << k + 1 << ',' << num((*s[d])[k]) << '\n';
      }
    }
  }
  return os.str();
}

}  // namespace mestlab
