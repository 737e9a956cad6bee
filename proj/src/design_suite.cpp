#include "mestlab/design_suite.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mestlab/errors.hpp"
#include "mestlab/io.hpp"
#include "mestlab/leave_one_out.hpp"
#include "mestlab/rng.hpp"
#include "mestlab/stats.hpp"

namespace mestlab {

namespace {

// Stream tags keep the random pieces of one design independent.
constexpr std::uint64_t kEntryStream = 1;
constexpr std::uint64_t kFactorStream = 2;
constexpr std::uint64_t kColumnStream = 3;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

Eigen::Index uniform_index(CounterRng& rng, Eigen::Index m) {
  return std::min<Eigen::Index>(m - 1, static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(m)));
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& Z) {
  Eigen::MatrixXd X(Z.rows(), Z.cols() + 1);
  X.col(0).setOnes();
  X.rightCols(Z.cols()) = Z;
  return X;
}

Eigen::MatrixXd iid_matrix(const EntryDist& dist, Eigen::Index n, Eigen::Index p, CounterRng& rng) {
  Eigen::MatrixXd Z(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) Z(i, j) = dist.quantile(rng.uniform());
  }
  return Z;
}

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& S, const std::string& what) {
  if (!S.isApprox(S.transpose(), 1e-12)) throw InvalidSpec(what + " is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw InvalidSpec(what + " is not positive definite");
  return llt.matrixL();
}

}  // namespace

std::string EntryDist::describe() const {
  switch (kind) {
    case EntryKind::Gaussian:
      return "gaussian";
    case EntryKind::StudentT:
      return "t(" + fmt(df) + ")";
    case EntryKind::Rademacher:
      return "rademacher";
    case EntryKind::Uniform:
      return "uniform";
  }
  return "";
}

double EntryDist::quantile(double u) const {
  switch (kind) {
    case EntryKind::Gaussian:
      return stats::normal_quantile(u);
    case EntryKind::StudentT:
      return stats::student_t_quantile(df, u);
    case EntryKind::Rademacher:
      return u < 0.5 ? -1.0 : 1.0;
    case EntryKind::Uniform:
      return std::sqrt(3.0) * (2.0 * u - 1.0);
  }
  return 0.0;
}

EntryDist parse_entry_dist(std::string_view text) {
  const io::CallSpec call = io::parse_call(text);
  EntryDist d;
  if (call.name == "gaussian" || call.name == "normal") {
    d.kind = EntryKind::Gaussian;
  } else if (call.name == "t" || call.name == "student_t") {
    call.require_keys({"df"});
    const auto df = call.get("df", 0);
    if (!df) throw ParseError("t entries need degrees of freedom, e.g. t(2)");
    d.kind = EntryKind::StudentT;
    d.df = io::parse_double(*df);
    if (!(d.df > 0.0)) throw InvalidSpec("t entries need positive degrees of freedom");
  } else if (call.name == "rademacher") {
    d.kind = EntryKind::Rademacher;
  } else if (call.name == "uniform") {
    d.kind = EntryKind::Uniform;
  } else {
    throw ParseError("unknown entry distribution '" + call.name +
                     "' (expected gaussian, t, rademacher, uniform)");
  }
  return d;
}

std::string CovSpec::describe() const {
  switch (kind) {
    case Kind::Identity:
      return "identity";
    case Kind::Ar1:
      return "ar1(" + fmt(rho) + ")";
    case Kind::Exchangeable:
      return "exchangeable(" + fmt(rho) + ")";
    case Kind::Matrix:
      return "matrix(" + std::to_string(matrix.rows()) + "x" + std::to_string(matrix.cols()) + ")";
  }
  return "";
}

Eigen::MatrixXd CovSpec::build(Eigen::Index d) const {
  switch (kind) {
    case Kind::Identity:
      return Eigen::MatrixXd::Identity(d, d);
    case Kind::Ar1: {
      Eigen::MatrixXd S(d, d);
      for (Eigen::Index a = 0; a < d; ++a) {
        for (Eigen::Index b = 0; b < d; ++b) S(a, b) = std::pow(rho, static_cast<double>(std::abs(a - b)));
      }
      return S;
    }
    case Kind::Exchangeable: {
      Eigen::MatrixXd S = Eigen::MatrixXd::Constant(d, d, rho);
      S.diagonal().setOnes();
      return S;
    }
    case Kind::Matrix:
      if (matrix.rows() != d || matrix.cols() != d) {
        throw InvalidSpec("covariance matrix is " + std::to_string(matrix.rows()) + "x" +
                          std::to_string(matrix.cols()) + ", expected " + std::to_string(d) +
                          "x" + std::to_string(d));
      }
      return matrix;
  }
  return {};
}

CovSpec parse_cov_spec(std::string_view text) {
  const io::CallSpec call = io::parse_call(text);
  CovSpec c;
  if (call.name == "identity" || call.name == "i") return c;
  if (call.name == "ar1" || call.name == "exchangeable") {
    call.require_keys({"rho"});
    c.kind = call.name == "ar1" ? CovSpec::Kind::Ar1 : CovSpec::Kind::Exchangeable;
    c.rho = call.get_double("rho", 0, 0.0);
    if (c.kind == CovSpec::Kind::Ar1 && !(std::abs(c.rho) < 1.0)) {
      throw InvalidSpec("ar1 correlation must lie in (-1, 1)");
    }
    return c;
  }
  if (call.name == "file") {
    const auto path = call.get("path", 0);
    if (!path) throw ParseError("file(...) needs a path");
    c.kind = CovSpec::Kind::Matrix;
    c.matrix = io::read_matrix_csv(*path);
    return c;
  }
  throw ParseError("unknown covariance '" + call.name +
                   "' (expected identity, ar1, exchangeable, file)");
}

std::string DesignSpec::describe() const {
  std::string out;
  switch (family) {
    case DesignFamily::Iid:
      out = "iid(" + dist.describe() + ")";
      break;
    case DesignFamily::Elliptical:
      out = "elliptical(factor=" + factor_dist.describe() + ", entries=" + dist.describe() +
            (truncate > 0.0 ? ", truncate=" + fmt(truncate) : "") + ")";
      break;
    case DesignFamily::MatrixNormal:
      out = "matrix_normal(lambda=" + lambda.describe() + ", sigma=" + sigma.describe() + ")";
      break;
    case DesignFamily::PartialHadamard:
      out = hadamard_exclude_constant ? "hadamard(exclude_constant=true)" : "hadamard";
      break;
    case DesignFamily::Anova: {
      out = "anova([";
      for (std::size_t k = 0; k < group_sizes.size(); ++k) {
        out += (k ? "," : "") + std::to_string(group_sizes[k]);
      }
      out += "])";
      break;
    }
    case DesignFamily::Fixed:
      out = "fixed(" + path + ")";
      break;
  }
  return out;
}

namespace {

// L * M with L the lower Cholesky factor of the n x n row covariance. The
// identity and AR(1) cases never form an n x n matrix.
Eigen::MatrixXd row_factor_times(const CovSpec& lambda, Eigen::MatrixXd M) {
  const Eigen::Index n = M.rows();
  switch (lambda.kind) {
    case CovSpec::Kind::Identity:
      return M;
    case CovSpec::Kind::Ar1: {
      const double c = std::sqrt(1.0 - lambda.rho * lambda.rho);
      for (Eigen::Index i = 1; i < n; ++i) M.row(i) = lambda.rho * M.row(i - 1) + c * M.row(i);
      return M;
    }
    default:
      return cholesky_factor(lambda.build(n), "Lambda") * M;
  }
}

}  // namespace

DesignSpec parse_design_spec(std::string_view family, Eigen::Index n, Eigen::Index p,
                             std::uint64_t seed, bool include_intercept) {
  const io::CallSpec call = io::parse_call(family);
  DesignSpec s;
  s.n = n;
  s.p = p;
  s.seed = seed;
  s.include_intercept = include_intercept;
  if (call.name == "iid") {
    call.require_keys({"entries"});
    s.family = DesignFamily::Iid;
    if (auto e = call.get("entries", 0)) s.dist = parse_entry_dist(*e);
  } else if (call.name == "elliptical") {
    call.require_keys({"factor", "entries", "truncate"});
    s.family = DesignFamily::Elliptical;
    if (auto f = call.get("factor", 0)) s.factor_dist = parse_entry_dist(*f);
    if (auto e = call.get("entries", 1)) s.dist = parse_entry_dist(*e);
    s.truncate = call.get_double("truncate", 2, 0.0);
  } else if (call.name == "matrix_normal") {
    call.require_keys({"lambda", "sigma"});
    s.family = DesignFamily::MatrixNormal;
    if (auto l = call.get("lambda", 0)) s.lambda = parse_cov_spec(*l);
    if (auto g = call.get("sigma", 1)) s.sigma = parse_cov_spec(*g);
  } else if (call.name == "hadamard" || call.name == "partial_hadamard") {
    call.require_keys({"exclude_constant"});
    s.family = DesignFamily::PartialHadamard;
    if (auto x = call.get("exclude_constant", 0)) s.hadamard_exclude_constant = io::parse_bool(*x);
  } else if (call.name == "anova") {
    call.require_keys({"sizes"});
    s.family = DesignFamily::Anova;
    std::string sizes;
    for (const auto& [k, v] : call.args) sizes += (sizes.empty() ? "" : ",") + v;
    for (long long g : io::parse_int_list(sizes)) s.group_sizes.push_back(static_cast<Eigen::Index>(g));
  } else if (call.name == "fixed" || call.name == "file") {
    call.require_keys({"path"});
    s.family = DesignFamily::Fixed;
    const auto path = call.get("path", 0);
    if (!path) throw ParseError("fixed(...) needs a path");
    s.path = *path;
  } else {
    throw ParseError("unknown design family '" + call.name +
                     "' (expected iid, elliptical, matrix_normal, hadamard, anova, fixed)");
  }
  return s;
}

Eigen::MatrixXi sylvester_hadamard(Eigen::Index n) {
  if (n < 1 || (n & (n - 1)) != 0) throw InvalidSpec("Hadamard order must be a power of 2");
  Eigen::MatrixXi H(n, n);
  H(0, 0) = 1;
  for (Eigen::Index m = 1; m < n; m *= 2) {
    H.block(0, m, m, m) = H.block(0, 0, m, m);
    H.block(m, 0, m, m) = H.block(0, 0, m, m);
    H.block(m, m, m, m) = -H.block(0, 0, m, m);
  }
  return H;
}

DesignMatrix generate(const DesignSpec& spec) {
  const Eigen::Index n = spec.n;
  const Eigen::Index p = spec.p;
  if (spec.family != DesignFamily::Fixed) {
    if (n < 1 || p < 1) throw InvalidSpec("design needs n >= 1 and p >= 1");
    if (p > n) throw InvalidSpec("design needs p <= n");
    if (spec.include_intercept && p < 2) throw InvalidSpec("an intercept design needs p >= 2");
  }
  const Eigen::Index q = spec.include_intercept ? p - 1 : p;
  CounterRng entries(spec.seed, {kEntryStream});
  Eigen::MatrixXd X;

  switch (spec.family) {
    case DesignFamily::Iid:
      X = iid_matrix(spec.dist, n, q, entries);
      break;
    case DesignFamily::Elliptical: {
      if (spec.truncate < 0.0 || spec.truncate >= 0.5) throw InvalidSpec("truncate must lie in [0, 0.5)");
      X = iid_matrix(spec.dist, n, q, entries);
      CounterRng factors(spec.seed, {kFactorStream});
      for (Eigen::Index i = 0; i < n; ++i) {
        const double u = factors.uniform();
        double zeta;
        if (spec.truncate > 0.0) {
          // Quantile of |F| for symmetric F.
          const double level = spec.truncate + (1.0 - 2.0 * spec.truncate) * u;
          zeta = spec.factor_dist.quantile(0.5 * (1.0 + level));
        } else {
          zeta = spec.factor_dist.quantile(u);
        }
        X.row(i) *= zeta;
      }
      break;
    }
    case DesignFamily::MatrixNormal: {
      const Eigen::MatrixXd G = iid_matrix(EntryDist{}, n, q, entries);
      const Eigen::MatrixXd S = cholesky_factor(spec.sigma.build(q), "Sigma");
      X = row_factor_times(spec.lambda, G * S.transpose());
      break;
    }
    case DesignFamily::PartialHadamard: {
      const Eigen::MatrixXi H = sylvester_hadamard(n);
      std::vector<Eigen::Index> pool;
      const bool skip_constant = spec.include_intercept || spec.hadamard_exclude_constant;
      for (Eigen::Index c = skip_constant ? 1 : 0; c < n; ++c) pool.push_back(c);
      if (static_cast<Eigen::Index>(pool.size()) < q) throw InvalidSpec("too many Hadamard columns requested");
      CounterRng cols(spec.seed, {kColumnStream});
      for (Eigen::Index k = 0; k < q; ++k) {
        const Eigen::Index m = static_cast<Eigen::Index>(pool.size()) - k;
        std::swap(pool[k], pool[k + uniform_index(cols, m)]);
      }
      X.resize(n, q);
      for (Eigen::Index k = 0; k < q; ++k) X.col(k) = H.col(pool[k]).cast<double>();
      break;
    }
    case DesignFamily::Anova: {
      if (spec.include_intercept) throw InvalidSpec("an ANOVA design already spans the intercept");
      if (spec.group_sizes.empty()) throw InvalidSpec("anova needs group sizes");
      std::vector<Eigen::Index> sizes(static_cast<std::size_t>(p));
      for (Eigen::Index k = 0; k < p; ++k) {
        sizes[k] = spec.group_sizes[static_cast<std::size_t>(k) % spec.group_sizes.size()];
        if (sizes[k] <= 0) throw InvalidSpec("anova group sizes must be positive");
      }
      if (std::accumulate(sizes.begin(), sizes.end(), Eigen::Index{0}) != n) {
        throw InvalidSpec("anova group sizes do not sum to n = " + std::to_string(n));
      }
      X = Eigen::MatrixXd::Zero(n, p);
      for (Eigen::Index k = 0, row = 0; k < p; ++k) {
        for (Eigen::Index c = 0; c < sizes[k]; ++c) X(row++, k) = 1.0;
      }
      break;
    }
    case DesignFamily::Fixed: {
      X = io::read_matrix_csv(spec.path);
      if (spec.include_intercept) X = with_intercept(X);
      return DesignMatrix(std::move(X), spec.include_intercept, spec.Jn);
    }
  }
  if (spec.include_intercept) X = with_intercept(X);
  return DesignMatrix(std::move(X), spec.include_intercept, spec.Jn);
}

std::vector<double> s_j(const DesignMatrix& design) {
  design.require_full_rank(1e-10);
  const Eigen::MatrixXd& X = design.X();
  Eigen::LLT<Eigen::MatrixXd> llt(weighted_gram(X, Eigen::VectorXd::Ones(X.rows())));
  if (llt.info() != Eigen::Success) throw RankDeficient("X^T X is not positive definite");
  std::vector<double> out;
  for (Eigen::Index j : design.Jn()) {
    const Eigen::VectorXd row = X * llt.solve(Eigen::VectorXd::Unit(X.cols(), j));
    out.push_back(row.cwiseAbs().maxCoeff() / row.norm());
  }
  return out;
}

std::pair<double, double> restricted_eigenvalues(const Eigen::MatrixXd& X,
                                                 const std::vector<Eigen::Index>& J) {
  std::vector<bool> in_j(static_cast<std::size_t>(X.cols()), false);
  for (Eigen::Index j : J) in_j[static_cast<std::size_t>(j)] = true;
  Eigen::MatrixXd XJ(X.rows(), static_cast<Eigen::Index>(J.size()));
  for (std::size_t k = 0; k < J.size(); ++k) XJ.col(static_cast<Eigen::Index>(k)) = X.col(J[k]);
  std::vector<Eigen::Index> rest;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    if (!in_j[static_cast<std::size_t>(c)]) rest.push_back(c);
  }
  if (!rest.empty()) {
    Eigen::MatrixXd Xc(X.rows(), static_cast<Eigen::Index>(rest.size()));
    for (std::size_t k = 0; k < rest.size(); ++k) Xc.col(static_cast<Eigen::Index>(k)) = X.col(rest[k]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xc);
    const Eigen::Index r = qr.rank();
    if (r > 0) {
      const Eigen::MatrixXd Q =
          qr.householderQ() * Eigen::MatrixXd::Identity(X.rows(), r);
      XJ -= Q * (Q.transpose() * XJ);
    }
  }
  const Eigen::MatrixXd S = (XJ.transpose() * XJ) / static_cast<double>(X.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  return {eig.eigenvalues()(0), eig.eigenvalues()(S.rows() - 1)};
}

const Verdict* AssumptionReport::find(std::string_view name) const {
  for (const auto& v : verdicts) {
    if (v.name == name) return &v;
  }
  return nullptr;
}

AssumptionReport check_assumptions(const DesignMatrix& design, const LossSpec& loss,
                                   const ErrorModel& errors, const AssumptionOptions& opts) {
  const AssumptionThresholds& th = opts.thresholds;
  AssumptionReport rep;
  rep.n = design.n();
  rep.p = design.p();
  rep.coords = design.Jn();
  const double n = static_cast<double>(design.n());
  const double log_n = std::log(n);

  std::tie(rep.lambda_minus, rep.lambda_plus) = gram_extreme_eigenvalues(design.X());
  std::tie(rep.lambda_tilde_minus, rep.lambda_tilde_plus) =
      restricted_eigenvalues(design.X(), design.Jn());
  const bool full_rank = design.singular_value_ratio() >= opts.solver.rank_tol;
  if (full_rank) {
    rep.sj = s_j(design);
  } else {
    rep.notes.push_back("design is rank deficient; S_j and Monte Carlo checks skipped");
  }

  auto eigen_verdict = [&](const std::string& name, double lo, double hi) {
    Verdict v{name, "pass", lo, th.lambda_minus_min, ""};
    const double hi_limit = std::pow(log_n, th.lambda_plus_log_power);
    std::ostringstream note;
    note << "lambda_minus=" << lo << " (min " << th.lambda_minus_min << "), lambda_plus=" << hi
         << " (max " << hi_limit << ")";
    v.note = note.str();
    if (lo < th.lambda_minus_min || hi > hi_limit) v.status = "fail";
    return v;
  };
  rep.verdicts.push_back(eigen_verdict("A3", rep.lambda_minus, rep.lambda_plus));
  rep.verdicts.push_back(eigen_verdict("A3*", rep.lambda_tilde_minus, rep.lambda_tilde_plus));

  if (!errors.has_transform_constants()) {
    rep.notes.push_back("error model " + errors.describe() +
                        " has no smooth gaussian transform; A2 does not hold");
  }

  if (full_rank && opts.qj_reps > 0) {
    QjOptions q;
    q.reps = opts.qj_reps;
    q.seed = stream_key(opts.seed, {0xA4});
    q.threads = opts.threads;
    q.solver = opts.solver;
    const auto est = estimate_Qj(design, loss, errors, design.Jn(), q, true);
    double min_ratio = HUGE_VAL;
    double worst_rel_se = 0.0;
    for (const auto& e : est) {
      rep.a4_ratio_per_j.push_back(e.quad_ratio);
      rep.a4_ratio_se.push_back(e.se_ratio);
      min_ratio = std::min(min_ratio, e.quad_ratio);
      if (e.quad_ratio > 0.0) worst_rel_se = std::max(worst_rel_se, e.se_ratio / e.quad_ratio);
    }
    const double min_var = errors.min_var.value_or(1.0);
    Verdict v{"A4", "pass", min_ratio, th.a4_factor * min_var, ""};
    if (!errors.min_var) v.note = "error variance unavailable, threshold uses variance 1; ";
    if (min_ratio < v.threshold) {
      v.status = "fail";
    } else if (worst_rel_se > th.max_relative_se) {
      v.status = "warn";
      v.note += "Monte Carlo standard error above " + fmt(th.max_relative_se) + " of the estimate";
    }
    rep.verdicts.push_back(v);
  }

  if (full_rank && opts.delta_reps > 0) {
    LooOptions lo;
    lo.solver = opts.solver;
    lo.threads = opts.threads;
    const std::uint64_t seed = stream_key(opts.seed, {0xA5});
    std::vector<double> d8;
    for (int r = 0; r < opts.delta_reps; ++r) {
      const Eigen::VectorXd y = draw(errors, design.n(), seed, {static_cast<std::uint64_t>(r)});
      const DeltaCReport dc = analyze_loo(design, y, loss, lo).delta;
      d8.push_back(std::pow(dc.delta_c, 8));
      rep.delta_c_max = std::max(rep.delta_c_max, dc.delta_c);
      for (double c : dc.contrast_concentration) {
        rep.contrast_concentration = std::max(rep.contrast_concentration, c);
      }
    }
    rep.delta_c_moment = stats::mean(d8);
    rep.delta_c_moment_se = stats::mean_se(d8);
    Verdict moment{"A5.moment", "pass", rep.delta_c_moment,
                   std::pow(th.delta_c_factor * std::sqrt(log_n), 8), ""};
    if (rep.delta_c_moment > moment.threshold) {
      moment.status = "fail";
    } else if (rep.delta_c_moment > 0.0 &&
               rep.delta_c_moment_se > th.max_relative_se * rep.delta_c_moment) {
      moment.status = "warn";
      moment.note = "Monte Carlo standard error above " + fmt(th.max_relative_se) + " of the estimate";
    }
    const double jn = static_cast<double>(design.Jn().size());
    const double dof = n - static_cast<double>(design.p()) + 1.0;
    Verdict contrast{"A5.contrast", "pass", rep.contrast_concentration,
                     th.contrast_factor * std::sqrt(2.0 * std::log(n * jn) / dof), ""};
    if (rep.contrast_concentration > contrast.threshold) {
      contrast.status = "fail";
      contrast.note = "a leave-one-out contrast of X_j concentrates on few observations";
    }
    Verdict combined{"A5", "pass", rep.delta_c_max, 0.0, "worst of A5.moment and A5.contrast"};
    for (const Verdict* part : {&moment, &contrast}) {
      if (part->status == "fail" || (part->status == "warn" && combined.status == "pass")) {
        combined.status = part->status;
      }
    }
    rep.verdicts.push_back(moment);
    rep.verdicts.push_back(contrast);
    rep.verdicts.push_back(combined);
  }
  return rep;
}

}  // namespace mestlab
