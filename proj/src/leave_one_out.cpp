#include "mestlab/leave_one_out.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mestlab/errors.hpp"
#include "mestlab/parallel.hpp"
#include "mestlab/stats.hpp"

namespace mestlab {

namespace {

Eigen::VectorXd psi_of(const LossSpec& loss, const Eigen::VectorXd& r) {
  return r.unaryExpr([&](double x) { return loss.psi(x); });
}

Eigen::VectorXd drop_entry(const Eigen::VectorXd& v, Eigen::Index j) {
  Eigen::VectorXd out(v.size() - 1);
  out.head(j) = v.head(j);
  out.tail(v.size() - j - 1) = v.tail(v.size() - j - 1);
  return out;
}

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

LooResult fit_loo(const DesignMatrix& design, const Eigen::VectorXd& y, const LossSpec& loss,
                  Eigen::Index j, const LooOptions& opts, const FitResult* full_fit) {
  if (j < 0 || j >= design.p()) throw InvalidSpec("coordinate out of range");
  const Eigen::MatrixXd& X = design.X();
  const Eigen::Index n = design.n();
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const Eigen::MatrixXd Xj = drop_column(X, j);
  const Eigen::VectorXd xj = X.col(j);

  Eigen::VectorXd warm;
  if (full_fit) warm = drop_entry(full_fit->beta_hat, j);
  const FitResult f = fit_matrix(Xj, y, loss, opts.solver, full_fit ? &warm : nullptr);

  LooResult out;
  out.j = j;
  out.beta_loo = f.beta_hat;
  out.r_loo = f.residuals;
  out.d_loo = f.d_weights;
  out.h0 = psi_of(loss, f.residuals);
  out.iterations = f.iterations;
  out.loo_grad_norm = f.grad_norm;
  out.Nj = xj.dot(out.h0) / sqrt_n;
  out.h0_ratio = safe_ratio(std::abs(out.h0.dot(xj)), out.h0.norm());

  const Eigen::VectorXd& d = out.d_loo;
  if (Xj.cols() == 0) {
    out.contrast = xj;
    if (opts.compute_h1) {
      // h_{j,1,i} = e_i.
      out.h1_ratio_max = xj.cwiseAbs().maxCoeff();
      out.h1_norm_max = 1.0;
    }
  } else {
    Eigen::LLT<Eigen::MatrixXd> llt(weighted_gram(Xj, d));
    if (llt.info() != Eigen::Success) {
      throw FactorizationFailure("leave-one-out X^T D X is not numerically positive definite");
    }
    out.contrast = xj - Xj * llt.solve(Xj.transpose() * d.cwiseProduct(xj));
    if (opts.compute_h1) {
      // h_{j,1,i} = e_i - V x_{i,[j]} with V = D X_[j] A^{-1}, so
      // ||h||^2 = 1 - 2 d_i x^T A^{-1} x + x^T (V^T V) x.
      const Eigen::MatrixXd Ainv = llt.solve(Eigen::MatrixXd::Identity(Xj.cols(), Xj.cols()));
      const Eigen::MatrixXd XA = Xj * Ainv;
      const Eigen::VectorXd s = XA.cwiseProduct(Xj).rowwise().sum();
      const Eigen::MatrixXd V = d.asDiagonal() * XA;
      const Eigen::MatrixXd B = V.transpose() * V;
      const Eigen::VectorXd q = (Xj * B).cwiseProduct(Xj).rowwise().sum();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = std::sqrt(std::max(0.0, 1.0 - 2.0 * d(i) * s(i) + q(i)));
        out.h1_norm_max = std::max(out.h1_norm_max, norm);
        out.h1_ratio_max = std::max(out.h1_ratio_max, safe_ratio(std::abs(out.contrast(i)), norm));
      }
    }
  }
  out.xij = d.dot(out.contrast.cwiseAbs2()) / static_cast<double>(n);
  out.bj = out.Nj / (sqrt_n * out.xij);
  return out;
}

LooAnalysis analyze_loo(const DesignMatrix& design, const Eigen::VectorXd& y,
                        const LossSpec& loss, const LooOptions& opts) {
  LooAnalysis a;
  a.full = fit(design, y, loss, opts.solver);
  LooOptions inner = opts;
  inner.solver.check_rank = false;
  const auto& Jn = design.Jn();
  a.loo.resize(Jn.size());
  parallel_for(Jn.size(), opts.threads, [&](std::size_t k) {
    a.loo[k] = fit_loo(design, y, loss, Jn[k], inner, &a.full);
  });
  DeltaCReport& dc = a.delta;
  dc.coords = Jn;
  for (const auto& r : a.loo) {
    dc.per_j_h0.push_back(r.h0_ratio);
    dc.per_ij_h1.push_back(r.h1_ratio_max);
    dc.delta_c = std::max({dc.delta_c, r.h0_ratio, r.h1_ratio_max});
    dc.max_h1_norm = std::max(dc.max_h1_norm, r.h1_norm_max);
    dc.contrast_concentration.push_back(
        safe_ratio(r.contrast.cwiseAbs().maxCoeff(), r.contrast.norm()));
  }
  return a;
}

DeltaCReport delta_c(const DesignMatrix& design, const Eigen::VectorXd& y, const LossSpec& loss,
                     const LooOptions& opts) {
  LooOptions o = opts;
  o.compute_h1 = true;
  return analyze_loo(design, y, loss, o).delta;
}

BoundsReport deterministic_bounds(const DesignMatrix& design, const Eigen::VectorXd& y,
                                  const LossSpec& loss, const BoundsInput& input,
                                  const LooOptions& opts) {
  Eigen::VectorXd eps = y;
  if (input.beta_star) eps -= design.X() * *input.beta_star;
  LooOptions o = opts;
  o.compute_h1 = true;
  const LooAnalysis a = analyze_loo(design, eps, loss, o);
  BoundsInput null_input;
  null_input.mean_psi = input.mean_psi;
  return deterministic_bounds(design, eps, loss, a, null_input);
}

BoundsReport deterministic_bounds(const DesignMatrix& design, const Eigen::VectorXd& y,
                                  const LossSpec& loss, const LooAnalysis& a,
                                  const BoundsInput& input) {
  const Eigen::MatrixXd& X = design.X();
  const double n = static_cast<double>(design.n());
  const double sqrt_n = std::sqrt(n);
  if (a.loo.size() != design.Jn().size()) throw InvalidSpec("analysis does not match Jn");

  Eigen::VectorXd eps = y;
  Eigen::VectorXd beta_dev = a.full.beta_hat;
  if (input.beta_star) {
    eps -= X * *input.beta_star;
    beta_dev -= *input.beta_star;
  }

  BoundsReport b;
  b.K0 = loss.K0();
  b.K1 = loss.K1();
  b.K3 = loss.K3();
  std::tie(b.lambda_minus, b.lambda_plus) = gram_extreme_eigenvalues(X);
  double max_norm = X.rowwise().norm().maxCoeff();
  for (Eigen::Index j : design.Jn()) max_norm = std::max(max_norm, X.col(j).norm());
  b.T = max_norm / sqrt_n;
  b.E = 0.0;
  for (Eigen::Index i = 0; i < eps.size(); ++i) b.E += loss.rho(eps(i));
  b.E /= n;
  const Eigen::VectorXd mu = input.mean_psi ? *input.mean_psi : Eigen::VectorXd::Zero(eps.size());
  b.U = (X.transpose() * (psi_of(loss, eps) - mu)).norm() / n;
  b.U0 = (X.transpose() * mu).norm() / n;
  b.delta_c = a.delta.delta_c;

  const double K0 = b.K0, K1 = b.K1, K3 = b.K3, lm = b.lambda_minus, lp = b.lambda_plus;
  const double dc = b.delta_c, E = b.E, T = b.T;

  double max_loo_grad = 0.0, max_bj = 0.0, max_gap = 0.0, max_resid = 0.0, min_xi = HUGE_VAL;
  for (const auto& r : a.loo) {
    max_loo_grad = std::max(max_loo_grad, r.loo_grad_norm);
    max_bj = std::max(max_bj, std::abs(r.bj));
    max_gap = std::max(max_gap, std::abs(a.full.beta_hat(r.j) - r.bj));
    max_resid = std::max(max_resid, (a.full.residuals - r.r_loo).cwiseAbs().maxCoeff());
    min_xi = std::min(min_xi, r.xij);
  }
  // The computed fits are within grad_norm / (K0 lambda_-) of the exact ones.
  const double beta_err = 10.0 * (a.full.grad_norm + max_loo_grad) / (K0 * lm) + 1e-12;
  auto check = [](double value, double bound, double slack) {
    return BoundCheck{value, bound, slack, value <= bound * (1.0 + 1e-9) + slack};
  };

  b.norm_beta = check(beta_dev.norm(), (b.U + b.U0) / (K0 * lm),
                      10.0 * a.full.grad_norm / (K0 * lm) + 1e-12);
  b.max_bj = check(max_bj, std::sqrt(2.0 * K1) / (K0 * lm) * dc * std::sqrt(E) / sqrt_n, beta_err);
  const double cubic = 2.0 * K1 * K1 * K3 * lp / (std::pow(K0, 4) * std::pow(lm, 3.5)) * std::pow(dc, 3) * E;
  b.max_beta_gap = check(max_gap, cubic * T / n, beta_err);
  b.max_resid_gap = check(
      max_resid,
      (cubic * T * T + std::sqrt(2.0) * K1 * dc * dc * std::sqrt(E) / (std::pow(K0, 1.5) * lm)) / sqrt_n,
      sqrt_n * T * beta_err);
  b.min_xi = BoundCheck{min_xi, K0 * lm, 0.0, min_xi >= K0 * lm * (1.0 - 1e-9)};
  b.max_h1_norm = check(a.delta.max_h1_norm, std::sqrt(K1 / K0), 1e-9);
  return b;
}

std::vector<QjEstimate> estimate_Qj(const DesignMatrix& design, const LossSpec& loss,
                                    const ErrorModel& errors,
                                    const std::vector<Eigen::Index>& coords,
                                    const QjOptions& opts, bool allow_small_reps) {
  const int min_reps = allow_small_reps ? 30 : 200;
  if (opts.reps < min_reps) {
    throw InvalidSpec("estimate_Qj needs at least " + std::to_string(min_reps) + " replications");
  }
  for (Eigen::Index j : coords) {
    if (j < 0 || j >= design.p()) throw InvalidSpec("coordinate out of range");
  }
  design.require_full_rank(opts.solver.rank_tol);
  SolverOptions solver = opts.solver;
  solver.check_rank = false;
  const Eigen::MatrixXd& X = design.X();
  const Eigen::Index n = design.n();
  const int R = opts.reps;

  std::vector<QjEstimate> out(coords.size());
  parallel_for(coords.size(), opts.threads, [&](std::size_t k) {
    const Eigen::Index j = coords[k];
    const Eigen::MatrixXd Xj = drop_column(X, j);
    Eigen::MatrixXd H(R, n);
    std::vector<bool> ok(static_cast<std::size_t>(R), false);
    int failures = 0;
    for (int r = 0; r < R; ++r) {
      const Eigen::VectorXd y = draw(errors, n, opts.seed, {static_cast<std::uint64_t>(r)});
      try {
        const FitResult f = fit_matrix(Xj, y, loss, solver);
        H.row(r) = psi_of(loss, f.residuals).transpose();
        ok[static_cast<std::size_t>(r)] = true;
      } catch (const NumericalError&) {
        ++failures;
      }
    }
    QjEstimate& e = out[k];
    e.j = j;
    e.failures = failures;
    if (failures > 0.01 * R) return;
    const int good = R - failures;
    Eigen::MatrixXd C(good, n);
    for (int r = 0, g = 0; r < R; ++r) {
      if (ok[static_cast<std::size_t>(r)]) C.row(g++) = H.row(r);
    }
    C.rowwise() -= C.colwise().mean();
    const double scale = static_cast<double>(good) / static_cast<double>(good - 1);
    std::vector<double> q(good), quad(good);
    const Eigen::VectorXd cx = C * X.col(j);
    for (int r = 0; r < good; ++r) {
      q[r] = C.row(r).squaredNorm() * scale;
      quad[r] = cx(r) * cx(r) * scale;
    }
    e.trace = stats::mean(q);
    e.se_trace = stats::mean_se(q);
    e.quad = stats::mean(quad);
    e.quad_ratio = safe_ratio(e.quad, e.trace);
    std::vector<double> z(good);
    for (int r = 0; r < good; ++r) z[r] = safe_ratio(quad[r] - e.quad_ratio * q[r], e.trace);
    e.se_ratio = stats::mean_se(z);
  });
  for (const auto& e : out) {
    if (e.failures > 0.01 * R) {
      throw NumericalError("estimate_Qj: " + std::to_string(e.failures) + " of " +
                           std::to_string(R) + " fits failed for coordinate " +
                           std::to_string(e.j + 1));
    }
  }
  return out;
}

}  // namespace mestlab
