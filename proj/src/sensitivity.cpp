#include "mestlab/sensitivity.hpp"

#include <cmath>
#include <string>

#include "mestlab/errors.hpp"
#include "mestlab/parallel.hpp"
#include "mestlab/rng.hpp"
#include "mestlab/stats.hpp"

namespace mestlab {

namespace {

// Per-draw bound checks tolerate rounding when the bound is attained.
constexpr double kBoundSlack = 1e-9;

Eigen::LLT<Eigen::MatrixXd> factor_hessian(const FitResult& fit, const Eigen::MatrixXd& X) {
  if (fit.d_weights.size() != X.rows()) throw InvalidSpec("fit does not belong to this design");
  Eigen::LLT<Eigen::MatrixXd> llt(weighted_gram(X, fit.d_weights));
  if (llt.info() != Eigen::Success) {
    throw FactorizationFailure("X^T D X is not numerically positive definite");
  }
  return llt;
}

}  // namespace

FitLinearization::FitLinearization(const FitResult& fit, const Eigen::MatrixXd& X)
    : fit_(fit), X_(X), llt_(factor_hessian(fit, X)) {}

Eigen::VectorXd FitLinearization::inverse_column(Eigen::Index j) const {
  return llt_.solve(Eigen::VectorXd::Unit(X_.cols(), j));
}

Eigen::VectorXd FitLinearization::gradient_row(Eigen::Index j) const {
  return fit_.d_weights.cwiseProduct(X_ * inverse_column(j));
}

Eigen::VectorXd FitLinearization::apply_G(const Eigen::VectorXd& v) const {
  return v - X_ * llt_.solve(X_.transpose() * fit_.d_weights.cwiseProduct(v));
}

Eigen::VectorXd FitLinearization::apply_GT(const Eigen::VectorXd& v) const {
  return v - fit_.d_weights.cwiseProduct(X_ * llt_.solve(X_.transpose() * v));
}

double FitLinearization::hessian_opnorm(Eigen::Index j, const PowerIterationOptions& opts) const {
  const Eigen::VectorXd w = (X_ * inverse_column(j)).cwiseProduct(fit_.dtilde_weights);
  if (w.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  auto H = [&](const Eigen::VectorXd& v) { return apply_GT(w.cwiseProduct(apply_G(v))); };
  // H is symmetric with eigenvalues of both signs; iterate on H^2.
  CounterRng rng(stream_key(0x5eedULL, {static_cast<std::uint64_t>(j)}));
  Eigen::VectorXd v(X_.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform() - 0.5;
  v.normalize();
  double estimate = 0.0;
  for (int it = 0; it < opts.max_iter; ++it) {
    Eigen::VectorXd u = H(H(v));
    const double norm = u.norm();
    if (norm == 0.0) return 0.0;
    v = u / norm;
    const bool done = std::abs(norm - estimate) <= opts.tol * norm;
    estimate = norm;
    if (done) break;
  }
  return std::sqrt(estimate);
}

Eigen::MatrixXd gradient_beta(const FitResult& fit, const DesignMatrix& design) {
  const Eigen::MatrixXd& X = design.X();
  const auto llt = factor_hessian(fit, X);
  return llt.solve(X.transpose()) * fit.d_weights.asDiagonal();
}

Eigen::MatrixXd projection_G(const FitResult& fit, const DesignMatrix& design) {
  const Eigen::MatrixXd& X = design.X();
  const auto llt = factor_hessian(fit, X);
  Eigen::MatrixXd G = -X * (llt.solve(X.transpose()) * fit.d_weights.asDiagonal());
  G.diagonal().array() += 1.0;
  return G;
}

Eigen::MatrixXd hessian_beta_j(const FitResult& fit, const DesignMatrix& design, Eigen::Index j) {
  if (j < 0 || j >= design.p()) throw InvalidSpec("coordinate out of range");
  const Eigen::MatrixXd& X = design.X();
  const auto llt = factor_hessian(fit, X);
  const Eigen::VectorXd w =
      (X * llt.solve(Eigen::VectorXd::Unit(X.cols(), j))).cwiseProduct(fit.dtilde_weights);
  const Eigen::MatrixXd G = projection_G(fit, design);
  Eigen::MatrixXd H = G.transpose() * w.asDiagonal() * G;
  return 0.5 * (H + H.transpose());
}

double sopi_bound(double kappa0, double kappa1, double kappa2, double c1, double c2,
                  double var_betaj) {
  if (!(var_betaj > 0.0)) throw InvalidSpec("sopi_bound: variance must be positive");
  return 2.0 * std::sqrt(5.0) * (c1 * c2 * kappa0 + c1 * c1 * c1 * kappa1 * kappa2) / var_betaj;
}

SopiReport sopi_moments(const DesignMatrix& design, const LossSpec& loss,
                        const ErrorModel& errors, const std::vector<Eigen::Index>& coords,
                        const SopiOptions& opts) {
  if (opts.reps < 100) throw InvalidSpec("sopi_moments needs at least 100 replications");
  if (coords.empty()) throw InvalidSpec("sopi_moments: no coordinates");
  for (Eigen::Index j : coords) {
    if (j < 0 || j >= design.p()) throw InvalidSpec("coordinate out of range");
  }
  design.require_full_rank(opts.solver.rank_tol);
  SolverOptions solver = opts.solver;
  solver.check_rank = false;

  const Eigen::MatrixXd& X = design.X();
  const double n = static_cast<double>(design.n());
  const double lambda_minus = gram_extreme_eigenvalues(X).first;
  const double nkl = n * loss.K0() * lambda_minus;
  const double K1 = loss.K1();
  const std::size_t reps = static_cast<std::size_t>(opts.reps);
  const std::size_t m = coords.size();

  // Per (rep, coord): beta_j, sum g^4, ||g||^4, sup-norm m, ||H||_op.
  struct Draw {
    bool ok = false;
    std::vector<double> beta, g4, n4, sup, hop;
  };
  std::vector<Draw> draws(reps);
  parallel_for(reps, opts.threads, [&](std::size_t r) {
    Draw& d = draws[r];
    FitResult f;
    try {
      f = fit_matrix(X, mestlab::draw(errors, design.n(), opts.seed, {r}), loss, solver);
    } catch (const NumericalError&) {
      return;
    }
    const FitLinearization lin(f, X);
    const Eigen::VectorXd sqrt_d = f.d_weights.cwiseSqrt();
    for (Eigen::Index j : coords) {
      const Eigen::VectorXd xa = X * lin.inverse_column(j);
      const Eigen::VectorXd g = f.d_weights.cwiseProduct(xa);
      const double g2 = g.squaredNorm();
      d.beta.push_back(f.beta_hat(j));
      d.g4.push_back(g.array().pow(4).sum());
      d.n4.push_back(g2 * g2);
      d.sup.push_back(sqrt_d.cwiseProduct(xa).cwiseAbs().maxCoeff());
      d.hop.push_back(opts.skip_hessian ? 0.0 : lin.hessian_opnorm(j, opts.power));
    }
    d.ok = true;
  });

  SopiReport report;
  report.reps = opts.reps;
  report.lambda_minus = lambda_minus;
  for (const auto& d : draws) report.failures += d.ok ? 0 : 1;
  if (report.failures > 0.01 * static_cast<double>(reps)) {
    throw NumericalError("sopi_moments: " + std::to_string(report.failures) + " of " +
                         std::to_string(reps) + " replications failed");
  }

  for (std::size_t c = 0; c < m; ++c) {
    SopiMoments mo;
    mo.j = coords[c];
    std::vector<double> beta, g4, n4, sup, h4;
    for (const auto& d : draws) {
      if (!d.ok) continue;
      beta.push_back(d.beta[c]);
      g4.push_back(d.g4[c]);
      n4.push_back(d.n4[c]);
      sup.push_back(d.sup[c]);
      h4.push_back(std::pow(d.hop[c], 4));

      const double r1 = d.n4[c] / (K1 * K1 / (nkl * nkl));
      const double r0 = d.g4[c] / (K1 * K1 * d.sup[c] / std::pow(nkl, 1.5));
      const double bound2 = loss.K2() * d.sup[c] * K1 / loss.K0();
      const double r2 = bound2 > 0.0 ? d.hop[c] / bound2 : (d.hop[c] > 0.0 ? HUGE_VAL : 0.0);
      mo.max_kappa1_ratio = std::max(mo.max_kappa1_ratio, r1);
      mo.max_kappa0_ratio = std::max(mo.max_kappa0_ratio, r0);
      mo.max_kappa2_ratio = std::max(mo.max_kappa2_ratio, r2);
      mo.kappa1_violations += r1 > 1.0 + kBoundSlack;
      mo.kappa0_violations += r0 > 1.0 + kBoundSlack;
      mo.kappa2_violations += r2 > 1.0 + kBoundSlack;
    }
    const double e_g4 = stats::mean(g4), e_n4 = stats::mean(n4), e_h4 = stats::mean(h4);
    mo.kappa0 = std::sqrt(e_g4);
    mo.kappa1 = std::pow(e_n4, 0.25);
    mo.kappa2 = std::pow(e_h4, 0.25);
    mo.Mj = stats::mean(sup);
    // Delta method for the root transforms.
    mo.se_kappa0 = e_g4 > 0.0 ? stats::mean_se(g4) / (2.0 * mo.kappa0) : 0.0;
    mo.se_kappa1 = e_n4 > 0.0 ? stats::mean_se(n4) / (4.0 * std::pow(e_n4, 0.75)) : 0.0;
    mo.se_kappa2 = e_h4 > 0.0 ? stats::mean_se(h4) / (4.0 * std::pow(e_h4, 0.75)) : 0.0;
    mo.se_Mj = stats::mean_se(sup);
    mo.mean_beta = stats::mean(beta);
    mo.var_hat = stats::sample_variance(beta);
    mo.kappa0_mean_ratio = (mo.kappa0 * mo.kappa0) / (K1 * K1 * mo.Mj / std::pow(nkl, 1.5));
    if (errors.has_transform_constants() && mo.var_hat > 0.0) {
      mo.sopi_bound = sopi_bound(mo.kappa0, mo.kappa1, mo.kappa2, *errors.c1, *errors.c2, mo.var_hat);
    }
    report.coords.push_back(mo);
  }
  return report;
}

}  // namespace mestlab
