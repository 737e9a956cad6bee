#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mestlab/error_models.hpp"
#include "mestlab/loss.hpp"
#include "mestlab/mestimator.hpp"

namespace mestlab {

/// p x n matrix whose row j is d beta_j / d eps^T = e_j^T (X^T D X)^{-1} X^T D.
Eigen::MatrixXd gradient_beta(const FitResult& fit, const DesignMatrix& design);

/// G = I - X (X^T D X)^{-1} X^T D (n x n).
Eigen::MatrixXd projection_G(const FitResult& fit, const DesignMatrix& design);

/// d^2 beta_j / d eps d eps^T = G^T diag(e_j^T (X^T D X)^{-1} X^T Dtilde) G (n x n).
Eigen::MatrixXd hessian_beta_j(const FitResult& fit, const DesignMatrix& design, Eigen::Index j);

struct PowerIterationOptions {
  int max_iter = 50;
  double tol = 1e-8;
};

/// Factorization of X^T D X at a fit, with matrix-free products by the
/// Hessian of beta_j. Nothing of size n x n is formed.
class FitLinearization {
 public:
  FitLinearization(const FitResult& fit, const Eigen::MatrixXd& X);

  /// (X^T D X)^{-1} e_j.
  Eigen::VectorXd inverse_column(Eigen::Index j) const;
  /// Row j of the gradient, as an n-vector.
  Eigen::VectorXd gradient_row(Eigen::Index j) const;
  Eigen::VectorXd apply_G(const Eigen::VectorXd& v) const;
  Eigen::VectorXd apply_GT(const Eigen::VectorXd& v) const;
  /// Operator norm of the Hessian of beta_j by power iteration on H^2.
  double hessian_opnorm(Eigen::Index j, const PowerIterationOptions& opts = {}) const;

  const Eigen::LLT<Eigen::MatrixXd>& llt() const noexcept { return llt_; }

 private:
  const FitResult& fit_;
  const Eigen::MatrixXd& X_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// Monte Carlo second-order Poincare moments for one coordinate.
struct SopiMoments {
  Eigen::Index j = 0;
  double kappa0 = 0.0, kappa1 = 0.0, kappa2 = 0.0, Mj = 0.0;
  double se_kappa0 = 0.0, se_kappa1 = 0.0, se_kappa2 = 0.0, se_Mj = 0.0;
  /// Monte Carlo mean and variance of beta_hat_j.
  double mean_beta = 0.0, var_hat = 0.0;
  /// Largest per-draw ratio of ||grad||^4 to K1^2/(n K0 lambda_-)^2.
  double max_kappa1_ratio = 0.0;
  /// Largest per-draw ratio of sum_i grad_i^4 to K1^2 m/(n K0 lambda_-)^{3/2},
  /// with m the draw's ||e_j^T (X^T D X)^{-1} X^T D^{1/2}||_inf.
  double max_kappa0_ratio = 0.0;
  /// Largest per-draw ratio of ||Hessian||_op to K2 m K1/K0.
  double max_kappa2_ratio = 0.0;
  int kappa1_violations = 0;
  int kappa0_violations = 0;
  int kappa2_violations = 0;
  /// kappa0^2 against K1^2 Mj/(n K0 lambda_-)^{3/2} with the Monte Carlo Mj.
  double kappa0_mean_ratio = 0.0;
  /// Empty when the error model has no (c1, c2).
  std::optional<double> sopi_bound;
};

struct SopiOptions {
  int reps = 500;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  SolverOptions solver;
  PowerIterationOptions power;
  /// Skip the Hessian norms (kappa2 = 0); exact for the square loss.
  bool skip_hessian = false;
};

struct SopiReport {
  std::vector<SopiMoments> coords;
  int reps = 0;
  int failures = 0;
  double lambda_minus = 0.0;
};

/// Errors are drawn from the stream (seed, rep); y = eps. Throws
/// InvalidSpec for reps < 100 and NumericalError if more than 1% of the
/// replications fail.
SopiReport sopi_moments(const DesignMatrix& design, const LossSpec& loss,
                        const ErrorModel& errors, const std::vector<Eigen::Index>& coords,
                        const SopiOptions& opts);

/// 2 sqrt(5) (c1 c2 kappa0 + c1^3 kappa1 kappa2) / var_betaj.
double sopi_bound(double kappa0, double kappa1, double kappa2, double c1, double c2,
                  double var_betaj);

}  // namespace mestlab
