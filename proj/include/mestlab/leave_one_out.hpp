#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mestlab/error_models.hpp"
#include "mestlab/loss.hpp"
#include "mestlab/mestimator.hpp"

namespace mestlab {

/// Leave-j-th-predictor-out fit and the scalar approximation b_j of beta_j.
struct LooResult {
  Eigen::Index j = 0;
  Eigen::VectorXd beta_loo;  // p - 1
  Eigen::VectorXd r_loo;     // r_{i,[j]}
  Eigen::VectorXd d_loo;     // psi'(r_{i,[j]})
  Eigen::VectorXd h0;        // psi(r_{i,[j]})
  double Nj = 0.0;
  double xij = 0.0;
  double bj = 0.0;
  /// G_[j] X_j; its i-th entry is h_{j,1,i}^T X_j.
  Eigen::VectorXd contrast;
  /// ||X_[j]^T h0|| / n, the leave-one-out first-order residual.
  double loo_grad_norm = 0.0;
  /// |h0^T X_j| / ||h0||.
  double h0_ratio = 0.0;
  /// Filled when h_{j,1,i} is requested: max_i |h^T X_j| / ||h|| and max_i ||h||.
  double h1_ratio_max = 0.0;
  double h1_norm_max = 0.0;
  int iterations = 0;
};

struct LooOptions {
  SolverOptions solver;
  bool compute_h1 = true;
  unsigned threads = 0;
};

/// Fits without column j. A warm start from the full fit may be given.
LooResult fit_loo(const DesignMatrix& design, const Eigen::VectorXd& y, const LossSpec& loss,
                  Eigen::Index j, const LooOptions& opts = {},
                  const FitResult* full_fit = nullptr);

struct DeltaCReport {
  std::vector<Eigen::Index> coords;
  std::vector<double> per_j_h0;
  std::vector<double> per_ij_h1;
  double delta_c = 0.0;
  /// max over i, j of ||h_{j,1,i}||_2.
  double max_h1_norm = 0.0;
  /// Per j, max_i |(G_[j] X_j)_i| / ||G_[j] X_j||_2. Equals S_j for the square loss.
  std::vector<double> contrast_concentration;
};

/// Full fit, every leave-one-out fit over Jn, and Delta_C.
struct LooAnalysis {
  FitResult full;
  std::vector<LooResult> loo;
  DeltaCReport delta;
};

LooAnalysis analyze_loo(const DesignMatrix& design, const Eigen::VectorXd& y,
                        const LossSpec& loss, const LooOptions& opts = {});

DeltaCReport delta_c(const DesignMatrix& design, const Eigen::VectorXd& y, const LossSpec& loss,
                     const LooOptions& opts = {});

struct BoundCheck {
  double value = 0.0;
  double bound = 0.0;
  /// Numerical allowance derived from the achieved gradient norms.
  double slack = 0.0;
  bool pass = false;
};

struct BoundsReport {
  double T = 0.0, E = 0.0, U = 0.0, U0 = 0.0;
  double K0 = 0.0, K1 = 0.0, K3 = 0.0;
  double lambda_plus = 0.0, lambda_minus = 0.0;
  double delta_c = 0.0;
  BoundCheck norm_beta;      // (i)   ||beta_hat - beta*|| <= (U + U0)/(K0 lambda_-)
  BoundCheck max_bj;         // (ii)  max |b_j|
  BoundCheck max_beta_gap;   // (iii) max |beta_j - b_j|
  BoundCheck max_resid_gap;  // (iv)  max |R_i - r_{i,[j]}|
  BoundCheck min_xi;         // xi_j >= K0 lambda_- (value = bound / min xi)
  BoundCheck max_h1_norm;    // ||h_{j,1,i}|| <= sqrt(K1/K0)
  bool all_pass() const {
    return norm_beta.pass && max_bj.pass && max_beta_gap.pass && max_resid_gap.pass &&
           min_xi.pass && max_h1_norm.pass;
  }
};

struct BoundsInput {
  /// True coefficients; when absent eps = y (beta* = 0).
  std::optional<Eigen::VectorXd> beta_star;
  /// E psi(eps_i); zero for even losses with symmetric errors.
  std::optional<Eigen::VectorXd> mean_psi;
};

BoundsReport deterministic_bounds(const DesignMatrix& design, const Eigen::VectorXd& y,
                                  const LossSpec& loss, const BoundsInput& input = {},
                                  const LooOptions& opts = {});
BoundsReport deterministic_bounds(const DesignMatrix& design, const Eigen::VectorXd& y,
                                  const LossSpec& loss, const LooAnalysis& analysis,
                                  const BoundsInput& input = {});

/// Monte Carlo estimate of Q_j = Cov(h_{j,0}) through tr(Q_j) and X_j^T Q_j X_j.
struct QjEstimate {
  Eigen::Index j = 0;
  double trace = 0.0, se_trace = 0.0;
  double quad = 0.0;
  double quad_ratio = 0.0, se_ratio = 0.0;
  int failures = 0;
};

struct QjOptions {
  int reps = 300;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  SolverOptions solver;
};

/// Draws eps from the stream (seed, rep) and refits without column j. Throws
/// InvalidSpec for reps < 200 (the floor is lowered with allow_small_reps)
/// and NumericalError when more than 1% of the fits fail.
std::vector<QjEstimate> estimate_Qj(const DesignMatrix& design, const LossSpec& loss,
                                    const ErrorModel& errors,
                                    const std::vector<Eigen::Index>& coords,
                                    const QjOptions& opts, bool allow_small_reps = false);

}  // namespace mestlab
