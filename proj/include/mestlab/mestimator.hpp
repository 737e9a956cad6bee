#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "mestlab/errors.hpp"
#include "mestlab/loss.hpp"

namespace mestlab {

/// Fixed n x p design with the coordinates of interest Jn (0-based).
/// Immutable; copies share the cached rank diagnostic.
class DesignMatrix {
 public:
  /// Validates n >= p >= 1, finite entries, the intercept column and Jn.
  /// An empty Jn means every column except the intercept.
  explicit DesignMatrix(Eigen::MatrixXd X, bool has_intercept = false,
                        std::vector<Eigen::Index> Jn = {});

  const Eigen::MatrixXd& X() const noexcept { return X_; }
  Eigen::Index n() const noexcept { return X_.rows(); }
  Eigen::Index p() const noexcept { return X_.cols(); }
  bool has_intercept() const noexcept { return has_intercept_; }
  const std::vector<Eigen::Index>& Jn() const noexcept { return Jn_; }
  double kappa() const noexcept { return static_cast<double>(p()) / static_cast<double>(n()); }

  /// Same matrix with a different set of coordinates of interest.
  DesignMatrix with_Jn(std::vector<Eigen::Index> Jn) const;

  /// sigma_min(X) / sigma_max(X), computed once.
  double singular_value_ratio() const;
  /// Throws RankDeficient when the ratio is below rank_tol.
  void require_full_rank(double rank_tol) const;

 private:
  struct Cache;
  Eigen::MatrixXd X_;
  bool has_intercept_ = false;
  std::vector<Eigen::Index> Jn_;
  std::shared_ptr<Cache> cache_;
};

/// X with column j removed.
Eigen::MatrixXd drop_column(const Eigen::MatrixXd& X, Eigen::Index j);

struct SolverOptions {
  /// Stop when ||X^T psi(R)||/n <= tol * (1 + ||X^T psi(y)||/n).
  double tol = 1e-10;
  int max_iter = 200;
  double rank_tol = 1e-10;
  /// Monte Carlo loops check the design once and then skip the SVD.
  bool check_rank = true;
  double armijo_c = 1e-4;
  int max_halvings = 60;
};

struct IterationRecord {
  double objective;
  double grad_norm;
  double decrement;
  double step;
  /// Objective before minus after the step, summed term by term so that it
  /// stays resolvable after the objective itself stops changing in double.
  double decrease;
};

struct FitResult {
  Eigen::VectorXd beta_hat;
  Eigen::VectorXd residuals;
  Eigen::VectorXd d_weights;
  Eigen::VectorXd dtilde_weights;
  /// ||(1/n) sum_i x_i psi(R_i)||_2 at exit.
  double grad_norm = 0.0;
  /// 1 + ||X^T psi(y)||/n; the convergence threshold is tol * grad_scale.
  double grad_scale = 1.0;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<IterationRecord> trace;
};

class NoConvergence : public NumericalError {
 public:
  NoConvergence(const std::string& what, FitResult partial)
      : NumericalError(what), result(std::move(partial)) {}
  FitResult result;
};

/// (1/n) sum_i rho(y_i - x_i^T beta).
double objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LossSpec& loss,
                 const Eigen::VectorXd& beta);
double objective(const DesignMatrix& design, const Eigen::VectorXd& y, const LossSpec& loss,
                 const Eigen::VectorXd& beta);

struct NewtonStep {
  Eigen::VectorXd direction;
  /// Newton decrement sqrt(g^T H^{-1} g) of the scaled objective.
  double decrement;
};

/// Solves (X^T D X) dir = X^T psi(y - X beta) by Cholesky.
/// Throws FactorizationFailure if X^T D X is not numerically positive definite.
NewtonStep newton_step(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LossSpec& loss,
                       const Eigen::VectorXd& beta);
NewtonStep newton_step(const DesignMatrix& design, const Eigen::VectorXd& y,
                       const LossSpec& loss, const Eigen::VectorXd& beta);

/// Damped Newton on a raw matrix; accepts p = 0 and an optional warm start.
/// Performs no rank check. Throws NoConvergence on hitting max_iter.
FitResult fit_matrix(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LossSpec& loss,
                     const SolverOptions& opts = {}, const Eigen::VectorXd* warm_start = nullptr);

/// Minimizer of the average loss. Throws RankDeficient, NoConvergence,
/// FactorizationFailure, InvalidSpec (non-finite or mis-sized y).
FitResult fit(const DesignMatrix& design, const Eigen::VectorXd& y, const LossSpec& loss,
              const SolverOptions& opts = {}, const Eigen::VectorXd* warm_start = nullptr);

/// X^T diag(w) X, lower and upper triangles filled.
Eigen::MatrixXd weighted_gram(const Eigen::MatrixXd& X, const Eigen::VectorXd& w);

/// Extreme eigenvalues (lambda_minus, lambda_plus) of X^T X / n.
std::pair<double, double> gram_extreme_eigenvalues(const Eigen::MatrixXd& X);

}  // namespace mestlab
