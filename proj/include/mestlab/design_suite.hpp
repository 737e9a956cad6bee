#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mestlab/error_models.hpp"
#include "mestlab/loss.hpp"
#include "mestlab/mestimator.hpp"

namespace mestlab {

enum class DesignFamily { Iid, Elliptical, MatrixNormal, PartialHadamard, Anova, Fixed };
enum class EntryKind { Gaussian, StudentT, Rademacher, Uniform };

/// Entry distribution. "uniform" has mean 0 and variance 1, U(-sqrt 3, sqrt 3);
/// t(df) is not standardized.
struct EntryDist {
  EntryKind kind = EntryKind::Gaussian;
  double df = 0.0;
  std::string describe() const;
  double quantile(double u) const;
};

/// "gaussian" | "normal" | "t(df)" | "rademacher" | "uniform".
EntryDist parse_entry_dist(std::string_view text);

/// Row (Lambda, n x n) or column (Sigma, p x p) covariance of a matrix-normal design.
struct CovSpec {
  enum class Kind { Identity, Ar1, Exchangeable, Matrix };
  Kind kind = Kind::Identity;
  double rho = 0.0;
  Eigen::MatrixXd matrix;
  std::string describe() const;
  /// Dense d x d matrix; throws InvalidSpec if a supplied matrix has the wrong size.
  Eigen::MatrixXd build(Eigen::Index d) const;
};

/// "identity" | "ar1(rho)" | "exchangeable(rho)" | "file(path.csv)".
CovSpec parse_cov_spec(std::string_view text);

struct DesignSpec {
  DesignFamily family = DesignFamily::Iid;
  Eigen::Index n = 0;
  /// Total column count, including the intercept when present.
  Eigen::Index p = 0;
  bool include_intercept = false;
  std::uint64_t seed = 0;
  /// Entries of iid designs and the base entries of elliptical designs.
  EntryDist dist;
  /// Row factors zeta_i of elliptical designs.
  EntryDist factor_dist;
  /// With 0 < truncate < 0.5, |zeta_i| is drawn from the quantiles of |F|
  /// between truncate and 1 - truncate, which bounds it away from 0 and oo.
  double truncate = 0.0;
  CovSpec lambda;
  CovSpec sigma;
  /// ANOVA group sizes; a shorter list is repeated up to length p.
  std::vector<Eigen::Index> group_sizes;
  /// Partial Hadamard without intercept: skip the all-ones column when sampling.
  bool hadamard_exclude_constant = false;
  /// Fixed designs: CSV file; the intercept column is prepended when requested.
  std::string path;
  /// Coordinates of interest (0-based); empty means all non-intercept columns.
  std::vector<Eigen::Index> Jn;

  std::string describe() const;
};

/// Parses a family string: "iid(gaussian)", "iid(t(2))", "elliptical(factor=t(2),
/// entries=gaussian, truncate=0.01)", "matrix_normal(lambda=ar1(0.3), sigma=identity)",
/// "hadamard", "anova([2,4,9])", "fixed(X.csv)". Dimensions come separately.
DesignSpec parse_design_spec(std::string_view family, Eigen::Index n, Eigen::Index p,
                             std::uint64_t seed, bool include_intercept = false);

/// Sylvester Hadamard matrix of order n (a power of two), integer entries.
Eigen::MatrixXi sylvester_hadamard(Eigen::Index n);

/// Deterministic in the seed. Throws InvalidSpec on dimension or SPD violations.
DesignMatrix generate(const DesignSpec& spec);

/// S_j = ||e_j^T (X^T X)^{-1} X^T||_inf / ||e_j^T (X^T X)^{-1} X^T||_2 for j in Jn.
std::vector<double> s_j(const DesignMatrix& design);

/// Extreme eigenvalues of (1/n) X_J^T (I - P) X_J with P the projection onto
/// the span of the remaining columns (rank-revealing, so X_{J^c} may be deficient).
std::pair<double, double> restricted_eigenvalues(const Eigen::MatrixXd& X,
                                                 const std::vector<Eigen::Index>& J);

struct Verdict {
  std::string name;
  /// "pass", "warn" or "fail".
  std::string status;
  double value = 0.0;
  double threshold = 0.0;
  std::string note;
};

struct AssumptionThresholds {
  double lambda_minus_min = 0.01;
  /// lambda_+ <= lambda_plus_log_power-th power of log n.
  double lambda_plus_log_power = 2.0;
  /// A4 ratio >= a4_factor * min Var(eps).
  double a4_factor = 0.1;
  /// E Delta_C^8 <= (delta_c_factor * sqrt(log n))^8.
  double delta_c_factor = 6.0;
  /// max_j max_i |(G_[j]X_j)_i| / ||G_[j]X_j|| <= factor * sqrt(2 log(n |Jn|) / (n - p + 1)).
  double contrast_factor = 2.0;
  /// Warn when a Monte Carlo standard error exceeds this fraction of its estimate.
  double max_relative_se = 0.2;
};

struct AssumptionOptions {
  int qj_reps = 200;
  int delta_reps = 10;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  SolverOptions solver;
  AssumptionThresholds thresholds;
};

struct AssumptionReport {
  Eigen::Index n = 0, p = 0;
  std::vector<Eigen::Index> coords;
  double lambda_plus = 0.0, lambda_minus = 0.0;
  double lambda_tilde_plus = 0.0, lambda_tilde_minus = 0.0;
  std::vector<double> a4_ratio_per_j;
  std::vector<double> a4_ratio_se;
  double delta_c_moment = 0.0;
  double delta_c_moment_se = 0.0;
  double delta_c_max = 0.0;
  /// Largest normalized contrast concentration over draws and j.
  double contrast_concentration = 0.0;
  std::vector<double> sj;
  std::vector<Verdict> verdicts;
  std::vector<std::string> notes;

  const Verdict* find(std::string_view name) const;
};

/// Raw diagnostics plus heuristic verdicts for A3, A3*, A4 and A5. Monte
/// Carlo parts are skipped when the corresponding reps are 0.
AssumptionReport check_assumptions(const DesignMatrix& design, const LossSpec& loss,
                                   const ErrorModel& errors, const AssumptionOptions& opts = {});

}  // namespace mestlab
