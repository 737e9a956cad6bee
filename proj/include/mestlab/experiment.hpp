#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mestlab/design_suite.hpp"
#include "mestlab/error_models.hpp"
#include "mestlab/io.hpp"
#include "mestlab/loss.hpp"
#include "mestlab/mestimator.hpp"

namespace mestlab {

struct ExperimentConfig {
  /// Family string as accepted by parse_design_spec; dimensions come from n_list and kappa.
  std::string design = "iid(gaussian)";
  bool include_intercept = false;
  ErrorModel errors = make_gaussian(1.0);
  LossSpec loss = make_smoothed_huber();
  std::vector<Eigen::Index> n_list{100};
  double kappa = 0.5;
  int outer_reps = 50;
  int inner_reps = 300;
  /// 0-based columns of interest; empty means the first non-intercept column.
  std::vector<Eigen::Index> coords;
  double alpha = 0.05;
  bool bonferroni = false;
  std::uint64_t master_seed = 0;
  unsigned threads = 0;
  SolverOptions solver;
  /// Kolmogorov-Smirnov comparison: small n0, large n and K replications.
  Eigen::Index ks_n0 = 50;
  Eigen::Index ks_n = 500;
  int ks_reps = 100;

  /// floor(kappa * n), the predictor count used for sample size n.
  Eigen::Index p_for(Eigen::Index n) const;
  std::vector<Eigen::Index> resolved_coords() const;
  /// Throws InvalidSpec on violated invariants.
  void validate() const;
  /// Resolved settings as ordered key/value pairs, for manifests.
  std::vector<std::pair<std::string, std::string>> echo() const;
};

/// Reads the plain-text key/value format; unknown keys raise ParseError.
/// Keys: design, intercept, errors, loss, n, kappa, outer_reps, inner_reps,
/// coords (1-based, e.g. "1..10"), alpha, bonferroni, seed, threads,
/// tol, max_iter, ks_n0, ks_n, ks_reps.
ExperimentConfig load_experiment_config(const io::KeyValueConfig& cfg);

struct Summary {
  double mean = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, min = 0.0, max = 0.0;
};
Summary summarize(const std::vector<double>& xs);

/// Coverage results of one sample size.
struct CoverageCell {
  Eigen::Index n = 0, p = 0;
  std::vector<Eigen::Index> coords;
  /// outer_reps x |coords|.
  Eigen::MatrixXd per_design_coverage;
  Eigen::MatrixXd sd_hat;
  Eigen::MatrixXd mean_beta;
  /// Marginal coverage of each coordinate at the Bonferroni level.
  Eigen::MatrixXd bonferroni_marginal;
  /// Per design: minimum over coordinates, simultaneous coverage with
  /// Bonferroni intervals, and simultaneous coverage with level-alpha intervals.
  std::vector<double> min_coverage;
  std::vector<double> bonferroni_coverage;
  std::vector<double> simultaneous_coverage;
  long fits = 0;
  long failures = 0;
  bool valid = true;
  Summary coverage_summary;
  Summary min_summary;
  Summary bonferroni_summary;
};

struct CoverageReport {
  std::vector<CoverageCell> cells;
};

/// For each n: per outer replication draw one design, then |coords| blocks of
/// inner_reps error vectors; block b supplies the samples of coordinate b.
/// y = eps, the sd is the across-replication sample sd and the interval is
/// beta_hat_j +- z_{1 - alpha/2} sd.
CoverageReport run_coverage(const ExperimentConfig& config);

struct KsResult {
  /// sqrt(n m / (n + m)) * sup distance; sqrt(K/2) * sup for equal sizes.
  double statistic = 0.0;
  double sup_distance = 0.0;
};

/// Throws EmptySample if either sample is empty.
KsResult two_sample_ks(std::vector<double> a, std::vector<double> b);

struct KsReport {
  double kappa = 0.0;
  std::uint64_t seed = 0;
  Eigen::Index n0 = 0, p0 = 0, n1 = 0, p1 = 0, n2 = 0, p2 = 0;
  /// sqrt(n_r) * beta_hat_j over K replications for the three designs.
  std::vector<double> sample0, sample1, sample2;
  KsResult ks1, ks2;
  long failures = 0;
};

/// Three designs drawn once: (n0, kappa n0), (n, kappa n0) and (n, kappa n),
/// K fits each with y = eps; compares each large design with the small one.
KsReport run_ks_comparison(const ExperimentConfig& config, std::uint64_t seed);

/// Delete-one-observation jackknife: (n-1)/n sum_i (beta_(i),j - mean)^2.
std::vector<double> jackknife_variances(const DesignMatrix& design, const Eigen::VectorXd& y,
                                        const LossSpec& loss,
                                        const std::vector<Eigen::Index>& coords,
                                        const SolverOptions& opts = {}, unsigned threads = 0);
double jackknife_variance(const DesignMatrix& design, const Eigen::VectorXd& y,
                          const LossSpec& loss, Eigen::Index j, const SolverOptions& opts = {},
                          unsigned threads = 0);

/// CSV text of a coverage run: one row per (n, design rep, coord), and a summary.
std::string coverage_rows_csv(const ExperimentConfig& config, const CoverageReport& report);
std::string coverage_summary_csv(const ExperimentConfig& config, const CoverageReport& report);
std::string ks_csv(const std::vector<KsReport>& reports);
std::string ks_samples_csv(const std::vector<KsReport>& reports);

}  // namespace mestlab
