#include "mestlab/mestimator.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <string>

namespace mestlab {

struct DesignMatrix::Cache {
  std::once_flag once;
  double ratio = 0.0;
};

namespace {

std::vector<Eigen::Index> normalize_Jn(Eigen::Index p, bool has_intercept,
                                       std::vector<Eigen::Index> Jn) {
  if (Jn.empty()) {
    for (Eigen::Index j = has_intercept ? 1 : 0; j < p; ++j) Jn.push_back(j);
  }
  for (Eigen::Index j : Jn) {
    if (j < 0 || j >= p) throw InvalidSpec("coordinate " + std::to_string(j + 1) + " out of range");
    if (has_intercept && j == 0) throw InvalidSpec("coordinates of interest exclude the intercept");
  }
  std::vector<Eigen::Index> sorted = Jn;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvalidSpec("duplicate coordinate of interest");
  }
  if (Jn.empty()) throw InvalidSpec("no coordinates of interest");
  return Jn;
}

}  // namespace

DesignMatrix::DesignMatrix(Eigen::MatrixXd X, bool has_intercept, std::vector<Eigen::Index> Jn)
    : X_(std::move(X)), has_intercept_(has_intercept), cache_(std::make_shared<Cache>()) {
  if (X_.cols() < 1) throw InvalidSpec("design must have at least one column");
  if (X_.rows() < X_.cols()) {
    throw InvalidSpec("design has n = " + std::to_string(X_.rows()) + " < p = " +
                      std::to_string(X_.cols()));
  }
  if (!X_.allFinite()) throw InvalidSpec("design contains non-finite entries");
  if (has_intercept_ && !(X_.col(0).array() == 1.0).all()) {
    throw InvalidSpec("intercept column is not all ones");
  }
  Jn_ = normalize_Jn(X_.cols(), has_intercept_, std::move(Jn));
}

DesignMatrix DesignMatrix::with_Jn(std::vector<Eigen::Index> Jn) const {
  DesignMatrix copy = *this;
  copy.Jn_ = normalize_Jn(p(), has_intercept_, std::move(Jn));
  return copy;
}

double DesignMatrix::singular_value_ratio() const {
  std::call_once(cache_->once, [this] {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X_);
    const auto& s = svd.singularValues();
    cache_->ratio = s(0) > 0.0 ? s(s.size() - 1) / s(0) : 0.0;
  });
  return cache_->ratio;
}

void DesignMatrix::require_full_rank(double rank_tol) const {
  const double ratio = singular_value_ratio();
  if (!(ratio >= rank_tol)) {
    throw RankDeficient("design is rank deficient: sigma_min/sigma_max = " +
                        std::to_string(ratio) + " < rank tolerance " + std::to_string(rank_tol));
  }
}

Eigen::MatrixXd drop_column(const Eigen::MatrixXd& X, Eigen::Index j) {
  Eigen::MatrixXd out(X.rows(), X.cols() - 1);
  out.leftCols(j) = X.leftCols(j);
  out.rightCols(X.cols() - j - 1) = X.rightCols(X.cols() - j - 1);
  return out;
}

Eigen::MatrixXd weighted_gram(const Eigen::MatrixXd& X, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd W = X.array().colwise() * w.array().sqrt();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(X.cols(), X.cols());
  G.selfadjointView<Eigen::Lower>().rankUpdate(W.transpose());
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
  return G;
}

std::pair<double, double> gram_extreme_eigenvalues(const Eigen::MatrixXd& X) {
  const Eigen::MatrixXd G = weighted_gram(X, Eigen::VectorXd::Ones(X.rows())) /
                            static_cast<double>(X.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G, Eigen::EigenvaluesOnly);
  return {eig.eigenvalues()(0), eig.eigenvalues()(G.rows() - 1)};
}

namespace {

double mean_rho(const LossSpec& loss, const Eigen::VectorXd& r) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) s += loss.rho(r(i));
  return s / static_cast<double>(r.size());
}

// (1/n) sum_i [rho(r_i - d_i) - rho(r_i)]. Small moves use three-point
// Gauss-Legendre on -int psi, which keeps the difference accurate when it
// is far below the rounding error of the objective.
double mean_rho_change(const LossSpec& loss, const Eigen::VectorXd& r, const Eigen::VectorXd& d) {
  static const double node = std::sqrt(0.6);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double a = r(i), h = -d(i);
    if (std::abs(h) > 1e-3) {
      sum += loss.rho(a + h) - loss.rho(a);
    } else {
      const double m = a + 0.5 * h;
      sum += 0.5 * h *
             ((5.0 / 9.0) * (loss.psi(m - 0.5 * h * node) + loss.psi(m + 0.5 * h * node)) +
              (8.0 / 9.0) * loss.psi(m));
    }
  }
  return sum / static_cast<double>(r.size());
}

Eigen::VectorXd apply_psi(const LossSpec& loss, const Eigen::VectorXd& r) {
  return r.unaryExpr([&](double x) { return loss.psi(x); });
}

Eigen::VectorXd apply_psi1(const LossSpec& loss, const Eigen::VectorXd& r) {
  return r.unaryExpr([&](double x) { return loss.psi1(x); });
}

void check_response(Eigen::Index n, const Eigen::VectorXd& y) {
  if (y.size() != n) {
    throw InvalidSpec("response has length " + std::to_string(y.size()) + ", design has " +
                      std::to_string(n) + " rows");
  }
  if (!y.allFinite()) throw InvalidSpec("response contains non-finite entries");
}

// Direction (X^T D X)^{-1} X^T psi and the squared decrement g^T d / n.
std::pair<Eigen::VectorXd, double> solve_newton(const Eigen::MatrixXd& X, const Eigen::VectorXd& d,
                                                const Eigen::VectorXd& score) {
  Eigen::LLT<Eigen::MatrixXd> llt(weighted_gram(X, d));
  if (llt.info() != Eigen::Success) {
    throw FactorizationFailure("X^T D X is not numerically positive definite");
  }
  Eigen::VectorXd dir = llt.solve(score);
  const double dec2 = std::max(0.0, score.dot(dir)) / static_cast<double>(X.rows());
  return {std::move(dir), dec2};
}

}  // namespace

double objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LossSpec& loss,
                 const Eigen::VectorXd& beta) {
  if (X.cols() == 0) return mean_rho(loss, y);
  return mean_rho(loss, y - X * beta);
}

double objective(const DesignMatrix& design, const Eigen::VectorXd& y, const LossSpec& loss,
                 const Eigen::VectorXd& beta) {
  return objective(design.X(), y, loss, beta);
}

NewtonStep newton_step(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LossSpec& loss,
                       const Eigen::VectorXd& beta) {
  const Eigen::VectorXd r = y - X * beta;
  auto [dir, dec2] = solve_newton(X, apply_psi1(loss, r), X.transpose() * apply_psi(loss, r));
  return {std::move(dir), std::sqrt(dec2)};
}

NewtonStep newton_step(const DesignMatrix& design, const Eigen::VectorXd& y,
                       const LossSpec& loss, const Eigen::VectorXd& beta) {
  check_response(design.n(), y);
  return newton_step(design.X(), y, loss, beta);
}

FitResult fit_matrix(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LossSpec& loss,
                     const SolverOptions& opts, const Eigen::VectorXd* warm_start) {
  check_response(X.rows(), y);
  const double n = static_cast<double>(X.rows());
  const Eigen::Index p = X.cols();

  FitResult out;
  out.beta_hat = warm_start ? *warm_start : Eigen::VectorXd::Zero(p);
  if (out.beta_hat.size() != p) throw InvalidSpec("warm start has the wrong length");

  auto finish = [&](const Eigen::VectorXd& r, const Eigen::VectorXd& psi_r, double obj) {
    out.residuals = r;
    out.d_weights = apply_psi1(loss, r);
    out.dtilde_weights = r.unaryExpr([&](double x) { return loss.psi2(x); });
    out.objective = obj;
    out.grad_norm = p == 0 ? 0.0 : (X.transpose() * psi_r).norm() / n;
  };

  if (p == 0) {
    finish(y, apply_psi(loss, y), mean_rho(loss, y));
    out.converged = true;
    return out;
  }

  out.grad_scale = 1.0 + (X.transpose() * apply_psi(loss, y)).norm() / n;
  const double threshold = opts.tol * out.grad_scale;

  Eigen::VectorXd r = y - X * out.beta_hat;
  Eigen::VectorXd psi_r = apply_psi(loss, r);
  double obj = mean_rho(loss, r);

  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd score = X.transpose() * psi_r;
    const double grad = score.norm() / n;
    if (grad <= threshold) {
      out.iterations = iter;
      out.converged = true;
      break;
    }
    if (iter >= opts.max_iter) {
      out.iterations = iter;
      finish(r, psi_r, obj);
      throw NoConvergence("Newton solver hit the iteration cap (" + std::to_string(opts.max_iter) +
                              ") with gradient norm " + std::to_string(grad),
                          std::move(out));
    }
    auto [dir, dec2] = solve_newton(X, apply_psi1(loss, r), score);
    const Eigen::VectorXd Xdir = X * dir;
    // Armijo on the objective; the directional derivative is -dec2.
    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd r_new;
    double change = 0.0;
    for (int h = 0; h <= opts.max_halvings; ++h, t *= 0.5) {
      const Eigen::VectorXd step = t * Xdir;
      change = mean_rho_change(loss, r, step);
      if (change <= -opts.armijo_c * t * dec2) {
        r_new = r - step;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.iterations = iter;
      finish(r, psi_r, obj);
      throw NoConvergence("line search failed at gradient norm " + std::to_string(grad),
                          std::move(out));
    }
    out.beta_hat += t * dir;
    r = std::move(r_new);
    psi_r = apply_psi(loss, r);
    obj = mean_rho(loss, r);
    out.trace.push_back({obj, grad, std::sqrt(dec2), t, -change});
  }
  finish(r, psi_r, obj);
  return out;
}

FitResult fit(const DesignMatrix& design, const Eigen::VectorXd& y, const LossSpec& loss,
              const SolverOptions& opts, const Eigen::VectorXd* warm_start) {
  check_response(design.n(), y);
  if (opts.check_rank) design.require_full_rank(opts.rank_tol);
  return fit_matrix(design.X(), y, loss, opts, warm_start);
}

}  // namespace mestlab
