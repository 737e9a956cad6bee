#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mestlab/errors.hpp"
#include "mestlab/sensitivity.hpp"
#include "mestlab/stats.hpp"
#include "oracles.hpp"

using namespace mestlab;

namespace {

SolverOptions tight() {
  SolverOptions o;
  o.tol = 1e-13;
  return o;
}

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& ref) {
  return (a - ref).norm() / ref.norm();
}

}  // namespace

TEST_CASE("square-loss gradient is the least-squares operator") {
  const Eigen::MatrixXd X = oracle::gaussian_matrix(30, 6, 1);
  const DesignMatrix d(X);
  const FitResult f = fit(d, oracle::gaussian_vector(30, 2), make_square());
  const Eigen::MatrixXd ref = (X.transpose() * X).inverse() * X.transpose();
  CHECK((gradient_beta(f, d) - ref).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(hessian_beta_j(f, d, 3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradient matches finite differences of refits") {
  std::mt19937_64 gen(3);
  const double h = 1e-5;
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd X = oracle::gaussian_matrix(40, 8, gen());
    const Eigen::VectorXd eps = 1.5 * oracle::gaussian_vector(40, gen());
    const LossSpec loss = rep % 4 == 3 ? make_pseudo_l1(0.5, 0.05) : make_smoothed_huber();
    const DesignMatrix d(X);
    const FitResult f = fit(d, eps, loss, tight());
    auto beta_of = [&](const Eigen::VectorXd& e) {
      return fit_matrix(X, e, loss, tight(), &f.beta_hat).beta_hat;
    };
    const Eigen::MatrixXd fd = oracle::jacobian_fd(beta_of, eps, h);
    CAPTURE(rep);
    CHECK(rel_err(gradient_beta(f, d), fd) <= 1e-5);
  }
}

TEST_CASE("gradient times X is the identity") {
  const Eigen::MatrixXd X = oracle::gaussian_matrix(60, 12, 5);
  const DesignMatrix d(X);
  const FitResult f = fit(d, oracle::t_vector(60, 6, 2.0), make_smoothed_huber());
  CHECK((gradient_beta(f, d) * X - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("G is a projection in the D metric") {
  const Eigen::MatrixXd X = oracle::gaussian_matrix(50, 10, 7);
  const DesignMatrix d(X);
  const FitResult f = fit(d, 2.0 * oracle::t_vector(50, 8, 3.0), make_smoothed_huber());
  const Eigen::MatrixXd G = projection_G(f, d);
  const Eigen::VectorXd s = f.d_weights.cwiseSqrt();
  const Eigen::MatrixXd P = s.asDiagonal() * G * s.cwiseInverse().asDiagonal();
  CHECK((P * P - P).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((G * X).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("hessian rows match finite differences of the gradient") {
  // wide blend so that many residuals see a non-zero psi''
  const LossSpec loss = make_smoothed_huber(1.0, 0.05, 0.6);
  std::mt19937_64 gen(11);
  const double h = 1e-5;
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::MatrixXd X = oracle::gaussian_matrix(20, 4, gen());
    const Eigen::VectorXd eps = oracle::gaussian_vector(20, gen());
    const DesignMatrix d(X);
    const FitResult f = fit(d, eps, loss, tight());
    for (Eigen::Index j = 0; j < 4; ++j) {
      const Eigen::MatrixXd H = hessian_beta_j(f, d, j);
      REQUIRE(H.cwiseAbs().maxCoeff() > 1e-3);
      CHECK((H - H.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      auto grad_row = [&](const Eigen::VectorXd& e) -> Eigen::VectorXd {
        const FitResult g = fit_matrix(X, e, loss, tight(), &f.beta_hat);
        return gradient_beta(g, d).row(j).transpose();
      };
      const Eigen::MatrixXd fd = oracle::jacobian_fd(grad_row, eps, h);
      CAPTURE(rep);
      CAPTURE(j);
      CHECK(rel_err(H, fd) <= 1e-4);
    }
  }
}

TEST_CASE("matrix-free linearization agrees with dense forms") {
  const LossSpec loss = make_smoothed_huber(1.0, 0.05, 0.6);
  const Eigen::MatrixXd X = oracle::gaussian_matrix(80, 20, 13);
  const DesignMatrix d(X);
  const FitResult f = fit(d, oracle::gaussian_vector(80, 14), loss);
  const FitLinearization lin(f, X);
  const Eigen::MatrixXd grad = gradient_beta(f, d);
  const Eigen::MatrixXd G = projection_G(f, d);
  const Eigen::VectorXd v = oracle::gaussian_vector(80, 15);
  CHECK((lin.gradient_row(5) - grad.row(5).transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((lin.apply_G(v) - G * v).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((lin.apply_GT(v) - G.transpose() * v).cwiseAbs().maxCoeff() <= 1e-10);
  for (Eigen::Index j : {0, 7, 19}) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian_beta_j(f, d, j), Eigen::EigenvaluesOnly);
    const double dense = eig.eigenvalues().cwiseAbs().maxCoeff();
    CHECK(lin.hessian_opnorm(j, {500, 1e-12}) == doctest::Approx(dense).epsilon(1e-5));
  }
}

TEST_CASE("gradient norm bound") {
  std::mt19937_64 gen(17);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::MatrixXd X = oracle::gaussian_matrix(100, 50, gen());
    const DesignMatrix d(X);
    const LossSpec loss = rep % 2 ? make_smoothed_huber() : make_pseudo_l1();
    const FitResult f = fit(d, oracle::t_vector(100, gen(), 2.0), loss);
    const double lm = gram_extreme_eigenvalues(X).first;
    const double bound = loss.K1() / (100.0 * loss.K0() * lm);
    const Eigen::MatrixXd grad = gradient_beta(f, d);
    CHECK(grad.rowwise().squaredNorm().maxCoeff() <= bound);
  }
}

TEST_CASE("sopi moments for the square loss") {
  const Eigen::MatrixXd X = oracle::gaussian_matrix(40, 8, 19);
  const DesignMatrix d(X);
  SopiOptions opts;
  opts.reps = 100;
  opts.seed = 3;
  const SopiReport rep = sopi_moments(d, make_square(), make_gaussian(), {0, 5}, opts);
  const Eigen::MatrixXd ls = (X.transpose() * X).inverse() * X.transpose();
  REQUIRE(rep.coords.size() == 2);
  CHECK(rep.coords[0].kappa2 == 0.0);
  CHECK(rep.coords[0].kappa1 == doctest::Approx(ls.row(0).norm()).epsilon(1e-12));
  CHECK(rep.coords[1].kappa1 == doctest::Approx(ls.row(5).norm()).epsilon(1e-12));
  REQUIRE(rep.coords[0].sopi_bound.has_value());
  CHECK(*rep.coords[0].sopi_bound == 0.0);
  CHECK(rep.failures == 0);
}

TEST_CASE("per-draw sopi bounds hold") {
  for (const LossSpec& loss : {make_smoothed_huber(), make_smoothed_huber(1.0, 0.1, 0.5), make_pseudo_l1()}) {
    const Eigen::MatrixXd X = oracle::gaussian_matrix(60, 20, 23);
    SopiOptions opts;
    opts.reps = 100;
    opts.seed = 9;
    const SopiReport rep = sopi_moments(DesignMatrix(X), loss, make_uniform01(), {0, 1, 2}, opts);
    for (const auto& m : rep.coords) {
      CAPTURE(loss.describe());
      CHECK(m.kappa1_violations == 0);
      CHECK(m.kappa0_violations == 0);
      CHECK(m.kappa2_violations == 0);
      CHECK(m.kappa0_mean_ratio <= 1.0);
      CHECK(m.kappa2 > 0.0);
      CHECK(m.sopi_bound.has_value());
      CHECK(*m.sopi_bound >= 0.0);
    }
  }
}

TEST_CASE("sopi_bound formula") {
  CHECK(sopi_bound(0, 0, 0, 1, 1, 1) == 0.0);
  CHECK(sopi_bound(1, 1, 1, 1, 1, 1) == doctest::Approx(4.0 * std::sqrt(5.0)).epsilon(1e-15));
  CHECK(sopi_bound(1, 1, 0, 1, 0, 2) == 0.0);
  CHECK_THROWS_AS(sopi_bound(1, 1, 1, 1, 1, 0.0), InvalidSpec);
  CHECK_THROWS_AS(sopi_bound(1, 1, 1, 1, 1, -1.0), InvalidSpec);
}

TEST_CASE("sopi options are validated") {
  SopiOptions opts;
  opts.reps = 99;
  const DesignMatrix d(oracle::gaussian_matrix(20, 3, 1));
  CHECK_THROWS_AS(sopi_moments(d, make_square(), make_gaussian(), {0}, opts), InvalidSpec);
  opts.reps = 100;
  CHECK_THROWS_AS(sopi_moments(d, make_square(), make_gaussian(), {3}, opts), InvalidSpec);
}

TEST_CASE("M_j scales like 1/n (heuristic ratio)") {
  std::vector<double> scaled;
  for (Eigen::Index n : {50, 200}) {
    const Eigen::MatrixXd X = oracle::gaussian_matrix(n, n / 2, 29 + n);
    SopiOptions opts;
    opts.reps = 100;
    opts.skip_hessian = true;
    std::vector<Eigen::Index> coords(10);
    for (int c = 0; c < 10; ++c) coords[c] = c;
    const SopiReport rep = sopi_moments(DesignMatrix(X), make_smoothed_huber(), make_gaussian(), coords, opts);
    std::vector<double> mj;
    for (const auto& m : rep.coords) mj.push_back(m.Mj * static_cast<double>(n));
    scaled.push_back(stats::median(mj));
  }
  CHECK(scaled[1] <= 3.0 * scaled[0]);
}

TEST_CASE("sopi moments do not depend on the thread count") {
  const DesignMatrix d(oracle::gaussian_matrix(40, 10, 31));
  SopiOptions a;
  a.reps = 100;
  a.threads = 1;
  SopiOptions b = a;
  b.threads = 4;
  const auto ra = sopi_moments(d, make_smoothed_huber(), make_gaussian(), {0, 3}, a);
  const auto rb = sopi_moments(d, make_smoothed_huber(), make_gaussian(), {0, 3}, b);
  for (int c = 0; c < 2; ++c) {
    CHECK(ra.coords[c].kappa0 == rb.coords[c].kappa0);
    CHECK(ra.coords[c].kappa2 == rb.coords[c].kappa2);
    CHECK(ra.coords[c].Mj == rb.coords[c].Mj);
    CHECK(ra.coords[c].var_hat == rb.coords[c].var_hat);
  }
}
