#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "mestlab/rng.hpp"

namespace mestlab {

enum class ErrorKind { Gaussian, StudentT, Cauchy, Uniform01, CustomTransform };

/// Distribution of the i.i.d. error entries. Transform models draw
/// eps_i = u(W_i) with W_i standard gaussian; c1 and c2 bound |u'| and |u''|.
/// Heavy-tailed kinds are sampled by inverse CDF and carry no (c1, c2).
struct ErrorModel {
  ErrorKind kind = ErrorKind::Gaussian;
  double sigma = 1.0;
  double df = 0.0;
  std::optional<double> c1;
  std::optional<double> c2;
  std::optional<double> min_var;
  bool symmetric = true;
  std::function<double(double)> u;
  std::string label;

  /// False when the model lies outside the smooth-transform assumption.
  bool has_transform_constants() const { return c1.has_value() && c2.has_value(); }
  std::string describe() const;
};

ErrorModel make_gaussian(double sigma = 1.0);
ErrorModel make_student_t(double df);
ErrorModel make_cauchy();
/// u = Phi, so draws are uniform on (0, 1).
ErrorModel make_uniform01();
/// Arbitrary smooth transform of a standard gaussian; c1, c2 must be
/// finite and positive.
ErrorModel make_custom_transform(std::function<double(double)> u, double c1, double c2,
                                 std::optional<double> min_var, bool symmetric,
                                 std::string label = "custom");

/// "gaussian(1.0)", "gaussian(sigma=2)", "normal", "t(2)", "t(df=3)",
/// "cauchy", "uniform01". Throws ParseError / InvalidModel.
ErrorModel parse_error_model(std::string_view text);

/// Single variate from the next position of `rng`.
double draw_one(const ErrorModel& model, CounterRng& rng);

/// n i.i.d. draws from the stream keyed by (seed, path).
Eigen::VectorXd draw(const ErrorModel& model, Eigen::Index n, std::uint64_t seed,
                     std::initializer_list<std::uint64_t> path = {});
Eigen::VectorXd draw(const ErrorModel& model, Eigen::Index n, CounterRng& rng);

}  // namespace mestlab
