#include "mestlab/error_models.hpp"

#include <cmath>
#include <sstream>

#include "mestlab/errors.hpp"
#include "mestlab/io.hpp"
#include "mestlab/stats.hpp"

namespace mestlab {

std::string ErrorModel::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind) {
    case ErrorKind::Gaussian:
      os << "gaussian(" << sigma << ")";
      break;
    case ErrorKind::StudentT:
      os << "t(" << df << ")";
      break;
    case ErrorKind::Cauchy:
      os << "cauchy";
      break;
    case ErrorKind::Uniform01:
      os << "uniform01";
      break;
    case ErrorKind::CustomTransform:
      os << label;
      break;
  }
  return os.str();
}

ErrorModel make_gaussian(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidModel("gaussian: sigma must be positive");
  ErrorModel m;
  m.kind = ErrorKind::Gaussian;
  m.sigma = sigma;
  m.c1 = sigma;
  m.c2 = 0.0;
  m.min_var = sigma * sigma;
  m.symmetric = true;
  return m;
}

ErrorModel make_student_t(double df) {
  if (!(df > 0.0) || !std::isfinite(df)) throw InvalidModel("t: degrees of freedom must be positive");
  ErrorModel m;
  m.kind = ErrorKind::StudentT;
  m.df = df;
  if (df > 2.0) m.min_var = df / (df - 2.0);
  m.symmetric = true;
  return m;
}

ErrorModel make_cauchy() {
  ErrorModel m;
  m.kind = ErrorKind::Cauchy;
  m.symmetric = true;
  return m;
}

ErrorModel make_uniform01() {
  ErrorModel m;
  m.kind = ErrorKind::Uniform01;
  m.c1 = stats::normal_pdf(0.0);
  // sup |phi'(w)| = sup |w phi(w)|, attained at w = 1.
  m.c2 = stats::normal_pdf(1.0);
  m.min_var = 1.0 / 12.0;
  m.symmetric = false;
  return m;
}

ErrorModel make_custom_transform(std::function<double(double)> u, double c1, double c2,
                                 std::optional<double> min_var, bool symmetric,
                                 std::string label) {
  if (!u) throw InvalidModel("custom transform: missing function");
  if (!(c1 > 0.0) || !std::isfinite(c1) || !(c2 > 0.0) || !std::isfinite(c2)) {
    throw InvalidModel("custom transform: c1 and c2 must be finite and positive");
  }
  ErrorModel m;
  m.kind = ErrorKind::CustomTransform;
  m.u = std::move(u);
  m.c1 = c1;
  m.c2 = c2;
  m.min_var = min_var;
  m.symmetric = symmetric;
  m.label = std::move(label);
  return m;
}

ErrorModel parse_error_model(std::string_view text) {
  const io::CallSpec call = io::parse_call(text);
  if (call.name == "gaussian" || call.name == "normal") {
    call.require_keys({"sigma"});
    return make_gaussian(call.get_double("sigma", 0, 1.0));
  }
  if (call.name == "t" || call.name == "student_t") {
    call.require_keys({"df"});
    const auto df = call.get("df", 0);
    if (!df) throw ParseError("t errors need degrees of freedom, e.g. t(3)");
    return make_student_t(io::parse_double(*df));
  }
  if (call.name == "cauchy") {
    if (!call.args.empty()) throw ParseError("cauchy takes no arguments");
    return make_cauchy();
  }
  if (call.name == "uniform01" || call.name == "uniform") {
    if (!call.args.empty()) throw ParseError("uniform01 takes no arguments");
    return make_uniform01();
  }
  throw ParseError("unknown error model '" + call.name +
                   "' (expected gaussian, t, cauchy, uniform01)");
}

double draw_one(const ErrorModel& model, CounterRng& rng) {
  const double v = rng.uniform();
  switch (model.kind) {
    case ErrorKind::Gaussian:
      return model.sigma * stats::normal_quantile(v);
    case ErrorKind::StudentT:
      return stats::student_t_quantile(model.df, v);
    case ErrorKind::Cauchy:
      return std::tan(M_PI * (v - 0.5));
    case ErrorKind::Uniform01:
      return stats::normal_cdf(stats::normal_quantile(v));
    case ErrorKind::CustomTransform:
      return model.u(stats::normal_quantile(v));
  }
  return 0.0;
}

Eigen::VectorXd draw(const ErrorModel& model, Eigen::Index n, CounterRng& rng) {
  if (n < 1) throw InvalidModel("draw: n must be at least 1");
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = draw_one(model, rng);
  return out;
}

Eigen::VectorXd draw(const ErrorModel& model, Eigen::Index n, std::uint64_t seed,
                     std::initializer_list<std::uint64_t> path) {
  CounterRng rng(seed, path);
  return draw(model, n, rng);
}

}  // namespace mestlab
