#include "mestlab/loss.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mestlab/errors.hpp"
#include "mestlab/io.hpp"

namespace mestlab {

namespace {

// Quintic smoothstep S(t) = 6t^5 - 15t^4 + 10t^3 and the pieces needed to
// integrate 1 - S twice.
double smoothstep(double t) {
  return std::clamp(t * t * t * (t * (6.0 * t - 15.0) + 10.0), 0.0, 1.0);
}
double smoothstep_d1(double t) { return 30.0 * t * t * (t - 1.0) * (t - 1.0); }
// int_0^t S
double smoothstep_i1(double t) { return t * t * t * t * (t * (t - 3.0) + 2.5); }
// int_0^t int_0^s S
double smoothstep_i2(double t) {
  const double t5 = t * t * t * t * t;
  return t5 * (t * (t / 7.0 - 0.5) + 0.5);
}

struct Derivs {
  double rho, psi, psi1, psi2;
};

// Smoothed Huber without the convexifying term, for x >= 0.
Derivs smoothed_huber_base(double k, double delta, double x) {
  const double a = k - delta;
  const double w = 2.0 * delta;
  if (x <= a) return {0.5 * x * x, x, 1.0, 0.0};
  if (x < k + delta) {
    const double t = (x - a) / w;
    return {0.5 * a * a + a * w * t + w * w * (0.5 * t * t - smoothstep_i2(t)),
            a + w * (t - smoothstep_i1(t)), 1.0 - smoothstep(t), -smoothstep_d1(t) / w};
  }
  const double rho_b = 0.5 * a * a + a * w + w * w * (0.5 - 1.0 / 7.0);
  return {rho_b + k * (x - (k + delta)), k, 0.0, 0.0};
}

// sqrt(delta^2 + x^2) - delta without the convexifying term, for x >= 0.
Derivs pseudo_l1_base(double delta, double x) {
  const double r2 = delta * delta + x * x;
  const double r = std::sqrt(r2);
  return {x * x / (r + delta), x / r, delta * delta / (r2 * r),
          -3.0 * delta * delta * x / (r2 * r2 * r)};
}

Derivs evaluate(const LossSpec& loss, double x) {
  const double ax = std::abs(x);
  Derivs d{};
  switch (loss.kind()) {
    case LossKind::Square:
      return {0.5 * x * x, x, 1.0, 0.0};
    case LossKind::SmoothedHuber:
      d = smoothed_huber_base(loss.k(), loss.delta(), ax);
      break;
    case LossKind::PseudoL1:
      d = pseudo_l1_base(loss.delta(), ax);
      break;
  }
  const double sign = x < 0.0 ? -1.0 : 1.0;
  return {d.rho + 0.5 * loss.eps() * x * x, sign * d.psi + loss.eps() * x, d.psi1 + loss.eps(),
          sign * d.psi2};
}

}  // namespace

double LossSpec::rho(double x) const noexcept { return evaluate(*this, x).rho; }
double LossSpec::psi(double x) const noexcept { return evaluate(*this, x).psi; }
double LossSpec::psi1(double x) const noexcept { return evaluate(*this, x).psi1; }
double LossSpec::psi2(double x) const noexcept { return evaluate(*this, x).psi2; }

double LossSpec::K3() const noexcept { return 2.0 * std::sqrt(K1_) * K2_; }

bool LossSpec::near_transition(double x, double margin) const noexcept {
  if (kind_ != LossKind::SmoothedHuber) return false;
  const double ax = std::abs(x);
  return std::abs(ax - (k_ - delta_)) <= margin || std::abs(ax - (k_ + delta_)) <= margin;
}

std::string LossSpec::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind_) {
    case LossKind::Square:
      return "square";
    case LossKind::SmoothedHuber:
      os << "huber(k=" << k_ << ", eps=" << eps_ << ", delta=" << delta_ << ")";
      break;
    case LossKind::PseudoL1:
      os << "pseudo_l1(delta=" << delta_ << ", eps=" << eps_ << ")";
      break;
  }
  return os.str();
}

// K2 = sup |psi''| / sqrt(psi'). A uniform scan over [-100, 100] is refined
// by dense scans where psi'' is non-zero, then by a local scan around the
// best point; the result is inflated by 1e-9 relative to cover rounding.
void LossSpec::measure_K2() {
  if (kind_ == LossKind::Square) {
    K2_ = 0.0;
    return;
  }
  double best = 0.0;
  double best_x = 0.0;
  auto scan = [&](double lo, double hi, long count) {
    const double step = (hi - lo) / static_cast<double>(count - 1);
    for (long i = 0; i < count; ++i) {
      const double x = lo + step * static_cast<double>(i);
      const double r = std::abs(psi2(x)) / std::sqrt(psi1(x));
      if (r > best) {
        best = r;
        best_x = x;
      }
    }
    return step;
  };
  scan(-100.0, 100.0, 1'000'001);
  double step = 0.0;
  if (kind_ == LossKind::SmoothedHuber) {
    step = scan(k_ - delta_, k_ + delta_, 200'001);
  } else {
    step = scan(0.0, 10.0 * delta_, 200'001);
  }
  const double centre = std::abs(best_x);
  scan(std::max(0.0, centre - 2.0 * step), centre + 2.0 * step, 100'001);
  K2_ = best * (1.0 + 1e-9);
}

LossSpec make_square() {
  LossSpec loss;
  loss.kind_ = LossKind::Square;
  loss.K0_ = 1.0;
  loss.K1_ = 1.0;
  loss.K2_ = 0.0;
  return loss;
}

LossSpec make_smoothed_huber(double k, double eps, double delta) {
  if (!(k > 0.0) || !std::isfinite(k)) throw InvalidSpec("huber: k must be positive");
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidSpec("huber: eps must lie in (0, 1)");
  if (!(delta > 0.0)) throw InvalidSpec("huber: delta must be positive");
  if (delta >= k) throw InvalidSpec("huber: delta must be smaller than k");
  LossSpec loss;
  loss.kind_ = LossKind::SmoothedHuber;
  loss.k_ = k;
  loss.eps_ = eps;
  loss.delta_ = delta;
  loss.K0_ = eps;
  loss.K1_ = 1.0 + eps;
  loss.measure_K2();
  return loss;
}

LossSpec make_pseudo_l1(double delta, double eps) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidSpec("pseudo_l1: delta must be positive");
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidSpec("pseudo_l1: eps must lie in (0, 1)");
  LossSpec loss;
  loss.kind_ = LossKind::PseudoL1;
  loss.delta_ = delta;
  loss.eps_ = eps;
  loss.K0_ = eps;
  loss.K1_ = 1.0 / delta + eps;
  loss.measure_K2();
  return loss;
}

LossSpec parse_loss(std::string_view text) {
  const io::CallSpec call = io::parse_call(text);
  try {
    if (call.name == "square" || call.name == "ls" || call.name == "l2") {
      if (!call.args.empty()) throw ParseError("square loss takes no arguments");
      return make_square();
    }
    if (call.name == "huber" || call.name == "smoothed_huber") {
      call.require_keys({"k", "eps", "delta"});
      return make_smoothed_huber(call.get_double("k", 0, 1.345), call.get_double("eps", 1, 0.05),
                                 call.get_double("delta", 2, 0.1));
    }
    if (call.name == "pseudo_l1" || call.name == "l1") {
      call.require_keys({"delta", "eps"});
      return make_pseudo_l1(call.get_double("delta", 0, 0.1), call.get_double("eps", 1, 0.05));
    }
  } catch (const InvalidSpec& e) {
    throw ParseError(std::string("loss '") + std::string(text) + "': " + e.what());
  }
  throw ParseError("unknown loss '" + call.name + "' (expected square, huber, pseudo_l1)");
}

double huber_reference_rho(double k, double x) noexcept {
  const double ax = std::abs(x);
  return ax <= k ? 0.5 * x * x : k * (ax - 0.5 * k);
}

double huber_reference_psi(double k, double x) noexcept {
  return std::clamp(x, -k, k);
}

}  // namespace mestlab
