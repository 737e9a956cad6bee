#pragma once

#include <string>
#include <string_view>

namespace mestlab {

enum class LossKind { Square, SmoothedHuber, PseudoL1 };

/// A smooth, strongly convex, even loss rho with its derivatives
/// psi = rho', psi1 = psi', psi2 = psi''.
///
/// The curvature constants satisfy, for every real x,
///   K0 <= psi1(x) <= K1   and   |psi2(x)| <= K2 * sqrt(psi1(x)).
/// K2 is measured numerically at construction time.
///
/// Instances are immutable; use the make_* factories or parse_loss.
class LossSpec {
 public:
  LossKind kind() const noexcept { return kind_; }
  /// Huber transition point (SmoothedHuber only, 0 otherwise).
  double k() const noexcept { return k_; }
  /// Smoothing radius (SmoothedHuber and PseudoL1).
  double delta() const noexcept { return delta_; }
  /// Weight of the added eps * x^2 / 2 convexifying term.
  double eps() const noexcept { return eps_; }

  double K0() const noexcept { return K0_; }
  double K1() const noexcept { return K1_; }
  double K2() const noexcept { return K2_; }
  /// Lipschitz constant of psi': 2 sqrt(K1) K2.
  double K3() const noexcept;

  double rho(double x) const noexcept;
  double psi(double x) const noexcept;
  double psi1(double x) const noexcept;
  double psi2(double x) const noexcept;

  /// Canonical text form, accepted back by parse_loss.
  std::string describe() const;

  /// True when the transition region of the blend contains x, widened by
  /// `margin`. Finite-difference checks skip these points.
  bool near_transition(double x, double margin) const noexcept;

 private:
  friend LossSpec make_square();
  friend LossSpec make_smoothed_huber(double k, double eps, double delta);
  friend LossSpec make_pseudo_l1(double delta, double eps);

  LossSpec() = default;
  void measure_K2();

  LossKind kind_ = LossKind::Square;
  double k_ = 0.0;
  double delta_ = 0.0;
  double eps_ = 0.0;
  double K0_ = 1.0;
  double K1_ = 1.0;
  double K2_ = 0.0;
};

/// rho(x) = x^2 / 2.
LossSpec make_square();

/// Huber's loss with the kink at +-k replaced by a quintic blend on
/// [k - delta, k + delta] (psi' falls from 1 to 0 along a C^2 smoothstep),
/// plus eps * x^2 / 2. Outside the blend psi equals Huber's psi plus eps*x;
/// rho differs from Huber's rho there by a constant offset (a convex blend
/// cannot match both psi and rho). K0 = eps, K1 = 1 + eps.
/// Throws InvalidSpec unless k > 0, 0 < eps < 1 and 0 < delta < k.
LossSpec make_smoothed_huber(double k = 1.345, double eps = 0.05, double delta = 0.1);

/// Smoothed absolute value sqrt(delta^2 + x^2) - delta, plus eps * x^2 / 2.
/// K0 = eps, K1 = 1/delta + eps.
LossSpec make_pseudo_l1(double delta = 0.1, double eps = 0.05);

/// Parses "square", "huber", "huber(1.345)", "huber(k=1.345, eps=0.05, delta=0.1)",
/// "pseudo_l1(delta=0.1, eps=0.05)" (alias "l1"). Throws ParseError.
LossSpec parse_loss(std::string_view text);

/// Exact (non-smooth) Huber loss, kept as a reference evaluator.
double huber_reference_rho(double k, double x) noexcept;
double huber_reference_psi(double k, double x) noexcept;

}  // namespace mestlab
