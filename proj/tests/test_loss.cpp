#include <doctest.h>

#include <cmath>
#include <vector>

#include "mestlab/errors.hpp"
#include "mestlab/loss.hpp"

using namespace mestlab;

namespace {

std::vector<LossSpec> all_losses() {
  return {make_square(), make_smoothed_huber(), make_smoothed_huber(1.0, 0.2, 0.5),
          make_smoothed_huber(3.0, 0.01, 0.05), make_pseudo_l1(), make_pseudo_l1(1.0, 0.3)};
}

// Distance from x to the nearest point where the blend switches pieces.
double distance_to_joint(const LossSpec& loss, double x) {
  if (loss.kind() != LossKind::SmoothedHuber) return 1e300;
  const double ax = std::abs(x);
  return std::min(std::abs(ax - (loss.k() - loss.delta())), std::abs(ax - (loss.k() + loss.delta())));
}

}  // namespace

TEST_CASE("square loss values") {
  const LossSpec sq = make_square();
  CHECK(sq.rho(3.0) == 4.5);
  CHECK(sq.psi(5.0) == 5.0);
  CHECK(sq.psi1(5.0) == 1.0);
  CHECK(sq.psi2(5.0) == 0.0);
  CHECK(sq.K0() == 1.0);
  CHECK(sq.K1() == 1.0);
  CHECK(sq.K2() == 0.0);
}

TEST_CASE("exact huber reference") {
  CHECK(huber_reference_rho(1.345, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(huber_reference_rho(1.345, 2.0) == doctest::Approx(1.7854875).epsilon(1e-14));
  CHECK(huber_reference_rho(1.345, -2.0) == doctest::Approx(1.7854875).epsilon(1e-14));
  CHECK(huber_reference_psi(1.345, 5.0) == 1.345);
  CHECK(huber_reference_psi(1.345, -0.3) == -0.3);
}

TEST_CASE("smoothed huber at the regions") {
  const LossSpec h = make_smoothed_huber(1.345, 0.05, 0.1);
  CHECK(h.psi(0.0) == 0.0);
  CHECK(h.rho(0.0) == 0.0);
  CHECK(h.psi1(0.0) == doctest::Approx(1.05).epsilon(1e-15));
  CHECK(h.psi1(10.0) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(h.K0() == 0.05);
  CHECK(h.K1() == 1.05);
  // quadratic region matches huber + eps x^2/2
  CHECK(h.rho(1.0) == doctest::Approx(0.5 * 1.05).epsilon(1e-15));
  // linear region: psi = k + eps x
  CHECK(h.psi(4.0) == doctest::Approx(1.345 + 0.05 * 4.0).epsilon(1e-14));
  CHECK(h.psi(-4.0) == doctest::Approx(-(1.345 + 0.05 * 4.0)).epsilon(1e-14));
  // rho differs from exact huber by a constant outside the blend
  const double off5 = h.rho(5.0) - 0.025 * 25.0 - huber_reference_rho(1.345, 5.0);
  const double off9 = h.rho(9.0) - 0.025 * 81.0 - huber_reference_rho(1.345, 9.0);
  CHECK(off5 == doctest::Approx(off9).epsilon(1e-12));
  CHECK(std::abs(off5) < 1e-2);
}

TEST_CASE("pseudo l1 values") {
  const LossSpec l = make_pseudo_l1(0.1, 0.05);
  CHECK(l.rho(0.0) == 0.0);
  CHECK(l.psi(0.0) == 0.0);
  CHECK(l.rho(2.0) == doctest::Approx(std::sqrt(0.01 + 4.0) - 0.1 + 0.1).epsilon(1e-14));
  CHECK(l.psi1(0.0) == doctest::Approx(10.05).epsilon(1e-14));
  CHECK(l.K1() == doctest::Approx(10.05).epsilon(1e-15));
}

TEST_CASE("factories reject invalid parameters") {
  CHECK_THROWS_AS(make_smoothed_huber(1.0, 0.05, 1.0), InvalidSpec);
  CHECK_THROWS_AS(make_smoothed_huber(1.0, 0.05, 2.0), InvalidSpec);
  CHECK_THROWS_AS(make_smoothed_huber(-1.0, 0.05, 0.1), InvalidSpec);
  CHECK_THROWS_AS(make_smoothed_huber(1.0, 0.0, 0.1), InvalidSpec);
  CHECK_THROWS_AS(make_smoothed_huber(1.0, 1.0, 0.1), InvalidSpec);
  CHECK_THROWS_AS(make_smoothed_huber(1.0, 0.05, 0.0), InvalidSpec);
  CHECK_THROWS_AS(make_pseudo_l1(0.0, 0.05), InvalidSpec);
  CHECK_THROWS_AS(make_pseudo_l1(0.1, 0.0), InvalidSpec);
}

TEST_CASE("curvature constants hold on a dense grid") {
  // 10^6 + 1 points on [-100, 100]
  for (const LossSpec& loss : all_losses()) {
    CAPTURE(loss.describe());
    int violations = 0;
    double grid_max = 0.0;
    for (long i = 0; i <= 1'000'000; ++i) {
      const double x = -100.0 + 200.0 * static_cast<double>(i) / 1e6;
      const double d1 = loss.psi1(x);
      if (d1 < loss.K0() || d1 > loss.K1()) ++violations;
      const double r = std::abs(loss.psi2(x)) / std::sqrt(d1);
      grid_max = std::max(grid_max, r);
      if (std::abs(loss.psi2(x)) > loss.K2() * std::sqrt(d1)) ++violations;
    }
    CHECK(violations == 0);
    CHECK(loss.K2() >= grid_max);
  }
}

TEST_CASE("reported K2 dominates a fine scan of the blend") {
  for (const LossSpec& loss : all_losses()) {
    if (loss.kind() == LossKind::Square) continue;
    const double lo = loss.kind() == LossKind::SmoothedHuber ? loss.k() - loss.delta() : 0.0;
    const double hi = loss.kind() == LossKind::SmoothedHuber ? loss.k() + loss.delta() : 10.0 * loss.delta();
    double grid_max = 0.0;
    for (long i = 0; i <= 1'000'000; ++i) {
      const double x = lo + (hi - lo) * static_cast<double>(i) / 1e6;
      grid_max = std::max(grid_max, std::abs(loss.psi2(x)) / std::sqrt(loss.psi1(x)));
    }
    CAPTURE(loss.describe());
    CHECK(loss.K2() >= grid_max);
    CHECK(loss.K2() <= grid_max * 1.001);
  }
}

TEST_CASE("symmetry to machine precision") {
  for (const LossSpec& loss : all_losses()) {
    for (int i = 0; i <= 20000; ++i) {
      const double x = 20.0 * i / 20000.0;
      CHECK(std::abs(loss.rho(x) - loss.rho(-x)) <= 1e-12);
      CHECK(std::abs(loss.psi(x) + loss.psi(-x)) <= 1e-12);
      CHECK(std::abs(loss.psi1(x) - loss.psi1(-x)) <= 1e-12);
      CHECK(std::abs(loss.psi2(x) + loss.psi2(-x)) <= 1e-12);
    }
  }
}

TEST_CASE("derivatives agree with central differences") {
  const double h = 1e-5;
  for (const LossSpec& loss : all_losses()) {
    CAPTURE(loss.describe());
    int bad = 0;
    auto check = [&](double x) {
      if (distance_to_joint(loss, x) < 10.0 * h) return;
      const double fd0 = (loss.rho(x + h) - loss.rho(x - h)) / (2.0 * h);
      const double fd1 = (loss.psi(x + h) - loss.psi(x - h)) / (2.0 * h);
      const double fd2 = (loss.psi1(x + h) - loss.psi1(x - h)) / (2.0 * h);
      if (std::abs(loss.psi(x) - fd0) > 1e-6 * (1.0 + std::abs(loss.psi(x)))) ++bad;
      if (std::abs(loss.psi1(x) - fd1) > 1e-6 * (1.0 + std::abs(loss.psi1(x)))) ++bad;
      if (std::abs(loss.psi2(x) - fd2) > 1e-6 * (1.0 + std::abs(loss.psi2(x)))) ++bad;
    };
    for (int i = 0; i <= 40000; ++i) check(-100.0 + 200.0 * i / 40000.0);
    for (int i = 0; i <= 20000; ++i) check(-3.0 + 6.0 * i / 20000.0);
    CHECK(bad == 0);
  }
}

TEST_CASE("rho is non-negative and convex") {
  for (const LossSpec& loss : all_losses()) {
    for (int i = -2000; i <= 2000; ++i) {
      const double x = i / 100.0;
      CHECK(loss.rho(x) >= 0.0);
      CHECK(loss.psi1(x) > 0.0);
    }
  }
}

TEST_CASE("K3 is 2 sqrt(K1) K2") {
  const LossSpec h = make_smoothed_huber();
  CHECK(h.K3() == doctest::Approx(2.0 * std::sqrt(h.K1()) * h.K2()));
  CHECK(make_square().K3() == 0.0);
}

TEST_CASE("parse_loss grammar") {
  CHECK(parse_loss("square").kind() == LossKind::Square);
  CHECK(parse_loss("ls").kind() == LossKind::Square);
  const LossSpec h = parse_loss("huber(k=1.5, eps=0.1, delta=0.2)");
  CHECK(h.kind() == LossKind::SmoothedHuber);
  CHECK(h.k() == 1.5);
  CHECK(h.eps() == 0.1);
  CHECK(h.delta() == 0.2);
  const LossSpec d = parse_loss("huber");
  CHECK(d.k() == 1.345);
  CHECK(d.eps() == 0.05);
  CHECK(d.delta() == 0.1);
  CHECK(parse_loss("huber(2)").k() == 2.0);
  CHECK(parse_loss("l1(delta=0.5)").delta() == 0.5);
  CHECK(parse_loss(h.describe()).k() == 1.5);
  CHECK_THROWS_AS(parse_loss("hubr"), ParseError);
  CHECK_THROWS_AS(parse_loss("huber(q=1)"), ParseError);
  CHECK_THROWS_AS(parse_loss("huber(k=0.1, delta=0.2)"), ParseError);
  CHECK_THROWS_AS(parse_loss("square(1)"), ParseError);
}
