#include <doctest.h>

#include <cmath>
#include <vector>

#include "rotot/errors.hpp"
#include "rotot/kernels.hpp"
#include "rotot/rng.hpp"

using namespace rotot;

TEST_CASE("tanh loss constants") {
  TanhParams p;
  // published roundings of the shape constants
  CHECK(p.q1 == doctest::Approx(1.540793).epsilon(1e-5));
  CHECK(p.q2 == 0.8622731);
  // plateau identity to machine precision
  CHECK(p.d == doctest::Approx(0.5 * p.b * p.b +
                               (p.q1 / p.q2) *
                                   std::log(std::cosh(p.q2 * (p.c - p.b))))
                   .epsilon(1e-14));
}

TEST_CASE("tanh rho values") {
  Rho r = Rho::tanh_loss();
  const TanhParams& p = r.tanh_params;
  CHECK(r.rho(0) == 0.0);
  CHECK(r.rho(1) == 0.5);
  CHECK(r.rho(5) == p.d);
  CHECK(r.rho(-5) == p.d);
  CHECK(r.rho(100) == p.d);
}

TEST_CASE("tanh rho is continuous and differentiable at the joins") {
  Rho r = Rho::tanh_loss();
  const TanhParams& p = r.tanh_params;
  double h = 1e-9;
  for (double knot : {p.b, p.c}) {
    CHECK(std::abs(r.rho(knot + 1e-15) - r.rho(knot - 1e-15)) < 1e-10);
    // one-sided psi limits agree thanks to the derived q1
    double left = (r.rho(knot) - r.rho(knot - h)) / h;
    double right = (r.rho(knot + h) - r.rho(knot)) / h;
    CHECK(std::abs(left - right) < 1e-6);
    CHECK(std::abs(r.psi(knot - 1e-12) - r.psi(knot + 1e-12)) < 1e-10);
  }
}

TEST_CASE("tanh psi: values, redescending region, finite differences") {
  Rho r = Rho::tanh_loss();
  CHECK(r.psi(0) == 0.0);
  CHECK(r.psi(1) == 1.0);
  CHECK(r.psi(4.5) == 0.0);
  CHECK(r.psi(4.0) == 0.0);
  CHECK(r.psi(-4.1) == 0.0);
  // psi = rho' away from the joins (central differences)
  for (double z : {0.3, 1.2, 2.3, 3.1, 3.9}) {
    double h = 1e-6;
    double fd = (r.rho(z + h) - r.rho(z - h)) / (2 * h);
    CHECK(r.psi(z) == doctest::Approx(fd).epsilon(1e-6));
    CHECK(r.psi(-z) == doctest::Approx(-fd).epsilon(1e-6));
  }
}

TEST_CASE("tanh weight function") {
  Rho r = Rho::tanh_loss();
  CHECK(r.weight(0) == 1.0);
  CHECK(r.weight(1) == 1.0);
  CHECK(r.weight(10) == 0.0);
  CHECK(r.weight(4) == 0.0);
  for (double z = 0.0; z <= 8.0; z += 0.05) {
    double w = r.weight(z);
    CHECK(w >= 0.0);
    CHECK(w <= 1.0 + 1e-12);
  }
}

TEST_CASE("tanh rho is a valid robust loss") {
  Rho r = Rho::tanh_loss();
  const double d = r.tanh_params.d;
  double prev = -1;
  for (double z = 0.0; z <= 10.0; z += 0.01) {
    double v = r.rho(z);
    CHECK(v == r.rho(-z));        // even
    CHECK(v >= prev - 1e-14);     // nondecreasing in |z|
    CHECK(v <= d + 1e-14);        // bounded by the plateau
    prev = v;
  }
  // rho(sqrt(z)) is concave: nonpositive second differences on a z-grid
  double step = 0.05;
  for (double z = step; z <= 30.0; z += step) {
    double a = r.rho(std::sqrt(z - step));
    double b = r.rho(std::sqrt(z));
    double c = r.rho(std::sqrt(z + step));
    CHECK(a + c - 2 * b <= 1e-10);
  }
}

TEST_CASE("near-L1 loss") {
  double tau = 1e-5;
  Rho r = Rho::near_l1(tau);
  CHECK(r.rho(0) == 0.0);
  CHECK(r.rho(tau) == doctest::Approx(0.5 * tau * tau));
  CHECK(r.rho(1.0) == doctest::Approx(tau * (1.0 - 0.5 * tau)));
  CHECK(r.rho(-1.0) == r.rho(1.0));
  // continuity and differentiability at +-tau
  double h = tau * 1e-6;
  CHECK(r.rho(tau + h) - r.rho(tau - h) ==
        doctest::Approx(2 * h * tau).epsilon(1e-6));
  CHECK(r.psi(0.5 * tau) == 0.5 * tau);
  CHECK(r.psi(2.0) == tau);
  CHECK(r.psi(-2.0) == -tau);
  CHECK(r.weight(0) == 1.0);
  CHECK(r.weight(2.0) == doctest::Approx(tau / 2.0));
}

TEST_CASE("quadratic loss uses the half convention") {
  Rho r = Rho::quadratic();
  CHECK(r.rho(3.0) == 4.5);
  CHECK(r.psi(3.0) == 3.0);
  CHECK(r.weight(0.0) == 1.0);
  CHECK(r.weight(17.0) == 1.0);
  CHECK(!r.bounded());
}

TEST_CASE("mscale basics") {
  MScaleConfig cfg;
  CHECK(mscale({0.0, 0.0, 0.0}, cfg) == 0.0);
  CHECK_THROWS_AS(mscale({}, cfg), ShapeError);
  CHECK_THROWS_AS(mscale({1.0, std::nan("")}, cfg), ShapeError);
  CHECK_THROWS_AS(mscale({1.0, std::numeric_limits<double>::infinity()}, cfg),
                  ShapeError);
}

TEST_CASE("mscale solves the defining equation") {
  Rng rng(77);
  std::vector<double> z(500);
  for (auto& v : z) v = rng.normal() * 2.3 + 0.4;
  MScaleConfig cfg;
  double s = mscale(z, cfg);
  REQUIRE(s > 0);
  Rho rho = Rho::tanh_loss(cfg.rho);
  double lhs = 0;
  for (double v : z) lhs += rho.rho(v / (cfg.a * s));
  lhs /= static_cast<double>(z.size());
  CHECK(std::abs(lhs - cfg.delta) < cfg.tol);
}

TEST_CASE("mscale is scale equivariant") {
  Rng rng(81);
  std::vector<double> z(200);
  for (auto& v : z) v = rng.normal();
  MScaleConfig cfg;
  double s1 = mscale(z, cfg);
  for (double alpha : {3.7, 0.02}) {
    std::vector<double> az(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) az[i] = alpha * z[i];
    double s2 = mscale(az, cfg);
    CHECK(s2 == doctest::Approx(alpha * s1).epsilon(1e-9));
  }
  // symmetric two-point sample:  mean rho(k/(a*sigma)) = delta at
  // sigma = k / (a * rhoinv(delta)); just check equivariance across k
  double base = mscale({1.0, -1.0, 1.0, -1.0}, cfg);
  double scaled = mscale({5.0, -5.0, 5.0, -5.0}, cfg);
  CHECK(scaled == doctest::Approx(5.0 * base).epsilon(1e-9));
}

TEST_CASE("mscale implodes to zero under a majority of zeros") {
  MScaleConfig cfg;
  // 6 zeros + 2 nonzero: nonzero fraction 0.25 < delta/d ~ 0.4997
  std::vector<double> z{0, 0, 0, 0, 0, 0, 3.0, -2.0};
  CHECK(mscale(z, cfg) == 0.0);
}

TEST_CASE("mscale is consistent at the standard normal") {
  Rng rng(20240817);
  std::vector<double> z(100000);
  for (auto& v : z) v = rng.normal();
  double s = mscale(z);
  CHECK(s == doctest::Approx(1.0).epsilon(0.02));
}
