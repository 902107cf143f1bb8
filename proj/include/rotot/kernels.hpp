#pragma once

#include <vector>

namespace rotot {

// Hyperbolic-tangent loss family. The loss is quadratic up to b, bends over a
// log-cosh segment, and is flat (= d) beyond c, so its psi vanishes outside
// [-c, c]. b, c and q2 are taken as given; q1 is derived at construction as
//   q1 = b / tanh(q2 * (c - b)),
// the value that makes psi continuous at b (published roundings of q1 are only
// accurate to ~7 digits, which is not enough for the continuity checks).
struct TanhParams {
  double b = 1.5;
  double c = 4.0;
  double q2 = 0.8622731;
  double q1 = 0.0;  // derived
  double d = 0.0;   // plateau: b^2/2 + (q1/q2) * log(cosh(q2*(c-b)))
  TanhParams();
  TanhParams(double b_, double c_, double q2_);
};

// Even loss rho with score psi = rho' and IRLS weight w(z) = psi(z)/z,
// continuously extended by w(0) = lim psi(z)/z. Three families:
//   tanh      - bounded redescender above (weights in [0,1], w(|z|>=c) = 0)
//   quadratic - rho(z) = z^2/2, psi = z, w = 1 (least squares)
//   near_l1   - Huber knee at tau: z^2/2 below, tau*(|z| - tau/2) above
struct Rho {
  enum class Kind { Tanh, Quadratic, NearL1 };

  static Rho tanh_loss(const TanhParams& p = TanhParams());
  static Rho quadratic();
  static Rho near_l1(double tau = 1e-5);

  double rho(double z) const;
  double psi(double z) const;
  double weight(double z) const;
  bool bounded() const { return kind == Kind::Tanh; }

  Kind kind = Kind::Tanh;
  TanhParams tanh_params;
  double tau = 1e-5;
};

// M-scale configuration: solve (1/n) sum_i rho(z_i / (a*sigma)) = delta in
// sigma, with the tanh rho. delta = 1.88 and a = 0.3431 make the estimate
// consistent for the standard normal with 50% breakdown.
struct MScaleConfig {
  double delta = 1.88;
  double a = 0.3431;
  TanhParams rho;
  double tol = 1e-10;  // residual tolerance of the solved equation
  int max_iter = 200;
};

// The left side is nonincreasing in sigma, so the root is found by bracketing
// ([1e-12*s, 1e6*s] around s = median |z|, mean |z| when the median vanishes)
// and geometric bisection. Returns 0 when the zero fraction of the sample makes
// the equation unsolvable at any positive sigma (scale implosion) and throws
// ShapeError on empty or non-finite input.
double mscale(const std::vector<double>& z, const MScaleConfig& cfg = {});

}  // namespace rotot
