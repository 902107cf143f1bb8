#include "rotot/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "rotot/errors.hpp"
#include "rotot/stats.hpp"

namespace rotot {

TanhParams::TanhParams() : TanhParams(1.5, 4.0, 0.8622731) {}

TanhParams::TanhParams(double b_, double c_, double q2_)
    : b(b_), c(c_), q2(q2_) {
  q1 = b / std::tanh(q2 * (c - b));
  d = 0.5 * b * b + (q1 / q2) * std::log(std::cosh(q2 * (c - b)));
}

Rho Rho::tanh_loss(const TanhParams& p) {
  Rho r;
  r.kind = Kind::Tanh;
  r.tanh_params = p;
  return r;
}

Rho Rho::quadratic() {
  Rho r;
  r.kind = Kind::Quadratic;
  return r;
}

Rho Rho::near_l1(double tau) {
  Rho r;
  r.kind = Kind::NearL1;
  r.tau = tau;
  return r;
}

double Rho::rho(double z) const {
  double az = std::abs(z);
  switch (kind) {
    case Kind::Quadratic:
      return 0.5 * z * z;
    case Kind::NearL1:
      if (az <= tau) return 0.5 * z * z;
      return tau * (az - 0.5 * tau);
    case Kind::Tanh:
    default: {
      const TanhParams& p = tanh_params;
      if (az <= p.b) return 0.5 * z * z;
      if (az >= p.c) return p.d;
      return p.d - (p.q1 / p.q2) * std::log(std::cosh(p.q2 * (p.c - az)));
    }
  }
}

double Rho::psi(double z) const {
  double az = std::abs(z);
  double sgn = z >= 0 ? 1.0 : -1.0;
  switch (kind) {
    case Kind::Quadratic:
      return z;
    case Kind::NearL1:
      if (az <= tau) return z;
      return tau * sgn;
    case Kind::Tanh:
    default: {
      const TanhParams& p = tanh_params;
      if (az <= p.b) return z;
      if (az >= p.c) return 0.0;
      return p.q1 * std::tanh(p.q2 * (p.c - az)) * sgn;
    }
  }
}

double Rho::weight(double z) const {
  double az = std::abs(z);
  switch (kind) {
    case Kind::Quadratic:
      return 1.0;
    case Kind::NearL1:
      if (az <= tau) return 1.0;
      return tau / az;
    case Kind::Tanh:
    default: {
      const TanhParams& p = tanh_params;
      if (az <= p.b) return 1.0;
      if (az >= p.c) return 0.0;
      return p.q1 * std::tanh(p.q2 * (p.c - az)) / az;
    }
  }
}

double mscale(const std::vector<double>& z, const MScaleConfig& cfg) {
  if (z.empty()) throw ShapeError("mscale: empty sample");
  for (double v : z)
    if (!std::isfinite(v)) throw ShapeError("mscale: non-finite input");

  Rho rho = Rho::tanh_loss(cfg.rho);
  double n = static_cast<double>(z.size());

  // Unsolvable when even sigma -> 0+ cannot push the mean of rho up to delta:
  // zeros contribute 0 at any sigma and each nonzero at most the plateau d.
  std::size_t nonzero = 0;
  for (double v : z)
    if (v != 0.0) ++nonzero;
  if (static_cast<double>(nonzero) * cfg.rho.d <= cfg.delta * n) return 0.0;

  std::vector<double> az(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) az[i] = std::abs(z[i]);
  double s = median(az);
  if (s == 0.0) {
    double m = 0;
    for (double v : az) m += v;
    s = m / n;
  }

  auto lhs = [&](double sigma) {
    double acc = 0;
    for (double v : az) acc += rho.rho(v / (cfg.a * sigma));
    return acc / n;
  };

  double lo = 1e-12 * s, hi = 1e6 * s;
  // Widen defensively; with the default bracket this never triggers for finite
  // data, but the solver should not depend on that.
  for (int k = 0; k < 64 && lhs(lo) < cfg.delta; ++k) lo *= 0.5;
  for (int k = 0; k < 64 && lhs(hi) > cfg.delta; ++k) hi *= 2.0;
  if (lhs(lo) < cfg.delta) return 0.0;

  // Geometric bisection: the interval ratio contracts as sqrt each step, so
  // ~60 steps reach a relative width far below the residual tolerance.
  for (int it = 0; it < cfg.max_iter; ++it) {
    double mid = std::sqrt(lo * hi);
    if (lhs(mid) > cfg.delta)
      lo = mid;
    else
      hi = mid;
    if (hi / lo - 1.0 < 1e-2 * cfg.tol) break;
  }
  return std::sqrt(lo * hi);
}

}  // namespace rotot
