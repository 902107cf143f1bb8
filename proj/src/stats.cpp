#include "rotot/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rotot/errors.hpp"

namespace rotot {

double median(std::vector<double> v) {
  if (v.empty()) throw ShapeError("median: empty sample");
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mad(const std::vector<double>& v, double center) {
  std::vector<double> dev(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) dev[i] = std::abs(v[i] - center);
  return median(std::move(dev));
}

double mad_scale(const std::vector<double>& v) {
  return 1.4826 * mad(v, median(v));
}

double quantile_ceil(std::vector<double> v, double p) {
  if (v.empty()) throw ShapeError("quantile_ceil: empty sample");
  if (!(p > 0.0) || p > 1.0) throw ShapeError("quantile_ceil: p outside (0,1]");
  std::sort(v.begin(), v.end());
  std::size_t k = static_cast<std::size_t>(
      std::ceil(p * static_cast<double>(v.size())));
  if (k == 0) k = 1;
  if (k > v.size()) k = v.size();
  return v[k - 1];
}

namespace {

// Average ranks, 1-based, ties share the mean rank.
std::vector<double> ranks(const std::vector<double>& v) {
  std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("spearman: length mismatch");
  if (a.size() < 2) throw ShapeError("spearman: need at least 2 pairs");
  std::vector<double> ra = ranks(a), rb = ranks(b);
  double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double da = ra[i] - ma, db = rb[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

namespace {

// Series expansion of P(s,x), valid for x < s+1.
double gamma_p_series(double s, double x) {
  double ap = s;
  double sum = 1.0 / s;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

// Continued fraction for Q(s,x) = 1 - P(s,x), valid for x >= s+1.
double gamma_q_cf(double s, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - s;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - s);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + s * std::log(x) - std::lgamma(s)) * h;
}

}  // namespace

double lower_regularized_gamma(double s, double x) {
  if (!(s > 0.0)) throw ShapeError("lower_regularized_gamma: s must be > 0");
  if (x < 0.0) throw ShapeError("lower_regularized_gamma: x must be >= 0");
  if (x == 0.0) return 0.0;
  if (x < s + 1.0) return gamma_p_series(s, x);
  return 1.0 - gamma_q_cf(s, x);
}

double chi2_cdf(int k, double x) {
  if (k <= 0) throw ShapeError("chi2_cdf: df must be positive");
  if (x <= 0.0) return 0.0;
  return lower_regularized_gamma(0.5 * k, 0.5 * x);
}

double chi2_quantile(int k, double p) {
  if (k <= 0) throw ShapeError("chi2_quantile: df must be positive");
  if (!(p > 0.0) || !(p < 1.0)) throw ShapeError("chi2_quantile: p outside (0,1)");
  double hi = static_cast<double>(k) + 10.0;
  while (chi2_cdf(k, hi) < p) hi *= 2.0;
  double lo = 0.0;
  // Plain bisection: the CDF is strictly increasing in x on (0, inf).
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (chi2_cdf(k, mid) < p)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-10 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace rotot
