#pragma once

#include <vector>

namespace rotot {

// Median of a sample (copies and sorts; average of middle pair for even n).
// Throws ShapeError on empty input.
double median(std::vector<double> v);

// Median absolute deviation about `center`, no consistency factor.
double mad(const std::vector<double>& v, double center);

// 1.4826 * MAD about the median: consistent scale at the normal model.
double mad_scale(const std::vector<double>& v);

// Empirical quantile as the ceil(p*n)-th order statistic (1-based), the
// convention used for all simulated cutoffs. p in (0,1].
double quantile_ceil(std::vector<double> v, double p);

// Spearman rank correlation with average ranks for ties. Inputs must have
// equal length >= 2; returns 0 when either sample is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Lower regularized incomplete gamma P(s, x) via series / continued fraction.
double lower_regularized_gamma(double s, double x);

// Chi-square CDF with k degrees of freedom.
double chi2_cdf(int k, double x);

// Chi-square quantile, inverted from the CDF by bisection (tolerance 1e-10).
double chi2_quantile(int k, double p);

}  // namespace rotot
