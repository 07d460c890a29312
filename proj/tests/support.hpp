#pragma once

// Test-only references. Nothing here calls into the library's numerical
// paths; they are written out longhand so the tests can check against them.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "bpls/glm.hpp"
#include "bpls/random.hpp"

namespace bpls::testing {

/// Random design with an intercept column (when requested) and labels drawn from sigmoid(X theta).
inline Dataset random_dataset(Rng& rng, int n, int d, bool intercept = true, double theta_scale = 1.0,
                              bool random_weights = false) {
  Matrix x(n, d);
  Vector theta(d);
  for (int k = 0; k < d; ++k) theta[k] = theta_scale * rng.normal();
  Vector y(n), w(n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) x(i, k) = (intercept && k == 0) ? 1.0 : rng.normal();
    const double eta = x.row(i).dot(theta);
    y[i] = rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
    w[i] = random_weights ? 0.5 + rng.uniform() : 1.0;
  }
  return Dataset(x, y, w);
}

/// Per-row summation with the textbook formula and explicit clamping, carried
/// in long double so that log(1 - p) keeps its digits when p is near 1.
inline double naive_log_likelihood(const Vector& theta, const Dataset& data) {
  long double total = 0.0L;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    long double eta = 0.0L;
    for (Eigen::Index k = 0; k < data.cols(); ++k) eta += static_cast<long double>(data.features()(i, k)) * theta[k];
    long double p = 1.0L / (1.0L + std::exp(-eta));
    p = std::min(std::max(p, 1e-12L), 1.0L - 1e-12L);
    const long double y = data.labels()[i];
    total += data.weights()[i] * (y * std::log(p) + (1.0L - y) * std::log(1.0L - p));
  }
  return static_cast<double>(total);
}

/// Quadratic stand-in likelihood l(theta) = c - 1/2 (theta - m)' A (theta - m).
struct GaussianStandIn {
  Vector m;
  Matrix a;
  double c = 0.0;

  double operator()(const Vector& theta) const {
    const Vector r = theta - m;
    return c - 0.5 * r.dot(a * r);
  }

  /// log of the integral of exp(l) against N(mu, P^-1), in closed form:
  /// c + 1/2 log|P| - 1/2 log|A + P| - 1/2 (m - mu)' (A^-1 + P^-1)^-1 (m - mu).
  double log_evidence(const Vector& mu, const Matrix& p) const {
    const Matrix s = a.inverse() + p.inverse();
    const Vector r = m - mu;
    return c + 0.5 * std::log(p.determinant()) - 0.5 * std::log((a + p).determinant()) -
           0.5 * r.dot(s.inverse() * r);
  }

  /// Exact posterior precision and mean.
  Matrix posterior_precision(const Matrix& p) const { return a + p; }
  Vector posterior_mean(const Vector& mu, const Matrix& p) const { return (a + p).inverse() * (a * m + p * mu); }
};

inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return (saa == sbb) ? 1.0 : 0.0;
  return sab / std::sqrt(saa * sbb);
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace bpls::testing
