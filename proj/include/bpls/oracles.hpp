#pragma once

// Brute-force references: grid quadrature over a low-dimensional posterior,
// self-normalized importance sampling with a Laplace proposal, finite
// differences and grid-search maximization. Slow by design; the criteria
// module uses the first two as its "oracle" scoring kinds, the tests use all
// of them as ground truth.

#include <cstdint>
#include <functional>
#include <vector>

#include "bpls/glm.hpp"

namespace bpls::oracles {

/// Evaluates a log density at every column of a d x N matrix of parameters.
using BatchLogDensity = std::function<Vector(const Matrix&)>;
using LogDensity = std::function<double(const Vector&)>;

/// Adapts a pointwise log density to the batched form.
BatchLogDensity batched(LogDensity f);

/// log p(data | theta) of the logistic model, column by column.
BatchLogDensity logistic_log_likelihood(const Dataset& data);

/// log p(label | x, theta) for a single observation.
BatchLogDensity logistic_point_log_prob(const Vector& x, int label);

/// Regular grid for d <= 2. `steps` counts intervals, so each axis has steps + 1 nodes.
struct QuadratureGrid {
  Vector lower;
  Vector upper;
  std::vector<int> steps;
  /// Largest tolerated ratio of boundary density to peak density.
  double boundary_mass_check = 1e-6;

  void validate() const;
  Eigen::Index dimension() const { return lower.size(); }
  std::size_t node_count() const;
};

/// Box of +/- `half_width_sd` marginal standard deviations around `mode`,
/// with standard deviations read off the inverse of `information`.
QuadratureGrid laplace_grid(const Vector& mode, const Matrix& information, double half_width_sd = 8.0,
                            int steps_per_dim = -1);

/// Unnormalized posterior tabulated on a quadrature grid, with trapezoid
/// weights folded into the log-weights.
class PosteriorGrid {
 public:
  PosteriorGrid(const BatchLogDensity& log_lik, const ModelSpec& prior, const QuadratureGrid& grid);

  /// log of the integral of likelihood times prior.
  double log_evidence() const noexcept { return log_evidence_; }

  /// log E[f(theta)] under the normalized grid posterior, for f given on the log scale.
  double log_expectation(const BatchLogDensity& log_f) const;

  const Matrix& nodes() const noexcept { return nodes_; }
  /// Trapezoid-weighted log posterior mass at each node; log-sums to zero.
  const Vector& log_mass() const noexcept { return log_mass_; }

 private:
  Matrix nodes_;
  Vector log_mass_;
  double log_evidence_ = 0.0;
};

/// log of the integral of p(data | theta) pi(theta) by the trapezoidal rule.
double evidence_quadrature(const Dataset& data, const ModelSpec& spec, const QuadratureGrid& grid);

/// Same, on the default Laplace-centered grid.
double evidence_quadrature(const Dataset& data, const ModelSpec& spec);

struct McEstimate {
  double log_value = 0.0;
  /// Delta-method standard error of `log_value`.
  double std_error = 0.0;
  double effective_sample_size = 0.0;
  std::size_t samples = 0;
};

/// Posterior draws from a Gaussian proposal with self-normalized weights.
class ImportanceSample {
 public:
  static constexpr double kMinEffectiveSampleSize = 50.0;

  /// Proposal is N(mean, information^-1). Throws DiagnosticError when the
  /// effective sample size drops below kMinEffectiveSampleSize.
  ImportanceSample(const BatchLogDensity& log_lik, const ModelSpec& prior, const Vector& mean,
                   const Matrix& information, std::size_t samples, std::uint64_t seed);

  McEstimate log_expectation(const BatchLogDensity& log_f) const;

  double effective_sample_size() const noexcept { return ess_; }
  const Matrix& draws() const noexcept { return draws_; }
  /// Normalized log importance weights.
  const Vector& log_weights() const noexcept { return log_weights_; }

 private:
  Matrix draws_;
  Vector log_weights_;
  double ess_ = 0.0;
};

/// log p(x, label | data) estimated by importance sampling around the MAP fit.
McEstimate posterior_predictive_mc(const Dataset& data, const ModelSpec& spec, const Vector& x, int label,
                                   std::size_t samples, std::uint64_t seed);

/// Central-difference gradient.
Vector fd_gradient(const LogDensity& f, const Vector& x, double h = 1e-6);

/// Central-difference jacobian of a vector function; rows index outputs.
Matrix fd_jacobian(const std::function<Vector(const Vector&)>& g, const Vector& x, double h = 1e-6);

struct GridMax {
  double argmax = 0.0;
  double value = 0.0;
};

/// Exhaustive search over lo, lo + step, ..., hi.
GridMax grid_search_max_1d(const std::function<double(double)>& f, double lo, double hi, double step);

}  // namespace bpls::oracles
