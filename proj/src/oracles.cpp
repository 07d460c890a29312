#include "bpls/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "bpls/numeric.hpp"
#include "bpls/random.hpp"

namespace bpls::oracles {

namespace {

constexpr Eigen::Index kChunk = 4096;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Vector log_prior_columns(const Matrix& thetas, const ModelSpec& prior) {
  const Matrix r = thetas.colwise() - prior.prior_mean();
  const Vector quad = (r.array() * (prior.prior_precision() * r).array()).colwise().sum().transpose();
  const double d = static_cast<double>(prior.dimension());
  return (-0.5 * d * kLog2Pi + 0.5 * prior.log_det_precision()) - 0.5 * quad.array();
}

}  // namespace

BatchLogDensity batched(LogDensity f) {
  return [f = std::move(f)](const Matrix& thetas) {
    Vector out(thetas.cols());
    for (Eigen::Index j = 0; j < thetas.cols(); ++j) out[j] = f(thetas.col(j));
    return out;
  };
}

BatchLogDensity logistic_log_likelihood(const Dataset& data) {
  return [data](const Matrix& thetas) {
    if (thetas.rows() != data.cols()) throw ShapeError("log-likelihood: parameter rows do not match design");
    Vector out = Vector::Zero(thetas.cols());
    for (Eigen::Index start = 0; start < thetas.cols(); start += kChunk) {
      const Eigen::Index len = std::min(kChunk, thetas.cols() - start);
      const Matrix eta = data.features() * thetas.middleCols(start, len);
      for (Eigen::Index j = 0; j < len; ++j) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < eta.rows(); ++i) {
          acc += data.weights()[i] * logit_log_prob(eta(i, j), data.labels()[i]);
        }
        out[start + j] = acc;
      }
    }
    return out;
  };
}

BatchLogDensity logistic_point_log_prob(const Vector& x, int label) {
  const double y = label ? 1.0 : 0.0;
  return [x, y](const Matrix& thetas) {
    if (thetas.rows() != x.size()) throw ShapeError("point log-probability: parameter rows do not match x");
    const Vector eta = thetas.transpose() * x;
    return Vector(eta.unaryExpr([y](double e) { return logit_log_prob(e, y); }));
  };
}

void QuadratureGrid::validate() const {
  const Eigen::Index d = lower.size();
  if (d < 1 || d > 2) throw ConfigError("quadrature grid: dimension must be 1 or 2, got " + std::to_string(d));
  if (upper.size() != d || static_cast<Eigen::Index>(steps.size()) != d) {
    throw ShapeError("quadrature grid: bounds and steps disagree on dimension");
  }
  for (Eigen::Index k = 0; k < d; ++k) {
    if (!(upper[k] > lower[k]) || !std::isfinite(lower[k]) || !std::isfinite(upper[k])) {
      throw ConfigError("quadrature grid: upper bound must exceed lower bound on every axis");
    }
    if (steps[k] < 2) throw ConfigError("quadrature grid: need at least 2 intervals per axis");
  }
  if (node_count() > 10'000'000) throw ConfigError("quadrature grid: more than 1e7 nodes");
}

std::size_t QuadratureGrid::node_count() const {
  std::size_t n = 1;
  for (int s : steps) n *= static_cast<std::size_t>(s) + 1;
  return n;
}

QuadratureGrid laplace_grid(const Vector& mode, const Matrix& information, double half_width_sd,
                            int steps_per_dim) {
  const Eigen::Index d = mode.size();
  Eigen::LLT<Matrix> llt(information);
  if (llt.info() != Eigen::Success) throw NumericalError("laplace grid: information is not positive definite");
  const Matrix cov = llt.solve(Matrix::Identity(d, d));
  const Vector sd = cov.diagonal().cwiseSqrt();

  QuadratureGrid grid;
  grid.lower = mode - half_width_sd * sd;
  grid.upper = mode + half_width_sd * sd;
  const int steps = steps_per_dim > 0 ? steps_per_dim : (d == 1 ? 2000 : 300);
  grid.steps.assign(static_cast<std::size_t>(d), steps);
  return grid;
}

PosteriorGrid::PosteriorGrid(const BatchLogDensity& log_lik, const ModelSpec& prior, const QuadratureGrid& grid) {
  grid.validate();
  const Eigen::Index d = grid.dimension();
  if (prior.dimension() != d) throw ShapeError("posterior grid: prior dimension does not match grid");

  std::vector<Vector> axes;
  std::vector<Vector> axis_log_w;
  for (Eigen::Index k = 0; k < d; ++k) {
    const int s = grid.steps[static_cast<std::size_t>(k)];
    const double h = (grid.upper[k] - grid.lower[k]) / s;
    Vector ax(s + 1), lw(s + 1);
    for (int j = 0; j <= s; ++j) {
      ax[j] = j == s ? grid.upper[k] : grid.lower[k] + j * h;
      lw[j] = std::log(h) + ((j == 0 || j == s) ? std::log(0.5) : 0.0);
    }
    axes.push_back(std::move(ax));
    axis_log_w.push_back(std::move(lw));
  }

  const auto n = static_cast<Eigen::Index>(grid.node_count());
  nodes_.resize(d, n);
  Vector log_trap(n);
  std::vector<char> on_boundary(static_cast<std::size_t>(n), 0);
  if (d == 1) {
    nodes_.row(0) = axes[0].transpose();
    log_trap = axis_log_w[0];
    on_boundary[0] = 1;
    on_boundary[static_cast<std::size_t>(n - 1)] = 1;
  } else {
    const Eigen::Index n0 = axes[0].size(), n1 = axes[1].size();
    for (Eigen::Index i = 0; i < n0; ++i) {
      for (Eigen::Index j = 0; j < n1; ++j) {
        const Eigen::Index c = i * n1 + j;
        nodes_(0, c) = axes[0][i];
        nodes_(1, c) = axes[1][j];
        log_trap[c] = axis_log_w[0][i] + axis_log_w[1][j];
        on_boundary[static_cast<std::size_t>(c)] = (i == 0 || j == 0 || i == n0 - 1 || j == n1 - 1);
      }
    }
  }

  const Vector log_kernel = log_lik(nodes_) + log_prior_columns(nodes_, prior);
  if (log_kernel.hasNaN()) throw NumericalError("posterior grid: NaN in log density");

  const double peak = log_kernel.maxCoeff();
  double boundary = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < n; ++c) {
    if (on_boundary[static_cast<std::size_t>(c)]) boundary = std::max(boundary, log_kernel[c]);
  }
  if (boundary - peak > std::log(grid.boundary_mass_check)) {
    std::ostringstream os;
    os << "quadrature grid truncates posterior mass: boundary density is " << std::exp(boundary - peak)
       << " of the peak (limit " << grid.boundary_mass_check << "); try bounds";
    for (Eigen::Index k = 0; k < d; ++k) {
      const double mid = 0.5 * (grid.lower[k] + grid.upper[k]);
      const double half = grid.upper[k] - grid.lower[k];
      os << " [" << mid - half << ", " << mid + half << "]";
    }
    throw PrecisionError(os.str());
  }

  const Vector weighted = log_kernel + log_trap;
  log_evidence_ = log_sum_exp(weighted);
  log_mass_ = weighted.array() - log_evidence_;
}

double PosteriorGrid::log_expectation(const BatchLogDensity& log_f) const {
  const Vector v = log_mass_ + log_f(nodes_);
  return log_sum_exp(v);
}

double evidence_quadrature(const Dataset& data, const ModelSpec& spec, const QuadratureGrid& grid) {
  return PosteriorGrid(logistic_log_likelihood(data), spec, grid).log_evidence();
}

double evidence_quadrature(const Dataset& data, const ModelSpec& spec) {
  const ModelFit fit = fit_map(data, spec);
  return evidence_quadrature(data, spec, laplace_grid(fit.theta_hat, fit.fisher_info));
}

ImportanceSample::ImportanceSample(const BatchLogDensity& log_lik, const ModelSpec& prior, const Vector& mean,
                                   const Matrix& information, std::size_t samples, std::uint64_t seed) {
  if (samples < 1000) throw InputError("importance sampler: need at least 1000 samples");
  const Eigen::Index d = prior.dimension();
  if (mean.size() != d || information.rows() != d || information.cols() != d) {
    throw ShapeError("importance sampler: proposal shape does not match prior");
  }
  Eigen::LLT<Matrix> llt(information);
  if (llt.info() != Eigen::Success) throw NumericalError("importance sampler: information is not positive definite");
  const Matrix l = llt.matrixL();
  const double log_det_info = 2.0 * l.diagonal().array().log().sum();

  const auto n = static_cast<Eigen::Index>(samples);
  Rng rng(seed);
  Matrix z(d, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < d; ++k) z(k, j) = rng.normal();
  }
  // theta = mean + L^-T z has covariance information^-1.
  draws_ = llt.matrixU().solve(z);
  draws_.colwise() += mean;

  const Vector log_q = (-0.5 * static_cast<double>(d) * kLog2Pi + 0.5 * log_det_info) -
                       0.5 * z.colwise().squaredNorm().transpose().array();
  const Vector log_w = log_lik(draws_) + log_prior_columns(draws_, prior) - log_q;
  if (log_w.hasNaN()) throw NumericalError("importance sampler: NaN importance weight");
  log_weights_ = log_w.array() - log_sum_exp(log_w);
  ess_ = 1.0 / (2.0 * log_weights_).array().exp().sum();
  if (!(ess_ >= kMinEffectiveSampleSize)) {
    throw DiagnosticError("importance sampler: effective sample size " + std::to_string(ess_) + " below " +
                          std::to_string(kMinEffectiveSampleSize));
  }
}

McEstimate ImportanceSample::log_expectation(const BatchLogDensity& log_f) const {
  const Vector lf = log_f(draws_);
  McEstimate est;
  est.log_value = log_sum_exp(Vector(log_weights_ + lf));
  // Var(mu_hat) ~ sum w^2 (f - mu)^2; relative to mu this is the SE of log mu_hat.
  const Eigen::ArrayXd rel = (lf.array() - est.log_value).exp() - 1.0;
  const Eigen::ArrayXd w = log_weights_.array().exp();
  est.std_error = std::sqrt((w.square() * rel.square()).sum());
  est.effective_sample_size = ess_;
  est.samples = static_cast<std::size_t>(draws_.cols());
  return est;
}

McEstimate posterior_predictive_mc(const Dataset& data, const ModelSpec& spec, const Vector& x, int label,
                                   std::size_t samples, std::uint64_t seed) {
  const ModelFit fit = fit_map(data, spec);
  const ImportanceSample is(logistic_log_likelihood(data), spec, fit.theta_hat, fit.fisher_info, samples, seed);
  return is.log_expectation(logistic_point_log_prob(x, label));
}

Vector fd_gradient(const LogDensity& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double step = h * std::max(1.0, std::abs(x[k]));
    Vector xp = x, xm = x;
    xp[k] += step;
    xm[k] -= step;
    g[k] = (f(xp) - f(xm)) / (xp[k] - xm[k]);
  }
  return g;
}

Matrix fd_jacobian(const std::function<Vector(const Vector&)>& g, const Vector& x, double h) {
  Matrix jac;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double step = h * std::max(1.0, std::abs(x[k]));
    Vector xp = x, xm = x;
    xp[k] += step;
    xm[k] -= step;
    const Vector col = (g(xp) - g(xm)) / (xp[k] - xm[k]);
    if (k == 0) jac.resize(col.size(), x.size());
    jac.col(k) = col;
  }
  return jac;
}

GridMax grid_search_max_1d(const std::function<double(double)>& f, double lo, double hi, double step) {
  if (!(hi > lo) || !(step > 0.0)) throw ConfigError("grid search: need hi > lo and step > 0");
  const auto count = static_cast<long>(std::floor((hi - lo) / step + 0.5));
  GridMax best{lo, f(lo)};
  for (long k = 1; k <= count; ++k) {
    const double x = lo + static_cast<double>(k) * step;
    const double v = f(x);
    if (v > best.value) best = {x, v};
  }
  return best;
}

}  // namespace bpls::oracles
