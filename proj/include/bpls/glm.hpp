#pragma once

// Bernoulli-logit GLM with a Gaussian prior: likelihood, derivatives, MAP
// fitting by damped Newton, and the Laplace evidence built on top of it.
// Everything here is templated on the scalar type; the rest of the library
// uses the double instantiations exported at the bottom of the file.

#include <cmath>
#include <algorithm>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "bpls/errors.hpp"

namespace bpls {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] before any log.
inline constexpr double kProbFloor = 1e-12;

namespace detail {

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

}  // namespace detail

/// Labeled design matrix with binary responses and optional positive row weights.
template <typename Scalar>
class BasicDataset {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  BasicDataset() = default;

  BasicDataset(Matrix features, Vector labels)
      : BasicDataset(features, labels, Vector::Ones(labels.size())) {}

  BasicDataset(Matrix features, Vector labels, Vector weights)
      : features_(std::move(features)), labels_(std::move(labels)), weights_(std::move(weights)) {
    if (features_.rows() != labels_.size() || labels_.size() != weights_.size()) {
      throw ShapeError("dataset: features are " + detail::shape_str(features_.rows(), features_.cols()) +
                       " but labels have " + std::to_string(labels_.size()) + " and weights " +
                       std::to_string(weights_.size()) + " entries");
    }
    if (!detail::all_finite(features_)) throw InputError("dataset: non-finite feature value");
    for (Eigen::Index i = 0; i < labels_.size(); ++i) {
      if (labels_[i] != Scalar(0) && labels_[i] != Scalar(1)) {
        throw InputError("dataset: label at row " + std::to_string(i) + " is not 0 or 1");
      }
      if (!(weights_[i] > Scalar(0)) || !std::isfinite(static_cast<double>(weights_[i]))) {
        throw InputError("dataset: weight at row " + std::to_string(i) + " is not positive and finite");
      }
    }
  }

  /// Zero-row dataset with `cols` feature columns.
  static BasicDataset empty(Eigen::Index cols) { return BasicDataset(Matrix(0, cols), Vector(0)); }

  const Matrix& features() const noexcept { return features_; }
  const Vector& labels() const noexcept { return labels_; }
  const Vector& weights() const noexcept { return weights_; }
  Eigen::Index rows() const noexcept { return features_.rows(); }
  Eigen::Index cols() const noexcept { return features_.cols(); }

  /// Copy with one extra row appended.
  BasicDataset with_row(const Eigen::Ref<const Vector>& x, Scalar y, Scalar w = Scalar(1)) const {
    if (x.size() != cols()) throw ShapeError("dataset: appended row has wrong length");
    Matrix f(rows() + 1, cols());
    Vector l(rows() + 1), wt(rows() + 1);
    f.topRows(rows()) = features_;
    f.row(rows()) = x.transpose();
    l.head(rows()) = labels_;
    l[rows()] = y;
    wt.head(rows()) = weights_;
    wt[rows()] = w;
    return BasicDataset(std::move(f), std::move(l), std::move(wt));
  }

  /// Row concatenation; column counts must agree.
  BasicDataset concat(const BasicDataset& other) const {
    if (other.cols() != cols()) throw ShapeError("dataset: column mismatch in concat");
    Matrix f(rows() + other.rows(), cols());
    Vector l(rows() + other.rows()), wt(rows() + other.rows());
    f << features_, other.features_;
    l << labels_, other.labels_;
    wt << weights_, other.weights_;
    return BasicDataset(std::move(f), std::move(l), std::move(wt));
  }

 private:
  Matrix features_;
  Vector labels_;
  Vector weights_;
};

/// Gaussian prior over the coefficient vector.
template <typename Scalar>
class BasicModelSpec {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  BasicModelSpec(Vector prior_mean, Matrix prior_precision)
      : mean_(std::move(prior_mean)), precision_(std::move(prior_precision)) {
    if (mean_.size() == 0) throw ShapeError("model spec: dimension must be positive");
    if (precision_.rows() != mean_.size() || precision_.cols() != mean_.size()) {
      throw ShapeError("model spec: prior precision is " +
                       detail::shape_str(precision_.rows(), precision_.cols()) + " for dimension " +
                       std::to_string(mean_.size()));
    }
    if (!detail::all_finite(mean_) || !detail::all_finite(precision_)) {
      throw InputError("model spec: non-finite prior parameters");
    }
    if (((precision_ - precision_.transpose()).cwiseAbs().maxCoeff()) > Scalar(1e-10)) {
      throw InputError("model spec: prior precision is not symmetric");
    }
    Eigen::LLT<Matrix> llt(precision_);
    if (llt.info() != Eigen::Success) throw InputError("model spec: prior precision is not positive definite");
    Matrix l = llt.matrixL();
    log_det_precision_ = Scalar(2) * l.diagonal().array().log().sum();
  }

  /// Mean zero, identity precision.
  static BasicModelSpec standard(Eigen::Index dimension) {
    return BasicModelSpec(Vector::Zero(dimension), Matrix::Identity(dimension, dimension));
  }

  /// Mean zero, precision `tau` times identity.
  static BasicModelSpec isotropic(Eigen::Index dimension, Scalar tau) {
    return BasicModelSpec(Vector::Zero(dimension), tau * Matrix::Identity(dimension, dimension));
  }

  Eigen::Index dimension() const noexcept { return mean_.size(); }
  const Vector& prior_mean() const noexcept { return mean_; }
  const Matrix& prior_precision() const noexcept { return precision_; }
  Scalar log_det_precision() const noexcept { return log_det_precision_; }

 private:
  Vector mean_;
  Matrix precision_;
  Scalar log_det_precision_{0};
};

template <typename Scalar>
struct BasicFitSettings {
  Scalar tolerance = Scalar(1e-8);
  int max_iterations = 100;
  int max_halvings = 30;
  /// Called with (iterate, log-joint hessian) before each convergence check.
  std::function<void(const VectorX<Scalar>&, const MatrixX<Scalar>&)> on_iterate;
};

template <typename Scalar>
struct BasicModelFit {
  VectorX<Scalar> theta_hat;
  Scalar log_joint_at_mode{};
  Scalar log_lik_at_mode{};
  /// Observed information of the log-joint at the mode (likelihood part plus prior precision).
  MatrixX<Scalar> fisher_info;
  bool converged = false;
  int iterations = 0;
  Scalar final_gradient_norm{};
};

template <typename Scalar>
struct Curvature {
  VectorX<Scalar> gradient;
  MatrixX<Scalar> hessian;
};

/// Logistic function evaluated without overflow, unclamped.
template <typename Scalar>
Scalar sigmoid(Scalar eta) {
  using std::exp;
  if (eta >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-eta));
  const Scalar e = exp(eta);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar clamp_probability(Scalar p) {
  const Scalar lo = Scalar(kProbFloor);
  const Scalar hi = Scalar(1) - Scalar(kProbFloor);
  return p < lo ? lo : (p > hi ? hi : p);
}

/// log p(y | p) for one Bernoulli observation, with p clamped.
template <typename Scalar>
Scalar bernoulli_log_prob(Scalar p, Scalar y) {
  using std::log;
  using std::log1p;
  const Scalar pc = clamp_probability(p);
  return y * log(pc) + (Scalar(1) - y) * log1p(-pc);
}

namespace detail {

template <typename Scalar>
void check_theta(const VectorX<Scalar>& theta, Eigen::Index cols) {
  if (theta.size() != cols) {
    throw ShapeError("theta has length " + std::to_string(theta.size()) + " but the design has " +
                     std::to_string(cols) + " columns");
  }
  if (!theta.allFinite()) throw InputError("theta has non-finite entries");
}

template <typename Scalar>
void check_spec(const BasicModelSpec<Scalar>& spec, Eigen::Index cols) {
  if (spec.dimension() != cols) {
    throw ShapeError("model dimension " + std::to_string(spec.dimension()) + " does not match " +
                     std::to_string(cols) + " feature columns");
  }
}

}  // namespace detail

/// bernoulli_log_prob(sigmoid(eta), y), computed from the logit so that
/// log(1 - p) does not lose digits to cancellation when p is near 1.
template <typename Scalar>
Scalar logit_log_prob(Scalar eta, Scalar y) {
  using std::exp;
  using std::log;
  using std::log1p;
  const auto log_sigmoid = [](Scalar e) { return e >= Scalar(0) ? -log1p(exp(-e)) : e - log1p(exp(e)); };
  // clamping p to [floor, 1 - floor] is clamping log p to [log floor, log(1 - floor)]
  const Scalar lo = log(Scalar(kProbFloor));
  const Scalar hi = log1p(-Scalar(kProbFloor));
  const auto clamp = [&](Scalar v) { return v < lo ? lo : (v > hi ? hi : v); };
  return y * clamp(log_sigmoid(eta)) + (Scalar(1) - y) * clamp(log_sigmoid(-eta));
}

/// Clamped sigmoid(X theta), one entry per row.
template <typename Scalar>
VectorX<Scalar> predict_proba(const VectorX<Scalar>& theta, const MatrixX<Scalar>& features) {
  detail::check_theta(theta, features.cols());
  const VectorX<Scalar> eta = features * theta;
  return eta.unaryExpr([](Scalar e) { return clamp_probability(sigmoid(e)); });
}

/// Weighted Bernoulli log-likelihood; zero for an empty dataset.
template <typename Scalar>
Scalar log_likelihood(const VectorX<Scalar>& theta, const BasicDataset<Scalar>& data) {
  detail::check_theta(theta, data.cols());
  if (data.rows() == 0) return Scalar(0);
  const VectorX<Scalar> eta = data.features() * theta;
  Scalar total(0);
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    total += data.weights()[i] * logit_log_prob(eta[i], data.labels()[i]);
  }
  return total;
}

/// Normalized Gaussian log prior density.
template <typename Scalar>
Scalar log_prior(const VectorX<Scalar>& theta, const BasicModelSpec<Scalar>& spec) {
  if (theta.size() != spec.dimension()) throw ShapeError("theta length does not match model dimension");
  const VectorX<Scalar> r = theta - spec.prior_mean();
  const Scalar d = static_cast<Scalar>(spec.dimension());
  return Scalar(-0.5) * d * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) +
         Scalar(0.5) * spec.log_det_precision() - Scalar(0.5) * r.dot(spec.prior_precision() * r);
}

template <typename Scalar>
Scalar log_joint(const VectorX<Scalar>& theta, const BasicDataset<Scalar>& data,
                 const BasicModelSpec<Scalar>& spec) {
  detail::check_spec(spec, data.cols());
  return log_likelihood(theta, data) + log_prior(theta, spec);
}

/// Gradient and hessian of the log-joint (log-likelihood plus log prior).
template <typename Scalar>
Curvature<Scalar> score_and_curvature(const VectorX<Scalar>& theta, const BasicDataset<Scalar>& data,
                                      const BasicModelSpec<Scalar>& spec) {
  detail::check_theta(theta, data.cols());
  detail::check_spec(spec, data.cols());
  const VectorX<Scalar> eta = data.features() * theta;
  const VectorX<Scalar> p = eta.unaryExpr([](Scalar e) { return sigmoid(e); });
  const VectorX<Scalar> resid = data.weights().cwiseProduct(data.labels() - p);
  const VectorX<Scalar> curv =
      data.weights().array() * p.array() * (Scalar(1) - p.array());

  Curvature<Scalar> out;
  out.gradient = data.features().transpose() * resid - spec.prior_precision() * (theta - spec.prior_mean());
  out.hessian = -(data.features().transpose() * curv.asDiagonal() * data.features()) - spec.prior_precision();
  return out;
}

/// Log-determinant of a symmetric positive-definite matrix via Cholesky.
template <typename Scalar>
Scalar log_det_spd(const MatrixX<Scalar>& m) {
  Eigen::LLT<MatrixX<Scalar>> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError("matrix is not positive definite");
  const MatrixX<Scalar> l = llt.matrixL();
  return Scalar(2) * l.diagonal().array().log().sum();
}

/// MAP estimate by Newton's method with step halving, started at `start`
/// or at the prior mean.
template <typename Scalar>
BasicModelFit<Scalar> fit_map(const BasicDataset<Scalar>& data, const BasicModelSpec<Scalar>& spec,
                              const BasicFitSettings<Scalar>& settings = {},
                              const std::optional<std::type_identity_t<VectorX<Scalar>>>& start = std::nullopt) {
  detail::check_spec(spec, data.cols());
  VectorX<Scalar> theta = start ? *start : spec.prior_mean();
  detail::check_theta(theta, data.cols());

  Scalar current = log_joint(theta, data, spec);
  int iter = 0;
  for (;; ++iter) {
    const Curvature<Scalar> c = score_and_curvature(theta, data, spec);
    const Scalar gnorm = c.gradient.norm();
    if (settings.on_iterate) settings.on_iterate(theta, c.hessian);
    if (gnorm <= settings.tolerance) {
      BasicModelFit<Scalar> fit;
      fit.theta_hat = theta;
      fit.log_lik_at_mode = log_likelihood(theta, data);
      fit.log_joint_at_mode = current;
      fit.fisher_info = -c.hessian;
      fit.converged = true;
      fit.iterations = iter;
      fit.final_gradient_norm = gnorm;
      return fit;
    }
    if (iter >= settings.max_iterations) {
      throw FitError("fit_map: no convergence after " + std::to_string(iter) + " iterations (gradient norm " +
                         std::to_string(static_cast<double>(gnorm)) + ")",
                     theta.template cast<double>(), static_cast<double>(gnorm));
    }

    Eigen::LLT<MatrixX<Scalar>> llt(-c.hessian);
    if (llt.info() != Eigen::Success) throw NumericalError("fit_map: log-joint hessian is not negative definite");
    const VectorX<Scalar> step = llt.solve(c.gradient);

    // Once the predicted gain (half the Newton decrement) is below what the
    // objective can resolve, value comparisons are rounding noise: take the full step.
    const Scalar scale = std::max(Scalar(1), std::abs(current));
    if (step.dot(c.gradient) <= std::sqrt(std::numeric_limits<Scalar>::epsilon()) * scale) {
      theta += step;
      current = log_joint(theta, data, spec);
      continue;
    }

    // Ties within rounding noise count as ascent.
    const Scalar slack = Scalar(16) * std::numeric_limits<Scalar>::epsilon() * scale;
    Scalar t(1);
    bool accepted = false;
    for (int h = 0; h <= settings.max_halvings; ++h, t /= Scalar(2)) {
      VectorX<Scalar> trial = theta + t * step;
      const Scalar value = log_joint(trial, data, spec);
      if (value >= current - slack) {
        theta = std::move(trial);
        current = value;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw NumericalError("fit_map: no ascent after " + std::to_string(settings.max_halvings) +
                           " step halvings (gradient norm " + std::to_string(static_cast<double>(gnorm)) + ")");
    }
  }
}

/// Laplace approximation of log p(data) under the prior, constants included.
template <typename Scalar>
Scalar laplace_log_evidence(const BasicModelFit<Scalar>& fit) {
  const Scalar d = static_cast<Scalar>(fit.theta_hat.size());
  return fit.log_joint_at_mode + Scalar(0.5) * d * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) -
         Scalar(0.5) * log_det_spd(fit.fisher_info);
}

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;
using Dataset = BasicDataset<double>;
using ModelSpec = BasicModelSpec<double>;
using ModelFit = BasicModelFit<double>;
using FitSettings = BasicFitSettings<double>;

}  // namespace bpls
