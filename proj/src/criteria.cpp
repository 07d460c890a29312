#include "bpls/criteria.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "bpls/numeric.hpp"

namespace bpls {

namespace {

constexpr std::array<std::pair<CriterionKind, std::string_view>, 8> kNames{{
    {CriterionKind::bayes_laplace, "bayes_laplace"},
    {CriterionKind::bayes_oracle_quadrature, "bayes_oracle_quadrature"},
    {CriterionKind::bayes_oracle_montecarlo, "bayes_oracle_montecarlo"},
    {CriterionKind::max_predicted_prob, "max_predicted_prob"},
    {CriterionKind::predictive_variance, "predictive_variance"},
    {CriterionKind::likelihood_only, "likelihood_only"},
    {CriterionKind::optimistic_superset, "optimistic_superset"},
    {CriterionKind::pessimistic_superset, "pessimistic_superset"},
}};

void check_candidate(const Candidate& cand, Eigen::Index cols) {
  if (cand.features.size() != cols) {
    throw ShapeError("candidate " + std::to_string(cand.id) + " has " + std::to_string(cand.features.size()) +
                     " features, expected " + std::to_string(cols));
  }
  if (!cand.features.allFinite()) throw InputError("candidate " + std::to_string(cand.id) + " has non-finite features");
  if (cand.pseudo_label != 0 && cand.pseudo_label != 1) {
    throw InputError("candidate " + std::to_string(cand.id) + " has a non-binary pseudo-label");
  }
}

double point_log_prob(const Vector& theta, const Vector& x, int label) {
  return logit_log_prob(x.dot(theta), label ? 1.0 : 0.0);
}

}  // namespace

std::string_view to_string(CriterionKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

CriterionKind parse_criterion_kind(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  throw ConfigError("unknown criterion kind '" + std::string(name) + "'");
}

bool is_oracle(CriterionKind kind) {
  return kind == CriterionKind::bayes_oracle_quadrature || kind == CriterionKind::bayes_oracle_montecarlo;
}

void CriterionSpec::validate(Eigen::Index dimension) const {
  if (!is_oracle(kind)) return;
  if (!oracle) throw ConfigError(std::string(to_string(kind)) + " requires oracle settings");
  if (kind == CriterionKind::bayes_oracle_quadrature && dimension > 2) {
    throw ConfigError("bayes_oracle_quadrature supports model dimension <= 2, got " + std::to_string(dimension));
  }
  if (kind == CriterionKind::bayes_oracle_montecarlo && oracle->samples < 1000) {
    throw ConfigError("bayes_oracle_montecarlo needs at least 1000 samples");
  }
}

void assign_pseudo_labels(const Vector& theta, std::vector<Candidate>& pool) {
  for (Candidate& c : pool) {
    if (c.features.size() != theta.size()) throw ShapeError("candidate feature length does not match theta");
    c.pseudo_label = sigmoid(c.features.dot(theta)) >= 0.5 ? 1 : 0;
  }
}

double pseudo_label_utility(const Vector& theta, const Dataset& data, const Candidate& cand) {
  check_candidate(cand, data.cols());
  return log_likelihood(theta, data) + point_log_prob(theta, cand.features, cand.pseudo_label);
}

double bayes_laplace_score(const Dataset& data, const ModelSpec& spec, const Candidate& cand,
                           const ModelFit& base_fit, bool refit, const FitSettings& settings) {
  check_candidate(cand, data.cols());
  if (refit) {
    const Dataset augmented = data.with_row(cand.features, cand.pseudo_label);
    const ModelFit fit = fit_map(augmented, spec, settings, base_fit.theta_hat);
    return fit.log_lik_at_mode - 0.5 * log_det_spd(fit.fisher_info);
  }
  const Vector& theta = base_fit.theta_hat;
  const double p = sigmoid(cand.features.dot(theta));
  const double loglik = base_fit.log_lik_at_mode + point_log_prob(theta, cand.features, cand.pseudo_label);
  Matrix info = base_fit.fisher_info;
  info.selfadjointView<Eigen::Lower>().rankUpdate(cand.features, p * (1.0 - p));
  info.triangularView<Eigen::StrictlyUpper>() = info.transpose();
  return loglik - 0.5 * log_det_spd(info);
}

double bayes_laplace_score(const Dataset& data, const ModelSpec& spec, const Candidate& cand, bool refit,
                           const FitSettings& settings) {
  return bayes_laplace_score(data, spec, cand, fit_map(data, spec, settings), refit, settings);
}

BayesOracle::BayesOracle(const Dataset& data, const ModelSpec& spec, CriterionKind kind,
                         const OracleSettings& settings, const FitSettings& fit_settings) {
  CriterionSpec{kind, settings, false}.validate(spec.dimension());
  if (!is_oracle(kind)) throw ConfigError(std::string(to_string(kind)) + " is not an oracle criterion");
  const ModelFit fit = fit_map(data, spec, fit_settings);
  const auto log_lik = oracles::logistic_log_likelihood(data);
  if (kind == CriterionKind::bayes_oracle_quadrature) {
    oracles::QuadratureGrid grid =
        settings.grid ? *settings.grid
                      : oracles::laplace_grid(fit.theta_hat, fit.fisher_info, settings.grid_half_width_sd,
                                              settings.grid_steps);
    if (!settings.grid) grid.boundary_mass_check = settings.boundary_mass_check;
    grid_.emplace(log_lik, spec, grid);
  } else {
    sample_.emplace(log_lik, spec, fit.theta_hat, fit.fisher_info, settings.samples, settings.seed);
  }
}

double BayesOracle::score(const Vector& x, int label) const {
  const auto point = oracles::logistic_point_log_prob(x, label);
  if (grid_) return grid_->log_expectation(point);
  return sample_->log_expectation(point).log_value;
}

double BayesOracle::score(const Candidate& cand) const { return score(cand.features, cand.pseudo_label); }

double bayes_oracle_score(const Dataset& data, const ModelSpec& spec, const Candidate& cand, CriterionKind kind,
                          const OracleSettings& settings) {
  check_candidate(cand, data.cols());
  return BayesOracle(data, spec, kind, settings).score(cand);
}

double heuristic_score(CriterionKind kind, const ModelFit& fit, const Candidate& cand) {
  check_candidate(cand, fit.theta_hat.size());
  const double p = clamp_probability(sigmoid(cand.features.dot(fit.theta_hat)));
  switch (kind) {
    case CriterionKind::max_predicted_prob:
      return std::max(p, 1.0 - p);
    case CriterionKind::predictive_variance:
      return -p * (1.0 - p);
    case CriterionKind::likelihood_only:
      return fit.log_lik_at_mode + point_log_prob(fit.theta_hat, cand.features, cand.pseudo_label);
    default:
      throw ConfigError(std::string(to_string(kind)) + " is not a heuristic criterion");
  }
}

double superset_score(const Dataset& data, const ModelSpec& spec, const Candidate& cand, SupersetMode mode,
                      const ModelFit& base_fit, bool refit, const FitSettings& settings) {
  Candidate relabeled = cand;
  relabeled.pseudo_label = 0;
  const double s0 = bayes_laplace_score(data, spec, relabeled, base_fit, refit, settings);
  relabeled.pseudo_label = 1;
  const double s1 = bayes_laplace_score(data, spec, relabeled, base_fit, refit, settings);
  return mode == SupersetMode::optimistic ? std::max(s0, s1) : std::min(s0, s1);
}

ScoredPool normalize_scores(std::map<CandidateId, double> scores) {
  if (scores.empty()) throw PoolExhausted();
  ScoredPool out;
  Vector v(static_cast<Eigen::Index>(scores.size()));
  Eigen::Index k = 0;
  bool first = true;
  double best = 0.0;
  for (const auto& [id, s] : scores) {
    if (std::isnan(s)) throw NumericalError("criterion score for candidate " + std::to_string(id) + " is NaN");
    if (first || s > best) {
      best = s;
      out.chosen = id;
      first = false;
    }
    v[k++] = s;
  }
  const double lse = log_sum_exp(v);
  for (const auto& [id, s] : scores) out.log_inclusion_probs.emplace(id, s - lse);
  out.scores = std::move(scores);
  return out;
}

ScoredPool score_pool(const Dataset& data, const ModelSpec& spec, const ModelFit& base_fit,
                      const std::vector<Candidate>& pool, const CriterionSpec& crit, const FitSettings& settings) {
  if (pool.empty()) throw PoolExhausted();
  crit.validate(spec.dimension());

  std::optional<BayesOracle> oracle;
  if (is_oracle(crit.kind)) oracle.emplace(data, spec, crit.kind, *crit.oracle, settings);

  std::map<CandidateId, double> scores;
  for (const Candidate& cand : pool) {
    check_candidate(cand, data.cols());
    double s = 0.0;
    switch (crit.kind) {
      case CriterionKind::bayes_laplace:
        s = bayes_laplace_score(data, spec, cand, base_fit, crit.refit_per_candidate, settings);
        break;
      case CriterionKind::bayes_oracle_quadrature:
      case CriterionKind::bayes_oracle_montecarlo:
        s = oracle->score(cand);
        break;
      case CriterionKind::max_predicted_prob:
      case CriterionKind::predictive_variance:
      case CriterionKind::likelihood_only:
        s = heuristic_score(crit.kind, base_fit, cand);
        break;
      case CriterionKind::optimistic_superset:
        s = superset_score(data, spec, cand, SupersetMode::optimistic, base_fit, crit.refit_per_candidate, settings);
        break;
      case CriterionKind::pessimistic_superset:
        s = superset_score(data, spec, cand, SupersetMode::pessimistic, base_fit, crit.refit_per_candidate,
                           settings);
        break;
    }
    if (!scores.emplace(cand.id, s).second) {
      throw InputError("duplicate candidate id " + std::to_string(cand.id) + " in pool");
    }
  }
  return normalize_scores(std::move(scores));
}

ScoredPool score_pool(const Dataset& data, const ModelSpec& spec, const std::vector<Candidate>& pool,
                      const CriterionSpec& crit, const FitSettings& settings) {
  if (pool.empty()) throw PoolExhausted();
  return score_pool(data, spec, fit_map(data, spec, settings), pool, crit, settings);
}

}  // namespace bpls
