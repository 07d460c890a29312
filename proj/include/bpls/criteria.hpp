#pragma once

// Pseudo-label selection criteria. Every criterion maps a candidate (with its
// pseudo-label) to a real score that is maximized; the Bayes criteria are on
// the log scale.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bpls/glm.hpp"
#include "bpls/oracles.hpp"

namespace bpls {

using CandidateId = std::int64_t;

/// An unlabeled point. The pseudo-label is written by the current fit before scoring.
struct Candidate {
  CandidateId id = 0;
  Vector features;
  int pseudo_label = 0;
};

enum class CriterionKind {
  bayes_laplace,
  bayes_oracle_quadrature,
  bayes_oracle_montecarlo,
  max_predicted_prob,
  predictive_variance,
  likelihood_only,
  optimistic_superset,
  pessimistic_superset,
};

std::string_view to_string(CriterionKind kind);
/// Throws ConfigError for unknown names.
CriterionKind parse_criterion_kind(std::string_view name);
bool is_oracle(CriterionKind kind);

struct OracleSettings {
  /// Explicit grid; when absent, a Laplace-centered box of +/- grid_half_width_sd.
  std::optional<oracles::QuadratureGrid> grid;
  double grid_half_width_sd = 8.0;
  int grid_steps = -1;
  double boundary_mass_check = 1e-6;
  std::size_t samples = 100'000;
  std::uint64_t seed = 0;
};

struct CriterionSpec {
  CriterionKind kind = CriterionKind::bayes_laplace;
  std::optional<OracleSettings> oracle;
  /// Refit the MAP on each augmented dataset instead of reusing the fit on the labeled data.
  bool refit_per_candidate = false;

  /// Throws ConfigError when oracle settings are missing or the dimension is too large for quadrature.
  void validate(Eigen::Index dimension) const;
};

struct ScoredPool {
  std::map<CandidateId, double> scores;
  CandidateId chosen = 0;
  std::map<CandidateId, double> log_inclusion_probs;
};

/// score_pool was handed an empty pool.
class PoolExhausted : public Error {
 public:
  PoolExhausted() : Error("candidate pool is empty") {}
};

/// Hard labels at threshold 0.5; a probability of exactly 0.5 maps to class 1.
void assign_pseudo_labels(const Vector& theta, std::vector<Candidate>& pool);

/// log p(data + (x, pseudo_label) | theta).
double pseudo_label_utility(const Vector& theta, const Dataset& data, const Candidate& cand);

/// Laplace form of the pseudo posterior predictive,
///   l_aug(theta_hat) - 1/2 log det I_aug(theta_hat),
/// where l_aug and I_aug are the log-likelihood and the observed information
/// of the labeled data augmented by the candidate. The (q/2) log 2 pi term is
/// dropped since it is common to all candidates. With `refit` false,
/// theta_hat is `base_fit.theta_hat` and I_aug is a rank-one update of
/// `base_fit.fisher_info`; otherwise the augmented data is refitted.
double bayes_laplace_score(const Dataset& data, const ModelSpec& spec, const Candidate& cand,
                           const ModelFit& base_fit, bool refit, const FitSettings& settings = {});

/// Convenience overload that fits the labeled data itself.
double bayes_laplace_score(const Dataset& data, const ModelSpec& spec, const Candidate& cand, bool refit = false,
                           const FitSettings& settings = {});

/// Numerical reference for the Bayes criterion: log of the posterior
/// predictive of the pseudo-labeled candidate, log p(data + (x, y)) - log p(data),
/// by grid quadrature or importance sampling.
class BayesOracle {
 public:
  BayesOracle(const Dataset& data, const ModelSpec& spec, CriterionKind kind, const OracleSettings& settings,
              const FitSettings& fit_settings = {});

  double score(const Candidate& cand) const;
  /// Score for the candidate's features with an arbitrary label.
  double score(const Vector& x, int label) const;

 private:
  std::optional<oracles::PosteriorGrid> grid_;
  std::optional<oracles::ImportanceSample> sample_;
};

double bayes_oracle_score(const Dataset& data, const ModelSpec& spec, const Candidate& cand, CriterionKind kind,
                          const OracleSettings& settings);

/// max_predicted_prob: max(p, 1 - p); predictive_variance: -p(1 - p);
/// likelihood_only: l_aug(theta_hat) without the curvature term.
double heuristic_score(CriterionKind kind, const ModelFit& fit, const Candidate& cand);

enum class SupersetMode { optimistic, pessimistic };

/// Max (optimistic) or min (pessimistic) of bayes_laplace_score over both labels.
double superset_score(const Dataset& data, const ModelSpec& spec, const Candidate& cand, SupersetMode mode,
                      const ModelFit& base_fit, bool refit, const FitSettings& settings = {});

/// Scores every candidate, picks the argmax (lowest id on ties) and
/// softmax-normalizes the scores into log inclusion probabilities.
/// Throws PoolExhausted for an empty pool.
ScoredPool score_pool(const Dataset& data, const ModelSpec& spec, const std::vector<Candidate>& pool,
                      const CriterionSpec& crit, const FitSettings& settings = {});

/// Same, reusing a fit of `data` already at hand.
ScoredPool score_pool(const Dataset& data, const ModelSpec& spec, const ModelFit& base_fit,
                      const std::vector<Candidate>& pool, const CriterionSpec& crit,
                      const FitSettings& settings = {});

/// Argmax with lowest-id tie-break and log-softmax over an id-keyed score map.
ScoredPool normalize_scores(std::map<CandidateId, double> scores);

}  // namespace bpls
