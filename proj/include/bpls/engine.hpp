#pragma once

// The self-training loop: fit on the labeled set, pseudo-label the pool,
// score it, move the winner into the labeled set, repeat.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "bpls/criteria.hpp"
#include "bpls/glm.hpp"

namespace bpls {

struct StopRule {
  enum class Kind { pool_exhausted, max_iterations, score_floor };

  Kind kind = Kind::pool_exhausted;
  int max_iterations = 0;
  /// Stop once the winner's log inclusion probability falls below this.
  double score_floor = 0.0;

  static StopRule exhaust() { return {}; }
  static StopRule iterations(int n) { return {Kind::max_iterations, n, 0.0}; }
  static StopRule floor(double log_prob) { return {Kind::score_floor, 0, log_prob}; }
};

struct EngineConfig {
  CriterionSpec criterion;
  StopRule stop;
  FitSettings fit;
  /// Test metrics every `eval_every` steps (counting from step 0) and on the final fit.
  int eval_every = 1;
  /// Seeds Monte-Carlo oracle criteria only.
  std::uint64_t seed = 0;
};

struct Metrics {
  double accuracy = 0.0;
  double log_loss = 0.0;
};

struct StepRecord {
  int iteration = 0;
  CandidateId chosen_id = 0;
  int pseudo_label = 0;
  Vector features;
  std::map<CandidateId, double> scores;
  std::map<CandidateId, double> log_inclusion_probs;
  double log_score_chosen = 0.0;
  double log_inclusion_prob = 0.0;
  /// Fit on the labeled set this step selected from.
  Vector theta_hat;
  std::optional<Metrics> test;
};

struct Trajectory {
  Dataset initial_labeled;
  std::size_t initial_pool_size = 0;
  std::vector<StepRecord> steps;
  ModelFit final_fit;
  std::optional<Metrics> final_test;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  /// Labeled rows after the last step.
  Dataset final_labeled() const;
};

/// A run aborted by a fit failure; carries everything recorded before it.
class RunError : public Error {
 public:
  RunError(const std::string& what, Trajectory partial) : Error(what), partial_(std::move(partial)) {}
  const Trajectory& partial() const noexcept { return partial_; }

 private:
  Trajectory partial_;
};

/// Accuracy at threshold 0.5 (ties to class 1) and mean negative log-likelihood.
Metrics evaluate(const ModelFit& fit, const Dataset& test);

/// FNV-1a over a canonical text rendering of the config.
std::uint64_t config_hash(const EngineConfig& config);

/// Runs self-training until the stop rule fires or the pool is empty.
/// Throws DegenerateStartError when `labeled` lacks a class, RunError on fit failures.
Trajectory run(const Dataset& labeled, std::vector<Candidate> pool, const ModelSpec& spec,
               const EngineConfig& config, const Dataset* test = nullptr);

/// One line per step: iteration, chosen_id, pseudo_label, log_score_chosen,
/// log_inclusion_prob, test_accuracy, test_log_loss (empty when not evaluated).
void write_trajectory(const std::filesystem::path& path, const Trajectory& traj);

/// Every score: iteration, candidate_id, score, log_inclusion_prob.
void write_scores(const std::filesystem::path& path, const Trajectory& traj);

}  // namespace bpls
