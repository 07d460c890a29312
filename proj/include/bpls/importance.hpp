#pragma once

// Inverse-probability weights for the rows a self-training run added, and the
// weighted refit that uses them.

#include <filesystem>
#include <vector>

#include "bpls/engine.hpp"

namespace bpls {

enum class WeightConvention {
  /// weight_t = 1 / pi_t, with pi_t the chosen candidate's softmax mass at step t.
  per_step,
  /// weight_t = 1 / (pi_1 * ... * pi_t). A heuristic: the survival probability of
  /// staying in the pool at earlier steps is not recoverable from the scores alone.
  cumulative,
};

struct AddedRow {
  Candidate candidate;
  int step = 0;
  double inclusion_prob = 1.0;
  double weight = 1.0;
  bool capped = false;
};

struct WeightedAugmentedSet {
  Dataset base;
  std::vector<AddedRow> added;
  std::size_t cap_activations = 0;

  /// Base rows with weight 1 followed by the added rows with their weights.
  Dataset to_dataset() const;
};

inline constexpr double kDefaultWeightCap = 100.0;

/// Throws DataError when a step lacks a valid log inclusion probability and
/// ConfigError when cap < 1.
WeightedAugmentedSet ipw_weights(const Trajectory& traj, WeightConvention convention,
                                 double cap = kDefaultWeightCap);

ModelFit weighted_refit(const WeightedAugmentedSet& wset, const ModelSpec& spec, const FitSettings& settings = {});

/// candidate_id, step, inclusion_prob, weight.
void write_weights(const std::filesystem::path& path, const WeightedAugmentedSet& wset);

}  // namespace bpls
