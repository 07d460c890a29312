#include "bpls/importance.hpp"

#include <cmath>
#include <set>

#include "bpls/data_io.hpp"

namespace bpls {

Dataset WeightedAugmentedSet::to_dataset() const {
  const Eigen::Index n0 = base.rows();
  const auto n = n0 + static_cast<Eigen::Index>(added.size());
  Matrix f(n, base.cols());
  Vector y(n), w(n);
  f.topRows(n0) = base.features();
  y.head(n0) = base.labels();
  w.head(n0).setOnes();
  for (std::size_t k = 0; k < added.size(); ++k) {
    const auto r = n0 + static_cast<Eigen::Index>(k);
    f.row(r) = added[k].candidate.features.transpose();
    y[r] = added[k].candidate.pseudo_label;
    w[r] = added[k].weight;
  }
  return Dataset(std::move(f), std::move(y), std::move(w));
}

WeightedAugmentedSet ipw_weights(const Trajectory& traj, WeightConvention convention, double cap) {
  if (!(cap >= 1.0)) throw ConfigError("ipw: cap must be >= 1");
  WeightedAugmentedSet out;
  out.base = Dataset(traj.initial_labeled.features(), traj.initial_labeled.labels());

  std::set<CandidateId> seen;
  double log_cumulative = 0.0;
  for (const StepRecord& s : traj.steps) {
    const double lp = s.log_inclusion_prob;
    if (!std::isfinite(lp) || lp > 1e-12) {
      throw DataError("ipw: step " + std::to_string(s.iteration) + " has no valid log inclusion probability");
    }
    if (!seen.insert(s.chosen_id).second) {
      throw DataError("ipw: candidate " + std::to_string(s.chosen_id) + " added twice");
    }
    log_cumulative += std::min(lp, 0.0);
    const double log_pi = convention == WeightConvention::per_step ? std::min(lp, 0.0) : log_cumulative;

    AddedRow row;
    row.candidate = Candidate{s.chosen_id, s.features, s.pseudo_label};
    row.step = s.iteration;
    row.inclusion_prob = std::exp(log_pi);
    // Compare on the log scale so that tiny cumulative probabilities do not overflow.
    if (-log_pi > std::log(cap)) {
      row.weight = cap;
      row.capped = true;
      ++out.cap_activations;
    } else {
      row.weight = std::exp(-log_pi);
    }
    out.added.push_back(std::move(row));
  }
  return out;
}

ModelFit weighted_refit(const WeightedAugmentedSet& wset, const ModelSpec& spec, const FitSettings& settings) {
  return fit_map(wset.to_dataset(), spec, settings);
}

void write_weights(const std::filesystem::path& path, const WeightedAugmentedSet& wset) {
  CsvTable t;
  t.header = {"candidate_id", "step", "inclusion_prob", "weight"};
  for (const AddedRow& r : wset.added) {
    t.rows.push_back({std::to_string(r.candidate.id), std::to_string(r.step), format_double(r.inclusion_prob),
                      format_double(r.weight)});
  }
  write_csv_table(path, t);
}

}  // namespace bpls
