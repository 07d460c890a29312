#include "bpls/engine.hpp"

#include <algorithm>
#include <sstream>

#include "bpls/data_io.hpp"
#include "bpls/random.hpp"

namespace bpls {

Dataset Trajectory::final_labeled() const {
  Dataset d = initial_labeled;
  for (const StepRecord& s : steps) d = d.with_row(s.features, s.pseudo_label);
  return d;
}

Metrics evaluate(const ModelFit& fit, const Dataset& test) {
  if (test.rows() == 0) throw InputError("evaluate: empty test set");
  const Vector p = predict_proba(fit.theta_hat, test.features());
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double predicted = p[i] >= 0.5 ? 1.0 : 0.0;
    if (predicted == test.labels()[i]) ++hits;
  }
  const auto n = static_cast<double>(test.rows());
  return Metrics{static_cast<double>(hits) / n, -log_likelihood(fit.theta_hat, test) / n};
}

std::uint64_t config_hash(const EngineConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "criterion=" << to_string(c.criterion.kind) << ";refit=" << c.criterion.refit_per_candidate;
  if (c.criterion.oracle) {
    const OracleSettings& o = *c.criterion.oracle;
    os << ";oracle.samples=" << o.samples << ";oracle.seed=" << o.seed << ";oracle.halfwidth=" << o.grid_half_width_sd
       << ";oracle.steps=" << o.grid_steps << ";oracle.boundary=" << o.boundary_mass_check;
    if (o.grid) {
      os << ";grid.lower=" << o.grid->lower.transpose() << ";grid.upper=" << o.grid->upper.transpose();
      for (int s : o.grid->steps) os << ";grid.step=" << s;
    }
  }
  os << ";stop=" << static_cast<int>(c.stop.kind) << "," << c.stop.max_iterations << "," << c.stop.score_floor
     << ";fit=" << c.fit.tolerance << "," << c.fit.max_iterations << "," << c.fit.max_halvings
     << ";eval_every=" << c.eval_every << ";seed=" << c.seed;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : os.str()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Trajectory run(const Dataset& labeled, std::vector<Candidate> pool, const ModelSpec& spec,
               const EngineConfig& config, const Dataset* test) {
  const double ones = labeled.labels().sum();
  if (ones == 0.0 || ones == static_cast<double>(labeled.rows())) {
    const int missing = ones == 0.0 ? 1 : 0;
    throw DegenerateStartError("labeled set has no rows of class " + std::to_string(missing), missing);
  }
  {
    std::vector<CandidateId> ids;
    for (const Candidate& c : pool) ids.push_back(c.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw InputError("engine: duplicate pool ids");
  }
  if (config.stop.kind == StopRule::Kind::max_iterations && config.stop.max_iterations < 1) {
    throw ConfigError("engine: max_iterations must be >= 1");
  }
  if (config.eval_every < 1) throw ConfigError("engine: eval_every must be >= 1");
  config.criterion.validate(spec.dimension());

  Trajectory traj;
  traj.initial_labeled = labeled;
  traj.initial_pool_size = pool.size();
  traj.config_hash = config_hash(config);
  traj.seed = config.seed;

  Dataset current = labeled;
  std::optional<ModelFit> fit;
  auto refit = [&](const char* stage) {
    try {
      fit = fit_map(current, spec, config.fit);
    } catch (const Error& e) {
      throw RunError(std::string("engine: fit failed at ") + stage + " (step " +
                         std::to_string(traj.steps.size()) + "): " + e.what(),
                     traj);
    }
  };

  for (int t = 0;; ++t) {
    if (pool.empty()) break;
    if (config.stop.kind == StopRule::Kind::max_iterations && t >= config.stop.max_iterations) break;

    refit("selection");
    assign_pseudo_labels(fit->theta_hat, pool);

    CriterionSpec crit = config.criterion;
    if (crit.oracle) crit.oracle->seed = Rng::substream(config.seed, static_cast<std::uint64_t>(t)).next_u64();
    ScoredPool scored;
    try {
      scored = score_pool(current, spec, *fit, pool, crit, config.fit);
    } catch (const Error& e) {
      throw RunError(std::string("engine: scoring failed at step ") + std::to_string(t) + ": " + e.what(), traj);
    }

    const double log_incl = scored.log_inclusion_probs.at(scored.chosen);
    if (config.stop.kind == StopRule::Kind::score_floor && log_incl < config.stop.score_floor) break;

    auto it = std::find_if(pool.begin(), pool.end(), [&](const Candidate& c) { return c.id == scored.chosen; });
    StepRecord rec;
    rec.iteration = t;
    rec.chosen_id = it->id;
    rec.pseudo_label = it->pseudo_label;
    rec.features = it->features;
    rec.log_score_chosen = scored.scores.at(scored.chosen);
    rec.log_inclusion_prob = log_incl;
    rec.scores = std::move(scored.scores);
    rec.log_inclusion_probs = std::move(scored.log_inclusion_probs);
    rec.theta_hat = fit->theta_hat;
    if (test && t % config.eval_every == 0) rec.test = evaluate(*fit, *test);

    current = current.with_row(it->features, it->pseudo_label);
    pool.erase(it);
    fit.reset();
    traj.steps.push_back(std::move(rec));
  }

  if (!fit) refit("final fit");
  traj.final_fit = *fit;
  if (test) traj.final_test = evaluate(traj.final_fit, *test);
  return traj;
}

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  CsvTable t;
  t.header = {"iteration", "chosen_id", "pseudo_label", "log_score_chosen", "log_inclusion_prob",
              "test_accuracy", "test_log_loss"};
  for (const StepRecord& s : traj.steps) {
    t.rows.push_back({std::to_string(s.iteration), std::to_string(s.chosen_id), std::to_string(s.pseudo_label),
                      format_double(s.log_score_chosen), format_double(s.log_inclusion_prob),
                      s.test ? format_double(s.test->accuracy) : "", s.test ? format_double(s.test->log_loss) : ""});
  }
  write_csv_table(path, t);
}

void write_scores(const std::filesystem::path& path, const Trajectory& traj) {
  CsvTable t;
  t.header = {"iteration", "candidate_id", "score", "log_inclusion_prob"};
  for (const StepRecord& s : traj.steps) {
    for (const auto& [id, score] : s.scores) {
      t.rows.push_back({std::to_string(s.iteration), std::to_string(id), format_double(score),
                        format_double(s.log_inclusion_probs.at(id))});
    }
  }
  write_csv_table(path, t);
}

}  // namespace bpls
