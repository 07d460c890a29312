#include "experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <yaml-cpp/yaml.h>

namespace bpls::bench {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// YAML access with field paths and line numbers in every diagnostic.

int line_of(const YAML::Node& n) { return n.Mark().is_null() ? 0 : n.Mark().line + 1; }

class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (!node_.IsMap()) fail("expected a mapping");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigFileError("field '" + path_ + "': " + msg, line_of(node_));
  }

  std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const {
    seen_.insert(key);
    return static_cast<bool>(node_[key]);
  }

  YAML::Node get(const std::string& key) const {
    seen_.insert(key);
    YAML::Node n = node_[key];
    if (!n) throw ConfigFileError("field '" + child_path(key) + "' is required", line_of(node_));
    return n;
  }

  template <typename T>
  T scalar(const std::string& key) const {
    const YAML::Node n = get(key);
    return as<T>(n, child_path(key));
  }

  template <typename T>
  T scalar(const std::string& key, T fallback) const {
    return has(key) ? scalar<T>(key) : fallback;
  }

  Section sub(const std::string& key) const { return Section(get(key), child_path(key)); }

  /// Rejects keys that were never asked for, so typos do not silently fall back to defaults.
  void finish() const {
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigFileError("unknown field '" + child_path(key) + "'", line_of(kv.first));
    }
  }

  template <typename T>
  static T as(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) throw ConfigFileError("field '" + path + "': expected a scalar", line_of(n));
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigFileError("field '" + path + "': cannot read '" + n.Scalar() + "' as " + type_name<T>(), line_of(n));
    }
  }

 private:
  template <typename T>
  static const char* type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_integral_v<T>) return "an integer";
    else if constexpr (std::is_floating_point_v<T>) return "a number";
    else return "a string";
  }

  YAML::Node node_;
  std::string path_;
  mutable std::set<std::string> seen_;
};

Vector read_vector(const YAML::Node& n, const std::string& path) {
  if (!n.IsSequence()) throw ConfigFileError("field '" + path + "': expected a list of numbers", line_of(n));
  Vector v(static_cast<Eigen::Index>(n.size()));
  for (std::size_t i = 0; i < n.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = Section::as<double>(n[i], path + "[" + std::to_string(i) + "]");
  }
  return v;
}

std::vector<std::string> read_strings(const YAML::Node& n, const std::string& path) {
  if (!n.IsSequence()) throw ConfigFileError("field '" + path + "': expected a list of strings", line_of(n));
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n.size(); ++i) out.push_back(Section::as<std::string>(n[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

int positive(const Section& s, const std::string& key, int fallback) {
  if (!s.has(key)) return fallback;
  const YAML::Node n = s.get(key);
  const int v = Section::as<int>(n, s.child_path(key));
  if (v < 1) throw ConfigFileError("field '" + s.child_path(key) + "': must be >= 1", line_of(n));
  return v;
}

DgpConfig read_synthetic(const Section& s) {
  DgpConfig c;
  const std::string kind = s.scalar<std::string>("kind");
  if (kind == "logistic_linear") c.kind = DgpKind::logistic_linear;
  else if (kind == "two_gaussians") c.kind = DgpKind::two_gaussians;
  else s.fail("unknown kind '" + kind + "' (expected logistic_linear or two_gaussians)");
  c.dimension = positive(s, "dimension", 1);
  c.intercept = s.scalar<bool>("intercept", true);
  c.n_labeled = positive(s, "n_labeled", c.n_labeled);
  c.n_pool = positive(s, "n_pool", c.n_pool);
  c.n_test = positive(s, "n_test", c.n_test);
  c.max_retries = positive(s, "max_retries", c.max_retries);
  const Eigen::Index q = c.dimension + (c.intercept ? 1 : 0);
  if (c.kind == DgpKind::logistic_linear) {
    c.theta_true = read_vector(s.get("theta_true"), s.child_path("theta_true"));
    if (c.theta_true.size() != q) {
      s.fail("theta_true needs " + std::to_string(q) + " entries (intercept first when intercept is on)");
    }
  } else {
    c.class_mean = read_vector(s.get("class_mean"), s.child_path("class_mean"));
    if (c.class_mean.size() != c.dimension) s.fail("class_mean needs " + std::to_string(c.dimension) + " entries");
    c.covariance_scale = s.scalar<double>("covariance_scale", 1.0);
    if (!(c.covariance_scale > 0.0)) s.fail("covariance_scale must be > 0");
  }
  return c;
}

CsvSource read_csv_source(const Section& s, const fs::path& base_dir) {
  CsvSource c;
  const auto resolve = [&](const fs::path& p) { return p.is_absolute() || base_dir.empty() ? p : base_dir / p; };
  c.path = resolve(s.scalar<std::string>("path"));
  c.schema.label_column = s.scalar<std::string>("label_column", c.schema.label_column);
  c.schema.feature_columns = read_strings(s.get("feature_columns"), s.child_path("feature_columns"));
  if (c.schema.feature_columns.empty()) s.fail("feature_columns must not be empty");
  c.schema.missing_label_marker = s.scalar<std::string>("missing_label_marker", c.schema.missing_label_marker);
  c.schema.intercept = s.scalar<bool>("intercept", true);
  if (s.has("test_path")) c.test_path = resolve(s.scalar<std::string>("test_path"));
  return c;
}

bool path_safe(const std::string& name) {
  return !name.empty() && name != "." && name != ".." &&
         std::all_of(name.begin(), name.end(), [](char ch) {
           return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
         });
}

NamedCriterion read_criterion(const Section& s, Eigen::Index dimension) {
  NamedCriterion c;
  const std::string kind = s.scalar<std::string>("kind");
  try {
    c.spec.kind = parse_criterion_kind(kind);
  } catch (const ConfigError& e) {
    s.fail(e.what());
  }
  c.spec.refit_per_candidate = s.scalar<bool>("refit_per_candidate", false);
  c.name = s.scalar<std::string>("name", kind + (c.spec.refit_per_candidate ? "_refit" : ""));
  if (!path_safe(c.name)) s.fail("name '" + c.name + "' may only use letters, digits, '_', '-' and '.'");
  if (is_oracle(c.spec.kind)) {
    OracleSettings o;
    if (s.has("oracle")) {
      const Section os = s.sub("oracle");
      o.samples = os.scalar<std::size_t>("samples", o.samples);
      o.grid_half_width_sd = os.scalar<double>("grid_half_width_sd", o.grid_half_width_sd);
      o.grid_steps = os.scalar<int>("grid_steps", o.grid_steps);
      o.boundary_mass_check = os.scalar<double>("boundary_mass_check", o.boundary_mass_check);
      os.finish();
    }
    c.spec.oracle = o;
  } else if (s.has("oracle")) {
    s.fail("'oracle' settings only apply to oracle criteria");
  }
  try {
    c.spec.validate(dimension);
  } catch (const ConfigError& e) {
    s.fail(e.what());
  }
  s.finish();
  return c;
}

EngineConfig read_engine(const Section& s) {
  EngineConfig e;
  const std::string stop = s.scalar<std::string>("stop", "pool_exhausted");
  if (stop == "pool_exhausted") {
    e.stop = StopRule::exhaust();
  } else if (stop == "max_iterations") {
    e.stop = StopRule::iterations(s.scalar<int>("max_iterations"));
    if (e.stop.max_iterations < 1) s.fail("max_iterations must be >= 1");
  } else if (stop == "score_floor") {
    e.stop = StopRule::floor(s.scalar<double>("score_floor"));
  } else {
    s.fail("unknown stop rule '" + stop + "' (expected pool_exhausted, max_iterations or score_floor)");
  }
  if (stop != "max_iterations" && s.has("max_iterations")) s.fail("max_iterations needs stop: max_iterations");
  if (stop != "score_floor" && s.has("score_floor")) s.fail("score_floor needs stop: score_floor");
  e.eval_every = positive(s, "eval_every", 1);
  if (s.has("fit")) {
    const Section f = s.sub("fit");
    e.fit.tolerance = f.scalar<double>("tolerance", e.fit.tolerance);
    e.fit.max_iterations = positive(f, "max_iterations", e.fit.max_iterations);
    e.fit.max_halvings = positive(f, "max_halvings", e.fit.max_halvings);
    if (!(e.fit.tolerance > 0.0)) f.fail("tolerance must be > 0");
    f.finish();
  }
  s.finish();
  return e;
}

std::vector<std::uint64_t> read_seeds(const YAML::Node& n) {
  std::vector<std::uint64_t> seeds;
  if (n.IsSequence()) {
    for (std::size_t i = 0; i < n.size(); ++i) seeds.push_back(Section::as<std::uint64_t>(n[i], "seeds[" + std::to_string(i) + "]"));
  } else {
    const Section s(n, "seeds");
    const auto first = s.scalar<std::uint64_t>("first", 0);
    const int count = positive(s, "count", 1);
    s.finish();
    for (int i = 0; i < count; ++i) seeds.push_back(first + static_cast<std::uint64_t>(i));
  }
  if (seeds.empty()) throw ConfigFileError("field 'seeds': at least one seed is required", line_of(n));
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw ConfigFileError("field 'seeds': duplicate seed", line_of(n));
  return seeds;
}

// ---------------------------------------------------------------------------
// Running cells.

/// Writes through `write` into a sibling temp file, then renames it into place.
template <typename Writer>
void atomic_write(const fs::path& target, Writer&& write) {
  fs::path tmp = target;
  tmp += ".tmp";
  write(tmp);
  fs::rename(tmp, target);
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? ";" : "") + parts[i];
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ';');) out.push_back(part);
  return out;
}

std::string format_optional(double v) { return std::isnan(v) ? "" : format_double(v); }

double parse_optional(const std::string& s, std::size_t row, std::size_t col) {
  return s.empty() ? std::numeric_limits<double>::quiet_NaN() : parse_double(s, row, col);
}

struct Cell {
  const NamedCriterion* criterion;
  std::uint64_t seed;
};

struct SharedData {
  LoadedData data;
  std::optional<Dataset> test;
};

}  // namespace

ExperimentConfig parse_config(const std::string& yaml_text, const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigFileError("YAML syntax: " + e.msg, e.mark.is_null() ? 0 : e.mark.line + 1);
  }
  if (!root || root.IsNull()) throw ConfigFileError("config is empty", 0);
  const Section top(root, "");

  ExperimentConfig cfg;
  cfg.output_dir = top.scalar<std::string>("output_dir");
  cfg.seeds = read_seeds(top.get("seeds"));
  cfg.prior_precision = top.scalar<double>("prior_precision", 1.0);
  if (!(cfg.prior_precision > 0.0)) top.fail("prior_precision must be > 0");

  const Section data = top.sub("data");
  const std::string source = data.scalar<std::string>("source", "synthetic");
  Eigen::Index dimension = 0;
  if (source == "synthetic") {
    const DgpConfig dgp = read_synthetic(data);
    dimension = dgp.dimension + (dgp.intercept ? 1 : 0);
    cfg.data = dgp;
  } else if (source == "csv") {
    const CsvSource csv = read_csv_source(data, base_dir);
    dimension = static_cast<Eigen::Index>(csv.schema.feature_columns.size()) + (csv.schema.intercept ? 1 : 0);
    cfg.data = csv;
  } else {
    data.fail("unknown source '" + source + "' (expected synthetic or csv)");
  }
  data.finish();

  const YAML::Node crit = top.get("criteria");
  if (!crit.IsSequence() || crit.size() == 0) {
    throw ConfigFileError("field 'criteria': expected a non-empty list", line_of(crit));
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < crit.size(); ++i) {
    const Section s(crit[i], "criteria[" + std::to_string(i) + "]");
    NamedCriterion c = read_criterion(s, dimension);
    if (!names.insert(c.name).second) s.fail("duplicate criterion name '" + c.name + "'");
    cfg.criteria.push_back(std::move(c));
  }

  if (top.has("engine")) cfg.engine = read_engine(top.sub("engine"));
  top.finish();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigFileError("cannot open config file " + path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

fs::path resolve_output_dir(const ExperimentConfig& config, const std::optional<fs::path>& root) {
  if (!root || config.output_dir.is_absolute()) return config.output_dir;
  return *root / config.output_dir;
}

int run_experiment(const ExperimentConfig& config, const RunOptions& options, std::ostream& err) {
  const fs::path out = resolve_output_dir(config, options.output_root);
  std::vector<Cell> cells;
  for (const NamedCriterion& c : config.criteria) {
    for (std::uint64_t seed : config.seeds) cells.push_back({&c, seed});
  }
  auto cell_dir = [&](const Cell& c) { return out / c.criterion->name / ("seed_" + std::to_string(c.seed)); };

  if (!options.force) {
    std::vector<fs::path> existing;
    if (fs::exists(out / "summary.csv")) existing.push_back(out / "summary.csv");
    for (const Cell& c : cells) {
      if (fs::exists(cell_dir(c))) existing.push_back(cell_dir(c));
    }
    if (!existing.empty()) {
      err << "refusing to overwrite existing outputs (" << existing.size() << " paths, first: " << existing.front().string()
          << "); pass --force to overwrite\n";
      return kRefused;
    }
  }

  std::optional<SharedData> shared;
  try {
    if (const auto* csv = std::get_if<CsvSource>(&config.data)) {
      shared.emplace();
      shared->data = load_csv(csv->path, csv->schema);
      if (csv->test_path) {
        const LoadedData t = load_csv(*csv->test_path, csv->schema);
        if (!t.pool.empty()) throw SchemaError("test file " + csv->test_path->string() + " has unlabeled rows");
        shared->test = t.labeled;
      }
    }
    fs::create_directories(out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }

  const Eigen::Index q = shared ? shared->data.labeled.cols()
                                : std::get<DgpConfig>(config.data).dimension + (std::get<DgpConfig>(config.data).intercept ? 1 : 0);
  const ModelSpec spec = ModelSpec::isotropic(q, config.prior_precision);

  std::vector<std::optional<SummaryRow>> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  bool failed = false;

  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
      const Cell& cell = cells[i];
      const fs::path dir = cell_dir(cell);
      const auto started = std::chrono::steady_clock::now();
      Trajectory traj;
      std::string failure;
      try {
        fs::create_directories(dir);
        EngineConfig ec = config.engine;
        ec.criterion = cell.criterion->spec;
        ec.seed = cell.seed;
        if (shared) {
          traj = run(shared->data.labeled, shared->data.pool, spec, ec, shared->test ? &*shared->test : nullptr);
        } else {
          DgpConfig dgp = std::get<DgpConfig>(config.data);
          dgp.seed = cell.seed;
          const GeneratedData g = generate(dgp);
          traj = run(g.labeled, g.pool, spec, ec, &g.test);
        }
      } catch (const RunError& e) {
        traj = e.partial();
        failure = e.what();
      } catch (const std::exception& e) {
        failure = e.what();
      }

      try {
        if (fs::exists(dir)) {
          atomic_write(dir / "trajectory.csv", [&](const fs::path& p) { write_trajectory(p, traj); });
          atomic_write(dir / "scores.csv", [&](const fs::path& p) { write_scores(p, traj); });
        }
      } catch (const std::exception& e) {
        if (failure.empty()) failure = e.what();
      }

      if (!failure.empty()) {
        const std::lock_guard lock(err_mutex);
        failed = true;
        err << "error: " << cell.criterion->name << " seed " << cell.seed << ": " << failure << "\n";
        continue;
      }

      SummaryRow row;
      row.criterion = cell.criterion->name;
      row.seed = cell.seed;
      row.final_accuracy = traj.final_test ? traj.final_test->accuracy : std::numeric_limits<double>::quiet_NaN();
      row.final_log_loss = traj.final_test ? traj.final_test->log_loss : std::numeric_limits<double>::quiet_NaN();
      for (const StepRecord& s : traj.steps) {
        if (!s.test) continue;
        row.eval_iterations.push_back(s.iteration);
        row.eval_accuracies.push_back(s.test->accuracy);
      }
      row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      rows[i] = std::move(row);
    }
  };

  const int jobs = std::clamp(options.jobs, 1, static_cast<int>(std::max<std::size_t>(cells.size(), 1)));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();

  std::vector<SummaryRow> done;
  for (auto& r : rows) {
    if (r) done.push_back(std::move(*r));
  }
  try {
    atomic_write(out / "summary.csv", [&](const fs::path& p) { write_summary(p, done); });
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return failed ? kRuntimeFailure : kOk;
}

void write_summary(const fs::path& path, const std::vector<SummaryRow>& rows) {
  CsvTable t;
  t.header = {"criterion", "seed", "final_accuracy", "final_log_loss", "eval_iterations", "eval_accuracies", "wall_time_s"};
  for (const SummaryRow& r : rows) {
    std::vector<std::string> its, accs;
    for (int it : r.eval_iterations) its.push_back(std::to_string(it));
    for (double a : r.eval_accuracies) accs.push_back(format_double(a));
    t.rows.push_back({r.criterion, std::to_string(r.seed), format_optional(r.final_accuracy),
                      format_optional(r.final_log_loss), join(its), join(accs), format_double(r.wall_time_s)});
  }
  write_csv_table(path, t);
}

std::vector<SummaryRow> read_summary(const fs::path& path) {
  const CsvTable t = read_csv_table(path);
  const std::size_t c_crit = t.column("criterion"), c_seed = t.column("seed"), c_acc = t.column("final_accuracy"),
                    c_loss = t.column("final_log_loss"), c_its = t.column("eval_iterations"),
                    c_accs = t.column("eval_accuracies"), c_time = t.column("wall_time_s");
  std::vector<SummaryRow> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& cells = t.rows[i];
    const std::size_t line = i + 1;
    SummaryRow r;
    r.criterion = cells[c_crit];
    const double seed = parse_double(cells[c_seed], line, c_seed);
    if (seed < 0 || seed != std::floor(seed)) throw ParseError("seed must be a non-negative integer", line, c_seed);
    r.seed = static_cast<std::uint64_t>(seed);
    r.final_accuracy = parse_optional(cells[c_acc], line, c_acc);
    r.final_log_loss = parse_optional(cells[c_loss], line, c_loss);
    for (const std::string& s : split(cells[c_its])) r.eval_iterations.push_back(static_cast<int>(parse_double(s, line, c_its)));
    for (const std::string& s : split(cells[c_accs])) r.eval_accuracies.push_back(parse_double(s, line, c_accs));
    r.wall_time_s = parse_double(cells[c_time], line, c_time);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<CompareRow> compare(const std::vector<SummaryRow>& rows, const std::optional<std::string>& baseline) {
  std::vector<std::string> order;
  std::map<std::string, std::map<std::uint64_t, double>> by;
  std::set<std::uint64_t> all_seeds;
  for (const SummaryRow& r : rows) {
    if (!by.count(r.criterion)) order.push_back(r.criterion);
    if (!by[r.criterion].emplace(r.seed, r.final_accuracy).second) {
      throw DataError("duplicate summary row for " + r.criterion + " seed " + std::to_string(r.seed));
    }
    all_seeds.insert(r.seed);
  }
  if (order.empty()) throw DataError("no summary rows to compare");

  std::string missing;
  for (const std::string& c : order) {
    for (std::uint64_t s : all_seeds) {
      if (!by[c].count(s)) missing += (missing.empty() ? "" : ", ") + c + "/seed " + std::to_string(s);
    }
  }
  if (!missing.empty()) throw DataError("seed sets differ across criteria; missing pairs: " + missing);

  std::optional<std::string> base = baseline;
  if (base && !by.count(*base)) throw DataError("baseline '" + *base + "' is not in the summaries");
  if (!base && order.size() > 1) base = order.front();

  const auto mean_sd = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return std::pair{m, sd};
  };

  std::vector<CompareRow> table;
  for (const std::string& c : order) {
    CompareRow row;
    row.criterion = c;
    std::vector<double> acc;
    for (const auto& [seed, a] : by[c]) acc.push_back(a);
    row.n = acc.size();
    std::tie(row.mean_accuracy, row.sd_accuracy) = mean_sd(acc);
    if (base && c != *base) {
      std::vector<double> diffs;
      for (const auto& [seed, a] : by[c]) {
        const double d = a - by[*base].at(seed);
        diffs.push_back(d);
        if (d > 0.0) ++row.wins;
        else if (d < 0.0) ++row.losses;
        else ++row.ties;
      }
      const auto [m, sd] = mean_sd(diffs);
      row.mean_diff = m;
      row.sd_diff = sd;
    }
    table.push_back(std::move(row));
  }
  return table;
}

void print_comparison(std::ostream& out, const std::vector<CompareRow>& table, bool with_baseline) {
  CsvTable t;
  t.header = {"criterion", "n", "mean_accuracy", "sd_accuracy"};
  if (with_baseline) {
    for (const char* h : {"mean_diff_vs_baseline", "sd_diff", "wins", "losses", "ties"}) t.header.push_back(h);
  }
  for (const CompareRow& r : table) {
    std::vector<std::string> cells = {r.criterion, std::to_string(r.n), format_double(r.mean_accuracy),
                                      format_double(r.sd_accuracy)};
    if (with_baseline) {
      if (r.mean_diff) {
        for (std::string s : {format_double(*r.mean_diff), format_double(*r.sd_diff), std::to_string(r.wins),
                              std::to_string(r.losses), std::to_string(r.ties)})
          cells.push_back(std::move(s));
      } else {
        cells.insert(cells.end(), 5, "");
      }
    }
    t.rows.push_back(std::move(cells));
  }
  out << format_csv_table(t);
}

}  // namespace bpls::bench
