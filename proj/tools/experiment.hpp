#pragma once

// Experiment harness behind the `bpls` command: YAML config loading, the
// (criterion, seed) grid runner and the summary comparison.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bpls/data_io.hpp"
#include "bpls/engine.hpp"

namespace bpls::bench {

inline constexpr const char* kOutputRootEnv = "BPLS_OUTPUT_ROOT";

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kBadConfig = 2, kRefused = 3 };

/// Config problem with the file position it was found at (1-based line, 0 when unknown).
class ConfigFileError : public ConfigError {
 public:
  ConfigFileError(const std::string& what, int line) : ConfigError(what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

struct CsvSource {
  std::filesystem::path path;
  CsvSchema schema;
  /// Fully labeled file with the same feature columns, for test metrics.
  std::optional<std::filesystem::path> test_path;
};

struct NamedCriterion {
  std::string name;
  CriterionSpec spec;
};

struct ExperimentConfig {
  /// Synthetic data is regenerated per seed; CSV data is shared by every seed.
  std::variant<DgpConfig, CsvSource> data;
  double prior_precision = 1.0;
  std::vector<NamedCriterion> criteria;
  /// Criterion-independent engine settings; `criterion` is filled per cell.
  EngineConfig engine;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir;
};

/// Parses YAML text. Relative CSV paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// `output_dir` resolved against the override root when one is given.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config, const std::optional<std::filesystem::path>& root);

struct RunOptions {
  bool force = false;
  int jobs = 1;
  std::optional<std::filesystem::path> output_root;
};

struct SummaryRow {
  std::string criterion;
  std::uint64_t seed = 0;
  double final_accuracy = 0.0;
  double final_log_loss = 0.0;
  std::vector<int> eval_iterations;
  std::vector<double> eval_accuracies;
  double wall_time_s = 0.0;
};

/// Runs every (criterion, seed) cell and writes
///   <out>/<criterion>/seed_<seed>/{trajectory,scores}.csv and <out>/summary.csv.
/// Returns an ExitCode; diagnostics go to `err`.
int run_experiment(const ExperimentConfig& config, const RunOptions& options, std::ostream& err);

void write_summary(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary(const std::filesystem::path& path);

struct CompareRow {
  std::string criterion;
  std::size_t n = 0;
  double mean_accuracy = 0.0;
  double sd_accuracy = 0.0;
  /// Present for non-baseline criteria when a baseline is in effect.
  std::optional<double> mean_diff, sd_diff;
  std::size_t wins = 0, losses = 0, ties = 0;
};

/// Per-criterion final-accuracy statistics and paired per-seed differences
/// against `baseline` (default: first criterion seen, when there are two or more).
/// Throws DataError listing missing (criterion, seed) pairs when seed sets differ.
std::vector<CompareRow> compare(const std::vector<SummaryRow>& rows, const std::optional<std::string>& baseline);

void print_comparison(std::ostream& out, const std::vector<CompareRow>& table, bool with_baseline);

}  // namespace bpls::bench
