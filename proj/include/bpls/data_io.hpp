#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "bpls/criteria.hpp"
#include "bpls/glm.hpp"

namespace bpls {

// ---------------------------------------------------------------------------
// Plain CSV tables (UTF-8, comma-delimited, header row, RFC 4180 quoting).

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws SchemaError when absent.
  std::size_t column(std::string_view name) const;
};

CsvTable read_csv_table(const std::filesystem::path& path);
CsvTable parse_csv_table(std::string_view text);
void write_csv_table(const std::filesystem::path& path, const CsvTable& table);
std::string format_csv_table(const CsvTable& table);

/// Shortest round-tripping decimal form, independent of the C locale.
std::string format_double(double v);
/// Locale-independent parse; throws ParseError carrying (row, column).
double parse_double(std::string_view cell, std::size_t row, std::size_t column);

// ---------------------------------------------------------------------------
// Synthetic data.

enum class DgpKind { logistic_linear, two_gaussians };

struct DgpConfig {
  DgpKind kind = DgpKind::logistic_linear;
  /// Number of raw covariates, excluding the intercept column.
  int dimension = 1;
  /// logistic_linear: coefficients on [1, x] (intercept first) or on x when intercept is off.
  Vector theta_true;
  /// two_gaussians: class 1 is centred on +class_mean, class 0 on -class_mean.
  Vector class_mean;
  /// two_gaussians: shared covariance is covariance_scale * I.
  double covariance_scale = 1.0;
  bool intercept = true;
  int n_labeled = 20;
  int n_pool = 100;
  int n_test = 1000;
  std::uint64_t seed = 0;
  int max_retries = 100;
};

/// True labels of the pool, kept apart from Candidate so that criteria never see them.
struct HiddenLabels {
  std::map<CandidateId, int> by_id;
};

struct GeneratedData {
  Dataset labeled;
  std::vector<Candidate> pool;
  HiddenLabels hidden;
  Dataset test;
};

/// Deterministic per seed. Retries with a fresh sub-seed until the labeled
/// split has both classes; throws GenerationError after max_retries.
GeneratedData generate(const DgpConfig& config);

// ---------------------------------------------------------------------------
// CSV ingestion.

struct CsvSchema {
  std::string label_column = "y";
  std::vector<std::string> feature_columns;
  std::string missing_label_marker = "?";
  bool intercept = true;
};

struct LoadedData {
  Dataset labeled;
  std::vector<Candidate> pool;
};

/// Rows whose label is the missing marker become pool candidates, numbered
/// 0, 1, ... in file order; labels must otherwise be 0 or 1.
LoadedData load_csv(const std::filesystem::path& path, const CsvSchema& schema);
LoadedData parse_labeled_csv(const CsvTable& table, const CsvSchema& schema);

/// Writes labeled rows then pool rows (with the missing marker) in the
/// layout load_csv reads back. The intercept column, if the schema has one,
/// is assumed to be the first feature and is not written.
void write_labeled_csv(const std::filesystem::path& path, const Dataset& labeled,
                       const std::vector<Candidate>& pool, const CsvSchema& schema);

}  // namespace bpls
