#include "bpls/data_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "bpls/random.hpp"

namespace bpls {

namespace {

bool needs_quotes(std::string_view s) { return s.find_first_of(",\"\r\n") != std::string_view::npos; }

void append_cell(std::string& out, std::string_view cell) {
  if (!needs_quotes(cell)) {
    out.append(cell);
    return;
  }
  out.push_back('"');
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

}  // namespace

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw SchemaError("csv: no column named '" + std::string(name) + "'");
}

CsvTable parse_csv_table(std::string_view text) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string cell;
  bool in_quotes = false;
  bool any = false;
  std::size_t line = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        cell.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
      any = true;
    } else if (c == ',') {
      record.push_back(std::move(cell));
      cell.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !cell.empty()) {
        record.push_back(std::move(cell));
        records.push_back(std::move(record));
      }
      record.clear();
      cell.clear();
      any = false;
      ++line;
    } else {
      cell.push_back(c);
      any = true;
    }
  }
  if (in_quotes) throw ParseError("csv: unterminated quoted field", line, record.size());
  if (any || !cell.empty()) {
    record.push_back(std::move(cell));
    records.push_back(std::move(record));
  }
  if (records.empty()) throw SchemaError("csv: missing header row");

  CsvTable table;
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw ParseError("csv: row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                           " cells, header has " + std::to_string(table.header.size()),
                       r, 0);
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("csv: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv_table(ss.str());
}

std::string format_csv_table(const CsvTable& table) {
  std::string out;
  auto emit = [&out](const std::vector<std::string>& rec) {
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (i) out.push_back(',');
      append_cell(out, rec[i]);
    }
    out.push_back('\n');
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
  return out;
}

void write_csv_table(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("csv: cannot write " + path.string());
  out << format_csv_table(table);
  if (!out) throw Error("csv: write failed for " + path.string());
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view cell, std::size_t row, std::size_t column) {
  std::string_view s = cell;
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("csv: cannot parse '" + std::string(cell) + "' as a number at row " + std::to_string(row) +
                         ", column " + std::to_string(column),
                     row, column);
  }
  return v;
}

// ---------------------------------------------------------------------------

namespace {

struct Draw {
  Matrix features;
  Vector labels;
};

Draw draw_rows(const DgpConfig& c, int n, Rng& rng) {
  const int cols = c.dimension + (c.intercept ? 1 : 0);
  Draw d{Matrix(n, cols), Vector(n)};
  for (int i = 0; i < n; ++i) {
    Vector x(c.dimension);
    if (c.kind == DgpKind::logistic_linear) {
      for (int k = 0; k < c.dimension; ++k) x[k] = rng.normal();
      Vector row(cols);
      if (c.intercept) row << 1.0, x;
      else row = x;
      d.features.row(i) = row.transpose();
      d.labels[i] = rng.bernoulli(sigmoid(row.dot(c.theta_true))) ? 1.0 : 0.0;
    } else {
      const bool y = rng.bernoulli(0.5);
      const double sd = std::sqrt(c.covariance_scale);
      for (int k = 0; k < c.dimension; ++k) x[k] = (y ? 1.0 : -1.0) * c.class_mean[k] + sd * rng.normal();
      if (c.intercept) d.features.row(i) << 1.0, x.transpose();
      else d.features.row(i) = x.transpose();
      d.labels[i] = y ? 1.0 : 0.0;
    }
  }
  return d;
}

void validate(const DgpConfig& c) {
  if (c.dimension < 1) throw ConfigError("dgp: dimension must be >= 1");
  if (c.n_labeled < 1 || c.n_pool < 1 || c.n_test < 1) throw ConfigError("dgp: all split sizes must be >= 1");
  const int cols = c.dimension + (c.intercept ? 1 : 0);
  if (c.kind == DgpKind::logistic_linear && c.theta_true.size() != cols) {
    throw ConfigError("dgp: theta_true must have " + std::to_string(cols) + " entries");
  }
  if (c.kind == DgpKind::two_gaussians) {
    if (c.class_mean.size() != c.dimension) {
      throw ConfigError("dgp: class_mean must have " + std::to_string(c.dimension) + " entries");
    }
    if (!(c.covariance_scale > 0.0)) throw ConfigError("dgp: covariance_scale must be positive");
  }
}

}  // namespace

GeneratedData generate(const DgpConfig& config) {
  validate(config);
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    Rng rng = Rng::substream(config.seed, static_cast<std::uint64_t>(attempt));
    Draw labeled = draw_rows(config, config.n_labeled, rng);
    const double ones = labeled.labels.sum();
    if (ones == 0.0 || ones == static_cast<double>(config.n_labeled)) continue;

    Draw pool = draw_rows(config, config.n_pool, rng);
    Draw test = draw_rows(config, config.n_test, rng);

    GeneratedData out;
    out.labeled = Dataset(std::move(labeled.features), std::move(labeled.labels));
    out.test = Dataset(std::move(test.features), std::move(test.labels));
    out.pool.reserve(static_cast<std::size_t>(config.n_pool));
    for (int i = 0; i < config.n_pool; ++i) {
      out.pool.push_back(Candidate{i, pool.features.row(i).transpose(), 0});
      out.hidden.by_id.emplace(i, static_cast<int>(pool.labels[i]));
    }
    return out;
  }
  throw GenerationError("dgp: labeled split lacked a class in all " + std::to_string(config.max_retries + 1) +
                        " attempts");
}

// ---------------------------------------------------------------------------

LoadedData parse_labeled_csv(const CsvTable& table, const CsvSchema& schema) {
  if (schema.feature_columns.empty()) throw SchemaError("csv schema: no feature columns given");
  const std::size_t label_col = table.column(schema.label_column);
  std::vector<std::size_t> feat_cols;
  for (const auto& name : schema.feature_columns) feat_cols.push_back(table.column(name));

  const Eigen::Index offset = schema.intercept ? 1 : 0;
  const Eigen::Index cols = static_cast<Eigen::Index>(feat_cols.size()) + offset;
  std::vector<Vector> lab_rows, pool_rows;
  std::vector<double> lab_y;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& rec = table.rows[r];
    const std::size_t file_row = r + 1;
    Vector x(cols);
    if (schema.intercept) x[0] = 1.0;
    for (std::size_t k = 0; k < feat_cols.size(); ++k) {
      x[offset + static_cast<Eigen::Index>(k)] = parse_double(rec[feat_cols[k]], file_row, feat_cols[k]);
    }
    if (!x.allFinite()) throw ParseError("csv: non-finite feature at row " + std::to_string(file_row), file_row, 0);
    const std::string& label = rec[label_col];
    if (label == schema.missing_label_marker) {
      pool_rows.push_back(std::move(x));
      continue;
    }
    double y;
    if (label == "0" || label == "0.0") y = 0.0;
    else if (label == "1" || label == "1.0") y = 1.0;
    else {
      throw SchemaError("csv: unknown label value '" + label + "' at row " + std::to_string(file_row) + ", column " +
                        std::to_string(label_col));
    }
    lab_rows.push_back(std::move(x));
    lab_y.push_back(y);
  }

  Matrix f(static_cast<Eigen::Index>(lab_rows.size()), cols);
  Vector y(static_cast<Eigen::Index>(lab_rows.size()));
  for (std::size_t i = 0; i < lab_rows.size(); ++i) {
    f.row(static_cast<Eigen::Index>(i)) = lab_rows[i].transpose();
    y[static_cast<Eigen::Index>(i)] = lab_y[i];
  }
  LoadedData out{Dataset(std::move(f), std::move(y)), {}};
  for (std::size_t i = 0; i < pool_rows.size(); ++i) {
    out.pool.push_back(Candidate{static_cast<CandidateId>(i), std::move(pool_rows[i]), 0});
  }
  return out;
}

LoadedData load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  if (schema.feature_columns.empty()) throw SchemaError("csv schema: no feature columns given");
  return parse_labeled_csv(read_csv_table(path), schema);
}

void write_labeled_csv(const std::filesystem::path& path, const Dataset& labeled, const std::vector<Candidate>& pool,
                       const CsvSchema& schema) {
  if (schema.feature_columns.empty()) throw SchemaError("csv schema: no feature columns given");
  const Eigen::Index offset = schema.intercept ? 1 : 0;
  const auto nfeat = static_cast<Eigen::Index>(schema.feature_columns.size());
  if (labeled.cols() != nfeat + offset) throw ShapeError("write_labeled_csv: schema does not match dataset columns");

  CsvTable t;
  t.header = schema.feature_columns;
  t.header.push_back(schema.label_column);
  auto row_of = [&](const Eigen::Ref<const Vector>& x, std::string label) {
    std::vector<std::string> rec;
    for (Eigen::Index k = 0; k < nfeat; ++k) rec.push_back(format_double(x[offset + k]));
    rec.push_back(std::move(label));
    return rec;
  };
  for (Eigen::Index i = 0; i < labeled.rows(); ++i) {
    t.rows.push_back(row_of(labeled.features().row(i).transpose(), labeled.labels()[i] > 0.5 ? "1" : "0"));
  }
  for (const Candidate& c : pool) {
    if (c.features.size() != labeled.cols()) throw ShapeError("write_labeled_csv: candidate length mismatch");
    t.rows.push_back(row_of(c.features, schema.missing_label_marker));
  }
  write_csv_table(path, t);
}

}  // namespace bpls
