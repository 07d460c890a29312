#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bpls/data_io.hpp"

using namespace bpls;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "bpls_test_data_io";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

bool same(const Dataset& a, const Dataset& b) {
  return a.features() == b.features() && a.labels() == b.labels() && a.weights() == b.weights();
}

}  // namespace

TEST_SUITE("data_io") {

TEST_CASE("zero coefficients give balanced classes") {
  DgpConfig c;
  c.kind = DgpKind::logistic_linear;
  c.dimension = 2;
  c.theta_true = Vector::Zero(3);
  c.n_labeled = 10;
  c.n_pool = 10;
  c.n_test = 100000;
  c.seed = 5;
  const GeneratedData g = generate(c);
  CHECK(std::abs(g.test.labels().mean() - 0.5) <= 0.01);
  CHECK((g.labeled.features().col(0).array() == 1.0).all());
  CHECK(g.labeled.cols() == 3);
}

TEST_CASE("generation is deterministic per seed") {
  DgpConfig c;
  c.kind = DgpKind::two_gaussians;
  c.dimension = 2;
  c.class_mean = Vector::Zero(2);
  c.class_mean[0] = 1.0;
  c.seed = 99;
  const GeneratedData a = generate(c), b = generate(c);
  CHECK(same(a.labeled, b.labeled));
  CHECK(same(a.test, b.test));
  REQUIRE(a.pool.size() == b.pool.size());
  for (std::size_t i = 0; i < a.pool.size(); ++i) {
    CHECK(a.pool[i].id == b.pool[i].id);
    CHECK(a.pool[i].features == b.pool[i].features);
  }
  CHECK(a.hidden.by_id == b.hidden.by_id);

  c.seed = 100;
  CHECK_FALSE(same(generate(c).labeled, a.labeled));
}

TEST_CASE("two Gaussians reach the closed-form Bayes accuracy") {
  DgpConfig c;
  c.kind = DgpKind::two_gaussians;
  c.dimension = 2;
  c.class_mean = Vector::Zero(2);
  c.class_mean[0] = 2.0;
  c.n_test = 100000;
  c.seed = 3;
  const GeneratedData g = generate(c);
  // Bayes rule for means +/- mu with shared identity covariance: sign of x . mu.
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < g.test.rows(); ++i) {
    const double pred = g.test.features()(i, 1) > 0.0 ? 1.0 : 0.0;
    hits += pred == g.test.labels()[i];
  }
  const double phi2 = 0.5 * std::erfc(-2.0 / std::sqrt(2.0));
  CHECK(phi2 == doctest::Approx(0.977).epsilon(1e-3));
  CHECK(std::abs(static_cast<double>(hits) / 100000.0 - phi2) <= 0.02);
}

TEST_CASE("labeled split always holds both classes, or generation fails") {
  DgpConfig c;
  c.dimension = 1;
  c.theta_true = Vector::Zero(2);
  c.theta_true[0] = 1.5;
  c.n_labeled = 3;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    c.seed = seed;
    const GeneratedData g = generate(c);
    const double ones = g.labeled.labels().sum();
    CHECK(ones > 0.0);
    CHECK(ones < 3.0);
  }
  c.theta_true[0] = 60.0;
  c.max_retries = 5;
  CHECK_THROWS_AS(generate(c), GenerationError);
}

TEST_CASE("splits are disjoint draws and pool ids are 0..n-1") {
  DgpConfig c;
  c.dimension = 2;
  c.theta_true = Vector::Ones(3);
  c.n_labeled = 15;
  c.n_pool = 25;
  c.n_test = 30;
  const GeneratedData g = generate(c);
  CHECK(g.pool.size() == 25);
  for (std::size_t i = 0; i < g.pool.size(); ++i) {
    CHECK(g.pool[i].id == static_cast<CandidateId>(i));
    CHECK(g.hidden.by_id.count(g.pool[i].id) == 1);
    for (Eigen::Index r = 0; r < g.labeled.rows(); ++r) CHECK(g.labeled.features().row(r) != g.pool[i].features.transpose());
    for (Eigen::Index r = 0; r < g.test.rows(); ++r) CHECK(g.test.features().row(r) != g.pool[i].features.transpose());
  }
}

TEST_CASE("hidden labels cannot influence criteria") {
  DgpConfig c;
  c.dimension = 2;
  c.theta_true = Vector::Ones(3);
  GeneratedData g = generate(c);
  const ModelSpec spec = ModelSpec::standard(3);
  const ModelFit fit = fit_map(g.labeled, spec);
  assign_pseudo_labels(fit.theta_hat, g.pool);
  const ScoredPool before = score_pool(g.labeled, spec, fit, g.pool, CriterionSpec{});
  for (auto& [id, y] : g.hidden.by_id) y = 1 - y;
  const ScoredPool after = score_pool(g.labeled, spec, fit, g.pool, CriterionSpec{});
  CHECK(before.scores == after.scores);
}

TEST_CASE("load_csv splits labeled rows from marker rows") {
  const fs::path p = scratch("small.csv");
  write_text(p, "a,b,y\n1.5,2,1\n?x,0,?\n-0.25,1e-3,0\n3,4,?\n0.5,0.5,1\n");
  // "?x" in a feature column is not a number
  CHECK_THROWS_AS(load_csv(p, CsvSchema{"y", {"a", "b"}}), ParseError);

  write_text(p, "a,b,y\n1.5,2,1\n7,0,?\n-0.25,1e-3,0\n3,4,?\n0.5,0.5,1\n");
  const LoadedData d = load_csv(p, CsvSchema{"y", {"a", "b"}});
  CHECK(d.labeled.rows() == 3);
  CHECK(d.labeled.cols() == 3);
  CHECK(d.labeled.features()(1, 2) == 1e-3);
  CHECK(d.labeled.labels()[1] == 0.0);
  REQUIRE(d.pool.size() == 2);
  CHECK(d.pool[0].id == 0);
  CHECK(d.pool[0].features[1] == 7.0);
  CHECK(d.pool[1].id == 1);
  CHECK(d.pool[1].features[2] == 4.0);

  CsvSchema no_intercept{"y", {"b"}, "?", false};
  CHECK(load_csv(p, no_intercept).labeled.cols() == 1);
}

TEST_CASE("load_csv errors") {
  const fs::path p = scratch("errors.csv");
  write_text(p, "a,y\n1,1\n2,0\n");
  CHECK_THROWS_AS(load_csv(p, CsvSchema{"y", {}}), SchemaError);
  CHECK_THROWS_AS(load_csv(p, CsvSchema{"label", {"a"}}), SchemaError);

  write_text(p, "a,y\n1,1\n2,yes\n");
  CHECK_THROWS_AS(load_csv(p, CsvSchema{"y", {"a"}}), SchemaError);

  write_text(p, "a,y\n1,1\n2,0\n1.2.3,1\n");
  try {
    load_csv(p, CsvSchema{"y", {"a"}});
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.row() == 3);
    CHECK(e.column() == 0);
  }
}

TEST_CASE("generated data round-trips through CSV exactly") {
  DgpConfig c;
  c.dimension = 3;
  c.theta_true = Vector::Ones(4);
  c.n_labeled = 30;
  c.n_pool = 12;
  c.seed = 17;
  const GeneratedData g = generate(c);
  const CsvSchema schema{"label", {"x1", "x2", "x3"}};
  const fs::path p = scratch("roundtrip.csv");
  write_labeled_csv(p, g.labeled, g.pool, schema);
  const LoadedData back = load_csv(p, schema);
  CHECK((back.labeled.features() - g.labeled.features()).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(back.labeled.labels() == g.labeled.labels());
  REQUIRE(back.pool.size() == g.pool.size());
  for (std::size_t i = 0; i < g.pool.size(); ++i) {
    CHECK((back.pool[i].features - g.pool[i].features).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("csv quoting and number formatting") {
  const CsvTable t = parse_csv_table("name,v\r\n\"a, \"\"b\"\"\",1.5\r\nplain,-2\r\n");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][0] == "a, \"b\"");
  CHECK(parse_csv_table(format_csv_table(t)).rows == t.rows);
  CHECK_THROWS_AS(parse_csv_table("a,b\n1\n"), ParseError);

  for (double v : {0.1, -1e-300, 123456789.123456789, 2.0 / 3.0}) CHECK(parse_double(format_double(v), 0, 0) == v);
  CHECK(parse_double(" +2.5 ", 0, 0) == 2.5);
  CHECK_THROWS_AS(parse_double("2,5", 4, 1), ParseError);
  CHECK_THROWS_AS(parse_double("", 4, 1), ParseError);
}

}
