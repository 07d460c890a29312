// bpls: run criterion comparisons over seeds and compare their summaries.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "experiment.hpp"

namespace bench = bpls::bench;

namespace {

int cmd_run(const std::string& config_path, bool force, int jobs) {
  bench::ExperimentConfig config;
  try {
    config = bench::load_config(config_path);
  } catch (const bench::ConfigFileError& e) {
    std::cerr << config_path << ":" << e.line() << ": " << e.what() << "\n";
    return bench::kBadConfig;
  }
  bench::RunOptions options;
  options.force = force;
  options.jobs = jobs;
  if (const char* root = std::getenv(bench::kOutputRootEnv); root && *root) options.output_root = root;
  const int code = bench::run_experiment(config, options, std::cerr);
  if (code == bench::kOk) {
    std::cout << "wrote " << (bench::resolve_output_dir(config, options.output_root) / "summary.csv").string() << "\n";
  }
  return code;
}

int cmd_compare(const std::vector<std::string>& files, const std::string& baseline) {
  try {
    std::vector<bench::SummaryRow> rows;
    for (const std::string& f : files) {
      std::vector<bench::SummaryRow> part = bench::read_summary(f);
      rows.insert(rows.end(), part.begin(), part.end());
    }
    const auto table = bench::compare(rows, baseline.empty() ? std::nullopt : std::optional(baseline));
    bench::print_comparison(std::cout, table, table.size() > 1);
    return bench::kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bench::kRuntimeFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-label selection experiments"};
  app.require_subcommand(1);

  std::string config_path;
  bool force = false;
  int jobs = 1;
  CLI::App* run = app.add_subcommand("run", "Run every (criterion, seed) cell of a config");
  run->add_option("config", config_path, "YAML experiment config")->required();
  run->add_flag("--force", force, "Overwrite existing outputs");
  run->add_option("--jobs", jobs, "Cells to run in parallel")->check(CLI::PositiveNumber);

  std::vector<std::string> files;
  std::string baseline;
  CLI::App* cmp = app.add_subcommand("compare", "Compare final accuracies across summary files");
  cmp->add_option("files", files, "summary.csv files")->required();
  cmp->add_option("--baseline", baseline, "Criterion to take paired differences against");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? bench::kOk : bench::kBadConfig;
  }

  if (run->parsed()) return cmd_run(config_path, force, jobs);
  return cmd_compare(files, baseline);
}
