// ihsim: run one experiment and write its CSV table.
//
//   ihsim <los|harvest|se|protocol|secrecy> --config <path> --seed <u64> --out <path>
//         [--trials N] [--ocr LIST] [--k LIST] [--d LIST]
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 guard
// violation, 1 anything else.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ihsim/config.hpp"
#include "ihsim/errors.hpp"
#include "ihsim/experiments.hpp"

namespace {

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ihsim::ValidationError("out", "cannot write '" + path.string() + "'");
  out << contents;
}

// results.csv + "trace_rate0.csv" -> results.trace_rate0.csv
std::filesystem::path sibling(const std::filesystem::path& out, const std::string& suffix) {
  auto p = out;
  p.replace_extension();
  p += "." + suffix;
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Information harvesting simulator"};
  std::string experiment;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_path;
  std::optional<std::uint64_t> trials;
  std::vector<double> ocr, d;
  std::vector<int> k;

  app.add_option("experiment", experiment, "los, harvest, se, protocol or secrecy")
      ->required()
      ->check(CLI::IsMember({"los", "harvest", "se", "protocol", "secrecy"}));
  app.add_option("--config", config_path, "JSON config; absent keys take the table defaults")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed")->required();
  app.add_option("--out", out_path, "CSV output path")->required();
  app.add_option("--trials", trials, "trials per sweep point")->check(CLI::PositiveNumber);
  app.add_option("--ocr", ocr, "cover ratios, comma separated")->delimiter(',');
  app.add_option("--k", k, "active antenna counts, comma separated")->delimiter(',');
  app.add_option("--d", d, "distances in meters, comma separated")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    auto cfg = ihsim::config::load_config(config_path);
    cfg.experiment = ihsim::config::parse_experiment(experiment);
    cfg.seed = seed;
    cfg.output = out_path;
    if (trials) cfg.trials = trials;
    if (!ocr.empty()) cfg.sweep_ocr = ocr;
    if (!k.empty()) cfg.sweep_k = k;
    if (!d.empty()) cfg.sweep_d = d;
    cfg.validate();

    const auto result = ihsim::experiments::run_experiment(cfg);
    write_file(out_path, ihsim::experiments::to_csv(result));
    for (const auto& [suffix, contents] : result.artifacts) write_file(sibling(out_path, suffix), contents);
    std::cerr << result.name << ": " << result.rows.size() << " rows -> " << out_path << "\n";
    return 0;
  } catch (const ihsim::ValidationError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const ihsim::GuardError& e) {
    std::cerr << "guard violation: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
