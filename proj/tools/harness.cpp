// Scenario runner.
//
//   harness run replication --seed 3 --out results/
//   harness run my-scenario.conf
//   harness list

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "chelonia/core/errors.hpp"
#include "chelonia/harness/scenario.hpp"

namespace h = chelonia::harness;

int main(int argc, char** argv) {
  CLI::App app{"Chelonia scenario harness"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a scenario and write its CSV files and summary");
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out;
  run->add_option("scenario", scenario, "bundled scenario name or path to a .conf file")->required();
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--out", out, "output directory (default: results/<scenario>)");

  auto* list = app.add_subcommand("list", "list bundled scenarios");
  CLI11_PARSE(app, argc, argv);

  try {
    if (*list) {
      for (const auto& e : std::filesystem::directory_iterator(h::scenarioDirectory())) {
        if (e.path().extension() == ".conf") std::cout << e.path().stem().string() << "\n";
      }
      return 0;
    }
    auto path = h::resolveScenario(scenario);
    auto report = h::runScenarioFile(path, seed);
    std::filesystem::path dir = out.empty() ? std::filesystem::path("results") / report.scenario : std::filesystem::path(out);
    report.write(dir);
    for (const auto& c : report.checks) {
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.name;
      if (!c.pass && !c.detail.empty()) std::cout << ": " << c.detail;
      std::cout << "\n";
    }
    std::cout << "wrote " << dir.string() << "\n";
    return report.passed() ? 0 : 1;
  } catch (const chelonia::Error& e) {
    std::cerr << "harness: " << e.what() << "\n";
    return 2;
  }
}
