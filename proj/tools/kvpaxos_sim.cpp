// Scenario runner: simulate, check, report.
//
// Exit status: 0 all selected checks pass, 1 some check failed, 2 bad
// configuration, 3 some run ended at max_ticks with client ops still open.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "kvpaxos/report.hpp"
#include "kvpaxos/scenario.hpp"

using namespace kvpaxos;

namespace {

constexpr int kPass = 0;
constexpr int kCheckFailed = 1;
constexpr int kConfigError = 2;
constexpr int kInconclusive = 3;

std::vector<std::string> parse_checks(const std::string& arg) {
  std::vector<std::string> out;
  if (arg == "all") return out;
  std::stringstream in(arg);
  for (std::string c; std::getline(in, c, ',');) {
    const auto& known = sim::known_checks();
    if (std::find(known.begin(), known.end(), c) == known.end()) throw ConfigError("--check: unknown check '" + c + "'");
    out.push_back(c);
  }
  return out;
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << body;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Run a simulated kvpaxos deployment and check the trace"};
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string trace_out;
  std::string report_out;
  std::string check_arg;
  std::string all_aboard;
  std::size_t seeds = 1;
  bool quiet = false;
  app.add_option("--config", config, "scenario file")->required();
  app.add_option("--seed", seed, "override the config's seed");
  app.add_option("--trace-out", trace_out, "write the trace as JSON lines (one file per seed with --seeds)");
  app.add_option("--report-out", report_out, "write the report as JSON");
  app.add_option("--check", check_arg, "comma-separated checks, or all");
  app.add_option("--seeds", seeds, "sweep N consecutive seeds from the base seed")->check(CLI::PositiveNumber);
  app.add_option("--all-aboard", all_aboard, "override the all-aboard policy")->check(CLI::IsMember({"on", "off", "auto"}));
  app.add_flag("--quiet", quiet, "no table on stdout");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kPass : kConfigError;
  }

  sim::ScenarioFile file;
  try {
    file = sim::load_scenario(config);
    if (!check_arg.empty()) file.checks = parse_checks(check_arg);
    if (all_aboard == "on") file.all_aboard = sim::AllAboardPolicy::On;
    if (all_aboard == "off") file.all_aboard = sim::AllAboardPolicy::Off;
    if (all_aboard == "auto") file.all_aboard = sim::AllAboardPolicy::Auto;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  const auto base = seed.value_or(file.scenario.net.seed);
  std::vector<report::RunReport> runs;
  try {
    for (std::size_t i = 0; i < seeds; ++i) {
      file.scenario.net.seed = base + i;
      sim::apply_all_aboard_policy(file);
      const auto result = sim::run(file.scenario);
      report::RunReport r;
      r.seed = file.scenario.net.seed;
      r.completed = result.completed;
      r.stats = report::compute(result.trace, file.scenario.engine);
      r.verdicts = report::run_checks(result, file.scenario, file.checks);
      runs.push_back(std::move(r));
      if (!trace_out.empty()) {
        std::ofstream out(seeds == 1 ? trace_out : trace_out + "." + std::to_string(file.scenario.net.seed));
        if (!out) throw std::runtime_error("cannot write trace");
        write_jsonl(out, result.trace);
      }
    }
    if (!report_out.empty()) write_file(report_out, report::format_json(runs));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  if (!quiet) std::cout << report::format_table(runs);

  if (std::any_of(runs.begin(), runs.end(), [](const auto& r) { return r.failed(); })) return kCheckFailed;
  if (std::any_of(runs.begin(), runs.end(), [](const auto& r) { return !r.completed; })) return kInconclusive;
  return kPass;
}
