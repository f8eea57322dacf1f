#pragma once

#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "kvpaxos/simnet.hpp"

namespace kvpaxos::sim {

/// auto: all-aboard on, except for keys the workload writes to.
enum class AllAboardPolicy : std::uint8_t { On, Off, Auto };

struct ScenarioFile {
  Scenario scenario;
  AllAboardPolicy all_aboard = AllAboardPolicy::Auto;
  std::set<Key> classic_only;       // listed explicitly, kept under every policy
  std::vector<std::string> checks;  // empty: all
};

/// Checker names accepted by `checks`.
const std::vector<std::string>& known_checks();

/// Flat `key = value` text, `#` comments. Throws ConfigError naming the key
/// (and line) at fault. See docs/scenario_format.md for the keys.
ScenarioFile parse_scenario(std::istream& in);
ScenarioFile load_scenario(const std::string& path);

/// Sets the engine's all-aboard switches for the current workload. Call
/// again after changing the seed.
void apply_all_aboard_policy(ScenarioFile& f);

}  // namespace kvpaxos::sim
