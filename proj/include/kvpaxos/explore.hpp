#pragma once

#include <set>
#include <string>
#include <vector>

#include "kvpaxos/engine.hpp"

namespace kvpaxos::explore {

struct ExploreConfig {
  EngineConfig engine;
  /// One RMW per entry, the k-th entry of a machine on its local session k.
  std::vector<std::pair<MachineId, ClientRequest>> ops;
  std::size_t max_depth = 40;
  /// Also branch on losing each in-flight message.
  bool allow_drops = false;
  /// Run each prefix cut at max_depth on to the end along one schedule.
  bool finish_cutoffs = true;
  std::size_t finish_steps = 1000;
  /// Budget on executed steps.
  std::size_t max_states = 20'000'000;
};

/// Small-model driver: depth-first over the orders of client starts, message
/// deliveries and timer ticks, up to max_depth steps. Steps on different
/// machines commute, so only orders that differ in what some machine sees
/// first are explored (dynamic partial-order reduction with sleep sets).
///
/// Checked after every transition: one (rmw-id, value, base) per slot, one
/// slot per rmw-id, and per pair at a fixed log-no no Accepted -> Proposed
/// step and no decrease of accepted-TS.
struct ExploreResult {
  std::size_t states = 0;       // nodes visited
  std::size_t transitions = 0;  // steps executed
  std::size_t leaves = 0;       // runs that ended with nothing enabled
  std::size_t completed_leaves = 0;  // of those, runs where every op completed
  std::size_t depth_cutoffs = 0;     // runs cut at max_depth
  std::size_t finished = 0;          // cut runs that reached an end when finished
  std::size_t finished_completed = 0;  // of those, runs where every op completed
  /// Distinct decisions seen at run ends, as "key@log=rmw-id ..." lines.
  std::set<std::string> outcomes;
  bool state_limit_hit = false;
  bool violation = false;
  std::string detail;
  std::vector<std::string> path;  // actions leading to the violation
};

ExploreResult run(const ExploreConfig& cfg);

}  // namespace kvpaxos::explore
