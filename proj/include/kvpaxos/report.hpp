#pragma once

#include <map>
#include <string>
#include <vector>

#include "kvpaxos/checker.hpp"
#include "kvpaxos/simnet.hpp"

namespace kvpaxos::report {

/// Everything here is recomputed from the trace.
struct Stats {
  std::size_t ops_invoked = 0;
  std::size_t ops_completed = 0;
  std::map<std::string, std::size_t> completed_by_kind;
  std::map<std::string, std::size_t> rmw_by_path;  // all-aboard | classic
  std::map<std::string, std::size_t> sends_by_kind;
  std::map<std::string, std::size_t> replies_by_opcode;  // "<phase>:<opcode>"
  /// Broadcast rounds of each completed RMW: distinct (kind, lid) of the
  /// Propose/Accept/Commit messages its session sent while it was open.
  std::map<std::string, std::map<std::size_t, std::size_t>> rounds_by_path;
  std::size_t steals = 0;
  std::size_t helps = 0;
  std::size_t log_too_high = 0;
  std::size_t thin_commit_rounds = 0;
  std::size_t full_commit_rounds = 0;
  std::size_t relay_commit_rounds = 0;
  std::size_t drops = 0;
  std::size_t duplicates = 0;
  std::size_t crashes = 0;
  Tick end_tick = 0;

  void merge(const Stats& other);
};

Stats compute(const Trace& t, const EngineConfig& engine);

struct RunReport {
  std::uint64_t seed = 0;
  bool completed = false;  // false: the run hit max_ticks with ops open
  Stats stats;
  std::vector<check::Verdict> verdicts;

  [[nodiscard]] bool failed() const;
};

/// Runs the named checks (all when empty) over one simulator run.
std::vector<check::Verdict> run_checks(const sim::RunResult& r, const sim::Scenario& sc,
                                       const std::vector<std::string>& checks);

std::string format_table(const std::vector<RunReport>& runs);
/// {"runs": [...], "totals": {...}}
std::string format_json(const std::vector<RunReport>& runs);

}  // namespace kvpaxos::report
