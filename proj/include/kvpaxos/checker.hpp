#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kvpaxos/kvs.hpp"
#include "kvpaxos/trace.hpp"

namespace kvpaxos::check {

enum class Status : std::uint8_t { Pass, Fail, Refused };
const char* to_string(Status s);

struct Verdict {
  std::string name;
  Status status = Status::Pass;
  std::string detail;
  /// A minimal subsequence of the trace showing the violation.
  std::vector<TraceRecord> witness;

  [[nodiscard]] bool pass() const { return status == Status::Pass; }
};

/// Deployment facts a few checks need to interpret lids and values.
struct TraceContext {
  std::size_t sessions_per_machine = 1;
  LidLayout lid_layout;
  std::size_t value_width = kDefaultValueWidth;
};

Verdict check_exactly_once(const Trace& t);
/// Same (rmw-id, value, base-TS) for every commit of a slot. Relayed commits
/// (log-too-low payloads, read write-backs, stuck-log broadcasts) carry the
/// pair's current value, which a later write may have replaced, so they are
/// held to the rmw-id only. Also: one value per (key, carstamp).
Verdict check_slot_agreement(const Trace& t);
/// inv-1, inv-2 and inv-3 in trace form.
Verdict check_invariants(const Trace& t);
/// All-aboard accepts at version 2, proposes at version 3 or more, and every
/// propose above every blocking TS its session received for that slot.
Verdict check_ts_discipline(const Trace& t, const TraceContext& ctx);
/// Every deliver, drop and duplicate refers to an earlier send.
Verdict check_conservation(const Trace& t);
/// Nothing is attributed to a machine between its crash and its recovery.
Verdict check_crash_stop(const Trace& t);
/// Each machine's final value is the value of the highest carstamp it
/// applied. With `global`, it must also be the highest carstamp anywhere.
Verdict check_carstamp_visibility(const Trace& t, const std::vector<Kvs>& finals, bool global,
                                  const std::vector<bool>& crashed = {});

struct HistoryOp {
  std::uint32_t session = 0;
  std::uint64_t op_index = 0;
  OpKind kind = OpKind::Faa;
  Key key;
  Value arg0;
  Value arg1;
  Tick invoke_tick = 0;
  std::uint64_t invoke_seq = 0;
  std::optional<Tick> complete_tick;
  std::optional<std::uint64_t> complete_seq;
  Value result;
  bool cas_success = false;
};

using History = std::vector<HistoryOp>;

History extract_history(const Trace& t);

/// Exhaustive search for a sequential witness per key, ops ordered by trace
/// sequence. Open ops may or may not take effect. Refuses keys with more than
/// max_ops_per_key ops.
Verdict check_linearizability(const History& h, std::size_t value_width = kDefaultValueWidth,
                              std::size_t max_ops_per_key = 12);

std::vector<Verdict> run_all(const Trace& t, const TraceContext& ctx);

}  // namespace kvpaxos::check
