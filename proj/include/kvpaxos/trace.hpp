#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "kvpaxos/messages.hpp"

namespace kvpaxos {

enum class EntryState : std::uint8_t {
  Invalid = 0,
  Proposed,
  Accepted,
  NeedsKvPair,
  RetryWithHigherTs,
  BcastCommits,
  BcastCommitsFromHelp,
  Committed,
};

enum class HelpingFlag : std::uint8_t { NotHelping = 0, Helping, ProposeLocallyAccepted };

enum class OpKind : std::uint8_t { Read = 0, Write, Cas, Faa };

enum class CommitPath : std::uint8_t { None = 0, AllAboard, Classic };

enum class BackoffAction : std::uint8_t { Steal = 0, HelpAfterWait };

const char* to_string(EntryState s);
const char* to_string(HelpingFlag f);
const char* to_string(OpKind k);
const char* to_string(CommitPath p);
const char* to_string(BackoffAction a);
EntryState entry_state_from_string(const std::string& s);
HelpingFlag helping_flag_from_string(const std::string& s);
OpKind op_kind_from_string(const std::string& s);
CommitPath commit_path_from_string(const std::string& s);
BackoffAction backoff_action_from_string(const std::string& s);

namespace ev {

struct Send {
  friend bool operator==(const Send&, const Send&) = default;
  std::uint64_t msg_id = 0;
  Envelope env;
};
struct Deliver {
  friend bool operator==(const Deliver&, const Deliver&) = default;
  std::uint64_t msg_id = 0;
  Envelope env;
};
struct Drop {
  friend bool operator==(const Drop&, const Drop&) = default;
  std::uint64_t msg_id = 0;
  std::string reason;  // loss | crashed | partition | rule
};
struct Duplicate {
  friend bool operator==(const Duplicate&, const Duplicate&) = default;
  std::uint64_t msg_id = 0;
};
struct EntryTransition {
  friend bool operator==(const EntryTransition&, const EntryTransition&) = default;
  std::uint32_t session = 0;  // global session id
  Key key;
  EntryState from = EntryState::Invalid;
  EntryState to = EntryState::Invalid;
};
struct LocalAccept {
  friend bool operator==(const LocalAccept&, const LocalAccept&) = default;
  Key key;
  std::uint64_t log_no = 0;
  RmwId rmw_id;
  Timestamp ts;
  Value value;
  Timestamp base_ts;
  bool all_aboard = false;
  bool helping = false;
};
struct CommitApplied {
  friend bool operator==(const CommitApplied&, const CommitApplied&) = default;
  Key key;
  std::uint64_t log_no = 0;
  RmwId rmw_id;
  CommitOrigin origin = CommitOrigin::Rmw;
  bool thin = false;
  // Value and base after thin resolution; absent for an unresolved thin commit.
  std::optional<Value> value;
  std::optional<Timestamp> base_ts;
  bool value_updated = false;
  bool log_advanced = false;
  bool unresolved_thin = false;
};
struct WriteApplied {
  friend bool operator==(const WriteApplied&, const WriteApplied&) = default;
  Key key;
  Carstamp carstamp;
  Value value;
  bool applied = false;
};
struct ClientInvoke {
  friend bool operator==(const ClientInvoke&, const ClientInvoke&) = default;
  std::uint32_t session = 0;
  std::uint64_t op_index = 0;
  OpKind kind = OpKind::Read;
  Key key;
  Value arg0;  // CAS compare, FAA delta, write value
  Value arg1;  // CAS swap
  RmwId rmw_id;
};
struct ClientComplete {
  friend bool operator==(const ClientComplete&, const ClientComplete&) = default;
  std::uint32_t session = 0;
  std::uint64_t op_index = 0;
  OpKind kind = OpKind::Read;
  Key key;
  Value result;  // read value, or RMW read-result
  bool cas_success = false;
  RmwId rmw_id;
  CommitPath path = CommitPath::None;
  std::uint64_t log_no = 0;
};
struct Backoff {
  friend bool operator==(const Backoff&, const Backoff&) = default;
  std::uint32_t session = 0;
  Key key;
  BackoffAction action = BackoffAction::Steal;
  std::uint64_t counter = 0;
};
struct Crash {
  friend bool operator==(const Crash&, const Crash&) = default;
};
struct Recover {
  friend bool operator==(const Recover&, const Recover&) = default;
};
struct Partition {
  friend bool operator==(const Partition&, const Partition&) = default;
  std::vector<std::vector<MachineId>> groups;
};
struct Heal {
  friend bool operator==(const Heal&, const Heal&) = default;
};

}  // namespace ev

using TracePayload =
    std::variant<ev::Send, ev::Deliver, ev::Drop, ev::Duplicate, ev::EntryTransition, ev::LocalAccept,
                 ev::CommitApplied, ev::WriteApplied, ev::ClientInvoke, ev::ClientComplete, ev::Backoff,
                 ev::Crash, ev::Recover, ev::Partition, ev::Heal>;

const char* trace_kind_name(const TracePayload& p);

struct TraceRecord {
  Tick tick = 0;
  std::uint64_t seq = 0;
  MachineId machine = 0;
  TracePayload payload;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

using Trace = std::vector<TraceRecord>;

/// One JSON object per line, fields in a fixed order.
std::string to_json_line(const TraceRecord& r);
TraceRecord from_json_line(const std::string& line);

void write_jsonl(std::ostream& os, const Trace& trace);
Trace read_jsonl(std::istream& is);

}  // namespace kvpaxos
