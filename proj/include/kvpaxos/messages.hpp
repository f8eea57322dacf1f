#pragma once

#include <optional>
#include <string>
#include <variant>

#include "kvpaxos/core.hpp"

namespace kvpaxos {

struct ProposeMsg {
  Key key;
  Timestamp ts;
  std::uint64_t log_no = 0;
  RmwId rmw_id;
  /// Proposer's base-TS. Timestamp::max() tells receivers not to report
  /// fresher bases (the proposer has already looked for them).
  Timestamp base_ts;
  Lid lid;

  friend bool operator==(const ProposeMsg&, const ProposeMsg&) = default;
};

struct AcceptMsg {
  Key key;
  Timestamp ts;
  std::uint64_t log_no = 0;
  RmwId rmw_id;
  Value value;
  Timestamp base_ts;
  Lid lid;

  friend bool operator==(const AcceptMsg&, const AcceptMsg&) = default;
};

enum class ReplyOpcode : std::uint8_t {
  Ack = 0,
  AckBaseTsStale,
  RmwIdCommitted,
  RmwIdCommittedNoBcast,
  LogTooLow,
  LogTooHigh,
  SeenHigherProp,
  SeenHigherAcc,
  SeenLowerAcc,
};
inline constexpr std::size_t kReplyOpcodeCount = 9;

const char* to_string(ReplyOpcode op);
ReplyOpcode reply_opcode_from_string(const std::string& s);

[[nodiscard]] constexpr bool is_ack(ReplyOpcode op) {
  return op == ReplyOpcode::Ack || op == ReplyOpcode::AckBaseTsStale;
}

enum class Phase : std::uint8_t { Propose = 0, Accept = 1 };

/// Seen-higher-prop / Seen-higher-acc: the blocking proposed-TS.
struct BlockingPayload {
  Timestamp proposed_ts;
  friend bool operator==(const BlockingPayload&, const BlockingPayload&) = default;
};

/// Seen-lower-acc: the accepted RMW a proposer must help.
struct AcceptedPayload {
  Timestamp accepted_ts;
  RmwId rmw_id;
  Value value;
  Timestamp acc_base_ts;
  friend bool operator==(const AcceptedPayload&, const AcceptedPayload&) = default;
};

/// Log-too-low: the receiver's last committed RMW.
struct CommittedPayload {
  std::uint64_t log_no = 0;
  RmwId rmw_id;
  Value value;
  Timestamp base_ts;
  friend bool operator==(const CommittedPayload&, const CommittedPayload&) = default;
};

/// Ack-base-TS-stale: the receiver's fresher value.
struct StalePayload {
  Value value;
  Timestamp base_ts;
  friend bool operator==(const StalePayload&, const StalePayload&) = default;
};

using ReplyPayload =
    std::variant<std::monostate, BlockingPayload, AcceptedPayload, CommittedPayload, StalePayload>;

struct ReplyMsg {
  Phase phase = Phase::Propose;
  Lid lid;
  ReplyOpcode opcode = ReplyOpcode::Ack;
  ReplyPayload payload;

  friend bool operator==(const ReplyMsg&, const ReplyMsg&) = default;
};

/// Index of the payload alternative an opcode must carry.
std::size_t expected_payload_index(ReplyOpcode op);

/// Rmw: the value is the RMW's own accepted value. Relay: the value is a
/// replica's visible (value, base-TS) at that slot, which may be a later
/// write's (log-too-low payloads, read write-backs, stuck-log broadcasts).
enum class CommitOrigin : std::uint8_t { Rmw = 0, Relay = 1 };

struct CommitMsg {
  Key key;
  std::uint64_t log_no = 0;
  RmwId rmw_id;
  std::optional<Value> value;
  std::optional<Timestamp> base_ts;
  Lid lid;
  CommitOrigin origin = CommitOrigin::Rmw;

  friend bool operator==(const CommitMsg&, const CommitMsg&) = default;
};

struct CommitAckMsg {
  Lid lid;
  friend bool operator==(const CommitAckMsg&, const CommitAckMsg&) = default;
};

struct ReadMsg {
  Key key;
  Carstamp carstamp;
  Lid lid;
  friend bool operator==(const ReadMsg&, const ReadMsg&) = default;
};

enum class ReadOpcode : std::uint8_t { CarstampTooLow = 0, CarstampEqual = 1, CarstampTooHigh = 2 };

const char* to_string(ReadOpcode op);

struct ReadReplyMsg {
  Lid lid;
  ReadOpcode opcode = ReadOpcode::CarstampEqual;
  // Present iff opcode == CarstampTooLow.
  std::optional<Carstamp> carstamp;
  std::optional<Value> value;
  std::optional<RmwId> last_committed_rmw_id;

  friend bool operator==(const ReadReplyMsg&, const ReadReplyMsg&) = default;
};

struct TsRequestMsg {
  Key key;
  Lid lid;
  friend bool operator==(const TsRequestMsg&, const TsRequestMsg&) = default;
};

struct TsReplyMsg {
  Lid lid;
  Timestamp base_ts;
  std::uint64_t log_no = 0;
  friend bool operator==(const TsReplyMsg&, const TsReplyMsg&) = default;
};

struct WriteValueMsg {
  Key key;
  Value value;
  Carstamp carstamp;
  Lid lid;
  friend bool operator==(const WriteValueMsg&, const WriteValueMsg&) = default;
};

struct WriteAckMsg {
  Lid lid;
  friend bool operator==(const WriteAckMsg&, const WriteAckMsg&) = default;
};

using Message = std::variant<ProposeMsg, AcceptMsg, ReplyMsg, CommitMsg, CommitAckMsg, ReadMsg,
                             ReadReplyMsg, TsRequestMsg, TsReplyMsg, WriteValueMsg, WriteAckMsg>;

/// Stable kind tags; also the first byte of every wire frame.
enum class MsgKind : std::uint8_t {
  Propose = 1,
  Accept = 2,
  Reply = 3,
  Commit = 4,
  CommitAck = 5,
  Read = 6,
  ReadReply = 7,
  TsRequest = 8,
  TsReply = 9,
  WriteValue = 10,
  WriteAck = 11,
};

MsgKind kind_of(const Message& m);
const char* to_string(MsgKind k);
MsgKind msg_kind_from_string(const std::string& s);

/// Lid carried by any message.
Lid lid_of(const Message& m);

struct Envelope {
  MachineId from = 0;
  MachineId to = 0;
  Message msg;

  friend bool operator==(const Envelope&, const Envelope&) = default;
};

}  // namespace kvpaxos
