#pragma once

#include <optional>
#include <vector>

#include "kvpaxos/kvs.hpp"
#include "kvpaxos/messages.hpp"
#include "kvpaxos/trace.hpp"

namespace kvpaxos::abd {

ReadReplyMsg on_read(const KvPair& pair, const ReadMsg& m);
TsReplyMsg on_ts_request(const KvPair& pair, const TsRequestMsg& m);

struct WriteValueOutcome {
  WriteAckMsg ack;
  bool applied = false;
};
WriteValueOutcome on_write_value(KvPair& pair, const WriteValueMsg& m);

enum class AbdPhase : std::uint8_t { TsQuery, WriteValue, ReadQuery, WriteBack, Done };

/// Client-side state of one ABD read or write. Counts replies per sender so
/// duplicates and resends are harmless.
struct AbdOp {
  OpKind kind = OpKind::Read;
  AbdPhase phase = AbdPhase::Done;
  Key key;
  Value value;  // write: the value written; read: the value returned
  Lid lid;
  std::vector<bool> responded;
  std::size_t replies = 0;

  // Write, round 1.
  Timestamp max_base;
  std::uint64_t max_log = 0;
  Carstamp write_carstamp;

  // Read. known[m] is the carstamp machine m is known to store; unset when m
  // only told us it stores something lower than our local carstamp.
  Carstamp local_carstamp;
  std::vector<std::optional<Carstamp>> known;
  Carstamp best_carstamp;
  Value best_value;
  RmwId best_rmw;

  std::uint64_t since_send = 0;

  [[nodiscard]] bool active() const { return phase != AbdPhase::Done; }
};

/// Starts a write: returns the TsRequest to broadcast. The local reply is
/// folded in immediately.
TsRequestMsg begin_write(AbdOp& op, const KvPair& local, MachineId self, std::size_t machines, Lid lid,
                         const Value& value);
/// True once a quorum of (base-TS, log-no) replies is in.
bool on_ts_reply(AbdOp& op, MachineId from, const TsReplyMsg& r, std::size_t quorum);
/// Picks the write carstamp, applies the write locally and returns the
/// WriteValue to broadcast.
WriteValueMsg begin_write_value(AbdOp& op, KvPair& local, MachineId self, Lid lid, bool& applied_locally);
/// True once a quorum of acks (self included) is in.
bool on_ack(AbdOp& op, MachineId from, std::size_t quorum);

ReadMsg begin_read(AbdOp& op, const KvPair& local, MachineId self, std::size_t machines, Lid lid);
bool on_read_reply(AbdOp& op, MachineId from, const ReadReplyMsg& r, std::size_t quorum);

/// After a read quorum: the write-back commit to broadcast, or nothing when a
/// quorum already stores the chosen carstamp. op.value holds the result.
std::optional<CommitMsg> resolve_read(AbdOp& op, std::size_t quorum, Lid lid);

/// Starts a new round: clears the per-sender tally and counts self.
void reset_round(AbdOp& op, MachineId self, Lid lid);

}  // namespace kvpaxos::abd
