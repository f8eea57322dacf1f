#include "kvpaxos/abd.hpp"

#include <algorithm>

namespace kvpaxos::abd {

ReadReplyMsg on_read(const KvPair& pair, const ReadMsg& m) {
  ReadReplyMsg r;
  r.lid = m.lid;
  const Carstamp local = pair.carstamp();
  if (m.carstamp < local) {
    r.opcode = ReadOpcode::CarstampTooLow;
    r.carstamp = local;
    r.value = pair.value;
    r.last_committed_rmw_id = pair.last_committed_rmw_id;
  } else if (m.carstamp == local) {
    r.opcode = ReadOpcode::CarstampEqual;
  } else {
    r.opcode = ReadOpcode::CarstampTooHigh;
  }
  return r;
}

TsReplyMsg on_ts_request(const KvPair& pair, const TsRequestMsg& m) {
  return {m.lid, pair.base_ts, pair.last_committed_log_no};
}

WriteValueOutcome on_write_value(KvPair& pair, const WriteValueMsg& m) {
  WriteValueOutcome out;
  out.ack.lid = m.lid;
  out.applied = apply_write(pair, m.carstamp, m.value);
  return out;
}

void reset_round(AbdOp& op, MachineId self, Lid lid) {
  op.lid = lid;
  std::fill(op.responded.begin(), op.responded.end(), false);
  op.responded[self] = true;
  op.replies = 1;
  op.since_send = 0;
}

namespace {

bool first_reply(AbdOp& op, MachineId from) {
  if (from >= op.responded.size() || op.responded[from]) return false;
  op.responded[from] = true;
  ++op.replies;
  return true;
}

}  // namespace

TsRequestMsg begin_write(AbdOp& op, const KvPair& local, MachineId self, std::size_t machines, Lid lid,
                         const Value& value) {
  op = AbdOp{};
  op.kind = OpKind::Write;
  op.phase = AbdPhase::TsQuery;
  op.key = local.key;
  op.value = value;
  op.responded.assign(machines, false);
  reset_round(op, self, lid);
  op.max_base = local.base_ts;
  op.max_log = local.last_committed_log_no;
  return {local.key, lid};
}

bool on_ts_reply(AbdOp& op, MachineId from, const TsReplyMsg& r, std::size_t quorum) {
  if (op.phase != AbdPhase::TsQuery || r.lid != op.lid || !first_reply(op, from)) return false;
  op.max_base = std::max(op.max_base, r.base_ts);
  op.max_log = std::max(op.max_log, r.log_no);
  return op.replies >= quorum;
}

WriteValueMsg begin_write_value(AbdOp& op, KvPair& local, MachineId self, Lid lid, bool& applied_locally) {
  op.phase = AbdPhase::WriteValue;
  op.write_carstamp = Carstamp{Timestamp{op.max_base.version + 1, self}, op.max_log};
  reset_round(op, self, lid);
  applied_locally = apply_write(local, op.write_carstamp, op.value);
  return {op.key, op.value, op.write_carstamp, lid};
}

bool on_ack(AbdOp& op, MachineId from, std::size_t quorum) {
  if (op.phase != AbdPhase::WriteValue && op.phase != AbdPhase::WriteBack) return false;
  if (!first_reply(op, from)) return false;
  return op.replies >= quorum;
}

ReadMsg begin_read(AbdOp& op, const KvPair& local, MachineId self, std::size_t machines, Lid lid) {
  op = AbdOp{};
  op.kind = OpKind::Read;
  op.phase = AbdPhase::ReadQuery;
  op.key = local.key;
  op.responded.assign(machines, false);
  reset_round(op, self, lid);
  op.local_carstamp = local.carstamp();
  op.known.assign(machines, std::nullopt);
  op.known[self] = op.local_carstamp;
  op.best_carstamp = op.local_carstamp;
  op.best_value = local.value;
  op.best_rmw = local.last_committed_rmw_id;
  return {local.key, op.local_carstamp, lid};
}

bool on_read_reply(AbdOp& op, MachineId from, const ReadReplyMsg& r, std::size_t quorum) {
  if (op.phase != AbdPhase::ReadQuery || r.lid != op.lid || !first_reply(op, from)) return false;
  switch (r.opcode) {
    case ReadOpcode::CarstampEqual: op.known[from] = op.local_carstamp; break;
    case ReadOpcode::CarstampTooHigh: break;
    case ReadOpcode::CarstampTooLow:
      op.known[from] = *r.carstamp;
      if (*r.carstamp > op.best_carstamp) {
        op.best_carstamp = *r.carstamp;
        op.best_value = *r.value;
        op.best_rmw = *r.last_committed_rmw_id;
      }
      break;
  }
  return op.replies >= quorum;
}

std::optional<CommitMsg> resolve_read(AbdOp& op, std::size_t quorum, Lid lid) {
  op.value = op.best_value;
  const auto holders = static_cast<std::size_t>(
      std::count_if(op.known.begin(), op.known.end(),
                    [&](const std::optional<Carstamp>& c) { return c && *c == op.best_carstamp; }));
  if (holders >= quorum) {
    op.phase = AbdPhase::Done;
    return std::nullopt;
  }
  op.phase = AbdPhase::WriteBack;
  CommitMsg c;
  c.key = op.key;
  c.log_no = op.best_carstamp.log_no;
  c.rmw_id = op.best_rmw;
  c.value = op.best_value;
  c.base_ts = op.best_carstamp.base;
  c.lid = lid;
  c.origin = CommitOrigin::Relay;
  return c;
}

}  // namespace kvpaxos::abd
