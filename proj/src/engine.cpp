#include "kvpaxos/engine.hpp"

#include <algorithm>
#include <stdexcept>

#include "kvpaxos/wire.hpp"

namespace kvpaxos {

void EngineConfig::validate() const {
  if (machine_count < 3 || machine_count > 7) {
    throw ConfigError("machines: must be within 3..7, got " + std::to_string(machine_count));
  }
  if (sessions_per_machine == 0) throw ConfigError("sessions_per_machine: must be at least 1");
  if (sessions_per_machine > (std::size_t{1} << lid_layout.session_bits)) {
    throw ConfigError("sessions_per_machine: does not fit in the lid session field");
  }
  if (total_sessions() >= (std::size_t{1} << RmwId::kRmwSessionBits)) {
    throw ConfigError("sessions_per_machine: too many sessions for the rmw-id session field");
  }
  if (value_width < 8) throw ConfigError("value_width: must be at least 8 bytes");
  if (backoff_threshold == 0) throw ConfigError("backoff_threshold: must be at least 1");
  if (all_aboard_timeout == 0) throw ConfigError("all_aboard_timeout: must be at least 1");
  if (log_too_high_limit == 0) throw ConfigError("log_too_high_limit: must be at least 1");
}

namespace {

ReplyMsg committed_reply(const KvPair& pair, Phase phase, Lid lid, std::uint64_t log_no) {
  ReplyMsg r{phase, lid, ReplyOpcode::RmwIdCommitted, std::monostate{}};
  if (pair.last_committed_log_no > log_no) r.opcode = ReplyOpcode::RmwIdCommittedNoBcast;
  return r;
}

ReplyMsg log_too_low(const KvPair& pair, Phase phase, Lid lid) {
  return {phase, lid, ReplyOpcode::LogTooLow,
          CommittedPayload{pair.last_committed_log_no, pair.last_committed_rmw_id, pair.value, pair.base_ts}};
}

ReplyMsg seen_higher(const KvPair& pair, Phase phase, Lid lid) {
  return {phase, lid,
          pair.state == PairState::Proposed ? ReplyOpcode::SeenHigherProp : ReplyOpcode::SeenHigherAcc,
          BlockingPayload{pair.proposed_ts}};
}

}  // namespace

ReplyMsg on_propose(KvPair& pair, const RegisteredRmwTable& table, const ProposeMsg& m) {
  if (table.is_registered(m.rmw_id)) return committed_reply(pair, Phase::Propose, m.lid, m.log_no);
  if (m.log_no < pair.log_no) return log_too_low(pair, Phase::Propose, m.lid);
  if (m.log_no > pair.log_no) return {Phase::Propose, m.lid, ReplyOpcode::LogTooHigh, std::monostate{}};
  if (pair.state != PairState::Invalid && pair.proposed_ts >= m.ts) return seen_higher(pair, Phase::Propose, m.lid);
  if (pair.state == PairState::Accepted) {
    pair.proposed_ts = m.ts;
    if (pair.rmw_id == m.rmw_id) return {Phase::Propose, m.lid, ReplyOpcode::Ack, std::monostate{}};
    return {Phase::Propose, m.lid, ReplyOpcode::SeenLowerAcc,
            AcceptedPayload{pair.accepted_ts, pair.rmw_id, pair.accepted_value, pair.acc_base_ts}};
  }
  pair.state = PairState::Proposed;
  pair.proposed_ts = m.ts;
  pair.rmw_id = m.rmw_id;
  if (m.base_ts < pair.base_ts) {
    return {Phase::Propose, m.lid, ReplyOpcode::AckBaseTsStale, StalePayload{pair.value, pair.base_ts}};
  }
  return {Phase::Propose, m.lid, ReplyOpcode::Ack, std::monostate{}};
}

ReplyMsg on_accept(KvPair& pair, const RegisteredRmwTable& table, const AcceptMsg& m) {
  if (table.is_registered(m.rmw_id)) return committed_reply(pair, Phase::Accept, m.lid, m.log_no);
  if (m.log_no < pair.log_no) return log_too_low(pair, Phase::Accept, m.lid);
  if (m.log_no > pair.log_no) return {Phase::Accept, m.lid, ReplyOpcode::LogTooHigh, std::monostate{}};
  if (pair.state != PairState::Invalid && pair.proposed_ts > m.ts) return seen_higher(pair, Phase::Accept, m.lid);
  pair.state = PairState::Accepted;
  pair.proposed_ts = m.ts;
  pair.accepted_ts = m.ts;
  pair.accepted_value = m.value;
  pair.acc_base_ts = m.base_ts;
  pair.rmw_id = m.rmw_id;
  return {Phase::Accept, m.lid, ReplyOpcode::Ack, std::monostate{}};
}

KvFingerprint fingerprint_of(const KvPair& p) {
  return {p.state, p.log_no, p.last_committed_log_no, p.proposed_ts, p.accepted_ts, p.rmw_id};
}

void ReplyTally::reset(std::size_t machines) {
  responded.assign(machines, false);
  replies = 0;
  counts.fill(0);
  log_too_low.reset();
  lower_acc.reset();
  stale.reset();
}

bool ReplyTally::add(MachineId from, const ReplyMsg& r) {
  if (from >= responded.size() || responded[from]) return false;
  responded[from] = true;
  ++replies;
  ++counts[static_cast<std::size_t>(r.opcode)];
  if (const auto* p = std::get_if<AcceptedPayload>(&r.payload)) {
    if (!lower_acc || p->accepted_ts > lower_acc->accepted_ts) lower_acc = *p;
  } else if (const auto* p = std::get_if<CommittedPayload>(&r.payload)) {
    if (!log_too_low || p->log_no > log_too_low->log_no) log_too_low = *p;
  } else if (const auto* p = std::get_if<StalePayload>(&r.payload)) {
    if (!stale || p->base_ts > stale->base_ts) stale = *p;
  }
  return true;
}

}  // namespace kvpaxos
