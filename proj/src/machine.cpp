#include <algorithm>
#include <stdexcept>

#include "kvpaxos/engine.hpp"
#include "kvpaxos/wire.hpp"

namespace kvpaxos {

namespace {

bool is_immediate(EntryState s) {
  return s == EntryState::RetryWithHigherTs || s == EntryState::BcastCommits ||
         s == EntryState::BcastCommitsFromHelp || s == EntryState::Committed;
}

}  // namespace

Machine::Machine(MachineId id, EngineConfig cfg)
    : id_(id),
      cfg_(std::move(cfg)),
      kvs_(cfg_.value_width),
      table_(cfg_.total_sessions()),
      sessions_(cfg_.sessions_per_machine),
      last_heard_(cfg_.machine_count, 0) {
  cfg_.validate();
  if (id_ >= cfg_.machine_count) throw ConfigError("machine id out of range");
}

void Machine::deliver(Envelope env) { inbox_.push_back(std::move(env)); }

std::vector<Envelope> Machine::tick(Tick now) {
  now_ = now;
  while (!inbox_.empty()) {
    Envelope env = std::move(inbox_.front());
    inbox_.pop_front();
    poll(env);
  }
  for (std::uint32_t s = 0; s < sessions_.size(); ++s) inspect(s);
  for (std::uint32_t s = 0; s < sessions_.size(); ++s) pull(s);
  return std::exchange(outbox_, {});
}

void Machine::submit(std::uint32_t local_session, ClientRequest req) {
  auto& sess = sessions_.at(local_session);
  if (sess.busy || sess.pending) throw std::logic_error("submit to a busy session");
  const auto w = cfg_.value_width;
  switch (req.kind) {
    case OpKind::Read: break;
    case OpKind::Write:
    case OpKind::Faa:
      if (req.arg0.width() != w) throw MalformedOp("operand width does not match value width");
      break;
    case OpKind::Cas:
      if (req.arg0.width() != w || req.arg1.width() != w) {
        throw MalformedOp("CAS operand width does not match value width");
      }
      break;
  }
  sess.pending = std::move(req);
}

bool Machine::session_idle(std::uint32_t local_session) const {
  const auto& sess = sessions_.at(local_session);
  return !sess.busy && !sess.pending;
}

std::vector<TracePayload> Machine::take_events() { return std::exchange(events_, {}); }

bool Machine::has_timer_work() const {
  return std::any_of(sessions_.begin(), sessions_.end(),
                     [](const Session& s) {
                       return s.entry.state == EntryState::NeedsKvPair ||
                              (s.entry.state == EntryState::Accepted && s.entry.all_aboard);
                     });
}

bool Machine::quiescent() const {
  return std::none_of(sessions_.begin(), sessions_.end(),
                      [](const Session& s) { return s.busy || s.pending.has_value(); });
}

Lid Machine::next_lid(std::uint32_t s) { return cfg_.lid_layout.make(s, ++sessions_[s].attempt); }

void Machine::send(MachineId to, Message msg) { outbox_.push_back(Envelope{id_, to, std::move(msg)}); }

void Machine::broadcast(const Message& msg) {
  for (MachineId m = 0; m < cfg_.machine_count; ++m) {
    if (m != id_) send(m, msg);
  }
}

void Machine::resend(const Message& msg, const std::vector<bool>& responded) {
  for (MachineId m = 0; m < cfg_.machine_count; ++m) {
    if (m != id_ && (m >= responded.size() || !responded[m])) send(m, msg);
  }
}

void Machine::set_state(std::uint32_t s, EntryState to) {
  auto& e = sessions_[s].entry;
  if (e.state == to) return;
  events_.push_back(ev::EntryTransition{gsession(s), e.key, e.state, to});
  e.state = to;
}

// ---------------------------------------------------------------- inbound

void Machine::poll(const Envelope& env) {
  if (env.from < last_heard_.size()) last_heard_[env.from] = now_;
  const MachineId from = env.from;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ProposeMsg>) {
          send(from, on_propose(kvs_.get(m.key), table_, m));
        } else if constexpr (std::is_same_v<T, AcceptMsg>) {
          send(from, on_accept(kvs_.get(m.key), table_, m));
        } else if constexpr (std::is_same_v<T, CommitMsg>) {
          on_commit(from, m);
        } else if constexpr (std::is_same_v<T, ReplyMsg>) {
          on_reply(from, m);
        } else if constexpr (std::is_same_v<T, CommitAckMsg>) {
          on_commit_ack(from, m.lid);
        } else if constexpr (std::is_same_v<T, ReadMsg>) {
          send(from, abd::on_read(kvs_.get(m.key), m));
        } else if constexpr (std::is_same_v<T, TsRequestMsg>) {
          send(from, abd::on_ts_request(kvs_.get(m.key), m));
        } else if constexpr (std::is_same_v<T, WriteValueMsg>) {
          auto out = abd::on_write_value(kvs_.get(m.key), m);
          events_.push_back(ev::WriteApplied{m.key, m.carstamp, m.value, out.applied});
          send(from, out.ack);
        } else if constexpr (std::is_same_v<T, ReadReplyMsg> || std::is_same_v<T, TsReplyMsg> ||
                             std::is_same_v<T, WriteAckMsg>) {
          const auto s = cfg_.lid_layout.session_of(m.lid);
          if (s >= sessions_.size()) return;
          auto& op = sessions_[s].abd;
          if (!op.active() || op.lid != m.lid) return;
          bool ready = false;
          if constexpr (std::is_same_v<T, ReadReplyMsg>) ready = abd::on_read_reply(op, from, m, cfg_.quorum());
          if constexpr (std::is_same_v<T, TsReplyMsg>) ready = abd::on_ts_reply(op, from, m, cfg_.quorum());
          if constexpr (std::is_same_v<T, WriteAckMsg>) ready = abd::on_ack(op, from, cfg_.quorum());
          if (ready) abd_tick(s);
        }
      },
      env.msg);
}

void Machine::note_nack(LocalEntry& e, const ReplyMsg& r) {
  const auto* p = std::get_if<BlockingPayload>(&r.payload);
  if (!p || e.nack_slot != e.log_no || cfg_.lid_layout.attempt_of(r.lid) < e.nack_first_attempt) return;
  e.max_nack_version = std::max(e.max_nack_version, p->proposed_ts.version);
}

void Machine::open_broadcast(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  e.lid = next_lid(s);
  if (e.nack_slot != e.log_no) {
    e.nack_slot = e.log_no;
    e.nack_first_attempt = cfg_.lid_layout.attempt_of(e.lid);
    e.max_nack_version = 0;
  }
  e.tally.reset(cfg_.machine_count);
  e.since_send = 0;
  e.all_aboard_timeout_counter = 0;
}

void Machine::on_reply(MachineId from, const ReplyMsg& r) {
  const auto s = cfg_.lid_layout.session_of(r.lid);
  if (s >= sessions_.size()) return;
  auto& e = sessions_[s].entry;
  if (!sessions_[s].busy || e.rmw_id.is_none()) return;
  note_nack(e, r);
  if (r.lid != e.lid) return;
  const EntryState waiting = r.phase == Phase::Propose ? EntryState::Proposed : EntryState::Accepted;
  if (e.state != waiting) return;
  e.tally.add(from, r);
}

void Machine::on_commit_ack(MachineId from, Lid lid) {
  const auto s = cfg_.lid_layout.session_of(lid);
  if (s >= sessions_.size()) return;
  auto& sess = sessions_[s];
  auto& e = sess.entry;
  if ((e.state == EntryState::BcastCommits || e.state == EntryState::BcastCommitsFromHelp) && e.commit_sent &&
      e.lid == lid) {
    if (from < e.tally.responded.size() && !e.tally.responded[from]) {
      e.tally.responded[from] = true;
      ++e.tally.replies;
    }
    return;
  }
  if (sess.abd.active() && sess.abd.lid == lid && abd::on_ack(sess.abd, from, cfg_.quorum())) abd_tick(s);
}

ApplyResult Machine::apply_local(const CommitInfo& c, CommitOrigin origin, bool thin) {
  auto& pair = kvs_.get(c.key);
  const ApplyResult r = apply_commit(pair, table_, c);
  ev::CommitApplied e;
  e.key = c.key;
  e.log_no = c.log_no;
  e.rmw_id = c.rmw_id;
  e.origin = origin;
  e.thin = thin;
  e.value = r.offered_value;
  if (r.offered) e.base_ts = r.offered->base;
  e.value_updated = r.value_updated;
  e.log_advanced = r.log_advanced;
  e.unresolved_thin = r.unresolved_thin;
  events_.push_back(std::move(e));
  return r;
}

void Machine::on_commit(MachineId from, const CommitMsg& c) {
  apply_local(CommitInfo{c.key, c.log_no, c.rmw_id, c.value, c.base_ts}, c.origin, !c.value.has_value());
  send(from, CommitAckMsg{c.lid});
}

// ---------------------------------------------------------------- clients

void Machine::pull(std::uint32_t s) {
  auto& sess = sessions_[s];
  if (sess.busy || !sess.pending) return;
  if (sess.pending->kind == OpKind::Write) {
    // Write carstamps are tagged with the machine id only: one write per key
    // per machine at a time keeps them unique.
    for (const auto& other : sessions_) {
      if (other.abd.active() && other.abd.kind == OpKind::Write && other.abd.key == sess.pending->key) return;
    }
  }
  sess.busy = true;
  sess.current = std::move(*sess.pending);
  sess.pending.reset();
  switch (sess.current.kind) {
    case OpKind::Read: start_read(s, sess.current); break;
    case OpKind::Write: start_write(s, sess.current); break;
    case OpKind::Cas:
    case OpKind::Faa: start_rmw(s, sess.current); break;
  }
}

void Machine::start_write(std::uint32_t s, const ClientRequest& req) {
  events_.push_back(ev::ClientInvoke{gsession(s), req.op_index, req.kind, req.key, req.arg0, req.arg1, {}});
  auto& op = sessions_[s].abd;
  const auto msg = abd::begin_write(op, kvs_.get(req.key), id_, cfg_.machine_count, next_lid(s), req.arg0);
  broadcast(msg);
}

void Machine::start_read(std::uint32_t s, const ClientRequest& req) {
  events_.push_back(ev::ClientInvoke{gsession(s), req.op_index, req.kind, req.key, {}, {}, {}});
  auto& op = sessions_[s].abd;
  const auto msg = abd::begin_read(op, kvs_.get(req.key), id_, cfg_.machine_count, next_lid(s));
  broadcast(msg);
}

void Machine::abd_tick(std::uint32_t s) {
  auto& op = sessions_[s].abd;
  switch (op.phase) {
    case abd::AbdPhase::TsQuery: {
      if (op.replies < cfg_.quorum()) return;
      auto& pair = kvs_.get(op.key);
      bool applied = false;
      const auto msg = abd::begin_write_value(op, pair, id_, next_lid(s), applied);
      events_.push_back(ev::WriteApplied{op.key, op.write_carstamp, op.value, applied});
      broadcast(msg);
      return;
    }
    case abd::AbdPhase::ReadQuery: {
      if (op.replies < cfg_.quorum()) return;
      const Lid lid = next_lid(s);
      auto commit = abd::resolve_read(op, cfg_.quorum(), lid);
      if (!commit) {
        abd_complete(s);
        return;
      }
      abd::reset_round(op, id_, lid);
      apply_local(CommitInfo{commit->key, commit->log_no, commit->rmw_id, commit->value, commit->base_ts},
                  CommitOrigin::Relay, false);
      broadcast(*commit);
      return;
    }
    case abd::AbdPhase::WriteValue:
    case abd::AbdPhase::WriteBack:
      if (op.replies >= cfg_.quorum()) {
        op.phase = abd::AbdPhase::Done;
        abd_complete(s);
      }
      return;
    case abd::AbdPhase::Done: return;
  }
}

void Machine::abd_complete(std::uint32_t s) {
  auto& sess = sessions_[s];
  const auto& req = sess.current;
  ev::ClientComplete c;
  c.session = gsession(s);
  c.op_index = req.op_index;
  c.kind = req.kind;
  c.key = req.key;
  if (req.kind == OpKind::Read) c.result = sess.abd.value;
  events_.push_back(std::move(c));
  sess.abd.phase = abd::AbdPhase::Done;
  sess.busy = false;
}

void Machine::start_rmw(std::uint32_t s, const ClientRequest& req) {
  auto& sess = sessions_[s];
  sess.entry = LocalEntry{};
  auto& e = sess.entry;
  e.key = req.key;
  e.kind = req.kind;
  e.op_index = req.op_index;
  e.op = req.kind == OpKind::Cas ? RmwOp::cas(req.arg0, req.arg1) : RmwOp::faa(req.arg0);
  e.rmw_id = RmwId{++sess.rmw_counter, gsession(s)};
  e.tally.reset(cfg_.machine_count);
  events_.push_back(ev::ClientInvoke{gsession(s), req.op_index, req.kind, req.key, req.arg0, req.arg1, e.rmw_id});

  const auto& pair = kvs_.get(e.key);
  if (pair.state != PairState::Invalid) {
    e.fingerprint = fingerprint_of(pair);
    set_state(s, EntryState::NeedsKvPair);
    return;
  }
  if (all_aboard_eligible(pair)) {
    all_aboard_start(s);
  } else {
    grab(s);
  }
}

// ---------------------------------------------------------------- inspect

void Machine::inspect(std::uint32_t s) {
  auto& sess = sessions_[s];
  if (sess.abd.active()) {
    auto& op = sess.abd;
    if (cfg_.resend_interval > 0 && ++op.since_send >= cfg_.resend_interval) {
      op.since_send = 0;
      Message msg;
      switch (op.phase) {
        case abd::AbdPhase::TsQuery: msg = TsRequestMsg{op.key, op.lid}; break;
        case abd::AbdPhase::WriteValue: msg = WriteValueMsg{op.key, op.value, op.write_carstamp, op.lid}; break;
        case abd::AbdPhase::ReadQuery: msg = ReadMsg{op.key, op.local_carstamp, op.lid}; break;
        case abd::AbdPhase::WriteBack: {
          CommitMsg c{op.key, op.best_carstamp.log_no, op.best_rmw, op.best_value, op.best_carstamp.base, op.lid,
                      CommitOrigin::Relay};
          msg = std::move(c);
          break;
        }
        case abd::AbdPhase::Done: return;
      }
      resend(msg, op.responded);
    }
    return;
  }
  // Bounded: every immediate state moves to a waiting state or completes.
  for (int i = 0; i < 8; ++i) {
    if (!step(s)) break;
  }
}

bool Machine::step(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  switch (e.state) {
    case EntryState::Invalid: return false;
    case EntryState::Proposed:
      if (propose_ready(e)) {
        handle_propose_replies(s);
        return is_immediate(sessions_[s].entry.state);
      }
      break;
    case EntryState::Accepted:
      if (accept_ready(e)) {
        handle_accept_replies(s);
        return is_immediate(sessions_[s].entry.state);
      }
      if (e.all_aboard && ++e.all_aboard_timeout_counter >= cfg_.all_aboard_timeout) {
        e.retry_log_too_high_only = false;
        set_state(s, EntryState::RetryWithHigherTs);
        return true;
      }
      break;
    case EntryState::NeedsKvPair:
      backoff_inspect(s);
      return is_immediate(sessions_[s].entry.state);
    case EntryState::RetryWithHigherTs:
      retry(s);
      return is_immediate(sessions_[s].entry.state);
    case EntryState::BcastCommits:
    case EntryState::BcastCommitsFromHelp:
      if (!e.commit_sent) {
        bcast_commits_step(s);
        return false;
      }
      if (e.tally.replies >= cfg_.quorum()) {
        bcast_commits_step(s);
        return is_immediate(sessions_[s].entry.state);
      }
      break;
    case EntryState::Committed: complete(s); return false;
  }
  // Waiting for replies: re-send to the silent machines now and then.
  if (cfg_.resend_interval > 0 && e.outstanding && ++e.since_send >= cfg_.resend_interval) {
    e.since_send = 0;
    resend(*e.outstanding, e.tally.responded);
  }
  return false;
}


// ---------------------------------------------------------------- proposing

bool Machine::all_aboard_eligible(const KvPair& pair) const {
  if (!cfg_.all_aboard_enabled || cfg_.classic_only_keys.count(pair.key) > 0) return false;
  if (pair.state != PairState::Invalid || !(pair.proposed_ts < Timestamp{kAllAboardVersion, id_})) return false;
  for (MachineId m = 0; m < cfg_.machine_count; ++m) {
    if (m != id_ && now_ - last_heard_[m] > cfg_.suspect_window) return false;
  }
  return true;
}

void Machine::all_aboard_start(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  auto& pair = kvs_.get(e.key);
  e.all_aboard = true;
  e.log_no = pair.log_no;
  e.ts = Timestamp{kAllAboardVersion, id_};
  const RmwResult r = rmw_compute(e.op, pair.value);
  e.accepted_value = r.new_value;
  e.read_result = r.read_result;
  e.cas_success = r.cas_success;
  e.base_ts = pair.base_ts;
  e.accepted_log_no = e.log_no;
  pair.state = PairState::Accepted;
  pair.proposed_ts = e.ts;
  pair.accepted_ts = e.ts;
  pair.rmw_id = e.rmw_id;
  pair.accepted_value = e.accepted_value;
  pair.acc_base_ts = e.base_ts;
  events_.push_back(ev::LocalAccept{e.key, e.log_no, e.rmw_id, e.ts, e.accepted_value, e.base_ts, true, false});
  broadcast_accepts(s, false);
}

Timestamp Machine::fresh_ts(const LocalEntry& e, const KvPair& pair, std::uint64_t at_least) const {
  std::uint64_t v = std::max(at_least, kClassicVersion);
  if (e.nack_slot == e.log_no) v = std::max(v, e.max_nack_version + 1);
  if (pair.log_no == e.log_no && pair.proposed_ts >= Timestamp{v, id_}) v = pair.proposed_ts.version + 1;
  return {v, id_};
}

void Machine::grab(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  const auto& pair = kvs_.get(e.key);
  e.log_no = pair.log_no;
  e.all_aboard = false;
  e.helping_flag = HelpingFlag::NotHelping;
  e.ts = fresh_ts(e, pair, kClassicVersion);
  broadcast_proposes(s, SelfReply::Evaluate);
}

void Machine::steal(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  const auto& pair = kvs_.get(e.key);
  e.log_no = pair.log_no;
  e.all_aboard = false;
  e.helping_flag = HelpingFlag::NotHelping;
  e.ts = fresh_ts(e, pair, pair.proposed_ts.version + 1);
  broadcast_proposes(s, SelfReply::Evaluate);
}

void Machine::help_after_wait(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  const auto& pair = kvs_.get(e.key);
  e.log_no = pair.log_no;
  e.all_aboard = false;
  e.helping_flag = HelpingFlag::ProposeLocallyAccepted;
  e.ts = fresh_ts(e, pair, pair.proposed_ts.version + 1);
  // The local acceptor answers Seen-lower-acc and moves its proposed-TS up.
  broadcast_proposes(s, SelfReply::Evaluate);
}

void Machine::help_myself(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  const auto& pair = kvs_.get(e.key);
  e.all_aboard = false;
  e.helping_flag = HelpingFlag::ProposeLocallyAccepted;
  e.ts = fresh_ts(e, pair, e.ts.version + 1);
  broadcast_proposes(s, SelfReply::LocallyAccepted);
}

void Machine::broadcast_proposes(std::uint32_t s, SelfReply self) {
  auto& e = sessions_[s].entry;
  auto& pair = kvs_.get(e.key);
  open_broadcast(s);
  set_state(s, EntryState::Proposed);
  const ProposeMsg msg{e.key, e.ts, e.log_no, e.rmw_id, e.fresh_base_ts_seen ? Timestamp::max() : pair.base_ts,
                       e.lid};
  ReplyMsg mine;
  switch (self) {
    case SelfReply::Evaluate: mine = on_propose(pair, table_, msg); break;
    case SelfReply::Ack: mine = ReplyMsg{Phase::Propose, e.lid, ReplyOpcode::Ack, std::monostate{}}; break;
    case SelfReply::LocallyAccepted:
      pair.proposed_ts = e.ts;
      mine = ReplyMsg{Phase::Propose, e.lid, ReplyOpcode::SeenLowerAcc,
                      AcceptedPayload{pair.accepted_ts, pair.rmw_id, pair.accepted_value, pair.acc_base_ts}};
      break;
  }
  note_nack(e, mine);
  e.tally.add(id_, mine);
  if (mine.opcode == ReplyOpcode::RmwIdCommitted || mine.opcode == ReplyOpcode::RmwIdCommittedNoBcast) {
    e.outstanding.reset();
    return;
  }
  e.outstanding = msg;
  broadcast(msg);
}

void Machine::broadcast_accepts(std::uint32_t s, bool helping) {
  auto& e = sessions_[s].entry;
  open_broadcast(s);
  set_state(s, EntryState::Accepted);
  AcceptMsg msg;
  msg.key = e.key;
  msg.ts = e.ts;
  msg.log_no = e.log_no;
  msg.lid = e.lid;
  if (helping) {
    msg.rmw_id = e.helped.rmw_id;
    msg.value = e.helped.value;
    msg.base_ts = e.helped.acc_base_ts;
  } else {
    msg.rmw_id = e.rmw_id;
    msg.value = e.accepted_value;
    msg.base_ts = e.base_ts;
  }
  // The local pair already holds this accept.
  e.tally.add(id_, ReplyMsg{Phase::Accept, e.lid, ReplyOpcode::Ack, std::monostate{}});
  e.outstanding = msg;
  broadcast(msg);
}

// ---------------------------------------------------------------- replies

bool Machine::propose_ready(const LocalEntry& e) const {
  const auto& t = e.tally;
  return t.replies >= cfg_.quorum() || t.rmw_committed() > 0 || t.count(ReplyOpcode::LogTooLow) > 0 ||
         t.seen_higher() > 0;
}

bool Machine::accept_ready(const LocalEntry& e) const {
  const auto& t = e.tally;
  if (e.helping_flag == HelpingFlag::Helping) return t.nacks() > 0 || t.replies >= cfg_.quorum();
  if (e.all_aboard) return t.nacks() > 0 || t.acks() >= cfg_.machine_count;
  return t.replies >= cfg_.quorum() || t.rmw_committed() > 0 || t.count(ReplyOpcode::LogTooLow) > 0 ||
         t.seen_higher() > 0;
}

void Machine::handle_propose_replies(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  const auto& t = e.tally;
  if (t.rmw_committed() > 0) {
    e.log_too_high_rounds = 0;
    finish_registered(s, t.count(ReplyOpcode::RmwIdCommittedNoBcast) == 0);
    return;
  }
  if (t.log_too_low) {
    e.log_too_high_rounds = 0;
    const auto p = *t.log_too_low;
    apply_local(CommitInfo{e.key, p.log_no, p.rmw_id, p.value, p.base_ts}, CommitOrigin::Relay, false);
    if (table_.is_registered(e.rmw_id)) {
      finish_registered(s, true);
    } else {
      enter_needs_kv_pair(s);
    }
    return;
  }
  if (t.seen_higher() > 0) {
    e.log_too_high_rounds = 0;
    e.retry_log_too_high_only = false;
    set_state(s, EntryState::RetryWithHigherTs);
    return;
  }
  if (t.acks() >= cfg_.quorum()) {
    e.log_too_high_rounds = 0;
    if (local_accept(s)) {
      broadcast_accepts(s, false);
    } else {
      enter_needs_kv_pair(s);
    }
    return;
  }
  if (t.lower_acc) {
    e.log_too_high_rounds = 0;
    help(s);
    return;
  }
  if (t.count(ReplyOpcode::LogTooHigh) > 0) {
    if (++e.log_too_high_rounds >= cfg_.log_too_high_limit) {
      e.log_too_high_rounds = 0;
      load_stuck_log_commit(s);
      return;
    }
    e.retry_log_too_high_only = true;
    set_state(s, EntryState::RetryWithHigherTs);
    return;
  }
  e.retry_log_too_high_only = false;
  set_state(s, EntryState::RetryWithHigherTs);
}

void Machine::load_stuck_log_commit(std::uint32_t s) {
  // The previous slot is committed here but unknown to the others; spread it.
  auto& e = sessions_[s].entry;
  const auto& pair = kvs_.get(e.key);
  CommitMsg c;
  c.key = e.key;
  c.log_no = pair.last_committed_log_no;
  c.rmw_id = pair.last_committed_rmw_id;
  c.value = pair.value;
  c.base_ts = pair.base_ts;
  c.origin = CommitOrigin::Relay;
  e.commit = std::move(c);
  e.commit_sent = false;
  e.from_help_is_relay = true;
  set_state(s, EntryState::BcastCommitsFromHelp);
}

void Machine::handle_accept_replies(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  const auto& t = e.tally;
  if (e.helping_flag == HelpingFlag::Helping) {
    if (t.log_too_low) {
      const auto p = *t.log_too_low;
      apply_local(CommitInfo{e.key, p.log_no, p.rmw_id, p.value, p.base_ts}, CommitOrigin::Relay, false);
    }
    if (t.nacks() == 0 && t.acks() >= cfg_.quorum()) {
      CommitMsg c;
      c.key = e.key;
      c.log_no = e.helped.log_no;
      c.rmw_id = e.helped.rmw_id;
      c.value = e.helped.value;
      c.base_ts = e.helped.acc_base_ts;
      c.origin = CommitOrigin::Rmw;
      e.commit = std::move(c);
      e.commit_sent = false;
      e.from_help_is_relay = false;
      set_state(s, EntryState::BcastCommitsFromHelp);
      return;
    }
    e.helping_flag = HelpingFlag::NotHelping;
    enter_needs_kv_pair(s);
    return;
  }
  if (t.rmw_committed() > 0) {
    finish_registered(s, t.count(ReplyOpcode::RmwIdCommittedNoBcast) == 0);
    return;
  }
  if (t.log_too_low) {
    const auto p = *t.log_too_low;
    apply_local(CommitInfo{e.key, p.log_no, p.rmw_id, p.value, p.base_ts}, CommitOrigin::Relay, false);
    if (table_.is_registered(e.rmw_id)) {
      finish_registered(s, true);
    } else {
      enter_needs_kv_pair(s);
    }
    return;
  }
  const std::size_t threshold = e.all_aboard ? cfg_.machine_count : cfg_.quorum();
  if (t.acks() >= threshold) {
    const bool thin = t.acks() == cfg_.machine_count;
    e.path = e.all_aboard ? CommitPath::AllAboard : CommitPath::Classic;
    CommitMsg c;
    c.key = e.key;
    c.log_no = e.log_no;
    c.rmw_id = e.rmw_id;
    if (!thin) {
      c.value = e.accepted_value;
      c.base_ts = e.base_ts;
    }
    c.origin = CommitOrigin::Rmw;
    e.commit = std::move(c);
    e.commit_sent = false;
    set_state(s, EntryState::BcastCommits);
    return;
  }
  e.retry_log_too_high_only = t.seen_higher() == 0 && t.count(ReplyOpcode::LogTooHigh) > 0;
  set_state(s, EntryState::RetryWithHigherTs);
}

bool Machine::local_accept(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  auto& pair = kvs_.get(e.key);
  if (pair.log_no != e.log_no || pair.state == PairState::Invalid || pair.proposed_ts != e.ts) return false;
  if (pair.state == PairState::Proposed && pair.rmw_id != e.rmw_id) return false;
  if (e.tally.stale && e.tally.stale->base_ts > pair.base_ts) {
    const Carstamp cs{e.tally.stale->base_ts, pair.last_committed_log_no};
    const bool applied = apply_write(pair, cs, e.tally.stale->value);
    events_.push_back(ev::WriteApplied{e.key, cs, e.tally.stale->value, applied});
    e.fresh_base_ts_seen = true;
  }
  if (e.accepted_log_no != e.log_no) {
    const RmwResult r = rmw_compute(e.op, pair.value);
    e.accepted_value = r.new_value;
    e.read_result = r.read_result;
    e.cas_success = r.cas_success;
    e.base_ts = pair.base_ts;
    e.accepted_log_no = e.log_no;
  }
  pair.state = PairState::Accepted;
  pair.accepted_ts = e.ts;
  pair.rmw_id = e.rmw_id;
  pair.accepted_value = e.accepted_value;
  pair.acc_base_ts = e.base_ts;
  e.helping_flag = HelpingFlag::NotHelping;
  events_.push_back(ev::LocalAccept{e.key, e.log_no, e.rmw_id, e.ts, e.accepted_value, e.base_ts, false, false});
  return true;
}

bool Machine::helped_local_accept(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  auto& pair = kvs_.get(e.key);
  const auto& h = e.helped;
  if (pair.log_no != e.log_no) return false;
  bool ok = false;
  switch (pair.state) {
    case PairState::Proposed: ok = pair.rmw_id == e.rmw_id && pair.proposed_ts == e.ts; break;
    case PairState::Invalid: ok = true; break;
    case PairState::Accepted: ok = pair.proposed_ts == e.ts && pair.accepted_ts <= h.accepted_ts; break;
  }
  if (!ok) return false;
  pair.state = PairState::Accepted;
  pair.rmw_id = h.rmw_id;
  pair.accepted_value = h.value;
  pair.acc_base_ts = h.acc_base_ts;
  pair.proposed_ts = e.ts;
  pair.accepted_ts = e.ts;
  events_.push_back(ev::LocalAccept{e.key, e.log_no, h.rmw_id, e.ts, h.value, h.acc_base_ts, false, true});
  return true;
}

void Machine::help(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  const AcceptedPayload cand = *e.tally.lower_acc;
  if (cand.rmw_id == e.rmw_id) {
    // Helping myself: the freshest accepted value at this slot is our own.
    auto& pair = kvs_.get(e.key);
    if (pair.log_no == e.log_no && pair.state == PairState::Accepted && pair.rmw_id == e.rmw_id &&
        pair.proposed_ts == e.ts && e.accepted_log_no == e.log_no) {
      pair.accepted_ts = e.ts;
      e.helping_flag = HelpingFlag::NotHelping;
      events_.push_back(
          ev::LocalAccept{e.key, e.log_no, e.rmw_id, e.ts, e.accepted_value, e.base_ts, false, false});
      broadcast_accepts(s, false);
    } else {
      e.helping_flag = HelpingFlag::NotHelping;
      enter_needs_kv_pair(s);
    }
    return;
  }
  e.helped = HelpedRmw{cand.rmw_id, cand.value, e.log_no, cand.acc_base_ts, cand.accepted_ts};
  if (helped_local_accept(s)) {
    e.helping_flag = HelpingFlag::Helping;
    broadcast_accepts(s, true);
  } else {
    e.helping_flag = HelpingFlag::NotHelping;
    enter_needs_kv_pair(s);
  }
}

void Machine::retry(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  if (table_.is_registered(e.rmw_id)) {
    finish_registered(s, true);
    return;
  }
  const auto& pair = kvs_.get(e.key);
  const bool same_slot = pair.log_no == e.log_no;
  const bool lth_only = std::exchange(e.retry_log_too_high_only, false);
  e.all_aboard = false;
  e.helping_flag = HelpingFlag::NotHelping;
  if (same_slot && pair.state == PairState::Proposed && pair.rmw_id == e.rmw_id) {
    if (lth_only && e.ts.version >= kClassicVersion && pair.proposed_ts == e.ts &&
        (e.nack_slot != e.log_no || e.ts.version > e.max_nack_version)) {
      broadcast_proposes(s, SelfReply::Ack);
      return;
    }
    e.ts = fresh_ts(e, pair, e.ts.version + 1);
    broadcast_proposes(s, SelfReply::Evaluate);
    return;
  }
  if (pair.state == PairState::Invalid) {
    if (!same_slot) {
      e.log_no = pair.log_no;
      e.ts = fresh_ts(e, pair, kClassicVersion);
    } else {
      e.ts = fresh_ts(e, pair, e.ts.version + 1);
    }
    broadcast_proposes(s, SelfReply::Evaluate);
    return;
  }
  if (same_slot && pair.state == PairState::Accepted && pair.rmw_id == e.rmw_id) {
    help_myself(s);
    return;
  }
  enter_needs_kv_pair(s);
}

void Machine::enter_needs_kv_pair(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  e.backoff_counter = 0;
  e.fingerprint = fingerprint_of(kvs_.get(e.key));
  e.outstanding.reset();
  set_state(s, EntryState::NeedsKvPair);
}

void Machine::backoff_inspect(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  if (table_.is_registered(e.rmw_id)) {
    finish_registered(s, true);
    return;
  }
  const auto& pair = kvs_.get(e.key);
  if (pair.state == PairState::Invalid) {
    e.backoff_counter = 0;
    if (pair.log_no != e.log_no) e.log_no = pair.log_no;
    e.ts = fresh_ts(e, pair, kClassicVersion);
    e.all_aboard = false;
    e.helping_flag = HelpingFlag::NotHelping;
    broadcast_proposes(s, SelfReply::Evaluate);
    return;
  }
  if (pair.rmw_id == e.rmw_id && pair.log_no == e.log_no) {
    // Still ours (for example after spreading a stuck commit): no one to wait for.
    e.backoff_counter = 0;
    e.retry_log_too_high_only = false;
    retry(s);
    return;
  }
  const KvFingerprint fp = fingerprint_of(pair);
  if (!e.fingerprint || *e.fingerprint != fp) {
    e.fingerprint = fp;
    e.backoff_counter = 0;
    return;
  }
  if (++e.backoff_counter < cfg_.backoff_threshold) return;
  const auto counter = e.backoff_counter;
  e.backoff_counter = 0;
  e.fingerprint.reset();
  if (pair.state == PairState::Proposed) {
    events_.push_back(ev::Backoff{gsession(s), e.key, BackoffAction::Steal, counter});
    steal(s);
  } else {
    events_.push_back(ev::Backoff{gsession(s), e.key, BackoffAction::HelpAfterWait, counter});
    help_after_wait(s);
  }
}

// ---------------------------------------------------------------- commits

void Machine::finish_registered(std::uint32_t s, bool bcast) {
  auto& e = sessions_[s].entry;
  if (e.accepted_log_no > 0) {
    apply_local(CommitInfo{e.key, e.accepted_log_no, e.rmw_id, e.accepted_value, e.base_ts}, CommitOrigin::Rmw,
                false);
    auto& pair = kvs_.get(e.key);
    if (pair.state == PairState::Proposed && pair.rmw_id == e.rmw_id && pair.log_no > e.accepted_log_no) {
      pair.state = PairState::Invalid;
    }
  }
  if (e.path == CommitPath::None) e.path = CommitPath::Classic;
  e.helping_flag = HelpingFlag::NotHelping;
  e.outstanding.reset();
  if (!bcast) {
    set_state(s, EntryState::Committed);
    return;
  }
  CommitMsg c;
  c.key = e.key;
  c.log_no = e.accepted_log_no;
  c.rmw_id = e.rmw_id;
  c.value = e.accepted_value;
  c.base_ts = e.base_ts;
  c.origin = CommitOrigin::Rmw;
  e.commit = std::move(c);
  e.commit_sent = false;
  set_state(s, EntryState::BcastCommits);
}

void Machine::bcast_commits_step(std::uint32_t s) {
  auto& e = sessions_[s].entry;
  if (!e.commit_sent) {
    e.lid = next_lid(s);
    e.commit->lid = e.lid;
    e.tally.reset(cfg_.machine_count);
    e.tally.responded[id_] = true;
    e.tally.replies = 1;
    e.since_send = 0;
    e.commit_sent = true;
    e.outstanding = *e.commit;
    broadcast(*e.commit);
    return;
  }
  // A quorum of machines (counting ourselves) holds the commit: apply it here.
  const CommitMsg c = *e.commit;
  CommitInfo info{c.key, c.log_no, c.rmw_id, c.value, c.base_ts};
  if (!info.value) {
    info.value = e.accepted_value;
    info.base_ts = e.base_ts;
  }
  apply_local(info, c.origin, false);
  e.outstanding.reset();
  e.commit.reset();
  e.commit_sent = false;
  if (e.state == EntryState::BcastCommits) {
    set_state(s, EntryState::Committed);
    return;
  }
  e.helping_flag = HelpingFlag::NotHelping;
  e.from_help_is_relay = false;
  if (table_.is_registered(e.rmw_id)) {
    finish_registered(s, false);
  } else {
    enter_needs_kv_pair(s);
  }
}

void Machine::complete(std::uint32_t s) {
  auto& sess = sessions_[s];
  auto& e = sess.entry;
  ev::ClientComplete c;
  c.session = gsession(s);
  c.op_index = e.op_index;
  c.kind = e.kind;
  c.key = e.key;
  c.result = e.read_result;
  c.cas_success = e.cas_success;
  c.rmw_id = e.rmw_id;
  c.path = e.path;
  c.log_no = e.accepted_log_no;
  events_.push_back(std::move(c));
  set_state(s, EntryState::Invalid);
  const Key key = e.key;
  e = LocalEntry{};
  e.key = key;
  sess.busy = false;
}

// ---------------------------------------------------------------- digest

namespace {

void write_pair(wire::Writer& w, const KvPair& p) {
  w.str(p.key);
  w.value(p.value);
  w.value(p.accepted_value);
  w.u8(static_cast<std::uint8_t>(p.state));
  w.u64(p.log_no);
  w.u64(p.last_committed_log_no);
  w.ts(p.proposed_ts);
  w.ts(p.accepted_ts);
  w.rmw(p.rmw_id);
  w.rmw(p.last_committed_rmw_id);
  w.ts(p.base_ts);
  w.ts(p.acc_base_ts);
}

void write_tally(wire::Writer& w, const ReplyTally& t) {
  for (bool b : t.responded) w.boolean(b);
  for (auto c : t.counts) w.u32(c);
  w.boolean(t.log_too_low.has_value());
  if (t.log_too_low) {
    w.u64(t.log_too_low->log_no);
    w.rmw(t.log_too_low->rmw_id);
    w.value(t.log_too_low->value);
    w.ts(t.log_too_low->base_ts);
  }
  w.boolean(t.lower_acc.has_value());
  if (t.lower_acc) {
    w.ts(t.lower_acc->accepted_ts);
    w.rmw(t.lower_acc->rmw_id);
    w.value(t.lower_acc->value);
    w.ts(t.lower_acc->acc_base_ts);
  }
  w.boolean(t.stale.has_value());
  if (t.stale) {
    w.value(t.stale->value);
    w.ts(t.stale->base_ts);
  }
}

}  // namespace

void Machine::write_state(wire::Writer& w) const {
  w.u16(id_);
  for (const auto& [key, p] : kvs_.pairs()) write_pair(w, p);
  for (std::uint32_t i = 0; i < table_.size(); ++i) w.u64(table_.counter(i));
  for (const auto& sess : sessions_) {
    const auto& e = sess.entry;
    w.boolean(sess.busy);
    w.boolean(sess.pending.has_value());
    w.u64(sess.rmw_counter);
    w.u64(sess.attempt);
    w.str(e.key);
    w.u8(static_cast<std::uint8_t>(e.state));
    w.rmw(e.rmw_id);
    w.ts(e.ts);
    w.u64(e.log_no);
    w.value(e.accepted_value);
    w.u64(e.accepted_log_no);
    w.ts(e.base_ts);
    w.value(e.read_result);
    w.boolean(e.cas_success);
    w.u64(e.backoff_counter);
    w.boolean(e.fingerprint.has_value());
    if (e.fingerprint) {
      w.u8(static_cast<std::uint8_t>(e.fingerprint->state));
      w.u64(e.fingerprint->log_no);
      w.u64(e.fingerprint->last_committed_log_no);
      w.ts(e.fingerprint->proposed_ts);
      w.ts(e.fingerprint->accepted_ts);
      w.rmw(e.fingerprint->rmw_id);
    }
    w.u8(static_cast<std::uint8_t>(e.helping_flag));
    w.rmw(e.helped.rmw_id);
    w.value(e.helped.value);
    w.u64(e.helped.log_no);
    w.ts(e.helped.acc_base_ts);
    w.ts(e.helped.accepted_ts);
    w.lid(e.lid);
    w.boolean(e.all_aboard);
    w.u64(e.all_aboard_timeout_counter);
    w.boolean(e.fresh_base_ts_seen);
    write_tally(w, e.tally);
    w.u64(e.log_too_high_rounds);
    w.boolean(e.retry_log_too_high_only);
    w.u64(e.nack_slot);
    w.u64(e.nack_first_attempt);
    w.u64(e.max_nack_version);
    w.boolean(e.commit.has_value());
    if (e.commit) wire::write_message(w, *e.commit);
    w.boolean(e.commit_sent);
    w.u8(static_cast<std::uint8_t>(e.path));
  }
  w.u32(static_cast<std::uint32_t>(inbox_.size()));
}

}  // namespace kvpaxos
