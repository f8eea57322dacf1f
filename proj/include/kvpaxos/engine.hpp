#pragma once

#include <array>
#include <deque>
#include <optional>
#include <set>
#include <vector>

#include "kvpaxos/abd.hpp"
#include "kvpaxos/kvs.hpp"
#include "kvpaxos/messages.hpp"
#include "kvpaxos/trace.hpp"

namespace kvpaxos {

namespace wire {
class Writer;
}

struct EngineConfig {
  std::size_t machine_count = 5;
  std::size_t sessions_per_machine = 4;
  std::uint64_t backoff_threshold = 100;
  std::uint64_t all_aboard_timeout = 50;
  std::uint64_t log_too_high_limit = 3;
  std::uint64_t suspect_window = 500;
  /// Ticks before an unanswered broadcast is re-sent to the silent machines
  /// with the same lid. 0 disables re-sending.
  std::uint64_t resend_interval = 20;
  bool all_aboard_enabled = true;
  /// Keys that never use the fast path (typically: keys that receive writes).
  std::set<Key> classic_only_keys;
  std::size_t value_width = kDefaultValueWidth;
  LidLayout lid_layout;

  [[nodiscard]] std::size_t quorum() const { return machine_count / 2 + 1; }
  [[nodiscard]] std::size_t total_sessions() const { return machine_count * sessions_per_machine; }
  [[nodiscard]] std::uint32_t global_session(MachineId m, std::uint32_t local) const {
    return static_cast<std::uint32_t>(m * sessions_per_machine + local);
  }
  [[nodiscard]] MachineId machine_of_session(std::uint32_t global) const {
    return static_cast<MachineId>(global / sessions_per_machine);
  }

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct ClientRequest {
  OpKind kind = OpKind::Faa;
  Key key;
  Value arg0;  // CAS compare, FAA delta, write value
  Value arg1;  // CAS swap
  std::uint64_t op_index = 0;

  friend bool operator==(const ClientRequest&, const ClientRequest&) = default;
};

/// Acceptor side. Mutates the local pair exactly as a remote acceptor would.
ReplyMsg on_propose(KvPair& pair, const RegisteredRmwTable& table, const ProposeMsg& m);
ReplyMsg on_accept(KvPair& pair, const RegisteredRmwTable& table, const AcceptMsg& m);

struct HelpedRmw {
  RmwId rmw_id;
  Value value;
  std::uint64_t log_no = 0;
  Timestamp acc_base_ts;
  Timestamp accepted_ts;

  friend bool operator==(const HelpedRmw&, const HelpedRmw&) = default;
};

/// What back-off compares between inspections to decide whether the holder
/// of the pair is making progress.
struct KvFingerprint {
  PairState state = PairState::Invalid;
  std::uint64_t log_no = 0;
  std::uint64_t last_committed_log_no = 0;
  Timestamp proposed_ts;
  Timestamp accepted_ts;
  RmwId rmw_id;

  friend bool operator==(const KvFingerprint&, const KvFingerprint&) = default;
};

KvFingerprint fingerprint_of(const KvPair& p);

struct ReplyTally {
  std::vector<bool> responded;
  std::size_t replies = 0;
  std::array<std::uint32_t, kReplyOpcodeCount> counts{};
  std::optional<CommittedPayload> log_too_low;  // highest log-no seen
  std::optional<AcceptedPayload> lower_acc;     // highest accepted-TS seen
  std::optional<StalePayload> stale;            // freshest base-TS seen

  void reset(std::size_t machines);
  /// False if `from` already replied.
  bool add(MachineId from, const ReplyMsg& r);
  [[nodiscard]] std::uint32_t count(ReplyOpcode op) const { return counts[static_cast<std::size_t>(op)]; }
  [[nodiscard]] std::size_t acks() const { return count(ReplyOpcode::Ack) + count(ReplyOpcode::AckBaseTsStale); }
  [[nodiscard]] std::size_t seen_higher() const {
    return count(ReplyOpcode::SeenHigherProp) + count(ReplyOpcode::SeenHigherAcc);
  }
  [[nodiscard]] std::size_t rmw_committed() const {
    return count(ReplyOpcode::RmwIdCommitted) + count(ReplyOpcode::RmwIdCommittedNoBcast);
  }
  [[nodiscard]] std::size_t nacks() const { return replies - acks() - count(ReplyOpcode::SeenLowerAcc); }

  friend bool operator==(const ReplyTally&, const ReplyTally&) = default;
};

struct LocalEntry {
  Key key;
  EntryState state = EntryState::Invalid;
  RmwId rmw_id;
  RmwOp op;
  OpKind kind = OpKind::Faa;
  std::uint64_t op_index = 0;
  Timestamp ts;
  std::uint64_t log_no = 0;

  // Result of the one computation of this RMW at accepted_log_no. Every later
  // accept of this RMW for that slot reuses these bytes.
  Value accepted_value;
  std::uint64_t accepted_log_no = 0;
  Timestamp base_ts;
  Value read_result;
  bool cas_success = false;

  std::uint64_t backoff_counter = 0;
  std::optional<KvFingerprint> fingerprint;
  HelpingFlag helping_flag = HelpingFlag::NotHelping;
  HelpedRmw helped;
  Lid lid;
  bool all_aboard = false;
  std::uint64_t all_aboard_timeout_counter = 0;
  bool fresh_base_ts_seen = false;
  ReplyTally tally;

  std::uint64_t log_too_high_rounds = 0;
  bool retry_log_too_high_only = false;
  // Highest version carried by a nack to any broadcast of this RMW for slot
  // nack_slot; those broadcasts have lid attempts >= nack_first_attempt.
  std::uint64_t nack_slot = 0;
  std::uint64_t nack_first_attempt = 0;
  std::uint64_t max_nack_version = 0;

  std::optional<CommitMsg> commit;
  bool commit_sent = false;
  bool from_help_is_relay = false;
  CommitPath path = CommitPath::None;

  std::optional<Message> outstanding;
  std::uint64_t since_send = 0;

  friend bool operator==(const LocalEntry&, const LocalEntry&) = default;
};

class Machine {
 public:
  Machine(MachineId id, EngineConfig cfg);

  [[nodiscard]] MachineId id() const { return id_; }
  [[nodiscard]] const EngineConfig& config() const { return cfg_; }

  /// Queues an inbound message; it is processed at the start of the next tick.
  void deliver(Envelope env);

  /// One iteration of the worker loop: poll inbound, inspect every entry,
  /// pull client requests, then hand back everything emitted.
  std::vector<Envelope> tick(Tick now);

  /// Hands a request to an idle session; it is picked up by the next tick.
  /// Throws MalformedOp on operand width mismatch.
  void submit(std::uint32_t local_session, ClientRequest req);
  [[nodiscard]] bool session_idle(std::uint32_t local_session) const;

  /// Trace payloads produced since the last call.
  std::vector<TracePayload> take_events();

  [[nodiscard]] const Kvs& kvs() const { return kvs_; }
  [[nodiscard]] Kvs& kvs_mut() { return kvs_; }
  [[nodiscard]] const RegisteredRmwTable& registered() const { return table_; }
  [[nodiscard]] const LocalEntry& entry(std::uint32_t local_session) const {
    return sessions_.at(local_session).entry;
  }
  [[nodiscard]] const abd::AbdOp& abd_op(std::uint32_t local_session) const {
    return sessions_.at(local_session).abd;
  }

  /// Some entry is in back-off or in an all-aboard accept, and would change
  /// on bare timer ticks.
  [[nodiscard]] bool has_timer_work() const;
  /// No session is busy.
  [[nodiscard]] bool quiescent() const;

  /// Canonical encoding of all behaviour-relevant state (omits clocks).
  void write_state(wire::Writer& w) const;

 private:
  struct Session {
    LocalEntry entry;
    abd::AbdOp abd;
    std::optional<ClientRequest> pending;
    bool busy = false;
    ClientRequest current;
    std::uint64_t rmw_counter = 0;
    std::uint64_t attempt = 0;
  };

  enum class SelfReply { Evaluate, Ack, LocallyAccepted };

  std::uint32_t gsession(std::uint32_t s) const { return cfg_.global_session(id_, s); }
  Lid next_lid(std::uint32_t s);
  void send(MachineId to, Message msg);
  void broadcast(const Message& msg);
  void resend(const Message& msg, const std::vector<bool>& responded);
  void set_state(std::uint32_t s, EntryState to);

  void poll(const Envelope& env);
  void on_reply(MachineId from, const ReplyMsg& r);
  void on_commit_ack(MachineId from, Lid lid);
  void on_commit(MachineId from, const CommitMsg& c);
  ApplyResult apply_local(const CommitInfo& c, CommitOrigin origin, bool thin);
  void note_nack(LocalEntry& e, const ReplyMsg& r);
  void open_broadcast(std::uint32_t s);

  void pull(std::uint32_t s);
  void start_rmw(std::uint32_t s, const ClientRequest& req);
  void start_write(std::uint32_t s, const ClientRequest& req);
  void start_read(std::uint32_t s, const ClientRequest& req);
  void abd_tick(std::uint32_t s);
  void abd_complete(std::uint32_t s);

  void inspect(std::uint32_t s);
  bool step(std::uint32_t s);

  bool all_aboard_eligible(const KvPair& pair) const;
  void all_aboard_start(std::uint32_t s);
  void grab(std::uint32_t s);
  void steal(std::uint32_t s);
  void help_after_wait(std::uint32_t s);
  void help_myself(std::uint32_t s);
  Timestamp fresh_ts(const LocalEntry& e, const KvPair& pair, std::uint64_t at_least) const;
  void broadcast_proposes(std::uint32_t s, SelfReply self);
  void broadcast_accepts(std::uint32_t s, bool helping);

  bool propose_ready(const LocalEntry& e) const;
  bool accept_ready(const LocalEntry& e) const;
  void handle_propose_replies(std::uint32_t s);
  void handle_accept_replies(std::uint32_t s);
  bool local_accept(std::uint32_t s);
  bool helped_local_accept(std::uint32_t s);
  void help(std::uint32_t s);
  void retry(std::uint32_t s);
  void backoff_inspect(std::uint32_t s);
  void finish_registered(std::uint32_t s, bool bcast);
  void bcast_commits_step(std::uint32_t s);
  void enter_needs_kv_pair(std::uint32_t s);
  void load_stuck_log_commit(std::uint32_t s);
  void complete(std::uint32_t s);

  MachineId id_;
  EngineConfig cfg_;
  Kvs kvs_;
  RegisteredRmwTable table_;
  std::vector<Session> sessions_;
  std::deque<Envelope> inbox_;
  std::vector<Envelope> outbox_;
  std::vector<TracePayload> events_;
  std::vector<Tick> last_heard_;
  Tick now_ = 0;
};

}  // namespace kvpaxos
