#include "kvpaxos/trace.hpp"

#include <array>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace kvpaxos {

using json = nlohmann::ordered_json;

namespace {

template <class E, std::size_t N>
E enum_from(const std::array<const char*, N>& names, const std::string& s, const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (s == names[i]) return static_cast<E>(i);
  }
  throw std::invalid_argument(std::string("unknown ") + what + " '" + s + "'");
}

template <std::size_t N>
const char* enum_name(const std::array<const char*, N>& names, std::size_t i) {
  return i < N ? names[i] : "?";
}

constexpr std::array<const char*, 8> kEntryStates = {
    "Invalid", "Proposed", "Accepted", "NeedsKvPair", "RetryWithHigherTs", "BcastCommits", "BcastCommitsFromHelp",
    "Committed"};
constexpr std::array<const char*, 3> kHelpingFlags = {"NotHelping", "Helping", "ProposeLocallyAccepted"};
constexpr std::array<const char*, 4> kOpKinds = {"read", "write", "cas", "faa"};
constexpr std::array<const char*, 3> kPaths = {"none", "all-aboard", "classic"};
constexpr std::array<const char*, 2> kBackoffActions = {"steal", "help-after-wait"};

}  // namespace

const char* to_string(EntryState s) { return enum_name(kEntryStates, static_cast<std::size_t>(s)); }
const char* to_string(HelpingFlag f) { return enum_name(kHelpingFlags, static_cast<std::size_t>(f)); }
const char* to_string(OpKind k) { return enum_name(kOpKinds, static_cast<std::size_t>(k)); }
const char* to_string(CommitPath p) { return enum_name(kPaths, static_cast<std::size_t>(p)); }
const char* to_string(BackoffAction a) { return enum_name(kBackoffActions, static_cast<std::size_t>(a)); }

EntryState entry_state_from_string(const std::string& s) {
  return enum_from<EntryState>(kEntryStates, s, "entry state");
}
HelpingFlag helping_flag_from_string(const std::string& s) {
  return enum_from<HelpingFlag>(kHelpingFlags, s, "helping flag");
}
OpKind op_kind_from_string(const std::string& s) { return enum_from<OpKind>(kOpKinds, s, "op kind"); }
CommitPath commit_path_from_string(const std::string& s) { return enum_from<CommitPath>(kPaths, s, "commit path"); }
BackoffAction backoff_action_from_string(const std::string& s) {
  return enum_from<BackoffAction>(kBackoffActions, s, "back-off action");
}

const char* trace_kind_name(const TracePayload& p) {
  static constexpr std::array<const char*, 15> kNames = {
      "send",   "deliver",         "drop",    "duplicate", "entry-state", "local-accept", "commit-applied",
      "write-applied", "client-invoke", "client-complete", "backoff", "crash", "recover", "partition", "heal"};
  return kNames[p.index()];
}

namespace {

json ts_j(const Timestamp& t) { return json::array({t.version, t.machine}); }
Timestamp ts_from(const json& j) { return {j.at(0).get<std::uint64_t>(), j.at(1).get<MachineId>()}; }
json cs_j(const Carstamp& c) { return json::array({ts_j(c.base), c.log_no}); }
Carstamp cs_from(const json& j) { return {ts_from(j.at(0)), j.at(1).get<std::uint64_t>()}; }
json rmw_j(const RmwId& r) { return json::array({r.counter, r.session}); }
RmwId rmw_from(const json& j) { return {j.at(0).get<std::uint64_t>(), j.at(1).get<std::uint32_t>()}; }
Value val_from(const json& j) { return Value::from_hex(j.get<std::string>()); }

template <class T, class F>
json opt_j(const std::optional<T>& o, F&& f) {
  return o ? f(*o) : json(nullptr);
}

json payload_j(const ReplyPayload& p) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        json j = json::object();
        if constexpr (std::is_same_v<T, BlockingPayload>) {
          j["proposed_ts"] = ts_j(x.proposed_ts);
        } else if constexpr (std::is_same_v<T, AcceptedPayload>) {
          j["accepted_ts"] = ts_j(x.accepted_ts);
          j["rmw_id"] = rmw_j(x.rmw_id);
          j["value"] = x.value.to_hex();
          j["acc_base_ts"] = ts_j(x.acc_base_ts);
        } else if constexpr (std::is_same_v<T, CommittedPayload>) {
          j["log_no"] = x.log_no;
          j["rmw_id"] = rmw_j(x.rmw_id);
          j["value"] = x.value.to_hex();
          j["base_ts"] = ts_j(x.base_ts);
        } else if constexpr (std::is_same_v<T, StalePayload>) {
          j["value"] = x.value.to_hex();
          j["base_ts"] = ts_j(x.base_ts);
        }
        return j;
      },
      p);
}

ReplyPayload payload_from(const json& j, ReplyOpcode op) {
  switch (expected_payload_index(op)) {
    case 1: return BlockingPayload{ts_from(j.at("proposed_ts"))};
    case 2:
      return AcceptedPayload{ts_from(j.at("accepted_ts")), rmw_from(j.at("rmw_id")), val_from(j.at("value")),
                             ts_from(j.at("acc_base_ts"))};
    case 3:
      return CommittedPayload{j.at("log_no").get<std::uint64_t>(), rmw_from(j.at("rmw_id")), val_from(j.at("value")),
                              ts_from(j.at("base_ts"))};
    case 4: return StalePayload{val_from(j.at("value")), ts_from(j.at("base_ts"))};
    default: return std::monostate{};
  }
}

json message_j(const Message& m) {
  json j;
  j["kind"] = to_string(kind_of(m));
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ProposeMsg>) {
          j["key"] = x.key;
          j["ts"] = ts_j(x.ts);
          j["log_no"] = x.log_no;
          j["rmw_id"] = rmw_j(x.rmw_id);
          j["base_ts"] = ts_j(x.base_ts);
        } else if constexpr (std::is_same_v<T, AcceptMsg>) {
          j["key"] = x.key;
          j["ts"] = ts_j(x.ts);
          j["log_no"] = x.log_no;
          j["rmw_id"] = rmw_j(x.rmw_id);
          j["value"] = x.value.to_hex();
          j["base_ts"] = ts_j(x.base_ts);
        } else if constexpr (std::is_same_v<T, ReplyMsg>) {
          j["phase"] = x.phase == Phase::Propose ? "propose" : "accept";
          j["opcode"] = to_string(x.opcode);
          j["payload"] = payload_j(x.payload);
        } else if constexpr (std::is_same_v<T, CommitMsg>) {
          j["key"] = x.key;
          j["log_no"] = x.log_no;
          j["rmw_id"] = rmw_j(x.rmw_id);
          j["origin"] = x.origin == CommitOrigin::Rmw ? "rmw" : "relay";
          j["value"] = opt_j(x.value, [](const Value& v) { return json(v.to_hex()); });
          j["base_ts"] = opt_j(x.base_ts, ts_j);
        } else if constexpr (std::is_same_v<T, ReadMsg>) {
          j["key"] = x.key;
          j["carstamp"] = cs_j(x.carstamp);
        } else if constexpr (std::is_same_v<T, ReadReplyMsg>) {
          j["opcode"] = to_string(x.opcode);
          j["carstamp"] = opt_j(x.carstamp, cs_j);
          j["value"] = opt_j(x.value, [](const Value& v) { return json(v.to_hex()); });
          j["last_committed_rmw_id"] = opt_j(x.last_committed_rmw_id, rmw_j);
        } else if constexpr (std::is_same_v<T, TsRequestMsg>) {
          j["key"] = x.key;
        } else if constexpr (std::is_same_v<T, TsReplyMsg>) {
          j["base_ts"] = ts_j(x.base_ts);
          j["log_no"] = x.log_no;
        } else if constexpr (std::is_same_v<T, WriteValueMsg>) {
          j["key"] = x.key;
          j["value"] = x.value.to_hex();
          j["carstamp"] = cs_j(x.carstamp);
        }
        j["lid"] = x.lid.raw;
      },
      m);
  return j;
}

template <class T, class F>
std::optional<T> opt_from(const json& j, F&& f) {
  if (j.is_null()) return std::nullopt;
  return f(j);
}

Message message_from(const json& j) {
  const Lid lid{j.at("lid").get<std::uint64_t>()};
  switch (msg_kind_from_string(j.at("kind").get<std::string>())) {
    case MsgKind::Propose:
      return ProposeMsg{j.at("key").get<std::string>(), ts_from(j.at("ts")), j.at("log_no").get<std::uint64_t>(),
                        rmw_from(j.at("rmw_id")), ts_from(j.at("base_ts")), lid};
    case MsgKind::Accept:
      return AcceptMsg{j.at("key").get<std::string>(), ts_from(j.at("ts")), j.at("log_no").get<std::uint64_t>(),
                       rmw_from(j.at("rmw_id")), val_from(j.at("value")), ts_from(j.at("base_ts")), lid};
    case MsgKind::Reply: {
      ReplyMsg r;
      r.phase = j.at("phase").get<std::string>() == "propose" ? Phase::Propose : Phase::Accept;
      r.lid = lid;
      r.opcode = reply_opcode_from_string(j.at("opcode").get<std::string>());
      r.payload = payload_from(j.at("payload"), r.opcode);
      return r;
    }
    case MsgKind::Commit: {
      CommitMsg c;
      c.key = j.at("key").get<std::string>();
      c.log_no = j.at("log_no").get<std::uint64_t>();
      c.rmw_id = rmw_from(j.at("rmw_id"));
      c.origin = j.at("origin").get<std::string>() == "rmw" ? CommitOrigin::Rmw : CommitOrigin::Relay;
      c.value = opt_from<Value>(j.at("value"), val_from);
      c.base_ts = opt_from<Timestamp>(j.at("base_ts"), ts_from);
      c.lid = lid;
      return c;
    }
    case MsgKind::CommitAck: return CommitAckMsg{lid};
    case MsgKind::Read: return ReadMsg{j.at("key").get<std::string>(), cs_from(j.at("carstamp")), lid};
    case MsgKind::ReadReply: {
      ReadReplyMsg r;
      r.lid = lid;
      const auto op = j.at("opcode").get<std::string>();
      r.opcode = op == "CarstampTooLow"   ? ReadOpcode::CarstampTooLow
                 : op == "CarstampEqual" ? ReadOpcode::CarstampEqual
                                         : ReadOpcode::CarstampTooHigh;
      r.carstamp = opt_from<Carstamp>(j.at("carstamp"), cs_from);
      r.value = opt_from<Value>(j.at("value"), val_from);
      r.last_committed_rmw_id = opt_from<RmwId>(j.at("last_committed_rmw_id"), rmw_from);
      return r;
    }
    case MsgKind::TsRequest: return TsRequestMsg{j.at("key").get<std::string>(), lid};
    case MsgKind::TsReply: return TsReplyMsg{lid, ts_from(j.at("base_ts")), j.at("log_no").get<std::uint64_t>()};
    case MsgKind::WriteValue:
      return WriteValueMsg{j.at("key").get<std::string>(), val_from(j.at("value")), cs_from(j.at("carstamp")), lid};
    case MsgKind::WriteAck: return WriteAckMsg{lid};
  }
  throw std::invalid_argument("bad message kind");
}

json groups_j(const std::vector<std::vector<MachineId>>& g) {
  json out = json::array();
  for (const auto& grp : g) out.push_back(grp);
  return out;
}

}  // namespace

std::string to_json_line(const TraceRecord& r) {
  json j;
  j["tick"] = r.tick;
  j["seq"] = r.seq;
  j["machine"] = r.machine;
  j["event"] = trace_kind_name(r.payload);
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ev::Send> || std::is_same_v<T, ev::Deliver>) {
          j["msg_id"] = x.msg_id;
          j["from"] = x.env.from;
          j["to"] = x.env.to;
          j["msg"] = message_j(x.env.msg);
        } else if constexpr (std::is_same_v<T, ev::Drop>) {
          j["msg_id"] = x.msg_id;
          j["reason"] = x.reason;
        } else if constexpr (std::is_same_v<T, ev::Duplicate>) {
          j["msg_id"] = x.msg_id;
        } else if constexpr (std::is_same_v<T, ev::EntryTransition>) {
          j["session"] = x.session;
          j["key"] = x.key;
          j["from"] = to_string(x.from);
          j["to"] = to_string(x.to);
        } else if constexpr (std::is_same_v<T, ev::LocalAccept>) {
          j["key"] = x.key;
          j["log_no"] = x.log_no;
          j["rmw_id"] = rmw_j(x.rmw_id);
          j["ts"] = ts_j(x.ts);
          j["value"] = x.value.to_hex();
          j["base_ts"] = ts_j(x.base_ts);
          j["all_aboard"] = x.all_aboard;
          j["helping"] = x.helping;
        } else if constexpr (std::is_same_v<T, ev::CommitApplied>) {
          j["key"] = x.key;
          j["log_no"] = x.log_no;
          j["rmw_id"] = rmw_j(x.rmw_id);
          j["origin"] = x.origin == CommitOrigin::Rmw ? "rmw" : "relay";
          j["thin"] = x.thin;
          j["value"] = opt_j(x.value, [](const Value& v) { return json(v.to_hex()); });
          j["base_ts"] = opt_j(x.base_ts, ts_j);
          j["value_updated"] = x.value_updated;
          j["log_advanced"] = x.log_advanced;
          j["unresolved_thin"] = x.unresolved_thin;
        } else if constexpr (std::is_same_v<T, ev::WriteApplied>) {
          j["key"] = x.key;
          j["carstamp"] = cs_j(x.carstamp);
          j["value"] = x.value.to_hex();
          j["applied"] = x.applied;
        } else if constexpr (std::is_same_v<T, ev::ClientInvoke>) {
          j["session"] = x.session;
          j["op_index"] = x.op_index;
          j["kind"] = to_string(x.kind);
          j["key"] = x.key;
          j["arg0"] = x.arg0.to_hex();
          j["arg1"] = x.arg1.to_hex();
          j["rmw_id"] = rmw_j(x.rmw_id);
        } else if constexpr (std::is_same_v<T, ev::ClientComplete>) {
          j["session"] = x.session;
          j["op_index"] = x.op_index;
          j["kind"] = to_string(x.kind);
          j["key"] = x.key;
          j["result"] = x.result.to_hex();
          j["cas_success"] = x.cas_success;
          j["rmw_id"] = rmw_j(x.rmw_id);
          j["path"] = to_string(x.path);
          j["log_no"] = x.log_no;
        } else if constexpr (std::is_same_v<T, ev::Backoff>) {
          j["session"] = x.session;
          j["key"] = x.key;
          j["action"] = to_string(x.action);
          j["counter"] = x.counter;
        } else if constexpr (std::is_same_v<T, ev::Partition>) {
          j["groups"] = groups_j(x.groups);
        }
      },
      r.payload);
  return j.dump();
}

TraceRecord from_json_line(const std::string& line) {
  const json j = json::parse(line);
  TraceRecord r;
  r.tick = j.at("tick").get<Tick>();
  r.seq = j.at("seq").get<std::uint64_t>();
  r.machine = j.at("machine").get<MachineId>();
  const auto event = j.at("event").get<std::string>();
  if (event == "send" || event == "deliver") {
    Envelope env{j.at("from").get<MachineId>(), j.at("to").get<MachineId>(), message_from(j.at("msg"))};
    const auto id = j.at("msg_id").get<std::uint64_t>();
    if (event == "send") {
      r.payload = ev::Send{id, std::move(env)};
    } else {
      r.payload = ev::Deliver{id, std::move(env)};
    }
  } else if (event == "drop") {
    r.payload = ev::Drop{j.at("msg_id").get<std::uint64_t>(), j.at("reason").get<std::string>()};
  } else if (event == "duplicate") {
    r.payload = ev::Duplicate{j.at("msg_id").get<std::uint64_t>()};
  } else if (event == "entry-state") {
    r.payload = ev::EntryTransition{j.at("session").get<std::uint32_t>(), j.at("key").get<std::string>(),
                                    entry_state_from_string(j.at("from").get<std::string>()),
                                    entry_state_from_string(j.at("to").get<std::string>())};
  } else if (event == "local-accept") {
    r.payload = ev::LocalAccept{j.at("key").get<std::string>(), j.at("log_no").get<std::uint64_t>(),
                                rmw_from(j.at("rmw_id")),       ts_from(j.at("ts")),
                                val_from(j.at("value")),        ts_from(j.at("base_ts")),
                                j.at("all_aboard").get<bool>(), j.at("helping").get<bool>()};
  } else if (event == "commit-applied") {
    ev::CommitApplied c;
    c.key = j.at("key").get<std::string>();
    c.log_no = j.at("log_no").get<std::uint64_t>();
    c.rmw_id = rmw_from(j.at("rmw_id"));
    c.origin = j.at("origin").get<std::string>() == "rmw" ? CommitOrigin::Rmw : CommitOrigin::Relay;
    c.thin = j.at("thin").get<bool>();
    c.value = opt_from<Value>(j.at("value"), val_from);
    c.base_ts = opt_from<Timestamp>(j.at("base_ts"), ts_from);
    c.value_updated = j.at("value_updated").get<bool>();
    c.log_advanced = j.at("log_advanced").get<bool>();
    c.unresolved_thin = j.at("unresolved_thin").get<bool>();
    r.payload = std::move(c);
  } else if (event == "write-applied") {
    r.payload = ev::WriteApplied{j.at("key").get<std::string>(), cs_from(j.at("carstamp")), val_from(j.at("value")),
                                 j.at("applied").get<bool>()};
  } else if (event == "client-invoke") {
    r.payload = ev::ClientInvoke{j.at("session").get<std::uint32_t>(),
                                 j.at("op_index").get<std::uint64_t>(),
                                 op_kind_from_string(j.at("kind").get<std::string>()),
                                 j.at("key").get<std::string>(),
                                 val_from(j.at("arg0")),
                                 val_from(j.at("arg1")),
                                 rmw_from(j.at("rmw_id"))};
  } else if (event == "client-complete") {
    r.payload = ev::ClientComplete{j.at("session").get<std::uint32_t>(),
                                   j.at("op_index").get<std::uint64_t>(),
                                   op_kind_from_string(j.at("kind").get<std::string>()),
                                   j.at("key").get<std::string>(),
                                   val_from(j.at("result")),
                                   j.at("cas_success").get<bool>(),
                                   rmw_from(j.at("rmw_id")),
                                   commit_path_from_string(j.at("path").get<std::string>()),
                                   j.at("log_no").get<std::uint64_t>()};
  } else if (event == "backoff") {
    r.payload = ev::Backoff{j.at("session").get<std::uint32_t>(), j.at("key").get<std::string>(),
                            backoff_action_from_string(j.at("action").get<std::string>()),
                            j.at("counter").get<std::uint64_t>()};
  } else if (event == "crash") {
    r.payload = ev::Crash{};
  } else if (event == "recover") {
    r.payload = ev::Recover{};
  } else if (event == "partition") {
    r.payload = ev::Partition{j.at("groups").get<std::vector<std::vector<MachineId>>>()};
  } else if (event == "heal") {
    r.payload = ev::Heal{};
  } else {
    throw std::invalid_argument("unknown trace event '" + event + "'");
  }
  return r;
}

void write_jsonl(std::ostream& os, const Trace& trace) {
  for (const auto& r : trace) os << to_json_line(r) << '\n';
}

Trace read_jsonl(std::istream& is) {
  Trace out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(from_json_line(line));
  }
  return out;
}

}  // namespace kvpaxos
