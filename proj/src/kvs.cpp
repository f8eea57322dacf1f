#include "kvpaxos/kvs.hpp"

#include <json.hpp>

namespace kvpaxos {

const char* to_string(PairState s) {
  switch (s) {
    case PairState::Invalid: return "Invalid";
    case PairState::Proposed: return "Proposed";
    case PairState::Accepted: return "Accepted";
  }
  return "?";
}

void RegisteredRmwTable::register_id(const RmwId& id) {
  if (id.is_none()) return;
  if (id.session >= counters_.size()) {
    throw ConfigError("unknown global session id " + std::to_string(id.session));
  }
  auto& c = counters_[id.session];
  if (id.counter > c) c = id.counter;
}

bool RegisteredRmwTable::is_registered(const RmwId& id) const {
  if (id.is_none() || id.session >= counters_.size()) return false;
  return counters_[id.session] >= id.counter;
}

std::uint64_t RegisteredRmwTable::counter(std::uint32_t session) const {
  if (session >= counters_.size()) throw ConfigError("unknown global session id " + std::to_string(session));
  return counters_[session];
}

void register_rmw_id(RegisteredRmwTable& table, const RmwId& id) { table.register_id(id); }

bool is_registered(const RegisteredRmwTable& table, const RmwId& id) { return table.is_registered(id); }

ApplyResult apply_commit(KvPair& pair, RegisteredRmwTable& table, const CommitInfo& c) {
  ApplyResult out;
  table.register_id(c.rmw_id);
  const Carstamp prior = pair.carstamp();

  std::optional<Value> value = c.value;
  std::optional<Timestamp> base = c.base_ts;
  if (c.thin()) {
    if (pair.state == PairState::Accepted && pair.log_no == c.log_no && pair.rmw_id == c.rmw_id) {
      value = pair.accepted_value;
      base = pair.acc_base_ts;
    } else if (c.log_no > pair.last_committed_log_no) {
      // Slot unknown here and its accepted state is gone: record, never guess.
      out.unresolved_thin = true;
      return out;
    }
  }

  if (c.log_no > pair.last_committed_log_no) {
    pair.last_committed_log_no = c.log_no;
    pair.last_committed_rmw_id = c.rmw_id;
    out.log_advanced = true;
  }
  if (value && base) {
    const Carstamp offered{*base, c.log_no};
    out.offered = offered;
    out.offered_value = value;
    if (offered > prior) {
      pair.value = *value;
      pair.base_ts = *base;
      out.value_updated = true;
    }
  }
  if (out.log_advanced) {
    // The slot fields belong to the slot just passed; a fresh slot starts clean.
    pair.state = PairState::Invalid;
    pair.proposed_ts = {};
    pair.accepted_ts = {};
    pair.rmw_id = {};
    pair.log_no = pair.last_committed_log_no + 1;
  }
  return out;
}

bool apply_write(KvPair& pair, const Carstamp& cs, const Value& value) {
  if (cs > pair.carstamp()) {
    pair.value = value;
    pair.base_ts = cs.base;
    return true;
  }
  return false;
}

KvPair Kvs::initial_pair(const Key& key) const {
  KvPair p;
  p.key = key;
  p.value = Value::zero(value_width_);
  p.accepted_value = Value::zero(value_width_);
  return p;
}

KvPair& Kvs::get(const Key& key) {
  auto it = pairs_.find(key);
  if (it == pairs_.end()) it = pairs_.emplace(key, initial_pair(key)).first;
  return it->second;
}

const KvPair* Kvs::find(const Key& key) const {
  auto it = pairs_.find(key);
  return it == pairs_.end() ? nullptr : &it->second;
}

namespace {

nlohmann::ordered_json ts_json(const Timestamp& ts) { return {ts.version, ts.machine}; }

}  // namespace

std::string snapshot(const Kvs& kvs, const RegisteredRmwTable& table) {
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const auto& [key, p] : kvs.pairs()) {
    nlohmann::ordered_json j;
    j["key"] = key;
    j["value"] = p.value.to_hex();
    j["accepted_value"] = p.accepted_value.to_hex();
    j["state"] = to_string(p.state);
    j["log_no"] = p.log_no;
    j["last_committed_log_no"] = p.last_committed_log_no;
    j["proposed_ts"] = ts_json(p.proposed_ts);
    j["accepted_ts"] = ts_json(p.accepted_ts);
    j["rmw_id"] = p.rmw_id.encode();
    j["last_committed_rmw_id"] = p.last_committed_rmw_id.encode();
    j["base_ts"] = ts_json(p.base_ts);
    j["acc_base_ts"] = ts_json(p.acc_base_ts);
    pairs.push_back(std::move(j));
  }
  nlohmann::ordered_json registered = nlohmann::ordered_json::array();
  for (std::uint32_t s = 0; s < table.size(); ++s) registered.push_back(table.counter(s));
  nlohmann::ordered_json out;
  out["pairs"] = std::move(pairs);
  out["registered"] = std::move(registered);
  return out.dump();
}

}  // namespace kvpaxos
