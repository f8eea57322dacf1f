#include "kvpaxos/checker.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_set>

namespace kvpaxos::check {

const char* to_string(Status s) {
  switch (s) {
    case Status::Pass: return "PASS";
    case Status::Fail: return "FAIL";
    case Status::Refused: return "REFUSED";
  }
  return "?";
}

namespace {

Verdict pass(std::string name, std::string detail = {}) { return {std::move(name), Status::Pass, std::move(detail), {}}; }

Verdict fail(std::string name, std::string detail, std::vector<TraceRecord> witness) {
  return {std::move(name), Status::Fail, std::move(detail), std::move(witness)};
}

using Slot = std::pair<Key, std::uint64_t>;

std::string slot_str(const Slot& s) { return s.first + "@" + std::to_string(s.second); }

}  // namespace

Verdict check_exactly_once(const Trace& t) {
  const std::string name = "exactly_once";
  std::map<RmwId, std::pair<Slot, const TraceRecord*>> slot_of;
  std::map<RmwId, const TraceRecord*> completed;
  std::size_t rmws = 0;
  for (const auto& r : t) {
    if (const auto* c = std::get_if<ev::CommitApplied>(&r.payload)) {
      if (c->rmw_id.is_none() || c->unresolved_thin) continue;
      const Slot s{c->key, c->log_no};
      auto [it, fresh] = slot_of.try_emplace(c->rmw_id, s, &r);
      if (!fresh && it->second.first != s) {
        return fail(name,
                    "rmw " + to_string(c->rmw_id) + " committed at " + slot_str(it->second.first) + " and " +
                        slot_str(s),
                    {*it->second.second, r});
      }
    }
  }
  for (const auto& r : t) {
    const auto* c = std::get_if<ev::ClientComplete>(&r.payload);
    if (!c || c->rmw_id.is_none()) continue;
    ++rmws;
    auto [it, fresh] = completed.try_emplace(c->rmw_id, &r);
    if (!fresh) return fail(name, "rmw " + to_string(c->rmw_id) + " completed twice", {*it->second, r});
    const auto s = slot_of.find(c->rmw_id);
    if (s == slot_of.end()) return fail(name, "rmw " + to_string(c->rmw_id) + " completed but never committed", {r});
    if (s->second.first != Slot{c->key, c->log_no}) {
      return fail(name, "rmw " + to_string(c->rmw_id) + " reports slot " + slot_str({c->key, c->log_no}) +
                            " but committed at " + slot_str(s->second.first),
                  {*s->second.second, r});
    }
  }
  return pass(name, std::to_string(rmws) + " completed rmws, " + std::to_string(slot_of.size()) + " committed");
}

Verdict check_slot_agreement(const Trace& t) {
  const std::string name = "slot_agreement";
  struct Decided {
    RmwId rmw;
    const TraceRecord* rmw_rec = nullptr;
    std::optional<std::pair<Value, Timestamp>> content;
    const TraceRecord* content_rec = nullptr;
  };
  std::map<Slot, Decided> slots;
  std::map<std::pair<Key, Carstamp>, std::pair<Value, const TraceRecord*>> by_carstamp;
  auto offer = [&](const Key& key, const Carstamp& cs, const Value& v, const TraceRecord& r) -> std::optional<Verdict> {
    auto [it, fresh] = by_carstamp.try_emplace({key, cs}, v, &r);
    if (!fresh && it->second.first != v) {
      return fail(name, "two values offered for " + key + " at carstamp " + to_string(cs), {*it->second.second, r});
    }
    return std::nullopt;
  };
  for (const auto& r : t) {
    if (const auto* w = std::get_if<ev::WriteApplied>(&r.payload)) {
      if (auto v = offer(w->key, w->carstamp, w->value, r)) return *v;
      continue;
    }
    const auto* c = std::get_if<ev::CommitApplied>(&r.payload);
    if (!c || c->unresolved_thin) continue;
    auto& d = slots[{c->key, c->log_no}];
    if (!d.rmw_rec) {
      d.rmw = c->rmw_id;
      d.rmw_rec = &r;
    } else if (d.rmw != c->rmw_id) {
      return fail(name,
                  "slot " + slot_str({c->key, c->log_no}) + " decided " + to_string(d.rmw) + " and " +
                      to_string(c->rmw_id),
                  {*d.rmw_rec, r});
    }
    if (!c->value || !c->base_ts) continue;
    if (auto v = offer(c->key, Carstamp{*c->base_ts, c->log_no}, *c->value, r)) return *v;
    if (c->origin != CommitOrigin::Rmw) continue;
    const std::pair<Value, Timestamp> content{*c->value, *c->base_ts};
    if (!d.content) {
      d.content = content;
      d.content_rec = &r;
    } else if (*d.content != content) {
      return fail(name, "slot " + slot_str({c->key, c->log_no}) + " committed with two values", {*d.content_rec, r});
    }
  }
  return pass(name, std::to_string(slots.size()) + " slots");
}

Verdict check_invariants(const Trace& t) {
  const std::string name = "invariants";
  // Committed slots per key (any machine), and the contiguous prefix 1..k.
  std::map<Key, std::set<std::uint64_t>> committed;
  std::map<Key, std::uint64_t> prefix;
  // Slots each machine has applied a commit for.
  std::map<std::pair<MachineId, Key>, std::set<std::uint64_t>> applied;
  // Lowest slot each rmw has been committed at so far.
  std::map<RmwId, std::pair<std::uint64_t, const TraceRecord*>> first_commit;
  std::map<std::pair<Key, std::uint64_t>, const TraceRecord*> commit_rec;
  std::size_t sends = 0;

  for (const auto& r : t) {
    if (const auto* c = std::get_if<ev::CommitApplied>(&r.payload)) {
      if (c->unresolved_thin) continue;
      auto& set = committed[c->key];
      set.insert(c->log_no);
      commit_rec.try_emplace({c->key, c->log_no}, &r);
      auto& p = prefix[c->key];
      while (set.count(p + 1)) ++p;
      applied[{r.machine, c->key}].insert(c->log_no);
      if (!c->rmw_id.is_none()) {
        auto [it, fresh] = first_commit.try_emplace(c->rmw_id, c->log_no, &r);
        if (!fresh && c->log_no < it->second.first) it->second = {c->log_no, &r};
      }
      continue;
    }
    if (const auto* la = std::get_if<ev::LocalAccept>(&r.payload)) {
      const auto it = first_commit.find(la->rmw_id);
      if (it != first_commit.end() && it->second.first < la->log_no) {
        return fail(name,
                    "inv-3: " + to_string(la->rmw_id) + " accepted locally at " + slot_str({la->key, la->log_no}) +
                        " after its commit at log " + std::to_string(it->second.first),
                    {*it->second.second, r});
      }
      continue;
    }
    const auto* s = std::get_if<ev::Send>(&r.payload);
    if (!s) continue;
    const Key* key = nullptr;
    std::uint64_t x = 0;
    if (const auto* p = std::get_if<ProposeMsg>(&s->env.msg)) {
      key = &p->key;
      x = p->log_no;
    } else if (const auto* a = std::get_if<AcceptMsg>(&s->env.msg)) {
      key = &a->key;
      x = a->log_no;
    } else {
      continue;
    }
    ++sends;
    if (x <= 1) continue;
    if (prefix[*key] < x - 1) {
      const auto missing = prefix[*key] + 1;
      return fail(name,
                  std::string("inv-1: ") + to_string(kind_of(s->env.msg)) + " for " + slot_str({*key, x}) + " before slot " +
                      std::to_string(missing) + " was committed anywhere",
                  {r});
    }
    const auto& mine = applied[{s->env.from, *key}];
    if (!mine.count(x - 1)) {
      std::vector<TraceRecord> w;
      if (auto it = commit_rec.find({*key, x - 1}); it != commit_rec.end()) w.push_back(*it->second);
      w.push_back(r);
      return fail(name,
                  "inv-2: M" + std::to_string(s->env.from) + " sent " + to_string(kind_of(s->env.msg)) + " for " +
                      slot_str({*key, x}) + " without applying slot " + std::to_string(x - 1),
                  std::move(w));
    }
  }
  return pass(name, std::to_string(sends) + " propose/accept sends");
}

Verdict check_ts_discipline(const Trace& t, const TraceContext& ctx) {
  const std::string name = "ts_discipline";
  struct Origin {
    Key key;
    std::uint64_t log_no = 0;
    RmwId rmw;  // the session's own rmw when the broadcast went out
  };
  using Group = std::tuple<std::uint32_t, RmwId, Key, std::uint64_t>;
  std::map<std::uint32_t, RmwId> current;                         // global session -> rmw
  std::map<std::pair<MachineId, Lid>, Origin> origin;             // broadcast lids
  std::map<Group, std::map<Lid, std::pair<Timestamp, const TraceRecord*>>> nacks;
  std::size_t proposes = 0;
  auto gsession = [&](MachineId m, Lid lid) {
    return static_cast<std::uint32_t>(m * ctx.sessions_per_machine + ctx.lid_layout.session_of(lid));
  };

  for (const auto& r : t) {
    if (const auto* inv = std::get_if<ev::ClientInvoke>(&r.payload)) {
      current[inv->session] = inv->rmw_id;
      continue;
    }
    if (const auto* la = std::get_if<ev::LocalAccept>(&r.payload)) {
      if (la->all_aboard && la->ts.version != kAllAboardVersion) {
        return fail(name, "all-aboard local accept at " + to_string(la->ts), {r});
      }
      continue;
    }
    if (const auto* d = std::get_if<ev::Deliver>(&r.payload)) {
      const auto* rep = std::get_if<ReplyMsg>(&d->env.msg);
      if (!rep) continue;
      const auto* b = std::get_if<BlockingPayload>(&rep->payload);
      if (!b) continue;
      const auto o = origin.find({d->env.to, rep->lid});
      if (o == origin.end()) continue;
      const Group g{gsession(d->env.to, rep->lid), o->second.rmw, o->second.key, o->second.log_no};
      auto& slot = nacks[g][rep->lid];
      if (!slot.second || slot.first < b->proposed_ts) slot = {b->proposed_ts, &r};
      continue;
    }
    const auto* s = std::get_if<ev::Send>(&r.payload);
    if (!s) continue;
    const MachineId m = s->env.from;
    if (const auto* a = std::get_if<AcceptMsg>(&s->env.msg)) {
      if (a->ts.version < kClassicVersion && a->ts.version != kAllAboardVersion) {
        return fail(name, "accept below the classic range is not an all-aboard accept: " + to_string(a->ts), {r});
      }
      const auto g = gsession(m, a->lid);
      origin.try_emplace({m, a->lid}, Origin{a->key, a->log_no, current[g]});
      continue;
    }
    const auto* p = std::get_if<ProposeMsg>(&s->env.msg);
    if (!p) continue;
    ++proposes;
    if (p->ts.version < kClassicVersion) return fail(name, "propose at " + to_string(p->ts), {r});
    const auto g = gsession(m, p->lid);
    // Later sends with this lid are copies or re-sends of the same broadcast.
    if (!origin.try_emplace({m, p->lid}, Origin{p->key, p->log_no, current[g]}).second) continue;
    const auto it = nacks.find(Group{g, current[g], p->key, p->log_no});
    if (it == nacks.end()) continue;
    for (const auto& [lid, nack] : it->second) {
      if (lid == p->lid) continue;
      if (!(nack.first < p->ts)) {
        return fail(name,
                    "propose at " + to_string(p->ts) + " for " + slot_str({p->key, p->log_no}) +
                        " does not exceed nack " + to_string(nack.first),
                    {*nack.second, r});
      }
    }
  }
  return pass(name, std::to_string(proposes) + " propose sends");
}

Verdict check_conservation(const Trace& t) {
  const std::string name = "conservation";
  std::unordered_set<std::uint64_t> sent;
  std::map<std::uint64_t, std::size_t> dups;
  std::map<std::uint64_t, std::size_t> fates;
  for (const auto& r : t) {
    std::uint64_t id = 0;
    if (const auto* s = std::get_if<ev::Send>(&r.payload)) {
      if (!sent.insert(s->msg_id).second) return fail(name, "msg " + std::to_string(s->msg_id) + " sent twice", {r});
      continue;
    }
    bool fate = true;
    if (const auto* d = std::get_if<ev::Deliver>(&r.payload)) {
      id = d->msg_id;
    } else if (const auto* d = std::get_if<ev::Drop>(&r.payload)) {
      id = d->msg_id;
    } else if (const auto* d = std::get_if<ev::Duplicate>(&r.payload)) {
      id = d->msg_id;
      fate = false;
    } else {
      continue;
    }
    if (!sent.count(id)) return fail(name, "msg " + std::to_string(id) + " was never sent", {r});
    if (!fate) {
      ++dups[id];
    } else if (++fates[id] > 1 + dups[id]) {
      return fail(name, "msg " + std::to_string(id) + " delivered or dropped more often than copied", {r});
    }
  }
  return pass(name, std::to_string(sent.size()) + " messages");
}

Verdict check_crash_stop(const Trace& t) {
  const std::string name = "crash_stop";
  std::map<MachineId, const TraceRecord*> down;
  for (const auto& r : t) {
    if (std::holds_alternative<ev::Crash>(r.payload)) {
      down[r.machine] = &r;
      continue;
    }
    if (std::holds_alternative<ev::Recover>(r.payload)) {
      down.erase(r.machine);
      continue;
    }
    if (auto it = down.find(r.machine); it != down.end()) {
      return fail(name, "event at crashed M" + std::to_string(r.machine), {*it->second, r});
    }
  }
  return pass(name);
}

Verdict check_carstamp_visibility(const Trace& t, const std::vector<Kvs>& finals, bool global,
                                  const std::vector<bool>& crashed) {
  const std::string name = "carstamp_visibility";
  struct Best {
    Carstamp cs;
    Value value;
    const TraceRecord* rec = nullptr;
  };
  std::map<std::pair<MachineId, Key>, Best> local;
  std::map<Key, Best> overall;
  auto fold = [](Best& b, const Carstamp& cs, const Value& v, const TraceRecord& r) {
    if (!b.rec || b.cs < cs) b = {cs, v, &r};
  };
  for (const auto& r : t) {
    if (const auto* c = std::get_if<ev::CommitApplied>(&r.payload)) {
      if (!c->value || !c->base_ts) continue;
      const Carstamp cs{*c->base_ts, c->log_no};
      fold(local[{r.machine, c->key}], cs, *c->value, r);
      fold(overall[c->key], cs, *c->value, r);
    } else if (const auto* w = std::get_if<ev::WriteApplied>(&r.payload)) {
      fold(local[{r.machine, w->key}], w->carstamp, w->value, r);
      fold(overall[w->key], w->carstamp, w->value, r);
    }
  }
  std::size_t checked = 0;
  for (const auto& [mk, best] : local) {
    const auto& [m, key] = mk;
    if (m >= finals.size()) continue;
    const KvPair initial = finals[m].initial_pair(key);
    const KvPair* p = finals[m].find(key);
    const KvPair& pair = p ? *p : initial;
    // Nothing applied above the initial carstamp leaves the initial value.
    const Value& expect = best.cs > initial.carstamp() ? best.value : initial.value;
    ++checked;
    if (pair.value != expect) {
      return fail(name, "M" + std::to_string(m) + " holds " + pair.value.to_hex() + " for " + key +
                            " but its highest carstamp " + to_string(best.cs) + " carries " + best.value.to_hex(),
                  {*best.rec});
    }
  }
  if (global) {
    for (const auto& [key, best] : overall) {
      for (std::size_t m = 0; m < finals.size(); ++m) {
        if (m < crashed.size() && crashed[m]) continue;
        const KvPair* p = finals[m].find(key);
        const Value v = p ? p->value : finals[m].initial_pair(key).value;
        if (v != best.value) {
          return fail(name, "M" + std::to_string(m) + " holds " + v.to_hex() + " for " + key +
                                " but the highest carstamp anywhere is " + to_string(best.cs),
                      {*best.rec});
        }
      }
    }
  }
  return pass(name, std::to_string(checked) + " machine/key pairs");
}

History extract_history(const Trace& t) {
  History h;
  std::map<std::pair<std::uint32_t, std::uint64_t>, std::size_t> open;
  for (const auto& r : t) {
    if (const auto* c = std::get_if<ev::ClientInvoke>(&r.payload)) {
      HistoryOp op;
      op.session = c->session;
      op.op_index = c->op_index;
      op.kind = c->kind;
      op.key = c->key;
      op.arg0 = c->arg0;
      op.arg1 = c->arg1;
      op.invoke_tick = r.tick;
      op.invoke_seq = r.seq;
      open[{c->session, c->op_index}] = h.size();
      h.push_back(std::move(op));
    } else if (const auto* c = std::get_if<ev::ClientComplete>(&r.payload)) {
      const auto it = open.find({c->session, c->op_index});
      if (it == open.end()) continue;
      auto& op = h[it->second];
      op.complete_tick = r.tick;
      op.complete_seq = r.seq;
      op.result = c->result;
      op.cas_success = c->cas_success;
      open.erase(it);
    }
  }
  return h;
}

namespace {

// Sequential register model; written from the operation definitions, not the
// engine's helpers.
Value add_low_word(const Value& v, const Value& delta) {
  auto bytes = v.bytes();
  unsigned carry = 0;
  for (std::size_t i = 0; i < 8 && i < bytes.size(); ++i) {
    const unsigned s = bytes[i] + delta.bytes()[i] + carry;
    bytes[i] = static_cast<std::uint8_t>(s & 0xff);
    carry = s >> 8;
  }
  return Value(std::move(bytes));
}

struct Linearizer {
  const std::vector<const HistoryOp*>& ops;
  std::vector<std::uint32_t> preds;
  std::uint32_t must = 0;  // completed ops
  std::set<std::pair<std::uint32_t, Value>> dead;

  bool apply(const HistoryOp& op, const Value& cur, Value& next) const {
    const bool done = op.complete_seq.has_value();
    switch (op.kind) {
      case OpKind::Read:
        next = cur;
        return !done || op.result == cur;
      case OpKind::Write:
        next = op.arg0;
        return true;
      case OpKind::Cas: {
        const bool ok = cur == op.arg0;
        next = ok ? op.arg1 : cur;
        return !done || (op.result == cur && op.cas_success == ok);
      }
      case OpKind::Faa:
        next = add_low_word(cur, op.arg0);
        return !done || op.result == cur;
    }
    return false;
  }

  bool search(std::uint32_t mask, const Value& cur) {
    if ((mask & must) == must) return true;
    if (dead.count({mask, cur})) return false;
    for (std::size_t i = 0; i < ops.size(); ++i) {
      const std::uint32_t bit = 1u << i;
      if ((mask & bit) || (preds[i] & ~mask)) continue;
      Value next;
      if (!apply(*ops[i], cur, next)) continue;
      if (search(mask | bit, next)) return true;
    }
    dead.insert({mask, cur});
    return false;
  }
};

}  // namespace

Verdict check_linearizability(const History& h, std::size_t value_width, std::size_t max_ops_per_key) {
  const std::string name = "linearizability";
  std::map<Key, std::vector<const HistoryOp*>> per_key;
  for (const auto& op : h) per_key[op.key].push_back(&op);
  for (const auto& [key, ops] : per_key) {
    if (ops.size() > max_ops_per_key || ops.size() > 31) {
      return {name, Status::Refused,
              "key " + key + " has " + std::to_string(ops.size()) + " ops; the exhaustive search is limited to " +
                  std::to_string(max_ops_per_key) + " per key (make the workload smaller)",
              {}};
    }
  }
  for (const auto& [key, ops] : per_key) {
    Linearizer lin{ops, std::vector<std::uint32_t>(ops.size(), 0), 0, {}};
    for (std::size_t i = 0; i < ops.size(); ++i) {
      if (ops[i]->complete_seq) lin.must |= 1u << i;
      for (std::size_t j = 0; j < ops.size(); ++j) {
        if (i != j && ops[j]->complete_seq && *ops[j]->complete_seq < ops[i]->invoke_seq) lin.preds[i] |= 1u << j;
      }
    }
    if (!lin.search(0, Value::zero(value_width))) {
      std::string detail = "no sequential witness for key " + key + ":";
      for (const auto* op : ops) {
        detail += " [s" + std::to_string(op->session) + " " + to_string(op->kind);
        if (op->kind != OpKind::Read) detail += " " + std::to_string(op->arg0.as_u64());
        if (op->kind == OpKind::Cas) detail += "->" + std::to_string(op->arg1.as_u64());
        if (op->complete_seq) {
          detail += " => " + std::to_string(op->result.as_u64());
          if (op->kind == OpKind::Cas) detail += op->cas_success ? " ok" : " no";
        } else {
          detail += " open";
        }
        detail += "]";
      }
      return {name, Status::Fail, detail, {}};
    }
  }
  return pass(name, std::to_string(h.size()) + " ops over " + std::to_string(per_key.size()) + " keys");
}

std::vector<Verdict> run_all(const Trace& t, const TraceContext& ctx) {
  return {check_exactly_once(t), check_slot_agreement(t), check_invariants(t),
          check_ts_discipline(t, ctx), check_conservation(t), check_crash_stop(t)};
}

}  // namespace kvpaxos::check
