#include "kvpaxos/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

#include "kvpaxos/wire.hpp"

namespace kvpaxos::sim {

std::uint64_t Rng::uniform(std::uint64_t lo, std::uint64_t hi) {
  if (hi <= lo) return lo;
  const std::uint64_t span = hi - lo + 1;
  if (span == 0) return next();
  return lo + next() % span;
}

double Rng::unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

bool NetRule::matches(const Envelope& env, Tick now) const {
  if (now < from_tick || now > to_tick) return false;
  if (kind && *kind != kind_of(env.msg)) return false;
  if (from && *from != env.from) return false;
  if (to && *to != env.to) return false;
  return true;
}

std::string key_name(std::size_t i) { return "k" + std::to_string(i); }

void Scenario::validate() const {
  engine.validate();
  const auto n = engine.machine_count;
  if (net.rng != Rng::kAlgorithm) throw ConfigError("rng: unsupported generator '" + net.rng + "'");
  if (net.delay_min == 0 || net.delay_max < net.delay_min) {
    throw ConfigError("delay: need 1 <= delay_min <= delay_max");
  }
  if (!(net.loss >= 0.0 && net.loss < 1.0)) throw ConfigError("loss: must be in [0, 1)");
  if (!(net.dup >= 0.0 && net.dup < 1.0)) throw ConfigError("dup: must be in [0, 1)");
  if (net.max_ticks == 0) throw ConfigError("max_ticks: must be positive");

  const auto& mix = workload.mix;
  if (mix.read + mix.write + mix.cas + mix.faa != 100) throw ConfigError("mix: percentages must sum to 100");
  if (workload.keys == 0) throw ConfigError("keys: must be at least 1");
  if (workload.think_max < workload.think_min) throw ConfigError("think: need think_min <= think_max");
  if (workload.value_range < 2) throw ConfigError("value_range: must be at least 2");
  if (workload.skew < 0.0) throw ConfigError("skew: must be non-negative");
  for (const auto& op : workload.scripted) {
    if (op.machine >= n) throw ConfigError("op: machine " + std::to_string(op.machine) + " out of range");
    if (op.session >= engine.sessions_per_machine) {
      throw ConfigError("op: session " + std::to_string(op.session) + " out of range");
    }
    if (op.key.empty()) throw ConfigError("op: empty key");
  }

  std::vector<bool> down(n, false);
  auto sorted = net.faults;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.tick < b.tick; });
  for (const auto& f : sorted) {
    const auto where = " at tick " + std::to_string(f.tick);
    switch (f.kind) {
      case FaultKind::Crash:
      case FaultKind::CrashAfterSend:
        if (f.machine >= n) throw ConfigError("fault: crash of unknown machine" + where);
        if (down[f.machine]) throw ConfigError("fault: crash of crashed machine " + std::to_string(f.machine) + where);
        for (auto k : f.keep_to) {
          if (k >= n) throw ConfigError("fault: keep target out of range" + where);
        }
        down[f.machine] = true;
        break;
      case FaultKind::Recover:
        if (f.machine >= n) throw ConfigError("fault: recover of unknown machine" + where);
        if (!down[f.machine]) {
          throw ConfigError("fault: recover of live machine " + std::to_string(f.machine) + where);
        }
        down[f.machine] = false;
        break;
      case FaultKind::Partition: {
        std::vector<bool> seen(n, false);
        for (const auto& g : f.groups) {
          for (auto m : g) {
            if (m >= n || seen[m]) throw ConfigError("fault: bad partition group" + where);
            seen[m] = true;
          }
        }
        break;
      }
      case FaultKind::Heal: break;
    }
  }
  for (const auto& r : net.rules) {
    if ((r.from && *r.from >= n) || (r.to && *r.to >= n)) throw ConfigError("rule: machine out of range");
    if (r.to_tick < r.from_tick) throw ConfigError("rule: empty tick window");
  }
}

namespace {

Value operand(Rng& rng, std::uint64_t range, std::uint64_t lo, std::size_t width) {
  return Value::from_u64(rng.uniform(lo, range - 1), width);
}

}  // namespace

std::vector<PlannedOp> plan_workload(const Scenario& sc) {
  const auto& w = sc.workload;
  const auto& cfg = sc.engine;
  const auto width = cfg.value_width;
  std::vector<PlannedOp> out;
  std::uint64_t index = 0;
  for (const auto& op : w.scripted) {
    PlannedOp p;
    p.op_index = index++;
    p.global_session = cfg.global_session(op.machine, op.session);
    p.not_before = op.tick;
    p.request = ClientRequest{op.kind, op.key, op.arg0, op.arg1, p.op_index};
    out.push_back(std::move(p));
  }
  if (w.ops == 0) return out;

  // A dedicated stream so network draws never shift the workload.
  Rng rng(sc.net.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t machines = cfg.machine_count;
  const std::size_t spm = cfg.sessions_per_machine;
  const std::size_t sessions = machines * spm;
  std::vector<double> cdf(w.keys);
  double total = 0.0;
  for (std::size_t i = 0; i < w.keys; ++i) {
    total += w.skew == 0.0 ? 1.0 : 1.0 / std::pow(static_cast<double>(i + 1), w.skew);
    cdf[i] = total;
  }
  for (std::size_t i = 0; i < w.ops; ++i) {
    // Round-robin over machines first, so neighbouring sessions live apart.
    const std::size_t order = i % sessions;
    const auto m = static_cast<MachineId>(order % machines);
    const auto local = static_cast<std::uint32_t>(order / machines);
    std::size_t key = 0;
    if (w.cyclic_keys) {
      key = i % w.keys;
    } else if (w.sessions_per_key > 0) {
      key = (order / w.sessions_per_key) % w.keys;
    } else {
      const double u = rng.unit() * total;
      key = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      key = std::min(key, w.keys - 1);
    }
    PlannedOp p;
    p.op_index = index++;
    p.global_session = cfg.global_session(m, local);
    p.not_before = rng.uniform(w.think_min, w.think_max);
    auto& r = p.request;
    r.key = key_name(key);
    r.op_index = p.op_index;
    const auto pick = rng.uniform(0, 99);
    if (pick < w.mix.read) {
      r.kind = OpKind::Read;
    } else if (pick < w.mix.read + w.mix.write) {
      r.kind = OpKind::Write;
      r.arg0 = Value::from_u64(1000 + p.op_index, width);
    } else if (pick < w.mix.read + w.mix.write + w.mix.cas) {
      r.kind = OpKind::Cas;
      r.arg0 = operand(rng, w.value_range, 0, width);
      r.arg1 = operand(rng, w.value_range, 0, width);
    } else {
      r.kind = OpKind::Faa;
      r.arg0 = operand(rng, w.value_range, 1, width);
    }
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

struct InFlight {
  std::uint64_t msg_id = 0;
  MachineId from = 0;
  MachineId to = 0;
  std::vector<std::uint8_t> frame;
};

struct SessionFeed {
  std::deque<PlannedOp> queue;
  Tick last_complete = 0;
  bool outstanding = false;
};

class Simulator {
 public:
  explicit Simulator(const Scenario& sc) : sc_(sc), rng_(sc.net.seed) {
    const auto n = sc.engine.machine_count;
    for (MachineId m = 0; m < n; ++m) machines_.emplace_back(m, sc.engine);
    crashed_.assign(n, false);
    group_.assign(n, 0);
    feeds_.resize(sc.engine.total_sessions());
    const auto plan = plan_workload(sc);
    // Scripted ops come first and carry absolute ticks; random ops carry think time.
    for (const auto& p : plan) feeds_[p.global_session].queue.push_back(p);
    scripted_count_ = sc.workload.scripted.size();
    result_.ops_planned = plan.size();
    faults_ = sc.net.faults;
    std::stable_sort(faults_.begin(), faults_.end(), [](const auto& a, const auto& b) { return a.tick < b.tick; });
  }

  RunResult run() {
    const auto n = sc_.engine.machine_count;
    bool ops_done = false;
    Tick t = 0;
    for (; t < sc_.net.max_ticks; ++t) {
      apply_faults(t);
      deliver_due(t);
      if (!ops_done) feed(t);
      for (MachineId m = 0; m < n; ++m) {
        if (crashed_[m]) continue;
        auto out = machines_[m].tick(t);
        collect_events(t, m);
        dispatch(t, m, std::move(out));
      }
      if (!ops_done && all_done()) {
        ops_done = true;
        result_.completed = true;
      }
      if (ops_done && (!sc_.net.drain || in_flight_.empty())) break;
    }
    result_.end_tick = t;
    result_.drained = in_flight_.empty();
    for (MachineId m = 0; m < n; ++m) {
      result_.final_kvs.push_back(machines_[m].kvs());
      result_.snapshots.push_back(snapshot(machines_[m].kvs(), machines_[m].registered()));
    }
    result_.crashed_at_end = crashed_;
    return std::move(result_);
  }

 private:
  void record(Tick t, MachineId m, TracePayload p) {
    result_.trace.push_back(TraceRecord{t, seq_++, m, std::move(p)});
  }

  void crash(Tick t, MachineId m) {
    crashed_[m] = true;
    record(t, m, ev::Crash{});
  }

  void apply_faults(Tick t) {
    while (next_fault_ < faults_.size() && faults_[next_fault_].tick <= t) {
      const auto& f = faults_[next_fault_++];
      switch (f.kind) {
        case FaultKind::Crash: crash(t, f.machine); break;
        case FaultKind::Recover:
          crashed_[f.machine] = false;
          record(t, f.machine, ev::Recover{});
          break;
        case FaultKind::Partition: {
          // Machines not named form singleton groups.
          int next = static_cast<int>(f.groups.size()) + 1;
          std::fill(group_.begin(), group_.end(), -1);
          for (std::size_t g = 0; g < f.groups.size(); ++g) {
            for (auto m : f.groups[g]) group_[m] = static_cast<int>(g) + 1;
          }
          for (auto& g : group_) {
            if (g == -1) g = next++;
          }
          record(t, kNetwork, ev::Partition{f.groups});
          break;
        }
        case FaultKind::Heal:
          std::fill(group_.begin(), group_.end(), 0);
          record(t, kNetwork, ev::Heal{});
          break;
        case FaultKind::CrashAfterSend: armed_.push_back(f); break;
      }
    }
  }

  void deliver_due(Tick t) {
    while (!in_flight_.empty() && in_flight_.begin()->first.first <= t) {
      auto node = in_flight_.extract(in_flight_.begin());
      auto& f = node.mapped();
      if (crashed_[f.to]) {
        record(t, kNetwork, ev::Drop{f.msg_id, "crashed"});
        continue;
      }
      if (group_[f.from] != group_[f.to]) {
        record(t, kNetwork, ev::Drop{f.msg_id, "partition"});
        continue;
      }
      Envelope env{f.from, f.to, wire::decode(f.frame)};
      record(t, f.to, ev::Deliver{f.msg_id, env});
      machines_[f.to].deliver(std::move(env));
    }
  }

  void feed(Tick t) {
    const auto spm = sc_.engine.sessions_per_machine;
    for (std::uint32_t g = 0; g < feeds_.size(); ++g) {
      auto& f = feeds_[g];
      const auto m = static_cast<MachineId>(g / spm);
      const auto local = static_cast<std::uint32_t>(g % spm);
      if (crashed_[m] || f.outstanding || f.queue.empty()) continue;
      if (!machines_[m].session_idle(local)) continue;
      const auto& p = f.queue.front();
      const Tick ready = p.op_index < scripted_count_ ? p.not_before : f.last_complete + p.not_before;
      if (t < ready) continue;
      machines_[m].submit(local, p.request);
      f.outstanding = true;
      f.queue.pop_front();
    }
  }

  void collect_events(Tick t, MachineId m) {
    for (auto& p : machines_[m].take_events()) {
      if (const auto* c = std::get_if<ev::ClientComplete>(&p)) {
        if (c->session < feeds_.size()) {
          feeds_[c->session].outstanding = false;
          feeds_[c->session].last_complete = t;
        }
        ++result_.ops_completed;
      }
      record(t, m, std::move(p));
    }
  }

  bool all_done() const {
    const auto spm = sc_.engine.sessions_per_machine;
    for (std::uint32_t g = 0; g < feeds_.size(); ++g) {
      const auto m = g / spm;
      if (crashed_[m]) continue;
      if (feeds_[g].outstanding || !feeds_[g].queue.empty()) return false;
    }
    return true;
  }

  void dispatch(Tick t, MachineId m, std::vector<Envelope> out) {
    bool crash_now = false;
    for (auto it = armed_.begin(); it != armed_.end(); ++it) {
      if (it->machine != m) continue;
      const auto first = std::find_if(out.begin(), out.end(),
                                      [&](const Envelope& e) { return kind_of(e.msg) == it->send_kind; });
      if (first == out.end()) continue;
      std::vector<Envelope> kept(out.begin(), first);
      for (auto e = first; e != out.end() && kind_of(e->msg) == it->send_kind; ++e) {
        if (it->keep_all || std::find(it->keep_to.begin(), it->keep_to.end(), e->to) != it->keep_to.end()) {
          kept.push_back(*e);
        }
      }
      out = std::move(kept);
      armed_.erase(it);
      crash_now = true;
      break;
    }
    for (auto& env : out) send(t, std::move(env));
    if (crash_now) crash(t, m);
  }

  void send(Tick t, Envelope env) {
    const std::uint64_t id = ++msg_id_;
    auto frame = wire::encode(env.msg);
    const MachineId from = env.from;
    const MachineId to = env.to;
    record(t, from, ev::Send{id, env});
    Tick hold_until = 0;
    for (const auto& r : sc_.net.rules) {
      if (!r.matches(env, t)) continue;
      if (r.action == RuleAction::Drop) {
        record(t, kNetwork, ev::Drop{id, "rule"});
        return;
      }
      hold_until = std::max(hold_until, r.to_tick + 1);
      break;
    }
    if (rng_.chance(sc_.net.loss)) {
      record(t, kNetwork, ev::Drop{id, "loss"});
      return;
    }
    const Tick due = std::max(t + rng_.uniform(sc_.net.delay_min, sc_.net.delay_max), hold_until);
    if (rng_.chance(sc_.net.dup)) {
      const Tick due2 = std::max(t + rng_.uniform(sc_.net.delay_min, sc_.net.delay_max), hold_until);
      record(t, kNetwork, ev::Duplicate{id});
      in_flight_.emplace(std::make_pair(due2, ++order_), InFlight{id, from, to, frame});
    }
    in_flight_.emplace(std::make_pair(due, ++order_), InFlight{id, from, to, std::move(frame)});
  }

  const Scenario& sc_;
  Rng rng_;
  std::vector<Machine> machines_;
  std::vector<bool> crashed_;
  std::vector<int> group_;
  std::vector<SessionFeed> feeds_;
  std::size_t scripted_count_ = 0;
  std::vector<FaultAction> faults_;
  std::size_t next_fault_ = 0;
  std::vector<FaultAction> armed_;
  std::map<std::pair<Tick, std::uint64_t>, InFlight> in_flight_;
  std::uint64_t msg_id_ = 0;
  std::uint64_t order_ = 0;
  std::uint64_t seq_ = 0;
  RunResult result_;
};

}  // namespace

RunResult run(const Scenario& sc) {
  sc.validate();
  Simulator sim(sc);
  return sim.run();
}

}  // namespace kvpaxos::sim
