#include "kvpaxos/explore.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "kvpaxos/wire.hpp"

namespace kvpaxos::explore {

namespace {

using Slot = std::pair<Key, std::uint64_t>;
using Frame = std::vector<std::uint8_t>;

struct SlotInfo {
  RmwId rmw;
  std::optional<std::pair<Value, Timestamp>> content;
};

using Clock = std::vector<std::uint32_t>;

struct InFlight {
  Frame frame;
  Envelope env;
  Clock clock;  // of the sending step
};

struct State {
  std::vector<Machine> machines;
  std::vector<InFlight> flight;
  std::vector<bool> started;
  std::map<Slot, SlotInfo> decided;
  std::map<RmwId, Slot> rmw_slot;
  std::map<std::pair<Key, Carstamp>, Value> by_carstamp;
  std::size_t completed = 0;
  std::vector<Clock> machine_clock;
  // Clock of the step that last gave a machine timer work.
  std::vector<Clock> timer_clock;
};

Frame canonical(const Envelope& e) {
  wire::Writer w;
  w.u16(e.from);
  w.u16(e.to);
  wire::write_message(w, e.msg);
  return w.take();
}

Clock join(const Clock& a, const Clock& b) {
  Clock c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::max(c[i], b[i]);
  return c;
}

std::uint64_t fnv(const Frame& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto byte : data) h = (h ^ byte) * 0x100000001b3ULL;
  return h;
}

enum class ActionKind : std::uint8_t { Start, Deliver, Drop, Timer };

struct Action {
  ActionKind kind = ActionKind::Start;
  MachineId machine = 0;
  std::size_t index = 0;  // op for Start, flight position for Deliver and Drop
  std::uint64_t id = 0;   // stable across states
  Clock clock;             // causal past of the enabling send
};

struct Node {
  State state;
  std::vector<Action> enabled;
  std::set<std::uint64_t> backtrack;
  std::set<std::uint64_t> done;
  std::vector<std::pair<std::uint64_t, MachineId>> sleep;
  // Filled once the node's step has been chosen.
  MachineId machine = 0;
  std::uint64_t action = 0;
  Clock clock;
};

class Explorer {
 public:
  explicit Explorer(const ExploreConfig& cfg) : cfg_(cfg), n_(cfg.engine.machine_count) {}

  ExploreResult run() {
    Node root;
    for (MachineId m = 0; m < n_; ++m) root.state.machines.emplace_back(m, cfg_.engine);
    root.state.started.assign(cfg_.ops.size(), false);
    root.state.machine_clock.assign(n_, Clock(n_, 0));
    root.state.timer_clock.assign(n_, Clock(n_, 0));
    std::map<MachineId, std::uint32_t> next_session;
    for (const auto& [m, req] : cfg_.ops) sessions_.push_back(next_session[m]++);
    stack_.reserve(cfg_.max_depth + 2);
    stack_.push_back(std::move(root));
    explore();
    return std::move(result_);
  }

 private:
  void violate(std::string detail) {
    result_.violation = true;
    result_.detail = std::move(detail);
    result_.path = labels_;
    result_.path.push_back(pending_label_);
  }

  // Runs one tick of machine m after its input, stamps what it sent and
  // checks what it did. False on violation.
  bool tick(State& s, MachineId m, const Clock& clock) {
    const bool had_timer = s.machines[m].has_timer_work();
    const auto before = s.machines[m].kvs().pairs();
    auto out = s.machines[m].tick(++now_);
    for (const auto& [key, after] : s.machines[m].kvs().pairs()) {
      const auto it = before.find(key);
      if (it == before.end() || it->second.log_no != after.log_no) continue;
      const auto& prev = it->second;
      if (prev.state == PairState::Accepted && after.state == PairState::Proposed) {
        violate("M" + std::to_string(m) + " pair " + key + " went Accepted -> Proposed at log " +
                std::to_string(after.log_no));
        return false;
      }
      if (prev.state == PairState::Accepted && after.state == PairState::Accepted &&
          after.accepted_ts < prev.accepted_ts) {
        violate("M" + std::to_string(m) + " pair " + key + " lowered its accepted-TS");
        return false;
      }
    }
    for (const auto& p : s.machines[m].take_events()) {
      if (std::holds_alternative<ev::ClientComplete>(p)) ++s.completed;
      const auto* c = std::get_if<ev::CommitApplied>(&p);
      if (!c || c->unresolved_thin) continue;
      const Slot slot{c->key, c->log_no};
      auto [it, fresh] = s.decided.try_emplace(slot, SlotInfo{c->rmw_id, std::nullopt});
      if (!fresh && it->second.rmw != c->rmw_id) {
        violate("slot " + slot.first + "@" + std::to_string(slot.second) + " decided " + to_string(it->second.rmw) +
                " and " + to_string(c->rmw_id));
        return false;
      }
      if (!c->rmw_id.is_none()) {
        auto [r, rf] = s.rmw_slot.try_emplace(c->rmw_id, slot);
        if (!rf && r->second != slot) {
          violate("rmw " + to_string(c->rmw_id) + " committed in two slots");
          return false;
        }
      }
      if (!c->value || !c->base_ts) continue;
      auto [cs, cf] = s.by_carstamp.try_emplace({c->key, Carstamp{*c->base_ts, c->log_no}}, *c->value);
      if (!cf && cs->second != *c->value) {
        violate("two values at one carstamp of " + c->key);
        return false;
      }
      if (c->origin != CommitOrigin::Rmw) continue;
      const std::pair<Value, Timestamp> content{*c->value, *c->base_ts};
      if (!it->second.content) {
        it->second.content = content;
      } else if (*it->second.content != content) {
        violate("slot " + slot.first + "@" + std::to_string(slot.second) + " committed with two values");
        return false;
      }
    }
    if (!had_timer && s.machines[m].has_timer_work()) s.timer_clock[m] = clock;
    for (auto& e : out) s.flight.push_back(InFlight{canonical(e), std::move(e), clock});
    return true;
  }

  std::vector<Action> actions(const State& s) const {
    std::vector<Action> out;
    auto id_of = [](ActionKind k, MachineId m, std::uint64_t x, const Frame* f) {
      Frame key{static_cast<std::uint8_t>(k), static_cast<std::uint8_t>(m), static_cast<std::uint8_t>(m >> 8)};
      for (int i = 0; i < 8; ++i) key.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
      if (f) key.insert(key.end(), f->begin(), f->end());
      return fnv(key);
    };
    for (std::size_t i = 0; i < cfg_.ops.size(); ++i) {
      if (s.started[i]) continue;
      const auto m = cfg_.ops[i].first;
      out.push_back({ActionKind::Start, m, i, id_of(ActionKind::Start, m, i, nullptr), Clock(n_, 0)});
    }
    std::set<std::uint64_t> listed;
    for (std::size_t i = 0; i < s.flight.size(); ++i) {
      const auto& f = s.flight[i];
      const auto id = id_of(ActionKind::Deliver, f.env.to, 0, &f.frame);
      if (!listed.insert(id).second) continue;
      out.push_back({ActionKind::Deliver, f.env.to, i, id, f.clock});
      if (cfg_.allow_drops) out.push_back({ActionKind::Drop, f.env.to, i, id_of(ActionKind::Drop, f.env.to, 0, &f.frame), f.clock});
    }
    for (MachineId m = 0; m < n_; ++m) {
      if (s.machines[m].has_timer_work())
        out.push_back({ActionKind::Timer, m, 0, id_of(ActionKind::Timer, m, 0, nullptr), s.timer_clock[m]});
    }
    return out;
  }

  std::string describe(const State& s, const Action& a) const {
    switch (a.kind) {
      case ActionKind::Start: return "start op " + std::to_string(a.index) + " at M" + std::to_string(a.machine);
      case ActionKind::Timer: return "timer M" + std::to_string(a.machine);
      default: break;
    }
    const auto& e = s.flight[a.index].env;
    return std::string(a.kind == ActionKind::Deliver ? "deliver " : "drop ") + to_string(kind_of(e.msg)) + " M" +
           std::to_string(e.from) + "->M" + std::to_string(e.to);
  }

  bool apply(State& n, const Action& a, const Clock& clock) {
    n.machine_clock[a.machine] = clock;
    switch (a.kind) {
      case ActionKind::Start:
        n.started[a.index] = true;
        n.machines[a.machine].submit(sessions_[a.index], cfg_.ops[a.index].second);
        return tick(n, a.machine, clock);
      case ActionKind::Deliver: {
        Envelope env = std::move(n.flight[a.index].env);
        n.flight.erase(n.flight.begin() + static_cast<std::ptrdiff_t>(a.index));
        n.machines[a.machine].deliver(std::move(env));
        return tick(n, a.machine, clock);
      }
      case ActionKind::Drop:
        n.flight.erase(n.flight.begin() + static_cast<std::ptrdiff_t>(a.index));
        return true;
      case ActionKind::Timer: return tick(n, a.machine, clock);
    }
    return true;
  }

  // Records, for each enabled action, the latest earlier step on the same
  // machine it is not causally after: the two may run the other way round.
  void add_backtracks(const Node& top) {
    for (const auto& t : top.enabled) {
      std::size_t i = stack_.size() - 1;
      bool found = false;
      while (i-- > 0) {
        const auto& e = stack_[i];
        if (e.machine == t.machine && e.clock[e.machine] > t.clock[e.machine]) {
          found = true;
          break;
        }
        if (e.machine == t.machine) break;  // causally before t, and so is everything older there
      }
      if (!found) continue;
      auto& pre = stack_[i];
      auto enabled_at = [&](std::uint64_t id) {
        return std::any_of(pre.enabled.begin(), pre.enabled.end(), [&](const Action& a) { return a.id == id; });
      };
      if (enabled_at(t.id)) {
        pre.backtrack.insert(t.id);
        continue;
      }
      bool added = false;
      for (std::size_t j = i + 1; j + 1 < stack_.size() && !added; ++j) {
        const auto& e = stack_[j];
        if (e.clock[e.machine] <= t.clock[e.machine] && enabled_at(e.action)) {
          pre.backtrack.insert(e.action);
          added = true;
        }
      }
      if (!added) {
        for (const auto& a : pre.enabled) pre.backtrack.insert(a.id);
      }
    }
  }

  void record_outcome(const State& s) {
    std::string o;
    for (const auto& [slot, info] : s.decided) {
      if (!o.empty()) o += ' ';
      o += slot.first + "@" + std::to_string(slot.second) + "=" + to_string(info.rmw);
    }
    result_.outcomes.insert(o);
  }

  // Runs a cut-off prefix to the end one way: oldest message first, then
  // timers, then unstarted ops.
  void finish(State s) {
    const auto base = labels_.size();
    const Clock clock(n_, 0);
    for (std::size_t step = 0; step < cfg_.finish_steps; ++step) {
      const auto all = actions(s);
      if (all.empty()) {
        ++result_.finished;
        if (s.completed == cfg_.ops.size()) ++result_.finished_completed;
        record_outcome(s);
        break;
      }
      const Action* pick = nullptr;
      for (const auto& a : all) {
        if (a.kind == ActionKind::Deliver && a.index == 0) pick = &a;
      }
      if (!pick) {
        for (const auto& a : all) {
          if (a.kind == ActionKind::Timer && !pick) pick = &a;
        }
      }
      if (!pick) pick = &all.front();
      pending_label_ = describe(s, *pick);
      ++result_.transitions;
      if (!apply(s, *pick, clock)) return;
      labels_.push_back(pending_label_);
    }
    labels_.resize(base);
  }

  void explore() {
    auto& top = stack_.back();
    ++result_.states;
    top.enabled = actions(top.state);
    if (top.enabled.empty()) {
      ++result_.leaves;
      if (top.state.completed == cfg_.ops.size()) ++result_.completed_leaves;
      record_outcome(top.state);
      return;
    }
    add_backtracks(top);
    if (stack_.size() > cfg_.max_depth) {
      ++result_.depth_cutoffs;
      if (cfg_.finish_cutoffs) finish(top.state);
      return;
    }
    auto asleep = [&](std::uint64_t id) {
      const auto& sl = stack_.back().sleep;
      return std::any_of(sl.begin(), sl.end(), [&](const auto& p) { return p.first == id; });
    };
    for (const auto& a : top.enabled) {
      if (!asleep(a.id)) {
        top.backtrack.insert(a.id);
        break;
      }
    }
    while (true) {
      if (result_.violation || result_.state_limit_hit) return;
      auto& node = stack_.back();
      const Action* next = nullptr;
      for (const auto& a : node.enabled) {
        if (node.backtrack.count(a.id) && !node.done.count(a.id) && !asleep(a.id)) {
          next = &a;
          break;
        }
      }
      if (!next) return;
      if (++result_.transitions >= cfg_.max_states) {
        result_.state_limit_hit = true;
        return;
      }
      node.done.insert(next->id);
      Clock clock = join(node.state.machine_clock[next->machine], next->clock);
      ++clock[next->machine];
      node.machine = next->machine;
      node.action = next->id;
      node.clock = clock;

      Node child;
      child.state = node.state;
      for (const auto& u : node.sleep) {
        if (u.second != next->machine) child.sleep.push_back(u);
      }
      pending_label_ = describe(node.state, *next);
      const auto from = *next;
      const auto next_id = next->id;
      const auto next_machine = next->machine;
      if (!apply(child.state, from, clock)) return;
      labels_.push_back(pending_label_);
      stack_.push_back(std::move(child));
      explore();
      if (result_.violation || result_.state_limit_hit) return;
      stack_.pop_back();
      labels_.pop_back();
      stack_.back().sleep.emplace_back(next_id, next_machine);
    }
  }

  const ExploreConfig& cfg_;
  std::size_t n_;
  std::vector<std::uint32_t> sessions_;
  std::vector<Node> stack_;
  std::vector<std::string> labels_;
  std::string pending_label_;
  Tick now_ = 0;
  ExploreResult result_;
};

}  // namespace

ExploreResult run(const ExploreConfig& cfg) {
  cfg.engine.validate();
  Explorer e(cfg);
  return e.run();
}

}  // namespace kvpaxos::explore
