// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kvpaxos/checker.hpp"
#include "kvpaxos/explore.hpp"
#include "kvpaxos/report.hpp"
#include "kvpaxos/scenario.hpp"

using namespace kvpaxos;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

sim::ScenarioFile from_text(const std::string& text) {
  std::istringstream in(text);
  return sim::parse_scenario(in);
}

sim::ScenarioFile from_file(const std::string& name) {
  return sim::load_scenario(std::string(KVPAXOS_SCENARIO_DIR) + "/" + name);
}

sim::RunResult run_seed(sim::ScenarioFile& f, std::uint64_t seed) {
  f.scenario.net.seed = seed;
  sim::apply_all_aboard_policy(f);
  return sim::run(f.scenario);
}

check::TraceContext context(const sim::Scenario& sc) {
  return {sc.engine.sessions_per_machine, sc.engine.lid_layout, sc.engine.value_width};
}

template <typename E>
std::vector<const TraceRecord*> events(const Trace& t) {
  std::vector<const TraceRecord*> out;
  for (const auto& r : t) {
    if (std::holds_alternative<E>(r.payload)) out.push_back(&r);
  }
  return out;
}

template <typename E>
const E& as(const TraceRecord* r) {
  return std::get<E>(r->payload);
}

// ------------------------------------------------------------ criteria 1, 7

std::vector<Trace> sweep_traces;

Outcome safety_sweep() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string base = R"(
machines = 5
sessions_per_machine = 4
keys = 8
ops = 500
think_min = 0
think_max = 10
loss = 0.1
dup = 0.05
all_aboard = auto
)";
  // Even seeds mix in ABD writes (their keys run classic only), odd seeds are
  // reads and RMWs with the fast path on every key.
  auto mixed = from_text(base + "mix_read = 20\nmix_write = 20\nmix_cas = 20\nmix_faa = 40\n");
  auto rmw = from_text(base + "mix_read = 20\nmix_cas = 30\nmix_faa = 50\n");
  std::size_t completed = 0;
  std::size_t ops = 0;
  std::size_t aa = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    auto& f = seed % 2 ? rmw : mixed;
    sim::FaultAction crash;
    crash.tick = 50 + (seed * 37) % 400;
    crash.machine = static_cast<MachineId>(seed % 5);
    f.scenario.net.faults = {crash};
    auto r = run_seed(f, seed);
    for (const auto& v : {check::check_exactly_once(r.trace), check::check_slot_agreement(r.trace),
                          check::check_invariants(r.trace)}) {
      if (!v.pass()) return {false, fmt("seed %llu %s: %s", static_cast<unsigned long long>(seed), v.name.c_str(), v.detail.c_str())};
    }
    completed += r.completed;
    ops += r.ops_completed;
    const auto st = report::compute(r.trace, f.scenario.engine);
    if (auto it = st.rmw_by_path.find("all-aboard"); it != st.rmw_by_path.end()) aa += it->second;
    sweep_traces.push_back(std::move(r.trace));
  }
  return {true, fmt("200 seeds, exactly_once + slot_agreement + invariants pass; %zu ops completed (%zu all-aboard "
                    "RMWs), %zu/200 runs finished every live op; %.1fs",
                    ops, aa, completed, seconds_since(t0))};
}

Outcome ts_audit() {
  if (sweep_traces.empty()) return {false, "no traces from the safety sweep"};
  sim::Scenario sc;
  sc.engine.sessions_per_machine = 4;
  std::size_t aa_accepts = 0;
  std::size_t proposes = 0;
  for (std::size_t i = 0; i < sweep_traces.size(); ++i) {
    const auto v = check::check_ts_discipline(sweep_traces[i], context(sc));
    if (!v.pass()) return {false, fmt("seed %zu: %s", i + 1, v.detail.c_str())};
    for (const auto* r : events<ev::LocalAccept>(sweep_traces[i])) aa_accepts += as<ev::LocalAccept>(r).all_aboard;
    for (const auto* r : events<ev::Send>(sweep_traces[i])) proposes += std::holds_alternative<ProposeMsg>(as<ev::Send>(r).env.msg);
  }
  return {true, fmt("%zu traces; %zu all-aboard local accepts at version 2, %zu propose sends at version >= 3, "
                    "every retry above its nacks",
                    sweep_traces.size(), aa_accepts, proposes)};
}

// ------------------------------------------------------------ criterion 2

Outcome small_model() {
  auto config = [](bool all_aboard, std::size_t depth) {
    explore::ExploreConfig c;
    c.engine.machine_count = 3;
    c.engine.sessions_per_machine = 1;
    c.engine.all_aboard_enabled = all_aboard;
    c.engine.resend_interval = 0;
    c.engine.backoff_threshold = 2;
    c.engine.all_aboard_timeout = 2;
    c.max_depth = depth;
    c.ops = {{0, {OpKind::Faa, "k0", Value::from_u64(1), {}, 0}},
             {1, {OpKind::Faa, "k0", Value::from_u64(2), {}, 1}}};
    return c;
  };
  std::string detail;
  for (const auto& [aa, depth] : std::vector<std::pair<bool, std::size_t>>{{false, 14}, {true, 12}}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = explore::run(config(aa, depth));
    const char* mode = aa ? "all-aboard" : "classic";
    if (r.violation) return {false, fmt("%s: %s", mode, r.detail.c_str())};
    if (r.state_limit_hit) return {false, fmt("%s: step budget exhausted", mode)};
    if (r.finished != r.depth_cutoffs || r.finished_completed != r.finished || r.completed_leaves != r.leaves) {
      return {false, fmt("%s: %zu of %zu prefixes did not run to completion", mode,
                         r.depth_cutoffs - r.finished_completed, r.depth_cutoffs)};
    }
    if (r.outcomes.size() != 2) return {false, fmt("%s: %zu distinct outcomes, expected both orders", mode, r.outcomes.size())};
    detail += fmt("%s%s: all %zu interleavings of the first %zu steps (DPOR, %zu nodes) run to completion with "
                  "slot agreement, both orders reached, %.1fs",
                  detail.empty() ? "" : "; ", mode, r.depth_cutoffs + r.leaves, depth, r.states, seconds_since(t0));
  }
  return {true, detail};
}

// ------------------------------------------------------------ criterion 3

Outcome linearizability() {
  const auto t0 = std::chrono::steady_clock::now();
  auto f = from_text(R"(
machines = 3
sessions_per_machine = 2
keys = 4
ops = 48
cyclic_keys = on
mix_read = 25
mix_write = 25
mix_cas = 25
mix_faa = 25
value_range = 4
think_min = 0
think_max = 5
loss = 0.05
dup = 0.05
delay_min = 1
delay_max = 6
all_aboard = auto
)");
  std::size_t ops = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto r = run_seed(f, seed);
    const auto h = check::extract_history(r.trace);
    const auto v = check::check_linearizability(h, f.scenario.engine.value_width);
    if (v.status != check::Status::Pass) {
      return {false, fmt("seed %llu %s: %s", static_cast<unsigned long long>(seed), check::to_string(v.status), v.detail.c_str())};
    }
    ops += h.size();
  }
  return {true, fmt("200 seeds, %zu ops (12 per key), every history linearizable; %.1fs", ops, seconds_since(t0))};
}

// ------------------------------------------------------------ criterion 4

// Thin classic commits are legitimate only when every other machine acked
// the accept; count those with N-1 remote accept acks delivered first.
std::pair<std::size_t, std::size_t> thin_justified(const Trace& t, const EngineConfig& cfg) {
  std::map<std::pair<MachineId, std::uint32_t>, Lid> last_accept;  // (machine, local session)
  std::map<std::pair<MachineId, std::uint64_t>, std::set<MachineId>> acks;
  std::set<std::pair<MachineId, std::uint64_t>> seen;
  std::size_t thin = 0;
  std::size_t justified = 0;
  for (const auto& r : t) {
    if (const auto* d = std::get_if<ev::Deliver>(&r.payload)) {
      const auto* rep = std::get_if<ReplyMsg>(&d->env.msg);
      if (rep && rep->phase == Phase::Accept && is_ack(rep->opcode)) acks[{d->env.to, rep->lid.raw}].insert(d->env.from);
      continue;
    }
    const auto* s = std::get_if<ev::Send>(&r.payload);
    if (!s) continue;
    const auto from = s->env.from;
    if (const auto* a = std::get_if<AcceptMsg>(&s->env.msg)) {
      last_accept[{from, cfg.lid_layout.session_of(a->lid)}] = a->lid;
      continue;
    }
    const auto* c = std::get_if<CommitMsg>(&s->env.msg);
    if (!c || c->value || c->origin != CommitOrigin::Rmw || !seen.insert({from, c->lid.raw}).second) continue;
    ++thin;
    const auto la = last_accept.find({from, cfg.lid_layout.session_of(c->lid)});
    if (la != last_accept.end() && acks[{from, la->second.raw}].size() + 1 >= cfg.machine_count) ++justified;
  }
  return {thin, justified};
}

Outcome fast_path_structure() {
  std::string detail;
  {
    auto f = from_file("uncontended_allaboard.conf");
    report::Stats total;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto r = run_seed(f, seed);
      if (!r.completed) return {false, "uncontended run did not complete"};
      total.merge(report::compute(r.trace, f.scenario.engine));
    }
    const auto n = total.rmw_by_path["all-aboard"];
    const auto rounds = total.rounds_by_path["all-aboard"];
    if (n == 0 || total.rmw_by_path.size() != 1) return {false, "uncontended RMWs not all on the fast path"};
    if (rounds.size() != 1 || rounds.begin()->first != 2) return {false, "uncontended all-aboard RMW not in 2 rounds"};
    if (total.thin_commit_rounds != n || total.full_commit_rounds != 0 || total.relay_commit_rounds != 0) {
      return {false, fmt("uncontended commits: %zu thin, %zu full for %zu RMWs", total.thin_commit_rounds,
                         total.full_commit_rounds, n)};
    }
    detail += fmt("uncontended: %zu/%zu RMWs all-aboard in 2 rounds, all commits thin", n, n);
  }
  {
    auto f = from_file("cp_only.conf");
    report::Stats total;
    std::size_t thin = 0;
    std::size_t justified = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto r = run_seed(f, seed);
      if (!r.completed) return {false, "classic run did not complete"};
      total.merge(report::compute(r.trace, f.scenario.engine));
      const auto [t, j] = thin_justified(r.trace, f.scenario.engine);
      thin += t;
      justified += j;
    }
    const auto n = total.rmw_by_path["classic"];
    const auto rounds = total.rounds_by_path["classic"];
    if (n == 0 || total.rmw_by_path.size() != 1) return {false, "classic-only run used the fast path"};
    if (rounds.size() != 1 || rounds.begin()->first != 3) return {false, "classic RMW not in 3 rounds"};
    if (thin != justified) return {false, fmt("%zu thin classic commits without all accept acks", thin - justified)};
    if (total.full_commit_rounds + total.thin_commit_rounds != n || total.relay_commit_rounds != 0) {
      return {false, "classic commit broadcasts do not match RMWs"};
    }
    detail += fmt("; classic: %zu/%zu RMWs in 3 rounds, %zu full commits, %zu thin only where all %zu machines acked "
                  "the accept",
                  n, n, total.full_commit_rounds, thin, f.scenario.engine.machine_count);
  }
  {
    auto f = from_file("two_sessions_per_key.conf");
    report::Stats total;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto r = run_seed(f, seed);
      if (!r.completed) return {false, "contended run did not complete"};
      total.merge(report::compute(r.trace, f.scenario.engine));
    }
    const double aa = static_cast<double>(total.rmw_by_path["all-aboard"]);
    const double all = aa + static_cast<double>(total.rmw_by_path["classic"]);
    const double ratio = all > 0 ? aa / all : 0.0;
    detail += fmt("; 2 sessions/key: %.1f%% of %.0f RMWs on the fast path (%zu fell back)", 100 * ratio, all,
                  total.rmw_by_path["classic"]);
    if (ratio < 0.95) return {false, detail};
  }
  return {true, detail};
}

// ------------------------------------------------------------ criterion 5

struct Scripted {
  const char* file;
  std::function<std::string(const sim::RunResult&, const sim::Scenario&)> verify;  // empty: ok
};

const ev::ClientComplete* completion(const Trace& t, MachineId m) {
  for (const auto* r : events<ev::ClientComplete>(t)) {
    if (r->machine == m) return &as<ev::ClientComplete>(r);
  }
  return nullptr;
}

std::vector<const ev::LocalAccept*> local_accepts(const Trace& t, MachineId m) {
  std::vector<const ev::LocalAccept*> out;
  for (const auto* r : events<ev::LocalAccept>(t)) {
    if (r->machine == m) out.push_back(&as<ev::LocalAccept>(r));
  }
  return out;
}

std::set<std::uint64_t> commit_slots(const Trace& t, const RmwId& id) {
  std::set<std::uint64_t> out;
  for (const auto* r : events<ev::CommitApplied>(t)) {
    const auto& c = as<ev::CommitApplied>(r);
    if (c.rmw_id == id && !c.unresolved_thin) out.insert(c.log_no);
  }
  return out;
}

bool has_backoff(const Trace& t, MachineId m, BackoffAction a) {
  for (const auto* r : events<ev::Backoff>(t)) {
    if (r->machine == m && as<ev::Backoff>(r).action == a) return true;
  }
  return false;
}

std::string verify_counterexample(const sim::RunResult& r, const sim::Scenario&) {
  const RmwId first{1, 0};
  if (commit_slots(r.trace, first) != std::set<std::uint64_t>{1}) return "RMW-1 not committed exactly in log 1";
  if (!has_backoff(r.trace, 1, BackoffAction::HelpAfterWait)) return "M1 never helped";
  const auto m0 = local_accepts(r.trace, 0);
  if (m0.empty() || m0.front()->rmw_id != first) return "M0 never accepted RMW-1 locally";
  bool helped = false;
  for (const auto* la : local_accepts(r.trace, 1)) {
    if (la->rmw_id == first) helped = la->helping && la->log_no == 1 && la->value == m0.front()->value;
  }
  if (!helped) return "M1 did not accept RMW-1 for log 1 with M0's value";
  std::size_t lth = 0;
  for (const auto* s : events<ev::Send>(r.trace)) {
    const auto* rep = std::get_if<ReplyMsg>(&as<ev::Send>(s).env.msg);
    lth += rep && rep->opcode == ReplyOpcode::LogTooHigh;
  }
  if (lth == 0) return "no log-too-high replies from the machines that missed log 1";
  const auto* c0 = completion(r.trace, 0);
  if (!c0 || c0->rmw_id != first || c0->log_no != 1 || c0->result.as_u64() != 0) {
    return "M0 did not complete RMW-1 with its log-1 result";
  }
  const auto* c1 = completion(r.trace, 1);
  const auto* c2 = completion(r.trace, 2);
  if (!c1 || !c2 || c1->log_no != 2 || c2->log_no != 3) return "later RMWs not in logs 2 and 3";
  return {};
}

std::string verify_log_too_high(const sim::RunResult& r, const sim::Scenario& sc) {
  // M1's RMW hears log-too-high in consecutive rounds, then relays log 1.
  std::size_t streak = 0;
  std::size_t best = 0;
  bool relayed = false;
  for (const auto& rec : r.trace) {
    if (const auto* d = std::get_if<ev::Deliver>(&rec.payload); d && d->env.to == 1) {
      if (const auto* rep = std::get_if<ReplyMsg>(&d->env.msg)) {
        streak = rep->opcode == ReplyOpcode::LogTooHigh ? streak + 1 : 0;
        best = std::max(best, streak);
      }
    }
    if (const auto* s = std::get_if<ev::Send>(&rec.payload); s && s->env.from == 1) {
      const auto* c = std::get_if<CommitMsg>(&s->env.msg);
      if (c && c->log_no == 1 && c->origin == CommitOrigin::Relay) {
        relayed = true;
        break;
      }
    }
  }
  if (best < sc.engine.log_too_high_limit) return fmt("longest log-too-high streak %zu", best);
  if (!relayed) return "M1 never re-broadcast the commit of log 1";
  for (MachineId m = 1; m < 5; ++m) {
    const auto* p = r.final_kvs[m].find("k0");
    if (!p || p->last_committed_log_no != 2) return fmt("M%u did not reach log 2", m);
  }
  const auto* c1 = completion(r.trace, 1);
  if (!c1 || c1->log_no != 2 || c1->result.as_u64() != 5) return "M1's RMW did not commit in log 2 on top of 5";
  return {};
}

std::string verify_steal(const sim::RunResult& r, const sim::Scenario&) {
  if (!has_backoff(r.trace, 1, BackoffAction::Steal)) return "M1 never stole the pair";
  if (!commit_slots(r.trace, {1, 0}).empty()) return "M0's stalled RMW committed";
  const auto* c1 = completion(r.trace, 1);
  if (!c1 || c1->log_no != 1) return "M1's RMW did not take log 1";
  return {};
}

std::string verify_help(const sim::RunResult& r, const sim::Scenario&) {
  if (!has_backoff(r.trace, 1, BackoffAction::HelpAfterWait)) return "M1 never helped";
  const auto m0 = local_accepts(r.trace, 0);
  if (m0.empty()) return "M0 never accepted";
  const auto original = m0.front()->value.bytes();
  bool helped = false;
  for (const auto* la : local_accepts(r.trace, 1)) {
    if (la->rmw_id == RmwId{1, 0}) helped = la->helping && la->value.bytes() == original;
  }
  if (!helped) return "M1 did not re-accept M0's RMW with identical bytes";
  for (const auto* rec : events<ev::CommitApplied>(r.trace)) {
    const auto& c = as<ev::CommitApplied>(rec);
    if (c.log_no == 1 && (c.rmw_id != RmwId{1, 0} || !c.value || c.value->bytes() != original)) {
      return "log 1 committed with other bytes";
    }
  }
  const auto* c1 = completion(r.trace, 1);
  if (!c1 || c1->log_no != 2) return "M1's own RMW not in log 2";
  return {};
}

Outcome scripted() {
  const std::vector<Scripted> cases = {
      {"counterexample.conf", verify_counterexample},
      {"log_too_high_recovery.conf", verify_log_too_high},
      {"backoff_steal.conf", verify_steal},
      {"backoff_help.conf", verify_help},
  };
  std::string detail;
  for (const auto& c : cases) {
    auto f = from_file(c.file);
    const auto r = run_seed(f, f.scenario.net.seed);
    for (const auto& v : report::run_checks(r, f.scenario, f.checks)) {
      if (v.status == check::Status::Fail) return {false, fmt("%s: %s: %s", c.file, v.name.c_str(), v.detail.c_str())};
    }
    if (const auto why = c.verify(r, f.scenario); !why.empty()) return {false, fmt("%s: %s", c.file, why.c_str())};
    detail += fmt("%s%s", detail.empty() ? "" : ", ", c.file);
  }
  return {true, detail + " reproduce their expected traces"};
}

// ------------------------------------------------------------ criterion 6

Outcome availability() {
  auto f = from_file("crash_at_start.conf");
  std::size_t invoked = 0;
  std::size_t completed = 0;
  std::size_t backoffs = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = run_seed(f, seed);
    const auto st = report::compute(r.trace, f.scenario.engine);
    if (!r.completed || st.ops_completed != st.ops_invoked) {
      return {false, fmt("seed %llu: %zu of %zu ops completed", static_cast<unsigned long long>(seed), st.ops_completed,
                         st.ops_invoked)};
    }
    for (const auto& v : report::run_checks(r, f.scenario, {})) {
      if (v.status == check::Status::Fail) return {false, v.name + ": " + v.detail};
    }
    invoked += st.ops_invoked;
    completed += st.ops_completed;
    backoffs += st.steals + st.helps;
  }
  if (backoffs == 0) return {false, "no back-off events under contention"};
  return {true, fmt("1 of 5 machines down from t=0, 5 seeds: %zu/%zu ops of live sessions complete, %zu back-off "
                    "steals/helps, no run left an op open",
                    completed, invoked, backoffs)};
}

// ------------------------------------------------------------ criterion 8

Outcome carstamp_visibility() {
  const auto t0 = std::chrono::steady_clock::now();
  auto f = from_text(R"(
machines = 5
sessions_per_machine = 4
keys = 8
ops = 300
mix_read = 20
mix_write = 30
mix_cas = 20
mix_faa = 30
think_min = 0
think_max = 10
all_aboard = auto
)");
  std::size_t writes = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto r = run_seed(f, seed);
    if (!r.drained) return {false, fmt("seed %llu did not drain", static_cast<unsigned long long>(seed))};
    const auto v = check::check_carstamp_visibility(r.trace, r.final_kvs, true, r.crashed_at_end);
    if (!v.pass()) return {false, fmt("seed %llu: %s", static_cast<unsigned long long>(seed), v.detail.c_str())};
    writes += events<ev::WriteApplied>(r.trace).size();
  }
  return {true, fmt("50 loss-free mixed runs (%zu write applications): every machine's final value is the max-carstamp "
                    "update anywhere; %.1fs",
                    writes, seconds_since(t0))};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, safety_sweep}, {2, small_model},         {3, linearizability}, {4, fast_path_structure},
      {5, scripted},     {6, availability},        {7, ts_audit},        {8, carstamp_visibility},
  };
  int failed = 0;
  for (const auto& [n, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
