#include "kvpaxos/report.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

namespace kvpaxos::report {

namespace {

using json = nlohmann::ordered_json;

bool is_rmw(OpKind k) { return k == OpKind::Cas || k == OpKind::Faa; }

template <typename M>
void add_all(M& into, const M& from) {
  for (const auto& [k, v] : from) into[k] += v;
}

json stats_json(const Stats& s) {
  json rounds = json::object();
  for (const auto& [path, hist] : s.rounds_by_path) {
    json h = json::object();
    for (const auto& [n, c] : hist) h[std::to_string(n)] = c;
    rounds[path] = h;
  }
  return json{
      {"ops_invoked", s.ops_invoked},
      {"ops_completed", s.ops_completed},
      {"completed_by_kind", s.completed_by_kind},
      {"rmw_by_path", s.rmw_by_path},
      {"sends_by_kind", s.sends_by_kind},
      {"replies_by_opcode", s.replies_by_opcode},
      {"rounds_by_path", rounds},
      {"steals", s.steals},
      {"helps", s.helps},
      {"log_too_high", s.log_too_high},
      {"thin_commit_rounds", s.thin_commit_rounds},
      {"full_commit_rounds", s.full_commit_rounds},
      {"relay_commit_rounds", s.relay_commit_rounds},
      {"drops", s.drops},
      {"duplicates", s.duplicates},
      {"crashes", s.crashes},
      {"end_tick", s.end_tick},
  };
}

}  // namespace

void Stats::merge(const Stats& o) {
  ops_invoked += o.ops_invoked;
  ops_completed += o.ops_completed;
  add_all(completed_by_kind, o.completed_by_kind);
  add_all(rmw_by_path, o.rmw_by_path);
  add_all(sends_by_kind, o.sends_by_kind);
  add_all(replies_by_opcode, o.replies_by_opcode);
  for (const auto& [path, hist] : o.rounds_by_path) add_all(rounds_by_path[path], hist);
  steals += o.steals;
  helps += o.helps;
  log_too_high += o.log_too_high;
  thin_commit_rounds += o.thin_commit_rounds;
  full_commit_rounds += o.full_commit_rounds;
  relay_commit_rounds += o.relay_commit_rounds;
  drops += o.drops;
  duplicates += o.duplicates;
  crashes += o.crashes;
  end_tick = std::max(end_tick, o.end_tick);
}

Stats compute(const Trace& t, const EngineConfig& engine) {
  Stats s;
  std::map<std::uint32_t, std::set<std::pair<MsgKind, std::uint64_t>>> open;  // global session -> rounds
  std::set<std::pair<MachineId, std::uint64_t>> commit_rounds;
  for (const auto& r : t) {
    s.end_tick = std::max(s.end_tick, r.tick);
    std::visit(
        [&](const auto& e) {
          using E = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<E, ev::Send>) {
            const auto kind = kind_of(e.env.msg);
            ++s.sends_by_kind[to_string(kind)];
            if (const auto* rep = std::get_if<ReplyMsg>(&e.env.msg)) {
              const std::string phase = rep->phase == Phase::Propose ? "propose" : "accept";
              ++s.replies_by_opcode[phase + ":" + to_string(rep->opcode)];
              if (rep->opcode == ReplyOpcode::LogTooHigh) ++s.log_too_high;
            }
            if (kind != MsgKind::Propose && kind != MsgKind::Accept && kind != MsgKind::Commit) return;
            const auto lid = lid_of(e.env.msg);
            if (kind == MsgKind::Commit && commit_rounds.emplace(e.env.from, lid.raw).second) {
              const auto& c = std::get<CommitMsg>(e.env.msg);
              if (c.origin == CommitOrigin::Relay) {
                ++s.relay_commit_rounds;
              } else if (c.value) {
                ++s.full_commit_rounds;
              } else {
                ++s.thin_commit_rounds;
              }
            }
            const auto g = engine.global_session(e.env.from, engine.lid_layout.session_of(lid));
            if (const auto it = open.find(g); it != open.end()) it->second.emplace(kind, lid.raw);
          } else if constexpr (std::is_same_v<E, ev::Drop>) {
            ++s.drops;
          } else if constexpr (std::is_same_v<E, ev::Duplicate>) {
            ++s.duplicates;
          } else if constexpr (std::is_same_v<E, ev::Crash>) {
            ++s.crashes;
          } else if constexpr (std::is_same_v<E, ev::Backoff>) {
            ++(e.action == BackoffAction::Steal ? s.steals : s.helps);
          } else if constexpr (std::is_same_v<E, ev::ClientInvoke>) {
            ++s.ops_invoked;
            if (is_rmw(e.kind)) open[e.session].clear();
          } else if constexpr (std::is_same_v<E, ev::ClientComplete>) {
            ++s.ops_completed;
            ++s.completed_by_kind[to_string(e.kind)];
            if (!is_rmw(e.kind)) return;
            const std::string path = to_string(e.path);
            ++s.rmw_by_path[path];
            if (const auto it = open.find(e.session); it != open.end()) {
              ++s.rounds_by_path[path][it->second.size()];
              open.erase(it);
            }
          }
        },
        r.payload);
  }
  return s;
}

bool RunReport::failed() const {
  return std::any_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.status == check::Status::Fail; });
}

std::vector<check::Verdict> run_checks(const sim::RunResult& r, const sim::Scenario& sc,
                                       const std::vector<std::string>& checks) {
  auto want = [&](const std::string& name) {
    return checks.empty() || std::find(checks.begin(), checks.end(), name) != checks.end();
  };
  const check::TraceContext ctx{sc.engine.sessions_per_machine, sc.engine.lid_layout, sc.engine.value_width};
  std::vector<check::Verdict> out;
  for (auto& v : check::run_all(r.trace, ctx)) {
    if (want(v.name)) out.push_back(std::move(v));
  }
  if (want("carstamp_visibility")) {
    // Every write reaches every live machine only when nothing is lost.
    bool lossless = sc.net.loss == 0.0 && r.drained;
    for (const auto& rule : sc.net.rules) lossless = lossless && rule.action != sim::RuleAction::Drop;
    for (const auto& f : sc.net.faults) lossless = lossless && f.kind != sim::FaultKind::Partition;
    out.push_back(check::check_carstamp_visibility(r.trace, r.final_kvs, lossless, r.crashed_at_end));
  }
  if (want("linearizability")) {
    out.push_back(check::check_linearizability(check::extract_history(r.trace), sc.engine.value_width));
  }
  return out;
}

std::string format_table(const std::vector<RunReport>& runs) {
  std::ostringstream os;
  Stats total;
  std::map<std::string, std::map<std::string, std::size_t>> verdicts;  // name -> status -> runs
  std::size_t inconclusive = 0;
  for (const auto& r : runs) {
    total.merge(r.stats);
    if (!r.completed) ++inconclusive;
    for (const auto& v : r.verdicts) ++verdicts[v.name][check::to_string(v.status)];
  }
  auto row = [&](const std::string& k, const auto& v) { os << "  " << std::left << std::setw(28) << k << v << "\n"; };

  os << "runs: " << runs.size();
  if (runs.size() == 1) os << " (seed " << runs.front().seed << ")";
  os << "\n\nops\n";
  row("invoked", total.ops_invoked);
  row("completed", total.ops_completed);
  for (const auto& [k, n] : total.completed_by_kind) row("completed " + k, n);
  row("runs inconclusive", inconclusive);
  os << "\nrmw commits by path\n";
  for (const auto& [k, n] : total.rmw_by_path) row(k, n);
  os << "\nbroadcast rounds per rmw\n";
  constexpr std::size_t kListed = 6;  // longer tails are summed
  for (const auto& [path, hist] : total.rounds_by_path) {
    std::size_t tail = 0;
    std::size_t tail_max = 0;
    for (const auto& [rounds, n] : hist) {
      if (rounds <= kListed) {
        row(path + " " + std::to_string(rounds) + " rounds", n);
      } else {
        tail += n;
        tail_max = rounds;
      }
    }
    if (tail > 0) row(path + " " + std::to_string(kListed + 1) + "-" + std::to_string(tail_max) + " rounds", tail);
  }
  os << "\ncommit broadcasts\n";
  row("thin", total.thin_commit_rounds);
  row("full", total.full_commit_rounds);
  row("relay", total.relay_commit_rounds);
  os << "\ncontention\n";
  row("back-off steals", total.steals);
  row("back-off helps", total.helps);
  row("log-too-high replies", total.log_too_high);
  os << "\nmessages sent\n";
  for (const auto& [k, n] : total.sends_by_kind) row(k, n);
  os << "\nreplies by opcode\n";
  for (const auto& [k, n] : total.replies_by_opcode) row(k, n);
  os << "\nnetwork\n";
  row("drops", total.drops);
  row("duplicates", total.duplicates);
  row("crashes", total.crashes);
  os << "\nverdicts\n";
  for (const auto& [name, by] : verdicts) {
    std::string cell;
    for (const auto& [status, n] : by) cell += (cell.empty() ? "" : ", ") + status + " " + std::to_string(n);
    row(name, cell);
  }
  for (const auto& r : runs) {
    for (const auto& v : r.verdicts) {
      if (v.status == check::Status::Pass) continue;
      os << "\nseed " << r.seed << " " << v.name << " " << check::to_string(v.status) << ": " << v.detail << "\n";
    }
  }
  return os.str();
}

std::string format_json(const std::vector<RunReport>& runs) {
  json out;
  out["runs"] = json::array();
  Stats total;
  for (const auto& r : runs) {
    total.merge(r.stats);
    json vs = json::array();
    for (const auto& v : r.verdicts) {
      json vj{{"name", v.name}, {"status", check::to_string(v.status)}, {"detail", v.detail}};
      json w = json::array();
      for (const auto& rec : v.witness) w.push_back(json::parse(to_json_line(rec)));
      vj["witness"] = w;
      vs.push_back(vj);
    }
    out["runs"].push_back({{"seed", r.seed},
                           {"outcome", r.completed ? "completed" : "inconclusive"},
                           {"stats", stats_json(r.stats)},
                           {"verdicts", vs}});
  }
  out["totals"] = stats_json(total);
  return out.dump(2) + "\n";
}

}  // namespace kvpaxos::report
