#include "kvpaxos/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace kvpaxos::sim {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t x = 0;
  int base = 10;
  std::string_view v = s;
  if (v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X')) {
    base = 16;
    v.remove_prefix(2);
  }
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x, base);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("not an unsigned integer: '" + s + "'");
  return x;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ConfigError("not a number: '" + s + "'");
  return d;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "off" || s == "no" || s == "0") return false;
  throw ConfigError("not a boolean: '" + s + "'");
}

MachineId to_machine(const std::string& s) {
  const auto x = to_u64(s);
  if (x >= 0xFFFF) throw ConfigError("machine id out of range: " + s);
  return static_cast<MachineId>(x);
}

// "a..b", "a.." or "a"
std::pair<Tick, Tick> to_range(const std::string& s) {
  const auto dots = s.find("..");
  if (dots == std::string::npos) {
    const auto t = to_u64(s);
    return {t, t};
  }
  const auto lo = to_u64(s.substr(0, dots));
  const auto rest = s.substr(dots + 2);
  return {lo, rest.empty() ? std::numeric_limits<Tick>::max() : to_u64(rest)};
}

// "<tick> crash|recover <m>", "<tick> partition 0,1/2,3,4", "<tick> heal",
// "<tick> crash_after_send <m> <Kind> [keep=all|keep=1,2]"
FaultAction parse_fault(const std::string& v) {
  const auto w = words(v);
  if (w.size() < 2) throw ConfigError("expected '<tick> <action> ...'");
  FaultAction f;
  f.tick = to_u64(w[0]);
  const auto& what = w[1];
  auto need = [&](std::size_t n) {
    if (w.size() != n) throw ConfigError("wrong number of fields for " + what);
  };
  if (what == "crash" || what == "recover") {
    need(3);
    f.kind = what == "crash" ? FaultKind::Crash : FaultKind::Recover;
    f.machine = to_machine(w[2]);
  } else if (what == "partition") {
    need(3);
    f.kind = FaultKind::Partition;
    for (const auto& g : split(w[2], '/')) {
      auto& group = f.groups.emplace_back();
      for (const auto& m : split(g, ',')) group.push_back(to_machine(m));
    }
  } else if (what == "heal") {
    need(2);
    f.kind = FaultKind::Heal;
  } else if (what == "crash_after_send") {
    if (w.size() != 4 && w.size() != 5) throw ConfigError("wrong number of fields for crash_after_send");
    f.kind = FaultKind::CrashAfterSend;
    f.machine = to_machine(w[2]);
    f.send_kind = msg_kind_from_string(w[3]);
    if (w.size() == 5) {
      if (w[4].rfind("keep=", 0) != 0) throw ConfigError("expected keep=all or keep=<ids>");
      const auto keep = w[4].substr(5);
      if (keep == "all") {
        f.keep_all = true;
      } else {
        for (const auto& m : split(keep, ',')) f.keep_to.push_back(to_machine(m));
      }
    }
  } else {
    throw ConfigError("unknown fault action '" + what + "'");
  }
  return f;
}

// "drop|hold [kind=K] [from=M] [to=M] [ticks=a..b]"
NetRule parse_rule(const std::string& v) {
  const auto w = words(v);
  if (w.empty()) throw ConfigError("expected drop or hold");
  NetRule r;
  if (w[0] == "drop") {
    r.action = RuleAction::Drop;
  } else if (w[0] == "hold") {
    r.action = RuleAction::Hold;
  } else {
    throw ConfigError("unknown rule action '" + w[0] + "'");
  }
  for (std::size_t i = 1; i < w.size(); ++i) {
    const auto eq = w[i].find('=');
    if (eq == std::string::npos) throw ConfigError("expected field=value, got '" + w[i] + "'");
    const auto k = w[i].substr(0, eq);
    const auto x = w[i].substr(eq + 1);
    if (k == "kind") {
      r.kind = msg_kind_from_string(x);
    } else if (k == "from") {
      r.from = to_machine(x);
    } else if (k == "to") {
      r.to = to_machine(x);
    } else if (k == "ticks") {
      std::tie(r.from_tick, r.to_tick) = to_range(x);
    } else {
      throw ConfigError("unknown rule field '" + k + "'");
    }
  }
  if (r.action == RuleAction::Hold && r.to_tick == std::numeric_limits<Tick>::max()) {
    throw ConfigError("hold needs a bounded ticks=a..b");
  }
  return r;
}

// "<tick> <machine> <session> <kind> <key> [arg0 [arg1]]"
ScriptedOp parse_op(const std::string& v, std::size_t width) {
  const auto w = words(v);
  if (w.size() < 5) throw ConfigError("expected '<tick> <machine> <session> <kind> <key> [args]'");
  ScriptedOp op;
  op.tick = to_u64(w[0]);
  op.machine = to_machine(w[1]);
  op.session = static_cast<std::uint32_t>(to_u64(w[2]));
  op.kind = op_kind_from_string(w[3]);
  op.key = w[4];
  const std::size_t args = op.kind == OpKind::Read ? 0 : op.kind == OpKind::Cas ? 2 : 1;
  if (w.size() != 5 + args) throw ConfigError(std::string("wrong number of arguments for ") + to_string(op.kind));
  op.arg0 = Value::from_u64(args > 0 ? to_u64(w[5]) : 0, width);
  op.arg1 = Value::from_u64(args > 1 ? to_u64(w[6]) : 0, width);
  return op;
}

}  // namespace

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> kChecks = {
      "exactly_once", "slot_agreement", "invariants",          "ts_discipline",
      "conservation", "crash_stop",     "carstamp_visibility", "linearizability",
  };
  return kChecks;
}

ScenarioFile parse_scenario(std::istream& in) {
  ScenarioFile f;
  auto& sc = f.scenario;
  auto& e = sc.engine;
  auto& n = sc.net;
  auto& w = sc.workload;

  using Setter = std::function<void(const std::string&)>;
  auto u64 = [](auto& field) {
    return Setter([&field](const std::string& v) { field = static_cast<std::decay_t<decltype(field)>>(to_u64(v)); });
  };
  auto real = [](double& field) { return Setter([&field](const std::string& v) { field = to_double(v); }); };
  auto flag = [](bool& field) { return Setter([&field](const std::string& v) { field = to_bool(v); }); };

  std::vector<std::string> op_lines;
  const std::map<std::string, Setter> scalar = {
      {"seed", u64(n.seed)},
      {"rng", [&](const std::string& v) { n.rng = v; }},
      {"machines", u64(e.machine_count)},
      {"sessions_per_machine", u64(e.sessions_per_machine)},
      {"keys", u64(w.keys)},
      {"ops", u64(w.ops)},
      {"mix_read", u64(w.mix.read)},
      {"mix_write", u64(w.mix.write)},
      {"mix_cas", u64(w.mix.cas)},
      {"mix_faa", u64(w.mix.faa)},
      {"skew", real(w.skew)},
      {"think_min", u64(w.think_min)},
      {"think_max", u64(w.think_max)},
      {"sessions_per_key", u64(w.sessions_per_key)},
      {"cyclic_keys", flag(w.cyclic_keys)},
      {"value_range", u64(w.value_range)},
      {"delay_min", u64(n.delay_min)},
      {"delay_max", u64(n.delay_max)},
      {"loss", real(n.loss)},
      {"dup", real(n.dup)},
      {"max_ticks", u64(n.max_ticks)},
      {"drain", flag(n.drain)},
      {"backoff_threshold", u64(e.backoff_threshold)},
      {"all_aboard_timeout", u64(e.all_aboard_timeout)},
      {"log_too_high_limit", u64(e.log_too_high_limit)},
      {"suspect_window", u64(e.suspect_window)},
      {"resend_interval", u64(e.resend_interval)},
      {"value_width", u64(e.value_width)},
      {"all_aboard",
       [&](const std::string& v) {
         if (v == "on") {
           f.all_aboard = AllAboardPolicy::On;
         } else if (v == "off") {
           f.all_aboard = AllAboardPolicy::Off;
         } else if (v == "auto") {
           f.all_aboard = AllAboardPolicy::Auto;
         } else {
           throw ConfigError("expected on, off or auto");
         }
       }},
      {"classic_only",
       [&](const std::string& v) {
         for (const auto& k : split(v, ',')) f.classic_only.insert(k);
       }},
      {"checks",
       [&](const std::string& v) {
         f.checks.clear();
         if (v == "all") return;
         for (const auto& c : split(v, ',')) {
           const auto& known = known_checks();
           if (std::find(known.begin(), known.end(), c) == known.end()) throw ConfigError("unknown check '" + c + "'");
           f.checks.push_back(c);
         }
       }},
  };
  const std::map<std::string, Setter> repeated = {
      {"fault", [&](const std::string& v) { n.faults.push_back(parse_fault(v)); }},
      {"rule", [&](const std::string& v) { n.rules.push_back(parse_rule(v)); }},
      {"op", [&](const std::string& v) { op_lines.push_back(v); }},
  };

  std::set<std::string> seen;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = "line " + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    try {
      if (const auto it = scalar.find(key); it != scalar.end()) {
        if (!seen.insert(key).second) throw ConfigError("given twice");
        it->second(value);
      } else if (const auto rt = repeated.find(key); rt != repeated.end()) {
        rt->second(value);
      } else {
        throw ConfigError("unknown key");
      }
    } catch (const std::exception& ex) {
      throw ConfigError(key + " (" + where + "): " + ex.what());
    }
  }
  for (const auto& v : op_lines) {
    try {
      w.scripted.push_back(parse_op(v, e.value_width));
    } catch (const std::exception& ex) {
      throw ConfigError(std::string("op: ") + ex.what());
    }
  }
  sc.validate();
  return f;
}

ScenarioFile load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path + "'");
  return parse_scenario(in);
}

void apply_all_aboard_policy(ScenarioFile& f) {
  auto& e = f.scenario.engine;
  e.classic_only_keys = f.classic_only;
  e.all_aboard_enabled = f.all_aboard != AllAboardPolicy::Off;
  if (f.all_aboard != AllAboardPolicy::Auto) return;
  for (const auto& op : plan_workload(f.scenario)) {
    if (op.request.kind == OpKind::Write) e.classic_only_keys.insert(op.request.key);
  }
}

}  // namespace kvpaxos::sim
