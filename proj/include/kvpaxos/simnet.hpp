#pragma once

#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kvpaxos/engine.hpp"
#include "kvpaxos/messages.hpp"
#include "kvpaxos/trace.hpp"

namespace kvpaxos::sim {

inline constexpr MachineId kNetwork = std::numeric_limits<MachineId>::max();

/// The only generator: std::mt19937_64 with explicit, portable reductions
/// (no std::uniform_*_distribution, whose output is implementation-defined).
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed) : g_(seed) {}
  std::uint64_t next() { return g_(); }
  /// Uniform in [lo, hi], modulo reduction.
  std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi);
  /// 53-bit fraction in [0, 1).
  double unit();
  bool chance(double p) { return p > 0.0 && unit() < p; }

 private:
  std::mt19937_64 g_;
};

enum class FaultKind : std::uint8_t { Crash, Recover, Partition, Heal, CrashAfterSend };

struct FaultAction {
  Tick tick = 0;
  FaultKind kind = FaultKind::Crash;
  MachineId machine = 0;
  std::vector<std::vector<MachineId>> groups;  // Partition
  // CrashAfterSend: from `tick` on, the first tick in which `machine` emits a
  // message of `send_kind` is its last. Of that broadcast only the copies to
  // `keep_to` leave the machine (all of them if keep_all), nothing after it.
  MsgKind send_kind = MsgKind::Commit;
  std::vector<MachineId> keep_to;
  bool keep_all = false;
};

enum class RuleAction : std::uint8_t { Drop, Hold };

/// Scripted interference with messages sent within [from_tick, to_tick].
/// Hold delays delivery to to_tick + 1.
struct NetRule {
  RuleAction action = RuleAction::Drop;
  std::optional<MsgKind> kind;
  std::optional<MachineId> from;
  std::optional<MachineId> to;
  Tick from_tick = 0;
  Tick to_tick = std::numeric_limits<Tick>::max();

  [[nodiscard]] bool matches(const Envelope& env, Tick now) const;
};

struct NetConfig {
  std::uint64_t seed = 1;
  std::string rng = Rng::kAlgorithm;
  Tick delay_min = 1;
  Tick delay_max = 3;
  double loss = 0.0;
  double dup = 0.0;
  std::vector<FaultAction> faults;
  std::vector<NetRule> rules;
  Tick max_ticks = 200000;
  /// After the last client op completes, keep delivering until the network
  /// is empty (bounded by max_ticks).
  bool drain = true;
};

struct ScriptedOp {
  Tick tick = 0;
  MachineId machine = 0;
  std::uint32_t session = 0;  // local session index
  OpKind kind = OpKind::Faa;
  Key key;
  Value arg0;
  Value arg1;
};

struct OpMix {
  unsigned read = 0;
  unsigned write = 0;
  unsigned cas = 0;
  unsigned faa = 100;
};

struct WorkloadSpec {
  std::size_t keys = 8;
  std::size_t ops = 0;  // randomly generated ops, spread over all sessions
  OpMix mix;
  double skew = 0.0;  // 0 = uniform key choice, else Zipf exponent
  Tick think_min = 0;
  Tick think_max = 0;
  /// When non-zero, each key is used by this many sessions only, taken
  /// round-robin across machines.
  std::size_t sessions_per_key = 0;
  /// Op i uses key i mod keys (exactly ops/keys ops per key).
  bool cyclic_keys = false;
  /// Operands are drawn from [0, value_range).
  std::uint64_t value_range = 16;
  std::vector<ScriptedOp> scripted;
};

struct Scenario {
  EngineConfig engine;
  NetConfig net;
  WorkloadSpec workload;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

std::string key_name(std::size_t i);

/// One planned client op, in submission order per session.
struct PlannedOp {
  std::uint64_t op_index = 0;
  std::uint32_t global_session = 0;
  Tick not_before = 0;
  ClientRequest request;
};

/// Deterministic expansion of the workload (scripted ops first, then random).
std::vector<PlannedOp> plan_workload(const Scenario& sc);

struct RunResult {
  Trace trace;
  std::vector<Kvs> final_kvs;
  std::vector<std::string> snapshots;
  std::vector<bool> crashed_at_end;
  Tick end_tick = 0;
  bool completed = false;  // every op of a machine alive at the end completed
  bool drained = false;
  std::size_t ops_planned = 0;
  std::size_t ops_completed = 0;
};

RunResult run(const Scenario& sc);

}  // namespace kvpaxos::sim
