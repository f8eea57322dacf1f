#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kvpaxos/core.hpp"

namespace kvpaxos {

enum class PairState : std::uint8_t { Invalid = 0, Proposed = 1, Accepted = 2 };

const char* to_string(PairState s);

/// Per-key replica metadata. Everything except the committed fields refers to
/// the slot `log_no`, which is always `last_committed_log_no + 1`.
struct KvPair {
  Key key;
  Value value;
  Value accepted_value;
  PairState state = PairState::Invalid;
  std::uint64_t log_no = 1;
  std::uint64_t last_committed_log_no = 0;
  Timestamp proposed_ts;
  Timestamp accepted_ts;
  RmwId rmw_id;
  RmwId last_committed_rmw_id;
  Timestamp base_ts{1, 0};
  Timestamp acc_base_ts;

  [[nodiscard]] Carstamp carstamp() const { return {base_ts, last_committed_log_no}; }

  friend bool operator==(const KvPair&, const KvPair&) = default;
};

/// Highest committed rmw-id counter of every session in the system.
class RegisteredRmwTable {
 public:
  explicit RegisteredRmwTable(std::size_t session_count = 0) : counters_(session_count, 0) {}

  void register_id(const RmwId& id);
  [[nodiscard]] bool is_registered(const RmwId& id) const;
  [[nodiscard]] std::uint64_t counter(std::uint32_t session) const;
  [[nodiscard]] std::size_t size() const { return counters_.size(); }

  friend bool operator==(const RegisteredRmwTable&, const RegisteredRmwTable&) = default;

 private:
  std::vector<std::uint64_t> counters_;
};

void register_rmw_id(RegisteredRmwTable& table, const RmwId& id);
bool is_registered(const RegisteredRmwTable& table, const RmwId& id);

/// A commit as carried by commit messages. A thin commit has neither value
/// nor base; receivers take both from their accepted state.
struct CommitInfo {
  Key key;
  std::uint64_t log_no = 0;
  RmwId rmw_id;
  std::optional<Value> value;
  std::optional<Timestamp> base_ts;

  [[nodiscard]] bool thin() const { return !value.has_value(); }
};

struct ApplyResult {
  bool value_updated = false;
  bool log_advanced = false;
  /// Thin commit for an unknown slot: neither value nor base can be resolved.
  bool unresolved_thin = false;
  /// Carstamp and value that were offered for visibility (after thin resolution).
  std::optional<Carstamp> offered;
  std::optional<Value> offered_value;
};

/// Registers the rmw-id, advances log progress if the slot is new, and makes
/// the value visible iff its carstamp beats the stored one. Log progress and
/// value visibility are decided independently: a newer write can hide an RMW
/// whose slot still counts as committed.
ApplyResult apply_commit(KvPair& pair, RegisteredRmwTable& table, const CommitInfo& c);

/// ABD write application: value visible iff the carstamp is higher. Never
/// moves log progress.
bool apply_write(KvPair& pair, const Carstamp& cs, const Value& value);

/// Flat map of pairs. Unknown keys materialise as zero-valued Invalid pairs.
class Kvs {
 public:
  explicit Kvs(std::size_t value_width = kDefaultValueWidth) : value_width_(value_width) {}

  KvPair& get(const Key& key);
  [[nodiscard]] const KvPair* find(const Key& key) const;
  [[nodiscard]] KvPair initial_pair(const Key& key) const;
  [[nodiscard]] const std::map<Key, KvPair>& pairs() const { return pairs_; }
  [[nodiscard]] std::size_t value_width() const { return value_width_; }

  friend bool operator==(const Kvs&, const Kvs&) = default;

 private:
  std::size_t value_width_;
  std::map<Key, KvPair> pairs_;
};

/// Canonical text snapshot (JSON, keys sorted, sessions in index order).
std::string snapshot(const Kvs& kvs, const RegisteredRmwTable& table);

}  // namespace kvpaxos
