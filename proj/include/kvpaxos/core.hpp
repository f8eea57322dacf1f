#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kvpaxos {

using MachineId = std::uint16_t;
using Key = std::string;
using Tick = std::uint64_t;

inline constexpr std::size_t kDefaultValueWidth = 32;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedOp : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Lamport clock. Ordered by version, ties broken by machine-id.
struct Timestamp {
  std::uint64_t version = 0;
  MachineId machine = 0;

  friend constexpr auto operator<=>(const Timestamp&, const Timestamp&) = default;

  static constexpr Timestamp max() {
    return {~std::uint64_t{0}, static_cast<MachineId>(~MachineId{0})};
  }
};

/// Version used by the All-aboard fast path; every broadcast propose uses at
/// least kClassicVersion, so fast-path accepts always sit below any propose.
inline constexpr std::uint64_t kAllAboardVersion = 2;
inline constexpr std::uint64_t kClassicVersion = 3;

std::strong_ordering ts_compare(const Timestamp& a, const Timestamp& b);

/// Carstamp: a base timestamp (moved by writes) plus the log-no of the last
/// RMW committed on top of it. Lexicographic, base dominant.
struct Carstamp {
  Timestamp base;
  std::uint64_t log_no = 0;

  friend constexpr auto operator<=>(const Carstamp&, const Carstamp&) = default;
};

std::strong_ordering carstamp_compare(const Carstamp& a, const Carstamp& b);

/// RMW identity: per-session counter plus the global session id. Packs into
/// one 64-bit word with the session in the low kRmwSessionBits bits.
struct RmwId {
  static constexpr unsigned kRmwSessionBits = 16;

  std::uint64_t counter = 0;  // 0 means "no rmw"
  std::uint32_t session = 0;

  friend constexpr auto operator<=>(const RmwId&, const RmwId&) = default;

  [[nodiscard]] bool is_none() const { return counter == 0; }
  [[nodiscard]] std::uint64_t encode() const;
  static RmwId decode(std::uint64_t raw);
};

/// Broadcast identifier: session index in the low bits, attempt counter in
/// the high bits, so a reply is routed to its session without a search.
struct Lid {
  std::uint64_t raw = 0;

  friend constexpr auto operator<=>(const Lid&, const Lid&) = default;
};

struct LidLayout {
  unsigned session_bits = 10;

  [[nodiscard]] Lid make(std::uint32_t session, std::uint64_t attempt) const;
  [[nodiscard]] std::uint32_t session_of(Lid lid) const;
  [[nodiscard]] std::uint64_t attempt_of(Lid lid) const;
};

Lid make_lid(std::uint32_t session, std::uint64_t attempt, const LidLayout& layout = {});
std::uint32_t session_of_lid(Lid lid, const LidLayout& layout = {});

/// Fixed-width opaque value. Numeric ops read the first 8 bytes as an
/// unsigned little-endian integer.
class Value {
 public:
  Value() = default;
  explicit Value(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

  static Value zero(std::size_t width = kDefaultValueWidth);
  static Value from_u64(std::uint64_t x, std::size_t width = kDefaultValueWidth);
  static Value from_hex(const std::string& hex);

  [[nodiscard]] std::uint64_t as_u64() const;
  [[nodiscard]] std::size_t width() const { return bytes_.size(); }
  [[nodiscard]] const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  [[nodiscard]] std::string to_hex() const;

  friend auto operator<=>(const Value&, const Value&) = default;

 private:
  std::vector<std::uint8_t> bytes_;
};

enum class RmwKind : std::uint8_t { Cas = 0, Faa = 1 };

struct RmwOp {
  RmwKind kind = RmwKind::Faa;
  Value compare;   // CAS only
  Value argument;  // CAS swap value, or FAA delta

  friend bool operator==(const RmwOp&, const RmwOp&) = default;

  static RmwOp cas(Value cmp, Value swap) { return {RmwKind::Cas, std::move(cmp), std::move(swap)}; }
  static RmwOp faa(Value delta) { return {RmwKind::Faa, Value{}, std::move(delta)}; }
};

struct RmwResult {
  Value new_value;
  Value read_result;
  bool cas_success = false;

  friend bool operator==(const RmwResult&, const RmwResult&) = default;
};

/// Pure: applies op to the value committed in the previous slot.
RmwResult rmw_compute(const RmwOp& op, const Value& current);

std::string to_string(const Timestamp& ts);
std::string to_string(const Carstamp& cs);
std::string to_string(const RmwId& id);

}  // namespace kvpaxos
