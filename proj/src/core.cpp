#include "kvpaxos/core.hpp"

#include <algorithm>
#include <cstdio>

namespace kvpaxos {

std::strong_ordering ts_compare(const Timestamp& a, const Timestamp& b) { return a <=> b; }

std::strong_ordering carstamp_compare(const Carstamp& a, const Carstamp& b) { return a <=> b; }

std::uint64_t RmwId::encode() const {
  if (session >= (1u << kRmwSessionBits)) {
    throw ConfigError("rmw-id session " + std::to_string(session) + " exceeds " +
                      std::to_string(kRmwSessionBits) + " bits");
  }
  if (counter >> (64 - kRmwSessionBits)) {
    throw ConfigError("rmw-id counter overflow");
  }
  return (counter << kRmwSessionBits) | session;
}

RmwId RmwId::decode(std::uint64_t raw) {
  return {raw >> kRmwSessionBits,
          static_cast<std::uint32_t>(raw & ((std::uint64_t{1} << kRmwSessionBits) - 1))};
}

Lid LidLayout::make(std::uint32_t session, std::uint64_t attempt) const {
  if (session_bits >= 64 || (std::uint64_t{session} >> session_bits) != 0) {
    throw ConfigError("session " + std::to_string(session) + " does not fit in " +
                      std::to_string(session_bits) + "-bit lid field");
  }
  if (session_bits > 0 && (attempt >> (64 - session_bits)) != 0) {
    throw ConfigError("lid attempt counter overflow");
  }
  return Lid{(attempt << session_bits) | session};
}

std::uint32_t LidLayout::session_of(Lid lid) const {
  return static_cast<std::uint32_t>(lid.raw & ((std::uint64_t{1} << session_bits) - 1));
}

std::uint64_t LidLayout::attempt_of(Lid lid) const { return lid.raw >> session_bits; }

Lid make_lid(std::uint32_t session, std::uint64_t attempt, const LidLayout& layout) {
  return layout.make(session, attempt);
}

std::uint32_t session_of_lid(Lid lid, const LidLayout& layout) { return layout.session_of(lid); }

Value Value::zero(std::size_t width) { return Value(std::vector<std::uint8_t>(width, 0)); }

Value Value::from_u64(std::uint64_t x, std::size_t width) {
  std::vector<std::uint8_t> bytes(width, 0);
  for (std::size_t i = 0; i < std::min<std::size_t>(8, width); ++i) {
    bytes[i] = static_cast<std::uint8_t>(x >> (8 * i));
  }
  return Value(std::move(bytes));
}

Value Value::from_hex(const std::string& hex) {
  if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex value");
  std::vector<std::uint8_t> bytes(hex.size() / 2);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::stoul(hex.substr(2 * i, 2), nullptr, 16));
  }
  return Value(std::move(bytes));
}

std::uint64_t Value::as_u64() const {
  std::uint64_t x = 0;
  for (std::size_t i = 0; i < std::min<std::size_t>(8, bytes_.size()); ++i) {
    x |= std::uint64_t{bytes_[i]} << (8 * i);
  }
  return x;
}

std::string Value::to_hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes_.size() * 2);
  for (auto b : bytes_) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

RmwResult rmw_compute(const RmwOp& op, const Value& current) {
  switch (op.kind) {
    case RmwKind::Faa: {
      if (op.argument.width() != current.width()) {
        throw MalformedOp("FAA delta width " + std::to_string(op.argument.width()) +
                          " != value width " + std::to_string(current.width()));
      }
      if (current.width() < 8) throw MalformedOp("FAA needs at least 8-byte values");
      auto bytes = current.bytes();
      const std::uint64_t sum = current.as_u64() + op.argument.as_u64();
      for (std::size_t i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>(sum >> (8 * i));
      return {Value(std::move(bytes)), current, true};
    }
    case RmwKind::Cas: {
      if (op.compare.width() != current.width() || op.argument.width() != current.width()) {
        throw MalformedOp("CAS operand width does not match value width");
      }
      if (current == op.compare) return {op.argument, current, true};
      return {current, current, false};
    }
  }
  throw MalformedOp("unknown rmw kind");
}

std::string to_string(const Timestamp& ts) {
  return "{" + std::to_string(ts.version) + ",M" + std::to_string(ts.machine) + "}";
}

std::string to_string(const Carstamp& cs) {
  return "(" + to_string(cs.base) + "," + std::to_string(cs.log_no) + ")";
}

std::string to_string(const RmwId& id) {
  return "<" + std::to_string(id.counter) + "," + std::to_string(id.session) + ">";
}

}  // namespace kvpaxos
