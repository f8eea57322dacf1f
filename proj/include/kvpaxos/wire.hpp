#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "kvpaxos/messages.hpp"

namespace kvpaxos::wire {

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Little-endian byte sink. Also used to build canonical state digests.
class Writer {
 public:
  void u8(std::uint8_t x) { buf_.push_back(x); }
  void u16(std::uint16_t x);
  void u32(std::uint32_t x);
  void u64(std::uint64_t x);
  void boolean(bool b) { u8(b ? 1 : 0); }
  void bytes(const std::vector<std::uint8_t>& b);
  void str(const std::string& s);
  void ts(const Timestamp& t);
  void carstamp(const Carstamp& c);
  void rmw(const RmwId& id) { u64(id.encode()); }
  void lid(Lid l) { u64(l.raw); }
  void value(const Value& v) { bytes(v.bytes()); }

  [[nodiscard]] const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  bool boolean();
  std::vector<std::uint8_t> bytes();
  std::string str();
  Timestamp ts();
  Carstamp carstamp();
  RmwId rmw() { return RmwId::decode(u64()); }
  Lid lid() { return Lid{u64()}; }
  Value value() { return Value(bytes()); }

  [[nodiscard]] bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const;

  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

void write_message(Writer& w, const Message& m);

/// Frame layout is documented in docs/wire_format.md.
std::vector<std::uint8_t> encode(const Message& m);

/// Throws WireError on truncation, unknown tags, opcode/payload mismatch or
/// trailing bytes.
Message decode(const std::vector<std::uint8_t>& frame);

}  // namespace kvpaxos::wire
