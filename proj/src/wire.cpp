#include "kvpaxos/wire.hpp"

#include <limits>
#include <type_traits>

namespace kvpaxos::wire {

void Writer::u16(std::uint16_t x) {
  for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

void Writer::u32(std::uint32_t x) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

void Writer::u64(std::uint64_t x) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

void Writer::bytes(const std::vector<std::uint8_t>& b) {
  if (b.size() > std::numeric_limits<std::uint16_t>::max()) throw WireError("field longer than 65535 bytes");
  u16(static_cast<std::uint16_t>(b.size()));
  buf_.insert(buf_.end(), b.begin(), b.end());
}

void Writer::str(const std::string& s) { bytes(std::vector<std::uint8_t>(s.begin(), s.end())); }

void Writer::ts(const Timestamp& t) {
  u64(t.version);
  u16(t.machine);
}

void Writer::carstamp(const Carstamp& c) {
  ts(c.base);
  u64(c.log_no);
}

void Reader::need(std::size_t n) const {
  if (buf_.size() - pos_ < n) throw WireError("truncated frame");
}

std::uint8_t Reader::u8() {
  need(1);
  return buf_[pos_++];
}

std::uint16_t Reader::u16() {
  need(2);
  std::uint16_t x = 0;
  for (int i = 0; i < 2; ++i) x |= static_cast<std::uint16_t>(buf_[pos_++]) << (8 * i);
  return x;
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
  return x;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
  return x;
}

bool Reader::boolean() {
  const auto b = u8();
  if (b > 1) throw WireError("bad boolean byte");
  return b == 1;
}

std::vector<std::uint8_t> Reader::bytes() {
  const std::size_t n = u16();
  need(n);
  std::vector<std::uint8_t> out(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return out;
}

std::string Reader::str() {
  auto b = bytes();
  return {b.begin(), b.end()};
}

Timestamp Reader::ts() {
  Timestamp t;
  t.version = u64();
  t.machine = u16();
  return t;
}

Carstamp Reader::carstamp() {
  Carstamp c;
  c.base = ts();
  c.log_no = u64();
  return c;
}

namespace {

void write_payload(Writer& w, const ReplyPayload& p) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, BlockingPayload>) {
          w.ts(x.proposed_ts);
        } else if constexpr (std::is_same_v<T, AcceptedPayload>) {
          w.ts(x.accepted_ts);
          w.rmw(x.rmw_id);
          w.value(x.value);
          w.ts(x.acc_base_ts);
        } else if constexpr (std::is_same_v<T, CommittedPayload>) {
          w.u64(x.log_no);
          w.rmw(x.rmw_id);
          w.value(x.value);
          w.ts(x.base_ts);
        } else if constexpr (std::is_same_v<T, StalePayload>) {
          w.value(x.value);
          w.ts(x.base_ts);
        }
      },
      p);
}

ReplyPayload read_payload(Reader& r, ReplyOpcode op) {
  switch (expected_payload_index(op)) {
    case 1: return BlockingPayload{r.ts()};
    case 2: {
      AcceptedPayload p;
      p.accepted_ts = r.ts();
      p.rmw_id = r.rmw();
      p.value = r.value();
      p.acc_base_ts = r.ts();
      return p;
    }
    case 3: {
      CommittedPayload p;
      p.log_no = r.u64();
      p.rmw_id = r.rmw();
      p.value = r.value();
      p.base_ts = r.ts();
      return p;
    }
    case 4: {
      StalePayload p;
      p.value = r.value();
      p.base_ts = r.ts();
      return p;
    }
    default: return std::monostate{};
  }
}

}  // namespace

void write_message(Writer& w, const Message& m) {
  w.u8(static_cast<std::uint8_t>(kind_of(m)));
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ProposeMsg>) {
          w.str(x.key);
          w.ts(x.ts);
          w.u64(x.log_no);
          w.rmw(x.rmw_id);
          w.ts(x.base_ts);
          w.lid(x.lid);
        } else if constexpr (std::is_same_v<T, AcceptMsg>) {
          w.str(x.key);
          w.ts(x.ts);
          w.u64(x.log_no);
          w.rmw(x.rmw_id);
          w.value(x.value);
          w.ts(x.base_ts);
          w.lid(x.lid);
        } else if constexpr (std::is_same_v<T, ReplyMsg>) {
          if (x.payload.index() != expected_payload_index(x.opcode)) {
            throw WireError(std::string("payload does not match opcode ") + to_string(x.opcode));
          }
          w.u8(static_cast<std::uint8_t>(x.phase));
          w.lid(x.lid);
          w.u8(static_cast<std::uint8_t>(x.opcode));
          write_payload(w, x.payload);
        } else if constexpr (std::is_same_v<T, CommitMsg>) {
          if (x.value.has_value() != x.base_ts.has_value()) {
            throw WireError("commit value and base-ts must be both present or both absent");
          }
          w.str(x.key);
          w.u64(x.log_no);
          w.rmw(x.rmw_id);
          w.u8(static_cast<std::uint8_t>(x.origin));
          w.lid(x.lid);
          w.boolean(x.value.has_value());
          if (x.value) {
            w.value(*x.value);
            w.ts(*x.base_ts);
          }
        } else if constexpr (std::is_same_v<T, CommitAckMsg> || std::is_same_v<T, WriteAckMsg>) {
          w.lid(x.lid);
        } else if constexpr (std::is_same_v<T, ReadMsg>) {
          w.str(x.key);
          w.carstamp(x.carstamp);
          w.lid(x.lid);
        } else if constexpr (std::is_same_v<T, ReadReplyMsg>) {
          const bool full = x.opcode == ReadOpcode::CarstampTooLow;
          if (full != (x.carstamp && x.value && x.last_committed_rmw_id)) {
            throw WireError("read reply payload does not match opcode");
          }
          w.lid(x.lid);
          w.u8(static_cast<std::uint8_t>(x.opcode));
          if (full) {
            w.carstamp(*x.carstamp);
            w.value(*x.value);
            w.rmw(*x.last_committed_rmw_id);
          }
        } else if constexpr (std::is_same_v<T, TsRequestMsg>) {
          w.str(x.key);
          w.lid(x.lid);
        } else if constexpr (std::is_same_v<T, TsReplyMsg>) {
          w.lid(x.lid);
          w.ts(x.base_ts);
          w.u64(x.log_no);
        } else if constexpr (std::is_same_v<T, WriteValueMsg>) {
          w.str(x.key);
          w.value(x.value);
          w.carstamp(x.carstamp);
          w.lid(x.lid);
        }
      },
      m);
}

std::vector<std::uint8_t> encode(const Message& m) {
  Writer w;
  write_message(w, m);
  return w.take();
}

Message decode(const std::vector<std::uint8_t>& frame) {
  Reader r(frame);
  const auto tag = r.u8();
  Message out;
  switch (static_cast<MsgKind>(tag)) {
    case MsgKind::Propose: {
      ProposeMsg x;
      x.key = r.str();
      x.ts = r.ts();
      x.log_no = r.u64();
      x.rmw_id = r.rmw();
      x.base_ts = r.ts();
      x.lid = r.lid();
      out = std::move(x);
      break;
    }
    case MsgKind::Accept: {
      AcceptMsg x;
      x.key = r.str();
      x.ts = r.ts();
      x.log_no = r.u64();
      x.rmw_id = r.rmw();
      x.value = r.value();
      x.base_ts = r.ts();
      x.lid = r.lid();
      out = std::move(x);
      break;
    }
    case MsgKind::Reply: {
      ReplyMsg x;
      const auto phase = r.u8();
      if (phase > 1) throw WireError("bad reply phase");
      x.phase = static_cast<Phase>(phase);
      x.lid = r.lid();
      const auto op = r.u8();
      if (op >= kReplyOpcodeCount) throw WireError("bad reply opcode");
      x.opcode = static_cast<ReplyOpcode>(op);
      x.payload = read_payload(r, x.opcode);
      out = std::move(x);
      break;
    }
    case MsgKind::Commit: {
      CommitMsg x;
      x.key = r.str();
      x.log_no = r.u64();
      x.rmw_id = r.rmw();
      const auto origin = r.u8();
      if (origin > 1) throw WireError("bad commit origin");
      x.origin = static_cast<CommitOrigin>(origin);
      x.lid = r.lid();
      if (r.boolean()) {
        x.value = r.value();
        x.base_ts = r.ts();
      }
      out = std::move(x);
      break;
    }
    case MsgKind::CommitAck: out = CommitAckMsg{r.lid()}; break;
    case MsgKind::Read: {
      ReadMsg x;
      x.key = r.str();
      x.carstamp = r.carstamp();
      x.lid = r.lid();
      out = std::move(x);
      break;
    }
    case MsgKind::ReadReply: {
      ReadReplyMsg x;
      x.lid = r.lid();
      const auto op = r.u8();
      if (op > 2) throw WireError("bad read opcode");
      x.opcode = static_cast<ReadOpcode>(op);
      if (x.opcode == ReadOpcode::CarstampTooLow) {
        x.carstamp = r.carstamp();
        x.value = r.value();
        x.last_committed_rmw_id = r.rmw();
      }
      out = std::move(x);
      break;
    }
    case MsgKind::TsRequest: {
      TsRequestMsg x;
      x.key = r.str();
      x.lid = r.lid();
      out = std::move(x);
      break;
    }
    case MsgKind::TsReply: {
      TsReplyMsg x;
      x.lid = r.lid();
      x.base_ts = r.ts();
      x.log_no = r.u64();
      out = std::move(x);
      break;
    }
    case MsgKind::WriteValue: {
      WriteValueMsg x;
      x.key = r.str();
      x.value = r.value();
      x.carstamp = r.carstamp();
      x.lid = r.lid();
      out = std::move(x);
      break;
    }
    case MsgKind::WriteAck: out = WriteAckMsg{r.lid()}; break;
    default: throw WireError("unknown message tag " + std::to_string(tag));
  }
  if (!r.done()) throw WireError("trailing bytes after message");
  return out;
}

}  // namespace kvpaxos::wire
