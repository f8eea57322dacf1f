#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "kvpaxos/simnet.hpp"
#include "kvpaxos/trace.hpp"
#include "kvpaxos/wire.hpp"

using namespace kvpaxos;

namespace {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::uint64_t n(std::uint64_t bound) { return rng_() % bound; }
  Timestamp ts() { return {n(1000), static_cast<MachineId>(n(7))}; }
  RmwId rmw() { return {n(100), static_cast<std::uint32_t>(n(20))}; }
  Lid lid() { return Lid{rng_()}; }
  Value value() { return Value::from_u64(rng_(), 8 + n(3) * 8); }
  Key key() { return "k" + std::to_string(n(50)); }
  Carstamp cs() { return {ts(), n(30)}; }

  ReplyPayload payload(ReplyOpcode op) {
    switch (expected_payload_index(op)) {
      case 1: return BlockingPayload{ts()};
      case 2: return AcceptedPayload{ts(), rmw(), value(), ts()};
      case 3: return CommittedPayload{n(9), rmw(), value(), ts()};
      case 4: return StalePayload{value(), ts()};
      default: return std::monostate{};
    }
  }

  Message message() {
    switch (n(11)) {
      case 0: return ProposeMsg{key(), ts(), n(20), rmw(), n(2) ? Timestamp::max() : ts(), lid()};
      case 1: return AcceptMsg{key(), ts(), n(20), rmw(), value(), ts(), lid()};
      case 2: {
        const auto op = static_cast<ReplyOpcode>(n(kReplyOpcodeCount));
        return ReplyMsg{n(2) ? Phase::Accept : Phase::Propose, lid(), op, payload(op)};
      }
      case 3: {
        CommitMsg c{key(), n(20), rmw(), std::nullopt, std::nullopt, lid(), CommitOrigin::Rmw};
        if (n(2)) {
          c.value = value();
          c.base_ts = ts();
        }
        if (n(2)) c.origin = CommitOrigin::Relay;
        return c;
      }
      case 4: return CommitAckMsg{lid()};
      case 5: return ReadMsg{key(), cs(), lid()};
      case 6: {
        ReadReplyMsg r{lid(), static_cast<ReadOpcode>(n(3)), std::nullopt, std::nullopt, std::nullopt};
        if (r.opcode == ReadOpcode::CarstampTooLow) {
          r.carstamp = cs();
          r.value = value();
          r.last_committed_rmw_id = rmw();
        }
        return r;
      }
      case 7: return TsRequestMsg{key(), lid()};
      case 8: return TsReplyMsg{lid(), ts(), n(40)};
      case 9: return WriteValueMsg{key(), value(), cs(), lid()};
      default: return WriteAckMsg{lid()};
    }
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

TEST(Wire, RandomMessagesRoundTrip) {
  Gen g(1);
  for (int i = 0; i < 5000; ++i) {
    const Message m = g.message();
    const auto frame = wire::encode(m);
    ASSERT_EQ(frame.front(), static_cast<std::uint8_t>(kind_of(m)));
    ASSERT_EQ(wire::decode(frame), m);
  }
}

TEST(Wire, EveryTruncationIsRejected) {
  Gen g(2);
  for (int i = 0; i < 300; ++i) {
    const auto frame = wire::encode(g.message());
    for (std::size_t len = 0; len < frame.size(); ++len) {
      std::vector<std::uint8_t> cut(frame.begin(), frame.begin() + static_cast<std::ptrdiff_t>(len));
      ASSERT_THROW(wire::decode(cut), wire::WireError) << "len " << len;
    }
  }
}

TEST(Wire, TrailingBytesRejected) {
  auto frame = wire::encode(CommitAckMsg{Lid{5}});
  frame.push_back(0);
  EXPECT_THROW(wire::decode(frame), wire::WireError);
}

TEST(Wire, UnknownKindRejected) {
  EXPECT_THROW(wire::decode({0}), wire::WireError);
  EXPECT_THROW(wire::decode({12}), wire::WireError);
}

TEST(Wire, OpcodePayloadMismatchRejected) {
  // An Ack followed by blocking-payload bytes.
  wire::Writer w;
  w.u8(static_cast<std::uint8_t>(MsgKind::Reply));
  w.u8(static_cast<std::uint8_t>(Phase::Propose));
  w.lid(Lid{1});
  w.u8(static_cast<std::uint8_t>(ReplyOpcode::Ack));
  w.u8(1);
  w.ts({3, 1});
  EXPECT_THROW(wire::decode(w.data()), wire::WireError);
}

TEST(Wire, EncodingIsLittleEndian) {
  wire::Writer w;
  w.u32(0x01020304);
  EXPECT_EQ(w.data(), (std::vector<std::uint8_t>{4, 3, 2, 1}));
  wire::Reader r(w.data());
  EXPECT_EQ(r.u32(), 0x01020304u);
  EXPECT_TRUE(r.done());
}

TEST(Trace, JsonLinesRoundTripSimulatorTraces) {
  sim::Scenario sc;
  sc.engine.machine_count = 5;
  sc.engine.sessions_per_machine = 2;
  sc.workload.keys = 3;
  sc.workload.ops = 60;
  sc.workload.mix.read = 25;
  sc.workload.mix.write = 25;
  sc.workload.mix.cas = 25;
  sc.workload.mix.faa = 25;
  sc.net.loss = 0.1;
  sc.net.dup = 0.1;
  sim::FaultAction crash;
  crash.tick = 50;
  crash.machine = 4;
  sc.net.faults.push_back(crash);
  sc.net.seed = 9;
  const auto r = sim::run(sc);
  ASSERT_GT(r.trace.size(), 100u);
  std::set<std::string> kinds;
  for (const auto& rec : r.trace) {
    kinds.insert(trace_kind_name(rec.payload));
    const auto line = to_json_line(rec);
    ASSERT_EQ(from_json_line(line), rec) << line;
  }
  EXPECT_GE(kinds.size(), 10u);
}

TEST(Trace, JsonlStreamRoundTrip) {
  Trace t;
  t.push_back({0, 0, 1, ev::Partition{{{0, 1}, {2, 3, 4}}}});
  t.push_back({3, 1, 2, ev::Backoff{7, "k1", BackoffAction::HelpAfterWait, 4}});
  t.push_back({4, 2, 2, ev::Drop{11, "rule"}});
  std::stringstream ss;
  write_jsonl(ss, t);
  EXPECT_EQ(read_jsonl(ss), t);
}
