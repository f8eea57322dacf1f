#include <gtest/gtest.h>

#include <random>
#include <set>
#include <tuple>

#include "kvpaxos/core.hpp"

using namespace kvpaxos;

TEST(Timestamp, VersionDominatesMachineBreaksTies) {
  EXPECT_LT((Timestamp{2, 4}), (Timestamp{3, 0}));
  EXPECT_LT((Timestamp{3, 0}), (Timestamp{3, 1}));
  EXPECT_EQ(ts_compare({3, 1}, {3, 1}), std::strong_ordering::equal);
  EXPECT_LT((Timestamp{~0ull, 0}), Timestamp::max());
}

TEST(Timestamp, OrderMatchesTupleOracle) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 5000; ++i) {
    Timestamp a{rng() % 4, static_cast<MachineId>(rng() % 3)};
    Timestamp b{rng() % 4, static_cast<MachineId>(rng() % 3)};
    EXPECT_EQ(ts_compare(a, b), std::tie(a.version, a.machine) <=> std::tie(b.version, b.machine));
  }
}

TEST(Carstamp, BaseDominatesLogNo) {
  const Carstamp low{{1, 0}, 50};
  const Carstamp high{{2, 0}, 0};
  EXPECT_LT(low, high);
  EXPECT_LT((Carstamp{{2, 0}, 0}), (Carstamp{{2, 0}, 1}));
  EXPECT_LT((Carstamp{{2, 0}, 9}), (Carstamp{{2, 1}, 0}));
}

TEST(Carstamp, OrderMatchesTupleOracle) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 5000; ++i) {
    Carstamp a{{rng() % 3, static_cast<MachineId>(rng() % 2)}, rng() % 3};
    Carstamp b{{rng() % 3, static_cast<MachineId>(rng() % 2)}, rng() % 3};
    const auto oracle = std::tie(a.base.version, a.base.machine, a.log_no) <=>
                        std::tie(b.base.version, b.base.machine, b.log_no);
    EXPECT_EQ(carstamp_compare(a, b), oracle);
  }
}

TEST(RmwId, EncodeDecodeRoundTrip) {
  for (std::uint64_t c : {1ull, 2ull, 1000ull, (1ull << 47) - 1}) {
    for (std::uint32_t s : {0u, 1u, 13u, 65535u}) {
      const RmwId id{c, s};
      EXPECT_EQ(RmwId::decode(id.encode()), id);
    }
  }
  EXPECT_EQ((RmwId{3, 5}).encode(), (3ull << 16) | 5);
  EXPECT_TRUE(RmwId{}.is_none());
}

TEST(RmwId, EncodeRejectsOverflow) {
  EXPECT_THROW((void)(RmwId{1, 1u << 16}).encode(), ConfigError);
  EXPECT_THROW((void)(RmwId{1ull << 48, 0}).encode(), ConfigError);
}

TEST(Lid, ExhaustiveRoundTripSmallLayouts) {
  for (unsigned bits = 1; bits <= 6; ++bits) {
    const LidLayout layout{bits};
    for (std::uint32_t s = 0; s < (1u << bits); ++s) {
      for (std::uint64_t a = 0; a < 64; ++a) {
        const Lid lid = layout.make(s, a);
        ASSERT_EQ(layout.session_of(lid), s);
        ASSERT_EQ(layout.attempt_of(lid), a);
        ASSERT_EQ(session_of_lid(lid, layout), s);
      }
    }
  }
}

TEST(Lid, DistinctInputsGiveDistinctLids) {
  const LidLayout layout{3};
  std::set<std::uint64_t> seen;
  for (std::uint32_t s = 0; s < 8; ++s) {
    for (std::uint64_t a = 0; a < 100; ++a) EXPECT_TRUE(seen.insert(layout.make(s, a).raw).second);
  }
}

TEST(Lid, RejectsSessionOutsideField) {
  EXPECT_THROW(make_lid(1024, 0), ConfigError);
  EXPECT_THROW((void)(LidLayout{4}).make(16, 0), ConfigError);
  EXPECT_THROW((void)(LidLayout{4}).make(0, 1ull << 60), ConfigError);
}

TEST(Value, LittleEndianFirstEightBytes) {
  const auto v = Value::from_u64(0x0102, 10);
  EXPECT_EQ(v.width(), 10u);
  EXPECT_EQ(v.bytes()[0], 0x02);
  EXPECT_EQ(v.bytes()[1], 0x01);
  EXPECT_EQ(v.as_u64(), 0x0102u);
  EXPECT_EQ(v.to_hex(), "02010000000000000000");
  EXPECT_EQ(Value::from_hex(v.to_hex()), v);
  EXPECT_THROW(Value::from_hex("abc"), std::invalid_argument);
}

TEST(Rmw, FaaAddsModulo64AndKeepsTailBytes) {
  std::vector<std::uint8_t> bytes(12, 0xee);
  for (int i = 0; i < 8; ++i) bytes[i] = 0xff;
  const Value cur(bytes);
  const auto r = rmw_compute(RmwOp::faa(Value::from_u64(2, 12)), cur);
  EXPECT_EQ(r.new_value.as_u64(), 1u);
  EXPECT_EQ(r.read_result, cur);
  EXPECT_EQ(r.new_value.bytes()[8], 0xee);
  EXPECT_EQ(r.new_value.bytes()[11], 0xee);
}

TEST(Rmw, FaaMatchesIntegerOracle) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t a = rng();
    const std::uint64_t d = rng();
    const auto r = rmw_compute(RmwOp::faa(Value::from_u64(d)), Value::from_u64(a));
    EXPECT_EQ(r.new_value.as_u64(), a + d);
    EXPECT_EQ(r.read_result.as_u64(), a);
  }
}

TEST(Rmw, CasSwapsOnlyOnFullMatch) {
  const auto cur = Value::from_u64(5);
  auto ok = rmw_compute(RmwOp::cas(Value::from_u64(5), Value::from_u64(9)), cur);
  EXPECT_TRUE(ok.cas_success);
  EXPECT_EQ(ok.new_value, Value::from_u64(9));
  EXPECT_EQ(ok.read_result, cur);

  auto other = Value::from_u64(5);
  auto bytes = other.bytes();
  bytes[20] = 1;  // differs beyond the numeric prefix
  auto miss = rmw_compute(RmwOp::cas(Value(bytes), Value::from_u64(9)), cur);
  EXPECT_FALSE(miss.cas_success);
  EXPECT_EQ(miss.new_value, cur);
  EXPECT_EQ(miss.read_result, cur);
}

TEST(Rmw, WidthMismatchIsMalformed) {
  EXPECT_THROW(rmw_compute(RmwOp::faa(Value::from_u64(1, 8)), Value::zero(16)), MalformedOp);
  EXPECT_THROW(rmw_compute(RmwOp::cas(Value::zero(8), Value::zero(16)), Value::zero(8)), MalformedOp);
  EXPECT_THROW(rmw_compute(RmwOp::faa(Value::zero(4)), Value::zero(4)), MalformedOp);
}
