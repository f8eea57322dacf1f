#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "kvpaxos/abd.hpp"

using namespace kvpaxos;
using namespace kvpaxos::abd;

namespace {

KvPair pair_at(Carstamp cs, std::uint64_t v, RmwId last = {}) {
  KvPair p;
  p.key = "k";
  p.value = Value::from_u64(v, 8);
  p.base_ts = cs.base;
  p.last_committed_log_no = cs.log_no;
  p.log_no = cs.log_no + 1;
  p.last_committed_rmw_id = last;
  return p;
}

}  // namespace

TEST(AbdReplica, ReadRepliesCompareCarstamps) {
  const auto p = pair_at({{2, 1}, 3}, 5, {2, 0});
  auto low = on_read(p, {"k", {{2, 1}, 2}, Lid{4}});
  ASSERT_EQ(low.opcode, ReadOpcode::CarstampTooLow);
  EXPECT_EQ(*low.carstamp, (Carstamp{{2, 1}, 3}));
  EXPECT_EQ(low.value->as_u64(), 5u);
  EXPECT_EQ(*low.last_committed_rmw_id, (RmwId{2, 0}));
  EXPECT_EQ(low.lid, Lid{4});
  EXPECT_EQ(on_read(p, {"k", {{2, 1}, 3}, Lid{}}).opcode, ReadOpcode::CarstampEqual);
  auto high = on_read(p, {"k", {{3, 0}, 0}, Lid{}});
  EXPECT_EQ(high.opcode, ReadOpcode::CarstampTooHigh);
  EXPECT_FALSE(high.value.has_value());
}

TEST(AbdReplica, TsRequestReportsBaseAndLog) {
  const auto r = on_ts_request(pair_at({{4, 2}, 7}, 0), {"k", Lid{3}});
  EXPECT_EQ(r.base_ts, (Timestamp{4, 2}));
  EXPECT_EQ(r.log_no, 7u);
  EXPECT_EQ(r.lid, Lid{3});
}

TEST(AbdWrite, PicksCarstampAboveQuorumMax) {
  AbdOp op;
  auto local = pair_at({{1, 0}, 2}, 0);
  const auto req = begin_write(op, local, 1, 5, Lid{10}, Value::from_u64(99, 8));
  EXPECT_EQ(req.lid, Lid{10});
  EXPECT_FALSE(on_ts_reply(op, 2, {Lid{10}, {3, 4}, 1}, 3));
  EXPECT_FALSE(on_ts_reply(op, 2, {Lid{10}, {9, 4}, 9}, 3));  // duplicate sender
  EXPECT_FALSE(on_ts_reply(op, 3, {Lid{11}, {9, 4}, 9}, 3));  // other round
  EXPECT_TRUE(on_ts_reply(op, 4, {Lid{10}, {2, 0}, 5}, 3));
  bool applied = false;
  const auto wv = begin_write_value(op, local, 1, Lid{12}, applied);
  EXPECT_EQ(wv.carstamp, (Carstamp{{4, 1}, 5}));
  EXPECT_TRUE(applied);
  EXPECT_EQ(local.value.as_u64(), 99u);
  EXPECT_EQ(local.last_committed_log_no, 2u);
  EXPECT_FALSE(on_ack(op, 1, 3));  // self already counted
  EXPECT_FALSE(on_ack(op, 0, 3));
  EXPECT_TRUE(on_ack(op, 3, 3));
}

TEST(AbdWrite, ReplicaAppliesOnlyHigherCarstamp) {
  auto p = pair_at({{4, 1}, 5}, 1);
  EXPECT_FALSE(on_write_value(p, {"k", Value::from_u64(2, 8), {{4, 1}, 5}, Lid{}}).applied);
  EXPECT_FALSE(on_write_value(p, {"k", Value::from_u64(2, 8), {{3, 9}, 9}, Lid{}}).applied);
  const auto ok = on_write_value(p, {"k", Value::from_u64(3, 8), {{4, 2}, 0}, Lid{6}});
  EXPECT_TRUE(ok.applied);
  EXPECT_EQ(ok.ack.lid, Lid{6});
  EXPECT_EQ(p.value.as_u64(), 3u);
  EXPECT_EQ(p.last_committed_log_no, 5u);
}

TEST(AbdRead, QuorumAtLocalCarstampNeedsNoWriteBack) {
  AbdOp op;
  const auto local = pair_at({{2, 0}, 1}, 7);
  begin_read(op, local, 0, 5, Lid{1});
  EXPECT_FALSE(on_read_reply(op, 1, {Lid{1}, ReadOpcode::CarstampEqual, {}, {}, {}}, 3));
  EXPECT_TRUE(on_read_reply(op, 2, {Lid{1}, ReadOpcode::CarstampEqual, {}, {}, {}}, 3));
  EXPECT_FALSE(resolve_read(op, 3, Lid{2}).has_value());
  EXPECT_EQ(op.value.as_u64(), 7u);
  EXPECT_FALSE(op.active());
}

TEST(AbdRead, LowerRepliesDoNotCountAsHolders) {
  AbdOp op;
  const auto local = pair_at({{2, 0}, 1}, 7, {1, 0});
  begin_read(op, local, 0, 5, Lid{1});
  on_read_reply(op, 1, {Lid{1}, ReadOpcode::CarstampEqual, {}, {}, {}}, 3);
  ASSERT_TRUE(on_read_reply(op, 2, {Lid{1}, ReadOpcode::CarstampTooHigh, {}, {}, {}}, 3));
  const auto wb = resolve_read(op, 3, Lid{2});
  ASSERT_TRUE(wb.has_value());
  EXPECT_EQ(wb->origin, CommitOrigin::Relay);
  EXPECT_EQ(wb->log_no, 1u);
  EXPECT_EQ(*wb->base_ts, (Timestamp{2, 0}));
  EXPECT_EQ(wb->value->as_u64(), 7u);
  EXPECT_EQ(wb->rmw_id, (RmwId{1, 0}));
  EXPECT_EQ(op.phase, AbdPhase::WriteBack);
}

TEST(AbdRead, ReturnsHighestCarstampSeen) {
  AbdOp op;
  const auto local = pair_at({{1, 0}, 0}, 0);
  begin_read(op, local, 0, 5, Lid{1});
  on_read_reply(op, 1, {Lid{1}, ReadOpcode::CarstampTooLow, Carstamp{{1, 0}, 4}, Value::from_u64(4, 8), RmwId{4, 0}}, 3);
  on_read_reply(op, 2, {Lid{1}, ReadOpcode::CarstampTooLow, Carstamp{{3, 2}, 0}, Value::from_u64(30, 8), RmwId{}}, 3);
  const auto wb = resolve_read(op, 3, Lid{2});
  EXPECT_EQ(op.value.as_u64(), 30u);
  ASSERT_TRUE(wb.has_value());
  EXPECT_EQ(*wb->base_ts, (Timestamp{3, 2}));
  EXPECT_EQ(wb->log_no, 0u);
}

TEST(AbdRead, ResultIsMaxOverQuorumOracle) {
  // Random replica states; the read returns the max-carstamp value among the
  // replicas that answered, and skips the write-back only when a quorum holds it.
  std::mt19937_64 rng(8);
  for (int i = 0; i < 3000; ++i) {
    std::vector<KvPair> reps;
    for (int m = 0; m < 5; ++m) {
      const Carstamp cs{{1 + rng() % 3, static_cast<MachineId>(rng() % 2)}, rng() % 3};
      reps.push_back(pair_at(cs, (cs.base.version * 100) + cs.base.machine * 10 + cs.log_no));
    }
    AbdOp op;
    const auto req = begin_read(op, reps[0], 0, 5, Lid{1});
    std::vector<int> order = {1, 2, 3, 4};
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> answered = {0};
    for (int m : order) {
      answered.push_back(m);
      if (on_read_reply(op, static_cast<MachineId>(m), on_read(reps[m], req), 3)) break;
    }
    ASSERT_EQ(answered.size(), 3u);
    Carstamp best = reps[0].carstamp();
    for (int m : answered) best = std::max(best, reps[m].carstamp());
    std::size_t holders = 0;
    for (int m : answered) holders += reps[m].carstamp() == best;
    const auto wb = resolve_read(op, 3, Lid{2});
    ASSERT_EQ(op.value.as_u64(), best.base.version * 100 + best.base.machine * 10 + best.log_no);
    ASSERT_EQ(wb.has_value(), holders < 3);
  }
}

TEST(AbdRound, ResetCountsSelfOnly) {
  AbdOp op;
  begin_read(op, pair_at({}, 0), 2, 3, Lid{1});
  on_read_reply(op, 0, {Lid{1}, ReadOpcode::CarstampEqual, {}, {}, {}}, 2);
  reset_round(op, 2, Lid{5});
  EXPECT_EQ(op.replies, 1u);
  EXPECT_TRUE(op.responded[2]);
  EXPECT_FALSE(op.responded[0]);
  EXPECT_EQ(op.lid, Lid{5});
}
