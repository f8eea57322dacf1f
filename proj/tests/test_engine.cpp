#include <gtest/gtest.h>

#include <random>

#include "kvpaxos/engine.hpp"

using namespace kvpaxos;

namespace {

KvPair fresh() {
  KvPair p;
  p.key = "k";
  p.value = Value::zero(8);
  p.accepted_value = Value::zero(8);
  return p;
}

ProposeMsg propose(Timestamp ts, std::uint64_t log, RmwId id, Timestamp base = {1, 0}) {
  return {"k", ts, log, id, base, Lid{7}};
}

AcceptMsg accept(Timestamp ts, std::uint64_t log, RmwId id, std::uint64_t v = 1) {
  return {"k", ts, log, id, Value::from_u64(v, 8), {1, 0}, Lid{8}};
}

// Test-side statement of the acceptor ladder: the first matching row wins.
ReplyOpcode expected_propose(const KvPair& p, const RegisteredRmwTable& t, const ProposeMsg& m) {
  const bool registered = t.is_registered(m.rmw_id);
  const bool blocked = p.state != PairState::Invalid && !(m.ts > p.proposed_ts);
  const std::vector<std::pair<bool, ReplyOpcode>> rows = {
      {registered && p.last_committed_log_no > m.log_no, ReplyOpcode::RmwIdCommittedNoBcast},
      {registered, ReplyOpcode::RmwIdCommitted},
      {m.log_no < p.log_no, ReplyOpcode::LogTooLow},
      {m.log_no > p.log_no, ReplyOpcode::LogTooHigh},
      {blocked && p.state == PairState::Proposed, ReplyOpcode::SeenHigherProp},
      {blocked, ReplyOpcode::SeenHigherAcc},
      {p.state == PairState::Accepted && p.rmw_id == m.rmw_id, ReplyOpcode::Ack},
      {p.state == PairState::Accepted, ReplyOpcode::SeenLowerAcc},
      {m.base_ts < p.base_ts, ReplyOpcode::AckBaseTsStale},
  };
  for (const auto& [hit, op] : rows) {
    if (hit) return op;
  }
  return ReplyOpcode::Ack;
}

ReplyOpcode expected_accept(const KvPair& p, const RegisteredRmwTable& t, const AcceptMsg& m) {
  const bool registered = t.is_registered(m.rmw_id);
  if (registered) {
    return p.last_committed_log_no > m.log_no ? ReplyOpcode::RmwIdCommittedNoBcast : ReplyOpcode::RmwIdCommitted;
  }
  if (m.log_no < p.log_no) return ReplyOpcode::LogTooLow;
  if (m.log_no > p.log_no) return ReplyOpcode::LogTooHigh;
  if (p.state != PairState::Invalid && m.ts < p.proposed_ts) {
    return p.state == PairState::Proposed ? ReplyOpcode::SeenHigherProp : ReplyOpcode::SeenHigherAcc;
  }
  return ReplyOpcode::Ack;
}

struct RandomCase {
  KvPair pair = fresh();
  RegisteredRmwTable table{3};
};

RandomCase random_case(std::mt19937_64& rng) {
  RandomCase c;
  auto& p = c.pair;
  p.last_committed_log_no = rng() % 3;
  p.log_no = p.last_committed_log_no + 1;
  p.state = static_cast<PairState>(rng() % 3);
  p.proposed_ts = {3 + rng() % 3, static_cast<MachineId>(rng() % 2)};
  p.accepted_ts = p.proposed_ts;
  p.rmw_id = {1 + rng() % 2, static_cast<std::uint32_t>(rng() % 3)};
  p.base_ts = {1 + rng() % 2, 0};
  p.accepted_value = Value::from_u64(rng() % 5, 8);
  for (std::uint32_t s = 0; s < 3; ++s) {
    if (rng() % 3 == 0) c.table.register_id({1 + rng() % 2, s});
  }
  return c;
}

}  // namespace

TEST(OnPropose, LadderMatchesOracle) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 20000; ++i) {
    auto c = random_case(rng);
    const auto m = propose({3 + rng() % 3, static_cast<MachineId>(rng() % 2)}, 1 + rng() % 4,
                           {1 + rng() % 2, static_cast<std::uint32_t>(rng() % 3)}, {1 + rng() % 2, 0});
    const auto want = expected_propose(c.pair, c.table, m);
    const KvPair before = c.pair;
    const auto r = on_propose(c.pair, c.table, m);
    ASSERT_EQ(r.opcode, want) << "case " << i;
    ASSERT_EQ(r.payload.index(), expected_payload_index(r.opcode));
    ASSERT_EQ(r.lid, m.lid);
    ASSERT_EQ(r.phase, Phase::Propose);
    switch (r.opcode) {
      case ReplyOpcode::Ack:
      case ReplyOpcode::AckBaseTsStale:
      case ReplyOpcode::SeenLowerAcc:
        ASSERT_EQ(c.pair.proposed_ts, m.ts);
        break;
      default:
        ASSERT_EQ(c.pair, before) << "nack mutated the pair";
    }
  }
}

TEST(OnAccept, LadderMatchesOracle) {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 20000; ++i) {
    auto c = random_case(rng);
    const auto m = accept({3 + rng() % 3, static_cast<MachineId>(rng() % 2)}, 1 + rng() % 4,
                          {1 + rng() % 2, static_cast<std::uint32_t>(rng() % 3)}, rng() % 9);
    const auto want = expected_accept(c.pair, c.table, m);
    const KvPair before = c.pair;
    const auto r = on_accept(c.pair, c.table, m);
    ASSERT_EQ(r.opcode, want) << "case " << i;
    ASSERT_EQ(r.payload.index(), expected_payload_index(r.opcode));
    if (r.opcode == ReplyOpcode::Ack) {
      ASSERT_EQ(c.pair.state, PairState::Accepted);
      ASSERT_EQ(c.pair.accepted_ts, m.ts);
      ASSERT_EQ(c.pair.accepted_value, m.value);
      ASSERT_EQ(c.pair.rmw_id, m.rmw_id);
    } else {
      ASSERT_EQ(c.pair, before);
    }
  }
}

TEST(Acceptor, PromiseHoldsAcrossRandomSequences) {
  // Once a propose at ts T is acked, no accept below T is acked at that slot,
  // and accepted_ts never decreases.
  std::mt19937_64 rng(23);
  const RegisteredRmwTable table(4);
  for (int run = 0; run < 2000; ++run) {
    KvPair p = fresh();
    Timestamp promised{};
    Timestamp accepted{};
    for (int step = 0; step < 12; ++step) {
      const Timestamp ts{3 + rng() % 4, static_cast<MachineId>(rng() % 3)};
      const RmwId id{1, static_cast<std::uint32_t>(rng() % 4)};
      if (rng() % 2) {
        const auto r = on_propose(p, table, propose(ts, 1, id));
        if (is_ack(r.opcode) || r.opcode == ReplyOpcode::SeenLowerAcc) {
          ASSERT_GT(ts, promised);
          promised = ts;
        }
      } else {
        const auto r = on_accept(p, table, accept(ts, 1, id));
        if (r.opcode == ReplyOpcode::Ack) {
          ASSERT_GE(ts, promised);
          promised = ts;
          ASSERT_GE(ts, accepted);
          accepted = ts;
        }
      }
      ASSERT_EQ(p.proposed_ts, promised);
      ASSERT_GE(p.proposed_ts, p.accepted_ts);
    }
  }
}

TEST(OnPropose, SeenLowerAccCarriesAcceptedRmw) {
  KvPair p = fresh();
  const RegisteredRmwTable t(2);
  ASSERT_EQ(on_accept(p, t, accept({3, 0}, 1, {1, 0}, 5)).opcode, ReplyOpcode::Ack);
  const auto r = on_propose(p, t, propose({4, 1}, 1, {1, 1}));
  ASSERT_EQ(r.opcode, ReplyOpcode::SeenLowerAcc);
  const auto& acc = std::get<AcceptedPayload>(r.payload);
  EXPECT_EQ(acc.rmw_id, (RmwId{1, 0}));
  EXPECT_EQ(acc.accepted_ts, (Timestamp{3, 0}));
  EXPECT_EQ(acc.value, Value::from_u64(5, 8));
  EXPECT_EQ(p.proposed_ts, (Timestamp{4, 1}));
  EXPECT_EQ(p.state, PairState::Accepted);
}

TEST(OnPropose, LogTooLowCarriesLastCommit) {
  KvPair p = fresh();
  RegisteredRmwTable t(2);
  apply_commit(p, t, {"k", 1, {1, 0}, Value::from_u64(9, 8), Timestamp{1, 0}});
  const auto r = on_propose(p, t, propose({3, 1}, 1, {1, 1}));
  ASSERT_EQ(r.opcode, ReplyOpcode::LogTooLow);
  const auto& c = std::get<CommittedPayload>(r.payload);
  EXPECT_EQ(c.log_no, 1u);
  EXPECT_EQ(c.rmw_id, (RmwId{1, 0}));
  EXPECT_EQ(c.value.as_u64(), 9u);
}

TEST(OnPropose, RegisteredRmwIsReportedCommitted) {
  KvPair p = fresh();
  RegisteredRmwTable t(2);
  apply_commit(p, t, {"k", 1, {1, 0}, Value::from_u64(9, 8), Timestamp{1, 0}});
  EXPECT_EQ(on_propose(p, t, propose({3, 1}, 1, {1, 0})).opcode, ReplyOpcode::RmwIdCommitted);
  apply_commit(p, t, {"k", 2, {1, 1}, Value::from_u64(10, 8), Timestamp{1, 0}});
  EXPECT_EQ(on_propose(p, t, propose({3, 1}, 1, {1, 0})).opcode, ReplyOpcode::RmwIdCommittedNoBcast);
}

TEST(OnPropose, StaleBaseReturnsFresherValue) {
  KvPair p = fresh();
  const RegisteredRmwTable t(1);
  apply_write(p, {{5, 2}, 0}, Value::from_u64(77, 8));
  const auto r = on_propose(p, t, propose({3, 0}, 1, {1, 0}, {1, 0}));
  ASSERT_EQ(r.opcode, ReplyOpcode::AckBaseTsStale);
  const auto& s = std::get<StalePayload>(r.payload);
  EXPECT_EQ(s.base_ts, (Timestamp{5, 2}));
  EXPECT_EQ(s.value.as_u64(), 77u);
  // A proposer that already looked for fresher bases gets a plain ack.
  KvPair q = p;
  q.state = PairState::Invalid;
  EXPECT_EQ(on_propose(q, t, propose({4, 0}, 1, {1, 0}, Timestamp::max())).opcode, ReplyOpcode::Ack);
}

TEST(OnAccept, EqualTsIsAccepted) {
  KvPair p = fresh();
  const RegisteredRmwTable t(1);
  ASSERT_EQ(on_propose(p, t, propose({3, 0}, 1, {1, 0})).opcode, ReplyOpcode::Ack);
  EXPECT_EQ(on_accept(p, t, accept({3, 0}, 1, {1, 0})).opcode, ReplyOpcode::Ack);
  EXPECT_EQ(on_propose(p, t, propose({3, 0}, 1, {1, 0})).opcode, ReplyOpcode::SeenHigherAcc);
}

TEST(ReplyTally, CountsEachSenderOnceAndKeepsBestPayloads) {
  ReplyTally t;
  t.reset(5);
  EXPECT_TRUE(t.add(1, {Phase::Propose, Lid{}, ReplyOpcode::SeenLowerAcc,
                        AcceptedPayload{{3, 0}, {1, 0}, Value::from_u64(1, 8), {1, 0}}}));
  EXPECT_FALSE(t.add(1, {Phase::Propose, Lid{}, ReplyOpcode::Ack, std::monostate{}}));
  EXPECT_TRUE(t.add(2, {Phase::Propose, Lid{}, ReplyOpcode::SeenLowerAcc,
                        AcceptedPayload{{4, 1}, {1, 2}, Value::from_u64(2, 8), {1, 0}}}));
  EXPECT_TRUE(t.add(3, {Phase::Propose, Lid{}, ReplyOpcode::Ack, std::monostate{}}));
  EXPECT_TRUE(t.add(4, {Phase::Propose, Lid{}, ReplyOpcode::LogTooHigh, std::monostate{}}));
  EXPECT_FALSE(t.add(9, {Phase::Propose, Lid{}, ReplyOpcode::Ack, std::monostate{}}));
  EXPECT_EQ(t.replies, 4u);
  EXPECT_EQ(t.acks(), 1u);
  EXPECT_EQ(t.nacks(), 1u);
  ASSERT_TRUE(t.lower_acc.has_value());
  EXPECT_EQ(t.lower_acc->rmw_id, (RmwId{1, 2}));
}

TEST(EngineConfig, ValidationNamesField) {
  EngineConfig c;
  c.machine_count = 2;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("machines"), std::string::npos);
  }
  c = {};
  c.value_width = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.sessions_per_machine = 2000;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(EngineConfig{}.validate());
}

TEST(Machine, SingleRmwCommitsThroughDirectDelivery) {
  // Deliver everything immediately in a fixed order; one FAA must commit on every machine.
  EngineConfig cfg;
  cfg.machine_count = 3;
  cfg.sessions_per_machine = 1;
  cfg.value_width = 8;
  std::vector<Machine> ms;
  ms.reserve(3);
  for (MachineId i = 0; i < 3; ++i) ms.emplace_back(i, cfg);
  ms[0].submit(0, {OpKind::Faa, "k", Value::from_u64(4, 8), {}, 0});
  for (Tick now = 0; now < 50; ++now) {
    for (auto& m : ms) {
      for (auto& env : m.tick(now)) ms[env.to].deliver(std::move(env));
    }
  }
  for (const auto& m : ms) {
    const auto* p = m.kvs().find("k");
    ASSERT_NE(p, nullptr);
    EXPECT_EQ(p->last_committed_log_no, 1u);
    EXPECT_EQ(p->value.as_u64(), 4u);
  }
  EXPECT_TRUE(ms[0].session_idle(0));
  EXPECT_TRUE(ms[0].quiescent());
}
