#include <gtest/gtest.h>

#include "kvpaxos/explore.hpp"

using namespace kvpaxos;

namespace {

explore::ExploreConfig two_faa(bool all_aboard, std::size_t depth) {
  explore::ExploreConfig c;
  c.engine.machine_count = 3;
  c.engine.sessions_per_machine = 1;
  c.engine.all_aboard_enabled = all_aboard;
  c.engine.resend_interval = 0;
  c.engine.backoff_threshold = 2;
  c.engine.all_aboard_timeout = 2;
  c.max_depth = depth;
  c.ops = {{0, {OpKind::Faa, "k0", Value::from_u64(1), {}, 0}}, {1, {OpKind::Faa, "k0", Value::from_u64(2), {}, 1}}};
  return c;
}

}  // namespace

TEST(Explore, ClassicPrefixesAreSafeAndBothOrdersOccur) {
  const auto r = explore::run(two_faa(false, 10));
  EXPECT_FALSE(r.violation) << r.detail;
  EXPECT_FALSE(r.state_limit_hit);
  EXPECT_GT(r.depth_cutoffs, 0u);
  EXPECT_EQ(r.finished, r.depth_cutoffs);
  EXPECT_EQ(r.finished_completed, r.finished);
  EXPECT_EQ(r.outcomes, (std::set<std::string>{"k0@1=<1,0> k0@2=<1,1>", "k0@1=<1,1> k0@2=<1,0>"}));
}

TEST(Explore, AllAboardPrefixesAreSafe) {
  const auto r = explore::run(two_faa(true, 9));
  EXPECT_FALSE(r.violation) << r.detail;
  EXPECT_EQ(r.finished_completed, r.finished);
  EXPECT_EQ(r.outcomes.size(), 2u);
}

TEST(Explore, LossyPrefixesAreSafe) {
  auto c = two_faa(true, 6);
  c.allow_drops = true;
  c.engine.resend_interval = 3;
  const auto r = explore::run(c);
  EXPECT_FALSE(r.violation) << r.detail;
  EXPECT_GT(r.states, 0u);
}

TEST(Explore, SingleOpFullyExplores) {
  auto c = two_faa(false, 60);
  c.ops.resize(1);
  const auto r = explore::run(c);
  EXPECT_FALSE(r.violation);
  EXPECT_EQ(r.depth_cutoffs, 0u);
  EXPECT_GT(r.leaves, 0u);
  EXPECT_EQ(r.completed_leaves, r.leaves);
  EXPECT_EQ(r.outcomes, (std::set<std::string>{"k0@1=<1,0>"}));
}

TEST(Explore, BudgetStopsSearch) {
  auto c = two_faa(false, 14);
  c.max_states = 1000;
  const auto r = explore::run(c);
  EXPECT_TRUE(r.state_limit_hit);
}
