#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "fedorch/data/partition.hpp"
#include "fedorch/policy.hpp"
#include "fedorch/rng.hpp"

namespace fedorch {
namespace {

std::vector<LearnerProfile> profiles(const std::vector<std::size_t>& sizes, double t) {
  std::vector<LearnerProfile> out;
  for (std::size_t k = 0; k < sizes.size(); ++k) out.push_back({k, sizes[k], 1, t});
  return out;
}

TEST(SemiSync, TwoLearnerExample) {
  const auto p = profiles({1000, 4000}, 0.01);
  const auto plan = semisync_allocations(p, 2.0);
  EXPECT_NEAR(*plan.t_max, 80.0, 1e-9);
  EXPECT_EQ(plan.batches, (std::vector<std::uint64_t>{8000, 8000}));
}

TEST(Sync, TwoLearnerExample) {
  const auto p = profiles({1000, 4000}, 0.01);
  const auto plan = sync_allocations(p, SyncPolicy{4});
  EXPECT_FALSE(plan.t_max.has_value());
  EXPECT_EQ(plan.batches, (std::vector<std::uint64_t>{4000, 16000}));
}

TEST(SemiSync, ReferenceHousingSchedule) {
  // Largest shard around 2333 rows at 0.12 s per batch, lambda 4.
  for (std::size_t largest : {2333u, 2334u}) {
    const auto p = profiles({largest, 1667, 1253, 1003, 752, 585, 418, 344}, 0.12);
    const auto plan = semisync_allocations(p, 4.0);
    EXPECT_NEAR(*plan.t_max, 1120.0, 0.05 * 1120.0);
    for (auto b : plan.batches) EXPECT_NEAR(static_cast<double>(b), 9300.0, 0.05 * 9300.0);
  }
}

TEST(SemiSync, ExactQuotientDoesNotLoseABatch) {
  // Epoch of exactly 280 s: t_max = 1120 and 1120 / 0.12 = 9333.33.
  std::vector<LearnerProfile> p{{0, 280, 1, 1.0}, {1, 500, 1, 0.12}};
  const auto plan = semisync_allocations(p, 4.0);
  EXPECT_DOUBLE_EQ(*plan.t_max, 1120.0);
  EXPECT_EQ(plan.batches[0], 1120u);
  EXPECT_EQ(plan.batches[1], 9333u);
  // 4 * 3 * 0.1 / 0.1 is 12 in exact arithmetic.
  std::vector<LearnerProfile> q{{0, 3, 1, 0.1}};
  EXPECT_EQ(semisync_allocations(q, 4.0).batches[0], 12u);
}

TEST(SemiSync, AtLeastOneBatch) {
  std::vector<LearnerProfile> p{{0, 1, 1, 0.001}, {1, 1, 1, 10.0}};
  const auto plan = semisync_allocations(p, 0.01);
  EXPECT_EQ(plan.batches[1], 1u);
}

TEST(SemiSync, BatchSizeRoundsEpochUp) {
  std::vector<LearnerProfile> p{{0, 10, 3, 1.0}};
  EXPECT_EQ(p[0].batches_per_epoch(), 4u);
  EXPECT_DOUBLE_EQ(epoch_time(p[0]), 4.0);
  EXPECT_DOUBLE_EQ(compute_tmax(p, 2.0), 8.0);
}

TEST(SemiSync, IdleBelowOneBatch) {
  Rng rng(9);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<LearnerProfile> p;
    for (std::size_t k = 0, n = 1 + rng.below(12); k < n; ++k) {
      p.push_back({k, 1 + rng.below(5000), 1 + rng.below(64), rng.uniform(0.001, 2.0)});
    }
    const double lambda = rng.uniform(0.5, 8.0);
    const auto plan = semisync_allocations(p, lambda);
    const auto busy = busy_time(p, plan);
    for (std::size_t k = 0; k < p.size(); ++k) {
      EXPECT_LE(busy[k], *plan.t_max + 1e-9 * *plan.t_max + (plan.batches[k] == 1 ? p[k].batch_time : 0.0));
      if (plan.batches[k] > 1) {
        EXPECT_GT(busy[k], *plan.t_max - p[k].batch_time - 1e-9);
      }
    }
  }
}

TEST(SemiSync, EqualBatchTimesGiveEqualBatchCounts) {
  Rng rng(10);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::size_t> sizes;
    for (std::size_t k = 0, n = 1 + rng.below(10); k < n; ++k) sizes.push_back(1 + rng.below(5000));
    const auto plan = semisync_allocations(profiles(sizes, rng.uniform(0.01, 1.0)), rng.uniform(1.0, 6.0));
    EXPECT_TRUE(std::all_of(plan.batches.begin(), plan.batches.end(),
                            [&](auto b) { return b == plan.batches.front(); }));
  }
}

TEST(SemiSync, MonotoneInLambdaAndSlowestEpoch) {
  Rng rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<LearnerProfile> p;
    for (std::size_t k = 0, n = 1 + rng.below(6); k < n; ++k) {
      p.push_back({k, 1 + rng.below(2000), 1, rng.uniform(0.01, 1.0)});
    }
    const double lambda = rng.uniform(0.5, 6.0);
    const auto base = semisync_allocations(p, lambda);
    const auto more = semisync_allocations(p, lambda * 1.5);
    for (std::size_t k = 0; k < p.size(); ++k) EXPECT_GE(more.batches[k], base.batches[k]);

    auto slowest = std::max_element(p.begin(), p.end(), [](const auto& a, const auto& b) {
      return epoch_time(a) < epoch_time(b);
    });
    auto bigger = p;
    bigger[static_cast<std::size_t>(slowest - p.begin())].num_examples += 100;
    EXPECT_GE(compute_tmax(bigger, lambda), *base.t_max);
  }
}

TEST(Sync, SkewedPresetIdleExceedsQuarterRound) {
  const auto f = skewed_preset_fractions();
  std::vector<std::size_t> sizes;
  for (double x : f) sizes.push_back(static_cast<std::size_t>(std::llround(x * 8356)));
  const auto p = profiles(sizes, 0.12);
  const auto plan = sync_allocations(p, SyncPolicy{4});
  const auto idle = idle_time(p, plan);
  const auto busy = busy_time(p, plan);
  const double round = *std::max_element(busy.begin(), busy.end());
  EXPECT_GT(idle.back(), 0.25 * round);
  EXPECT_EQ(*std::min_element(idle.begin(), idle.end()), 0.0);
}

TEST(Allocate, DispatchesOnPolicy) {
  const auto p = profiles({10, 20}, 0.5);
  EXPECT_EQ(allocate(p, SyncPolicy{2}), sync_allocations(p, SyncPolicy{2}));
  EXPECT_EQ(allocate(p, SemiSyncPolicy{3.0}), semisync_allocations(p, 3.0));
  EXPECT_EQ(policy_tag(SyncPolicy{}), "sync");
  EXPECT_EQ(policy_tag(SemiSyncPolicy{}), "semisync");
}

TEST(Validation, RejectsBadInputs) {
  EXPECT_THROW(validate_policy(SyncPolicy{0}), InvalidInput);
  EXPECT_THROW(validate_policy(SemiSyncPolicy{0.0}), InvalidInput);
  EXPECT_THROW(validate_policy(SemiSyncPolicy{-1.0}), InvalidInput);
  EXPECT_THROW(semisync_allocations(profiles({10}, 0.0), 4.0), InvalidInput);
  EXPECT_THROW(semisync_allocations(profiles({0}, 0.1), 4.0), InvalidInput);
  EXPECT_THROW(semisync_allocations(std::vector<LearnerProfile>{}, 4.0), InvalidInput);
  std::vector<LearnerProfile> zero_batch{{0, 10, 0, 0.1}};
  EXPECT_THROW(sync_allocations(zero_batch, SyncPolicy{1}), InvalidInput);
  // Sync does not need batch times.
  EXPECT_NO_THROW(sync_allocations(profiles({10}, 0.0), SyncPolicy{1}));
}

}  // namespace
}  // namespace fedorch
