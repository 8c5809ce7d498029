#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fedorch/config.hpp"
#include "fedorch/data/csv.hpp"
#include "fedorch/data/partition.hpp"
#include "fedorch/data/synthetic.hpp"
#include "fedorch/harness.hpp"
#include "fedorch/rng.hpp"

namespace fedorch {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fedorch_data_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

Dataset targets_only(std::vector<double> targets) {
  std::vector<double> features(targets.size());
  std::iota(features.begin(), features.end(), 0.0);
  return Dataset(1, features, std::move(targets));
}

// Multiset of rows (features followed by target), for partition checks.
std::multiset<std::vector<double>> row_multiset(const Dataset& d) {
  std::multiset<std::vector<double>> rows;
  for (std::size_t i = 0; i < d.rows(); ++i) {
    std::vector<double> r(d.row(i).begin(), d.row(i).end());
    r.push_back(d.target(i));
    rows.insert(std::move(r));
  }
  return rows;
}

std::vector<std::size_t> shard_sizes(const std::vector<Shard>& shards) {
  std::vector<std::size_t> s;
  for (const auto& sh : shards) s.push_back(sh.data.rows());
  return s;
}

SyntheticTaskSpec task(double noise) {
  SyntheticTaskSpec s;
  s.input_dim = 5;
  s.noise_sigma = noise;
  return s;
}

TEST(Synthetic, NoiselessTargetsStayInRange) {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto d = generate_synthetic(task(0.0), 500, seed);
    for (double t : d.targets()) {
      EXPECT_GE(t, 45.0);
      EXPECT_LE(t, 81.0);
    }
    const auto [lo, hi] = std::minmax_element(d.targets().begin(), d.targets().end());
    EXPECT_EQ(*lo, 45.0);
    EXPECT_EQ(*hi, 81.0);
  }
}

TEST(Synthetic, Deterministic) {
  EXPECT_EQ(generate_synthetic(task(0.5), 100, 42), generate_synthetic(task(0.5), 100, 42));
  EXPECT_NE(generate_synthetic(task(0.5), 100, 42), generate_synthetic(task(0.5), 100, 43));
}

TEST(Synthetic, NoisyTargetsWithinFourSigmaEnvelope) {
  const auto d = generate_synthetic(task(0.5), 2000, 5);
  for (double t : d.targets()) {
    EXPECT_GE(t, 45.0 - 4 * 0.5 - 1.0);  // 4 sigma plus a margin for 2000 draws
    EXPECT_LE(t, 81.0 + 4 * 0.5 + 1.0);
  }
}

TEST(Synthetic, HarnessSplitMatchesReferenceCounts) {
  TaskConfig t;
  t.synthetic = task(0.5);
  t.train_size = 8356;
  t.test_size = 2090;
  const auto data = load_task(t);
  EXPECT_EQ(data.train.rows(), 8356u);
  EXPECT_EQ(data.test.rows(), 2090u);
}

TEST(BucketByTarget, SortsSingletonBuckets) {
  const auto buckets = bucket_by_target(targets_only({5, 1, 3}), 3);
  ASSERT_EQ(buckets.size(), 3u);
  // rows holding targets 1, 3, 5
  EXPECT_EQ(buckets[0], std::vector<std::size_t>{1});
  EXPECT_EQ(buckets[1], std::vector<std::size_t>{2});
  EXPECT_EQ(buckets[2], std::vector<std::size_t>{0});
}

TEST(BucketByTarget, QuantileSizes) {
  const auto buckets = bucket_by_target(targets_only({9, 8, 7, 6, 5, 4, 3, 2, 1, 0}), 4);
  std::vector<std::size_t> sizes;
  for (const auto& b : buckets) sizes.push_back(b.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 2, 2}));
}

TEST(BucketByTarget, TiesKeepRowOrder) {
  const auto buckets = bucket_by_target(targets_only({2, 1, 2, 1}), 2);
  EXPECT_EQ(buckets[0], (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(buckets[1], (std::vector<std::size_t>{0, 2}));
}

TEST(BucketByTarget, ContiguousRanges) {
  Rng rng(8);
  std::vector<double> t(800);
  for (auto& v : t) v = rng.uniform(45, 81);
  const auto data = targets_only(t);
  const auto buckets = bucket_by_target(data, 8);
  for (std::size_t a = 0; a < buckets.size(); ++a) {
    for (std::size_t b = a + 2; b < buckets.size(); ++b) {
      double max_a = -1e300;
      double min_b = 1e300;
      for (auto i : buckets[a]) max_a = std::max(max_a, data.target(i));
      for (auto i : buckets[b]) min_b = std::min(min_b, data.target(i));
      EXPECT_LT(max_a, min_b);
    }
  }
}

TEST(BucketByTarget, RejectsTooManyBuckets) {
  EXPECT_THROW(bucket_by_target(targets_only({1, 2}), 3), InvalidInput);
  EXPECT_THROW(bucket_by_target(targets_only({1, 2}), 0), InvalidInput);
}

TEST(Partition, UniformIidReferenceSplit) {
  const auto data = generate_synthetic(task(0.5), 8356, 1);
  PartitionPlan plan{PartitionScheme::uniform_iid, 8, 1, {}, 1990};
  EXPECT_EQ(shard_sizes(partition(data, plan)),
            (std::vector<std::size_t>{1045, 1045, 1045, 1045, 1044, 1044, 1044, 1044}));
}

TEST(Partition, SkewedPresetLargestShard) {
  const auto data = generate_synthetic(task(0.5), 8356, 1);
  PartitionPlan plan{PartitionScheme::skewed_noniid, 8, 1, skewed_preset_fractions(), 1990};
  const auto sizes = shard_sizes(partition(data, plan));
  EXPECT_EQ(*std::max_element(sizes.begin(), sizes.end()), 2398u);
}

TEST(Partition, SingleLearnerGetsInputUnchanged) {
  const auto data = generate_synthetic(task(0.5), 97, 4);
  for (auto scheme : {PartitionScheme::uniform_iid, PartitionScheme::uniform_noniid,
                      PartitionScheme::skewed_noniid}) {
    PartitionPlan plan{scheme, 1, 1, {1.0}, 3};
    const auto shards = partition(data, plan);
    ASSERT_EQ(shards.size(), 1u);
    EXPECT_EQ(shards[0].data, data);
  }
}

TEST(Partition, RejectsBadFractions) {
  const auto data = generate_synthetic(task(0.5), 100, 4);
  auto plan = [](std::vector<double> f) {
    return PartitionPlan{PartitionScheme::skewed_noniid, 3, 1, std::move(f), 1};
  };
  EXPECT_THROW(partition(data, plan({0.5, 0.5})), InvalidInput);
  EXPECT_THROW(partition(data, plan({0.5, 0.6, -0.1})), InvalidInput);
  EXPECT_THROW(partition(data, plan({0.5, 0.3, 0.0})), InvalidInput);
  EXPECT_THROW(partition(data, plan({0.5, 0.3, 0.3})), InvalidInput);
  EXPECT_NO_THROW(partition(data, plan({0.5, 0.3, 0.2 + 1e-12})));
}

TEST(Partition, RejectsMoreLearnersThanRows) {
  const auto data = generate_synthetic(task(0.5), 3, 4);
  EXPECT_THROW(partition(data, PartitionPlan{PartitionScheme::uniform_iid, 4, 1, {}, 1}), InvalidInput);
}

TEST(Partition, ShardsAreExactRowPartition) {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 20 + rng.below(300);
    const std::size_t learners = 1 + rng.below(8);
    const auto data = generate_synthetic(task(0.5), n, rng());
    std::vector<double> fractions(learners);
    double sum = 0.0;
    for (auto& f : fractions) sum += (f = 1.0 + rng.uniform());
    for (auto& f : fractions) f /= sum;
    const auto scheme = static_cast<PartitionScheme>(trial % 3);
    const auto shards = partition(data, PartitionPlan{scheme, learners, 1, fractions, rng()});
    ASSERT_EQ(shards.size(), learners);
    std::multiset<std::vector<double>> joined;
    std::vector<std::size_t> all_rows;
    for (const auto& s : shards) {
      auto part = row_multiset(s.data);
      joined.insert(part.begin(), part.end());
      all_rows.insert(all_rows.end(), s.rows.begin(), s.rows.end());
    }
    EXPECT_EQ(joined, row_multiset(data));
    std::sort(all_rows.begin(), all_rows.end());
    EXPECT_EQ(std::adjacent_find(all_rows.begin(), all_rows.end()), all_rows.end());
    EXPECT_EQ(all_rows.size(), n);
  }
}

TEST(Partition, UniformSchemesBalanced) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 50 + rng.below(500);
    const std::size_t learners = 1 + rng.below(10);
    const auto data = generate_synthetic(task(0.5), n, rng());
    for (auto scheme : {PartitionScheme::uniform_iid, PartitionScheme::uniform_noniid}) {
      const auto sizes = shard_sizes(partition(data, PartitionPlan{scheme, learners, 1, {}, 5}));
      const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
      EXPECT_LE(*hi - *lo, 1u);
    }
  }
}

TEST(Partition, UniformIidShardMeansMatchGlobalMean) {
  const auto data = generate_synthetic(task(0.5), 8000, 77);
  const auto t = data.targets();
  const double mean = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
  double var = 0.0;
  for (double v : t) var += (v - mean) * (v - mean);
  var /= static_cast<double>(t.size() - 1);
  for (const auto& s : partition(data, PartitionPlan{PartitionScheme::uniform_iid, 8, 1, {}, 1990})) {
    const auto st = s.data.targets();
    const double m = std::accumulate(st.begin(), st.end(), 0.0) / static_cast<double>(st.size());
    const double se = std::sqrt(var / static_cast<double>(st.size()));
    EXPECT_LT(std::abs(m - mean), 3.0 * se) << "learner " << s.learner_index;
  }
}

TEST(Partition, UniformNonIidShardsHaveNarrowRanges) {
  const auto data = generate_synthetic(task(0.5), 8000, 78);
  const auto t = data.targets();
  const auto [glo, ghi] = std::minmax_element(t.begin(), t.end());
  const double global_width = *ghi - *glo;
  for (std::size_t learners : {4u, 8u}) {
    for (const auto& s : partition(data, PartitionPlan{PartitionScheme::uniform_noniid, learners, 1, {}, 1})) {
      const auto sum = summarize(s);
      EXPECT_LT(sum.target_max - sum.target_min, global_width / 2.0);
    }
  }
}

TEST(Partition, SkewedQuotasExact) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 200 + rng.below(2000);
    const auto data = generate_synthetic(task(0.5), n, rng());
    const auto f = skewed_preset_fractions();
    const auto sizes = shard_sizes(partition(data, PartitionPlan{PartitionScheme::skewed_noniid, 8, 1, f, 1}));
    std::size_t sum = 0;
    for (std::size_t k = 1; k < 8; ++k) {
      EXPECT_EQ(sizes[k], static_cast<std::size_t>(std::llround(f[k] * static_cast<double>(n))));
      sum += sizes[k];
    }
    EXPECT_EQ(sizes[0], n - sum);  // largest fraction absorbs the residual
  }
}

TEST(Csv, ParsesFeaturesAndTargets) {
  const auto dir = temp_dir("parse");
  const auto d = load_csv(write_file(dir / "a.csv", "a,b,y\n1,2,3\n4,5,6\n"));
  EXPECT_EQ(d, Dataset(2, {1, 2, 4, 5}, {3, 6}));
}

TEST(Csv, RejectsEmptyDataSection) {
  const auto dir = temp_dir("empty");
  EXPECT_THROW(load_csv(write_file(dir / "a.csv", "a,b,y\n")), InvalidInput);
}

TEST(Csv, RejectsNan) {
  const auto dir = temp_dir("nan");
  EXPECT_THROW(load_csv(write_file(dir / "a.csv", "a,y\n1,2\nNaN,3\n")), InvalidInput);
  EXPECT_THROW(load_csv(write_file(dir / "b.csv", "a,y\n1,inf\n")), InvalidInput);
}

TEST(Csv, RejectsRaggedRows) {
  const auto dir = temp_dir("ragged");
  EXPECT_THROW(load_csv(write_file(dir / "a.csv", "a,b,y\n1,2,3\n4,5\n")), InvalidInput);
}

TEST(Csv, UnparsableCellNamesRowAndColumn) {
  const auto dir = temp_dir("cell");
  try {
    load_csv(write_file(dir / "a.csv", "a,b,y\n1,2,3\n4,five,6\n"));
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("row 2, column 2"), std::string::npos) << e.what();
  }
}

TEST(Csv, ExportedShardsReloadExactly) {
  const auto dir = temp_dir("export");
  const auto data = generate_synthetic(task(0.5), 300, 6);
  const auto shards = partition(data, PartitionPlan{PartitionScheme::uniform_noniid, 3, 1, {}, 1});
  const auto summaries = export_shards(dir, shards);
  for (const auto& s : shards) {
    char name[32];
    std::snprintf(name, sizeof(name), "learner_%03zu.csv", s.learner_index);
    EXPECT_EQ(load_csv(dir / name), s.data);
  }
  std::ifstream manifest(dir / "manifest.csv");
  std::string header;
  std::getline(manifest, header);
  EXPECT_EQ(header, "learner_index,rows,target_min,target_max,target_mean");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(manifest, line)) ++lines;
  EXPECT_EQ(lines, 3u);
  EXPECT_EQ(summaries[0].rows + summaries[1].rows + summaries[2].rows, 300u);
}

}  // namespace
}  // namespace fedorch
