#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <gtest/gtest.h>

#include "fedorch/aggregation.hpp"
#include "fedorch/rng.hpp"

namespace fedorch {
namespace {

Layout two_segments(std::size_t a, std::size_t b) {
  return {{"w", {a}}, {"b", {b}}};
}

ParameterVector vec(std::vector<double> v) {
  const auto n = v.size();
  return ParameterVector({{"w", {n}}}, std::move(v));
}

ParameterVector random_params(Rng& rng, const Layout& layout) {
  auto p = ParameterVector::zeros(layout);
  for (auto& v : p.values()) v = rng.uniform(-10.0, 10.0);
  return p;
}

// Numerator and denominator accumulated separately, division last.
std::vector<double> oracle(const std::vector<std::pair<ParameterVector, double>>& models) {
  const std::size_t n = models.front().first.size();
  std::vector<long double> num(n, 0.0L);
  long double den = 0.0L;
  for (const auto& [p, w] : models) {
    den += w;
    for (std::size_t i = 0; i < n; ++i) num[i] += static_cast<long double>(w) * p[i];
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(num[i] / den);
  return out;
}

void expect_close(std::span<const double> got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_LE(std::abs(got[i] - want[i]), tol * std::max(1.0, std::abs(want[i]))) << "index " << i;
  }
}

TEST(WeightedAverage, EqualWeights) {
  const auto avg = weighted_average({{vec({1, 2}), 1.0}, {vec({3, 4}), 1.0}});
  EXPECT_EQ(std::vector<double>(avg.values().begin(), avg.values().end()), (std::vector<double>{2, 3}));
}

TEST(WeightedAverage, ExampleCountWeights) {
  const auto avg = weighted_average({{vec({1, 2}), 3.0}, {vec({3, 4}), 1.0}});
  EXPECT_EQ(std::vector<double>(avg.values().begin(), avg.values().end()), (std::vector<double>{1.5, 2.5}));
}

TEST(WeightedAverage, SingleModelBitwise) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_params(rng, two_segments(7, 3));
    const auto avg = weighted_average({{p, rng.uniform(1.0, 5000.0)}});
    EXPECT_TRUE(bitwise_equal(avg, p));
  }
}

TEST(WeightedAverage, MatchesOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto layout = two_segments(1 + rng.below(20), 1 + rng.below(5));
    std::vector<std::pair<ParameterVector, double>> models;
    const std::size_t k = 1 + rng.below(10);
    for (std::size_t i = 0; i < k; ++i) {
      models.emplace_back(random_params(rng, layout), static_cast<double>(1 + rng.below(3000)));
    }
    expect_close(weighted_average(models).values(), oracle(models), 1e-12);
  }
}

TEST(WeightedAverage, IdenticalModelsAreFixedPoint) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_params(rng, two_segments(5, 2));
    std::vector<std::pair<ParameterVector, double>> models;
    for (std::size_t i = 0, k = 2 + rng.below(8); i < k; ++i) {
      models.emplace_back(p, rng.uniform(0.5, 100.0));
    }
    const std::vector<double> want(p.values().begin(), p.values().end());
    expect_close(weighted_average(models).values(), want, 1e-12);
  }
}

TEST(WeightedAverage, InvariantToWeightScaling) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto layout = two_segments(6, 2);
    std::vector<std::pair<ParameterVector, double>> models;
    for (std::size_t i = 0, k = 1 + rng.below(8); i < k; ++i) {
      models.emplace_back(random_params(rng, layout), rng.uniform(1.0, 100.0));
    }
    auto scaled = models;
    const double c = rng.uniform(0.01, 1000.0);
    for (auto& m : scaled) m.second *= c;
    const auto a = weighted_average(models);
    expect_close(weighted_average(scaled).values(),
                 std::vector<double>(a.values().begin(), a.values().end()), 1e-12);
  }
}

TEST(WeightedAverage, InvariantToPermutation) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const auto layout = two_segments(6, 2);
    std::vector<std::pair<ParameterVector, double>> models;
    for (std::size_t i = 0, k = 2 + rng.below(8); i < k; ++i) {
      models.emplace_back(random_params(rng, layout), rng.uniform(1.0, 100.0));
    }
    auto shuffled = models;
    rng.shuffle(std::span(shuffled));
    const auto a = weighted_average(models);
    expect_close(weighted_average(shuffled).values(),
                 std::vector<double>(a.values().begin(), a.values().end()), 1e-12);
  }
}

TEST(WeightedAverage, RejectsNonPositiveWeights) {
  EXPECT_THROW(weighted_average({{vec({1}), 0.0}}), InvalidInput);
  EXPECT_THROW(weighted_average({{vec({1}), 1.0}, {vec({2}), -1.0}}), InvalidInput);
  EXPECT_THROW(weighted_average({{vec({1}), std::numeric_limits<double>::infinity()}}), InvalidInput);
}

TEST(WeightedAverage, RejectsEmptyInput) {
  EXPECT_THROW(weighted_average(std::vector<std::pair<ParameterVector, double>>{}), InvalidInput);
}

TEST(WeightedAverage, RejectsMismatchedLayouts) {
  EXPECT_THROW(weighted_average({{vec({1, 2}), 1.0}, {vec({1, 2, 3}), 1.0}}), InvalidInput);
  const ParameterVector renamed({{"v", {2}}}, {1, 2});
  EXPECT_THROW(weighted_average({{vec({1, 2}), 1.0}, {renamed, 1.0}}), InvalidInput);
}

TEST(WeightedAverage, RejectsNonFiniteParameters) {
  EXPECT_THROW(weighted_average({{vec({1, std::nan("")}), 1.0}}), InvalidInput);
}

TEST(Weights, FromExampleCounts) {
  const std::vector<std::size_t> n{100, 300};
  const auto w = weights_from_examples(n);
  EXPECT_EQ(w.raw, (std::vector<double>{100, 300}));
  EXPECT_EQ(w.normalized, (std::vector<double>{0.25, 0.75}));
  const std::vector<std::size_t> zero{100, 0};
  EXPECT_THROW(weights_from_examples(zero), InvalidInput);
}

}  // namespace
}  // namespace fedorch
