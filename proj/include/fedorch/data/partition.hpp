#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "fedorch/error.hpp"
#include "fedorch/model/dataset.hpp"
#include "fedorch/rng.hpp"

namespace fedorch {

enum class PartitionScheme { uniform_iid, uniform_noniid, skewed_noniid };

struct PartitionPlan {
  PartitionScheme scheme = PartitionScheme::uniform_iid;
  std::size_t num_learners = 1;
  // Non-IID schemes cut the target-sorted rows into
  // num_learners * buckets_per_learner quantile buckets.
  std::size_t buckets_per_learner = 1;
  // Skewed scheme only: one positive fraction per learner, summing to 1.
  std::vector<double> size_fractions;
  std::uint64_t seed = 1990;

  void validate() const {
    if (num_learners == 0) throw InvalidInput("partition.num_learners must be positive");
    if (buckets_per_learner == 0) {
      throw InvalidInput("partition.buckets_per_learner must be positive");
    }
    if (scheme != PartitionScheme::skewed_noniid) return;
    if (size_fractions.size() != num_learners) {
      throw InvalidInput("partition.size_fractions has " +
                         std::to_string(size_fractions.size()) +
                         " entries for " + std::to_string(num_learners) +
                         " learners");
    }
    double sum = 0.0;
    for (double f : size_fractions) {
      if (!(f > 0.0) || !std::isfinite(f)) {
        throw InvalidInput("partition.size_fractions entries must be positive");
      }
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw InvalidInput("partition.size_fractions must sum to 1");
    }
  }
};

// Largest-shard-first skew approximating an 8-site federation where one site
// holds ~2,400 of 8,356 training records.
inline std::vector<double> skewed_preset_fractions() {
  return {0.287, 0.2, 0.15, 0.12, 0.09, 0.07, 0.05, 0.033};
}

struct Shard {
  std::size_t learner_index = 0;
  // Source row numbers, ascending.
  std::vector<std::size_t> rows;
  Dataset data;
};

// Row indices sorted by target; ties keep original order.
inline std::vector<std::size_t> target_order(const Dataset& data) {
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.target(a) < data.target(b);
  });
  return order;
}

// Splits n items into k contiguous groups whose sizes differ by at most one;
// the first n % k groups get the extra item.
inline std::vector<std::size_t> even_sizes(std::size_t n, std::size_t k) {
  std::vector<std::size_t> sizes(k, n / k);
  for (std::size_t i = 0; i < n % k; ++i) ++sizes[i];
  return sizes;
}

/// Quantile buckets over the target: rows sorted by (target, row index), cut
/// into num_buckets contiguous groups. Each bucket lists source row indices.
inline std::vector<std::vector<std::size_t>> bucket_by_target(
    const Dataset& data, std::size_t num_buckets) {
  if (num_buckets == 0) throw InvalidInput("bucket count must be positive");
  if (num_buckets > data.rows()) {
    throw InvalidInput("cannot cut " + std::to_string(data.rows()) +
                       " rows into " + std::to_string(num_buckets) + " buckets");
  }
  const auto order = target_order(data);
  std::vector<std::vector<std::size_t>> buckets;
  std::size_t pos = 0;
  for (std::size_t size : even_sizes(order.size(), num_buckets)) {
    buckets.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                         order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return buckets;
}

// Quota per learner for the skewed scheme: round(f_k * n), with the rounding
// residual absorbed by the learner holding the largest fraction.
inline std::vector<std::size_t> skewed_quotas(std::size_t n,
                                              const std::vector<double>& fractions) {
  std::vector<long long> quota(fractions.size());
  long long assigned = 0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    quota[k] = std::llround(fractions[k] * static_cast<double>(n));
    assigned += quota[k];
  }
  const auto largest = static_cast<std::size_t>(
      std::max_element(fractions.begin(), fractions.end()) - fractions.begin());
  quota[largest] += static_cast<long long>(n) - assigned;
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < quota.size(); ++k) {
    if (quota[k] < 1) {
      throw InvalidInput("partition.size_fractions[" + std::to_string(k) +
                         "] leaves learner " + std::to_string(k) +
                         " with no rows for n=" + std::to_string(n));
    }
    out.push_back(static_cast<std::size_t>(quota[k]));
  }
  return out;
}

/// Splits data into plan.num_learners disjoint shards covering every row.
///
/// uniform_iid: seeded shuffle, then round-robin. uniform_noniid: target
/// quantile buckets, learner k takes the k-th contiguous bucket group of equal
/// size. skewed_noniid: rows in target order fill learner quotas in index
/// order. Each shard keeps its rows in original relative order, so with one
/// learner the shard is the input unchanged.
inline std::vector<Shard> partition(const Dataset& data, const PartitionPlan& plan) {
  plan.validate();
  const std::size_t n = data.rows();
  const std::size_t learners = plan.num_learners;
  if (learners > n) {
    throw InvalidInput("partition: " + std::to_string(learners) +
                       " learners for " + std::to_string(n) + " rows");
  }

  std::vector<std::vector<std::size_t>> members(learners);
  switch (plan.scheme) {
    case PartitionScheme::uniform_iid: {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(plan.seed);
      rng.shuffle(std::span(order));
      for (std::size_t i = 0; i < n; ++i) members[i % learners].push_back(order[i]);
      break;
    }
    case PartitionScheme::uniform_noniid: {
      // Bucket boundaries nest inside learner boundaries, so both bucket and
      // shard sizes stay within one row of each other.
      const auto order = target_order(data);
      std::size_t pos = 0;
      const auto sizes = even_sizes(n, learners);
      for (std::size_t k = 0; k < learners; ++k) {
        members[k].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                          order.begin() + static_cast<std::ptrdiff_t>(pos + sizes[k]));
        pos += sizes[k];
      }
      break;
    }
    case PartitionScheme::skewed_noniid: {
      const auto order = target_order(data);
      const auto quotas = skewed_quotas(n, plan.size_fractions);
      std::size_t pos = 0;
      for (std::size_t k = 0; k < learners; ++k) {
        members[k].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                          order.begin() + static_cast<std::ptrdiff_t>(pos + quotas[k]));
        pos += quotas[k];
      }
      break;
    }
  }

  std::vector<Shard> shards;
  shards.reserve(learners);
  for (std::size_t k = 0; k < learners; ++k) {
    std::sort(members[k].begin(), members[k].end());
    Dataset shard_data = data.select(members[k]);
    shards.push_back({k, std::move(members[k]), std::move(shard_data)});
  }
  return shards;
}

inline const char* to_string(PartitionScheme s) {
  switch (s) {
    case PartitionScheme::uniform_iid: return "uniform_iid";
    case PartitionScheme::uniform_noniid: return "uniform_noniid";
    case PartitionScheme::skewed_noniid: return "skewed_noniid";
  }
  return "?";
}

}  // namespace fedorch
