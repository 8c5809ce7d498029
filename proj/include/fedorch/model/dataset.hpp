#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedorch/error.hpp"

namespace fedorch {

// Non-owning row-major matrix view.
struct MatrixView {
  std::span<const double> data;
  std::size_t cols = 0;

  std::size_t rows() const noexcept { return cols == 0 ? 0 : data.size() / cols; }
  std::span<const double> row(std::size_t i) const noexcept {
    return data.subspan(i * cols, cols);
  }
};

/// n x d row-major feature matrix with one regression target per row.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::size_t num_features, std::vector<double> features,
          std::vector<double> targets)
      : num_features_(num_features),
        features_(std::move(features)),
        targets_(std::move(targets)) {
    if (targets_.empty()) throw InvalidInput("dataset has no rows");
    if (num_features_ == 0) throw InvalidInput("dataset has no feature columns");
    if (features_.size() != targets_.size() * num_features_) {
      throw InvalidInput("feature matrix holds " +
                         std::to_string(features_.size()) + " values, expected " +
                         std::to_string(targets_.size()) + " x " +
                         std::to_string(num_features_));
    }
    for (std::size_t i = 0; i < features_.size(); ++i) {
      if (!std::isfinite(features_[i])) {
        throw InvalidInput("non-finite feature at row " +
                           std::to_string(i / num_features_) + ", column " +
                           std::to_string(i % num_features_));
      }
    }
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      if (!std::isfinite(targets_[i])) {
        throw InvalidInput("non-finite target at row " + std::to_string(i));
      }
    }
  }

  std::size_t rows() const noexcept { return targets_.size(); }
  std::size_t cols() const noexcept { return num_features_; }
  bool empty() const noexcept { return targets_.empty(); }

  std::span<const double> row(std::size_t i) const noexcept {
    return std::span(features_).subspan(i * num_features_, num_features_);
  }
  double target(std::size_t i) const noexcept { return targets_[i]; }

  std::span<const double> features() const noexcept { return features_; }
  MatrixView feature_matrix() const noexcept { return {features_, num_features_}; }
  std::span<const double> targets() const noexcept { return targets_; }

  // Rows in the given order (duplicates allowed).
  Dataset select(std::span<const std::size_t> indices) const {
    std::vector<double> f;
    std::vector<double> t;
    f.reserve(indices.size() * num_features_);
    t.reserve(indices.size());
    for (std::size_t i : indices) {
      if (i >= rows()) throw InvalidInput("row index out of range");
      const auto r = row(i);
      f.insert(f.end(), r.begin(), r.end());
      t.push_back(targets_[i]);
    }
    return Dataset(num_features_, std::move(f), std::move(t));
  }

  Dataset slice(std::size_t begin, std::size_t end) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    return select(idx);
  }

  bool operator==(const Dataset&) const = default;

 private:
  std::size_t num_features_ = 0;
  std::vector<double> features_;
  std::vector<double> targets_;
};

}  // namespace fedorch
