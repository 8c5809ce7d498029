#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedorch/error.hpp"

namespace fedorch {

// One named, shaped slice of a flat parameter vector.
struct Segment {
  std::string name;
  std::vector<std::size_t> shape;

  std::size_t size() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>{});
  }

  bool operator==(const Segment&) const = default;
};

using Layout = std::vector<Segment>;

inline std::size_t layout_size(const Layout& layout) {
  std::size_t total = 0;
  for (const auto& s : layout) total += s.size();
  return total;
}

// Layouts are wire-compatible when names and element counts agree; shape is
// local metadata and is not transmitted.
inline bool layouts_compatible(const Layout& a, const Layout& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].size() != b[i].size()) return false;
  }
  return true;
}

/// Flat vector of 64-bit model weights plus the layout that names its slices.
class ParameterVector {
 public:
  ParameterVector() = default;

  ParameterVector(Layout layout, std::vector<double> values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    if (layout_size(layout_) != values_.size()) {
      throw InvalidInput("parameter layout describes " +
                         std::to_string(layout_size(layout_)) +
                         " values but " + std::to_string(values_.size()) +
                         " were supplied");
    }
  }

  static ParameterVector zeros(Layout layout) {
    const std::size_t n = layout_size(layout);
    return ParameterVector(std::move(layout), std::vector<double>(n, 0.0));
  }

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  const Layout& layout() const noexcept { return layout_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  // Values of the named segment.
  std::span<const double> segment(const std::string& name) const {
    std::size_t offset = 0;
    for (const auto& s : layout_) {
      if (s.name == name) return std::span(values_).subspan(offset, s.size());
      offset += s.size();
    }
    throw InvalidInput("no parameter segment named '" + name + "'");
  }

  bool all_finite() const noexcept {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  // Numeric equality; see bitwise_equal for exact bit patterns.
  bool operator==(const ParameterVector&) const = default;

 private:
  Layout layout_;
  std::vector<double> values_;
};

inline bool bitwise_equal(const ParameterVector& a, const ParameterVector& b) {
  if (a.layout() != b.layout()) return false;
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(va[i]) !=
        std::bit_cast<std::uint64_t>(vb[i])) {
      return false;
    }
  }
  return true;
}

}  // namespace fedorch
