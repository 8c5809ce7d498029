#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "fedorch/data/partition.hpp"
#include "fedorch/error.hpp"
#include "fedorch/model/dataset.hpp"

namespace fedorch {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace detail

/// Reads a header-first CSV whose last column is the target. Rows are 1-based
/// data rows (the header is row 0) in error messages.
inline Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open CSV file " + path.string());

  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) {
    throw InvalidInput(path.string() + ": missing header row");
  }
  const std::size_t width = detail::split_commas(line).size();
  if (width < 2) {
    throw InvalidInput(path.string() + ": need at least one feature and a target column");
  }

  std::vector<double> features;
  std::vector<double> targets;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_commas(line);
    if (cells.size() != width) {
      throw InvalidInput(fmt::format("{}: row {} has {} columns, header has {}",
                                     path.string(), row, cells.size(), width));
    }
    for (std::size_t col = 0; col < width; ++col) {
      const auto cell = cells[col];
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty()) {
        throw InvalidInput(fmt::format("{}: row {}, column {}: cannot parse '{}'",
                                       path.string(), row, col + 1, cell));
      }
      if (!std::isfinite(value)) {
        throw InvalidInput(fmt::format("{}: row {}, column {}: non-finite value '{}'",
                                       path.string(), row, col + 1, cell));
      }
      (col + 1 == width ? targets : features).push_back(value);
    }
  }
  if (targets.empty()) throw InvalidInput(path.string() + ": no data rows");
  return Dataset(width - 1, std::move(features), std::move(targets));
}

inline std::vector<std::string> default_header(std::size_t num_features) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < num_features; ++j) names.push_back("x" + std::to_string(j));
  names.push_back("y");
  return names;
}

// Shortest round-trippable decimal form of every value.
inline void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write CSV file " + path.string());
  const auto header = default_header(data.cols());
  out << fmt::format("{}\n", fmt::join(header, ","));
  for (std::size_t i = 0; i < data.rows(); ++i) {
    out << fmt::format("{},{}\n", fmt::join(data.row(i), ","), data.target(i));
  }
}

struct ShardSummary {
  std::size_t learner_index = 0;
  std::size_t rows = 0;
  double target_min = 0.0;
  double target_max = 0.0;
  double target_mean = 0.0;
};

inline ShardSummary summarize(const Shard& shard) {
  const auto t = shard.data.targets();
  ShardSummary s;
  s.learner_index = shard.learner_index;
  s.rows = t.size();
  s.target_min = *std::min_element(t.begin(), t.end());
  s.target_max = *std::max_element(t.begin(), t.end());
  double sum = 0.0;
  for (double v : t) sum += v;
  s.target_mean = sum / static_cast<double>(t.size());
  return s;
}

/// Writes learner_NNN.csv per shard plus manifest.csv
/// (learner_index,rows,target_min,target_max,target_mean).
inline std::vector<ShardSummary> export_shards(const std::filesystem::path& dir,
                                               const std::vector<Shard>& shards) {
  std::filesystem::create_directories(dir);
  std::vector<ShardSummary> summaries;
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw InvalidInput("cannot write manifest in " + dir.string());
  manifest << "learner_index,rows,target_min,target_max,target_mean\n";
  for (const auto& shard : shards) {
    write_csv(dir / fmt::format("learner_{:03}.csv", shard.learner_index), shard.data);
    const auto s = summarize(shard);
    manifest << fmt::format("{},{},{},{},{}\n", s.learner_index, s.rows,
                            s.target_min, s.target_max, s.target_mean);
    summaries.push_back(s);
  }
  return summaries;
}

}  // namespace fedorch
