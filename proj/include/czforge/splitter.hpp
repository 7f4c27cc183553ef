#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "czforge/annotations.hpp"

namespace czforge::split {

struct SplitSpec {
  /// train, val, test; each >= 0, summing to 1 within 1e-9.
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitReport {
  std::vector<std::string> class_names;
  /// [split][class]
  std::array<std::vector<double>, 3> target;
  std::array<std::vector<std::size_t>, 3> achieved;
  std::array<std::size_t, 3> images{};
};

struct SplitResult {
  /// assignment[i] is the split of records[i].
  std::vector<Split> assignment;
  std::array<std::vector<ImageRecord>, 3> parts;
  SplitReport report;
};

/// Greedy stratified assignment over a seeded shuffle, heaviest records first.
/// Each record goes to the split where it most reduces the per-class shortfall
/// |target - current| summed over the classes it contains; records without
/// objects balance image counts instead. Ties go to train, then val. A final
/// pass moves single records while the total deviation strictly drops.
SplitResult stratified_split(std::span<const ImageRecord> records, const SplitSpec& spec,
                             const ClassRegistry& registry);

std::string report_to_json(const SplitReport& report);
/// Aligned achieved/target table, one row per split.
std::string report_to_text(const SplitReport& report);

}  // namespace czforge::split
