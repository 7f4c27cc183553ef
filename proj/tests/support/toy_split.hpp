#pragma once

#include <string>
#include <vector>

#include "czforge/annotations.hpp"

namespace fixture {

/// Twelve images with mixed classes: 12 cones, 8 barriers, 8 beacons.
inline const std::vector<std::vector<long long>>& toy_split_counts() {
  static const std::vector<std::vector<long long>> counts{
      {2, 0, 1}, {1, 1, 0}, {0, 2, 0}, {1, 0, 1}, {3, 0, 0}, {0, 1, 2},
      {1, 1, 1}, {0, 0, 1}, {2, 1, 0}, {0, 1, 0}, {1, 0, 2}, {1, 1, 0},
  };
  return counts;
}

inline std::vector<czforge::ImageRecord> records_from_counts(const std::vector<std::vector<long long>>& counts) {
  std::vector<czforge::ImageRecord> out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    czforge::ImageRecord r{"toy" + std::to_string(i), 64, 64, {}};
    for (std::size_t c = 0; c < counts[i].size(); ++c) {
      for (long long k = 0; k < counts[i][c]; ++k) r.annotations.push_back({static_cast<int>(c), {0.5, 0.5, 0.1, 0.1}});
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fixture
