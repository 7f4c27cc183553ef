#include "czforge/splitter.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "czforge/error.hpp"
#include "czforge/random.hpp"

namespace czforge::split {

void SplitSpec::validate() const {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ValidationError("split ratios must be non-negative");
    sum += r;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
}

SplitResult stratified_split(std::span<const ImageRecord> records, const SplitSpec& spec,
                             const ClassRegistry& registry) {
  spec.validate();
  if (records.empty()) throw ValidationError("cannot split an empty record set");
  const std::size_t nc = registry.size();

  std::vector<std::vector<std::size_t>> per_record(records.size(), std::vector<std::size_t>(nc, 0));
  std::vector<std::size_t> totals(nc, 0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (const Annotation& a : records[i].annotations) {
      if (!registry.contains(a.class_id)) throw DataError("unknown class in record '" + records[i].image_id + "'");
      ++per_record[i][static_cast<std::size_t>(a.class_id)];
      ++totals[static_cast<std::size_t>(a.class_id)];
    }
  }

  SplitResult result;
  result.assignment.assign(records.size(), Split::kTrain);
  SplitReport& rep = result.report;
  rep.class_names = registry.names();
  for (std::size_t s = 0; s < 3; ++s) {
    rep.target[s].resize(nc);
    rep.achieved[s].assign(nc, 0);
    for (std::size_t c = 0; c < nc; ++c) rep.target[s][c] = spec.ratios[s] * static_cast<double>(totals[c]);
  }

  // Fisher-Yates with our own stream so the order is portable.
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(spec.seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  // Heavy records first; the shuffle only orders records of equal weight.
  std::vector<std::size_t> weight(records.size(), 0);
  for (std::size_t i = 0; i < records.size(); ++i) weight[i] = records[i].annotations.size();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weight[a] > weight[b]; });

  const double n_images = static_cast<double>(records.size());
  for (std::size_t idx : order) {
    const auto& counts = per_record[idx];
    const bool has_objects = std::any_of(counts.begin(), counts.end(), [](std::size_t v) { return v > 0; });
    std::size_t best = 0;
    double best_deficit = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < 3; ++s) {
      if (spec.ratios[s] == 0.0) continue;
      double deficit = 0.0;
      if (has_objects) {
        for (std::size_t c = 0; c < nc; ++c) {
          if (counts[c] == 0) continue;
          const double gap = rep.target[s][c] - static_cast<double>(rep.achieved[s][c]);
          deficit += std::fabs(gap) - std::fabs(gap - static_cast<double>(counts[c]));
        }
      } else {
        deficit = spec.ratios[s] * n_images - static_cast<double>(rep.images[s]);
      }
      if (deficit > best_deficit) {  // strict: ties stay with the earlier split
        best_deficit = deficit;
        best = s;
      }
    }
    result.assignment[idx] = static_cast<Split>(best);
    ++rep.images[best];
    for (std::size_t c = 0; c < nc; ++c) rep.achieved[best][c] += counts[c];
  }

  // Refinement: single-record moves while the total deviation strictly drops.
  auto move_gain = [&](std::size_t i, std::size_t to) {
    const auto from = static_cast<std::size_t>(result.assignment[i]);
    double gain = 0.0;
    for (std::size_t c = 0; c < nc; ++c) {
      const auto k = static_cast<double>(per_record[i][c]);
      if (k == 0.0) continue;
      const double gf = rep.target[from][c] - static_cast<double>(rep.achieved[from][c]);
      const double gt = rep.target[to][c] - static_cast<double>(rep.achieved[to][c]);
      gain += std::fabs(gf) - std::fabs(gf + k) + std::fabs(gt) - std::fabs(gt - k);
    }
    return gain;
  };
  for (bool moved = true; moved;) {
    moved = false;
    for (std::size_t idx : order) {
      const auto from = static_cast<std::size_t>(result.assignment[idx]);
      for (std::size_t to = 0; to < 3; ++to) {
        if (to == from || spec.ratios[to] == 0.0 || move_gain(idx, to) <= 1e-9) continue;
        result.assignment[idx] = static_cast<Split>(to);
        --rep.images[from];
        ++rep.images[to];
        for (std::size_t c = 0; c < nc; ++c) {
          rep.achieved[from][c] -= per_record[idx][c];
          rep.achieved[to][c] += per_record[idx][c];
        }
        moved = true;
        break;
      }
    }
  }

  for (std::size_t i = 0; i < records.size(); ++i) {
    result.parts[static_cast<std::size_t>(result.assignment[i])].push_back(records[i]);
  }
  return result;
}

std::string report_to_json(const SplitReport& report) {
  nlohmann::ordered_json j;
  j["classes"] = report.class_names;
  for (Split s : kAllSplits) {
    const auto i = static_cast<std::size_t>(s);
    j["splits"][std::string(split_name(s))] = {
        {"images", report.images[i]}, {"achieved", report.achieved[i]}, {"target", report.target[i]}};
  }
  return j.dump(2) + "\n";
}

std::string report_to_text(const SplitReport& report) {
  std::ostringstream out;
  std::size_t w = 8;
  for (const auto& n : report.class_names) w = std::max(w, n.size() + 12);
  out << std::left << std::setw(8) << "Type" << std::right;
  for (const auto& n : report.class_names) out << std::setw(static_cast<int>(w)) << n;
  out << std::setw(8) << "images" << '\n';
  for (Split s : kAllSplits) {
    const auto i = static_cast<std::size_t>(s);
    out << std::left << std::setw(8) << split_name(s) << std::right;
    for (std::size_t c = 0; c < report.class_names.size(); ++c) {
      std::ostringstream cell;
      cell << report.achieved[i][c] << " (" << std::fixed << std::setprecision(1) << report.target[i][c] << ")";
      out << std::setw(static_cast<int>(w)) << cell.str();
    }
    out << std::setw(8) << report.images[i] << '\n';
  }
  out << "cells: achieved (target) objects\n";
  return out.str();
}

}  // namespace czforge::split
