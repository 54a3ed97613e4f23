#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "wsloc/types.hpp"

namespace wsloc {

/// Co-occurrence counts of (goal class, unint class) label pairs.
struct LabelPairCounts {
  std::size_t n_goal = 0;
  std::size_t n_unint = 0;
  std::vector<std::size_t> counts;  // row-major, n_goal x n_unint

  LabelPairCounts() = default;
  LabelPairCounts(std::size_t g, std::size_t u)
      : n_goal(g), n_unint(u), counts(g * u, 0) {}

  std::size_t& at(std::size_t g, std::size_t u) { return counts[g * n_unint + u]; }
  std::size_t at(std::size_t g, std::size_t u) const { return counts[g * n_unint + u]; }
};

struct ConditionalEntropy {
  // Entropy in bits of the unint distribution given each goal class; empty
  // rows (goal classes never observed) carry no value.
  std::vector<std::optional<double>> per_goal_bits;
  // Average over observed rows, weighted by the goal-class marginal.
  double average_bits = 0.0;
};

/// H(UA | IA = g) per goal class, log base 2, 0*log(0) = 0.
/// All-zero counts are an error.
ConditionalEntropy conditional_entropy(const LabelPairCounts& counts);

/// Tally label pairs over all manifest videos.
LabelPairCounts label_pair_counts(const Manifest& manifest);

inline constexpr std::size_t kFractionBins = 20;

/// Distribution summary of a manifest. Rows with a transition clip count as
/// test videos and contribute to the segment-fraction histograms.
struct DatasetStats {
  std::size_t num_videos = 0;
  std::size_t num_train = 0;  // rows without transition_clip
  std::size_t num_test = 0;   // rows with transition_clip
  std::vector<std::size_t> goal_class_counts;
  std::vector<std::size_t> unint_class_counts;
  // Uniform bins on [0,1] of segment length / video length, test rows only.
  std::array<std::size_t, kFractionBins> goal_fraction_hist{};
  std::array<std::size_t, kFractionBins> unint_fraction_hist{};
  double mean_length_clips = 0.0;
  double mean_length_seconds = 0.0;
};

DatasetStats dataset_stats(const Manifest& manifest);

/// Plot-ready CSVs: <prefix>_fractions.csv (bin edges + both histograms),
/// <prefix>_classes.csv (per-class video counts), <prefix>_summary.csv.
void write_stats_csv(const DatasetStats& stats, const Manifest& manifest,
                     const std::string& prefix);

/// Entropy table CSV: one row per goal class plus the weighted average.
void write_entropy_csv(const ConditionalEntropy& ce, const Manifest& manifest,
                       const std::string& path);

}  // namespace wsloc
