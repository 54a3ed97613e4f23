#include "wsloc/analysis.hpp"

#include <cmath>
#include <fstream>

#include "wsloc/tensor.hpp"

namespace wsloc {

ConditionalEntropy conditional_entropy(const LabelPairCounts& counts) {
  if (counts.n_goal == 0 || counts.n_unint == 0) {
    throw Error("conditional_entropy: empty count matrix");
  }
  ConditionalEntropy out;
  out.per_goal_bits.resize(counts.n_goal);
  std::size_t total = 0;
  double weighted = 0.0;
  for (std::size_t g = 0; g < counts.n_goal; ++g) {
    std::size_t row_sum = 0;
    for (std::size_t u = 0; u < counts.n_unint; ++u) row_sum += counts.at(g, u);
    if (row_sum == 0) continue;
    double h = 0.0;
    for (std::size_t u = 0; u < counts.n_unint; ++u) {
      if (counts.at(g, u) == 0) continue;
      double p = static_cast<double>(counts.at(g, u)) / static_cast<double>(row_sum);
      h -= p * std::log2(p);
    }
    out.per_goal_bits[g] = h;
    total += row_sum;
    weighted += h * static_cast<double>(row_sum);
  }
  if (total == 0) {
    throw Error("conditional_entropy: all counts are zero");
  }
  out.average_bits = weighted / static_cast<double>(total);
  return out;
}

LabelPairCounts label_pair_counts(const Manifest& manifest) {
  LabelPairCounts counts(manifest.goal_classes.size(), manifest.unint_classes.size());
  for (const auto& v : manifest.videos) {
    ++counts.at(v.goal_label, v.unint_label);
  }
  return counts;
}

DatasetStats dataset_stats(const Manifest& manifest) {
  DatasetStats st;
  st.num_videos = manifest.videos.size();
  st.goal_class_counts.assign(manifest.goal_classes.size(), 0);
  st.unint_class_counts.assign(manifest.unint_classes.size(), 0);
  double clip_sum = 0.0;
  for (const auto& v : manifest.videos) {
    ++st.goal_class_counts[v.goal_label];
    ++st.unint_class_counts[v.unint_label];
    clip_sum += static_cast<double>(v.num_clips);
    if (!v.transition_clip.has_value()) {
      ++st.num_train;
      continue;
    }
    ++st.num_test;
    double goal_frac = static_cast<double>(*v.transition_clip) /
                       static_cast<double>(v.num_clips);
    double unint_frac = 1.0 - goal_frac;
    auto bin = [](double f) {
      auto b = static_cast<std::size_t>(f * kFractionBins);
      return b >= kFractionBins ? kFractionBins - 1 : b;
    };
    ++st.goal_fraction_hist[bin(goal_frac)];
    ++st.unint_fraction_hist[bin(unint_frac)];
  }
  if (st.num_videos > 0) {
    st.mean_length_clips = clip_sum / static_cast<double>(st.num_videos);
    st.mean_length_seconds = st.mean_length_clips * kSecondsPerClip;
  }
  return st;
}

namespace {

std::ofstream open_csv(const std::string& path) {
  std::ofstream f(path);
  if (!f) {
    throw Error("cannot open '" + path + "' for writing");
  }
  return f;
}

}  // namespace

void write_stats_csv(const DatasetStats& stats, const Manifest& manifest,
                     const std::string& prefix) {
  {
    auto f = open_csv(prefix + "_fractions.csv");
    f << "bin_lo,bin_hi,goal_count,unint_count\n";
    for (std::size_t b = 0; b < kFractionBins; ++b) {
      f << static_cast<double>(b) / kFractionBins << ','
        << static_cast<double>(b + 1) / kFractionBins << ','
        << stats.goal_fraction_hist[b] << ',' << stats.unint_fraction_hist[b]
        << '\n';
    }
  }
  {
    auto f = open_csv(prefix + "_classes.csv");
    f << "head,class_id,class_name,video_count\n";
    for (std::size_t c = 0; c < stats.goal_class_counts.size(); ++c) {
      f << "goal," << c << ',' << manifest.goal_classes[c] << ','
        << stats.goal_class_counts[c] << '\n';
    }
    for (std::size_t c = 0; c < stats.unint_class_counts.size(); ++c) {
      f << "unint," << c << ',' << manifest.unint_classes[c] << ','
        << stats.unint_class_counts[c] << '\n';
    }
  }
  {
    auto f = open_csv(prefix + "_summary.csv");
    f << "num_videos,num_train,num_test,mean_length_clips,mean_length_seconds\n";
    f << stats.num_videos << ',' << stats.num_train << ',' << stats.num_test
      << ',' << stats.mean_length_clips << ',' << stats.mean_length_seconds
      << '\n';
  }
}

void write_entropy_csv(const ConditionalEntropy& ce, const Manifest& manifest,
                       const std::string& path) {
  auto f = open_csv(path);
  f << "goal_class_id,goal_class_name,entropy_bits\n";
  for (std::size_t g = 0; g < ce.per_goal_bits.size(); ++g) {
    if (!ce.per_goal_bits[g].has_value()) continue;
    f << g << ',' << manifest.goal_classes[g] << ',' << *ce.per_goal_bits[g]
      << '\n';
  }
  f << "average,," << ce.average_bits << '\n';
}

}  // namespace wsloc
