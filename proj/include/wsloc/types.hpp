#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace wsloc {

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Per-video clip features: one row per 16-frame clip.
struct ClipFeatureSequence {
  std::string video_id;
  Matrix features;  // (num_clips, feature_dim)

  std::size_t num_clips() const { return features.rows; }
  std::size_t feature_dim() const { return features.cols; }
};

/// Video-level labels: one goal-directed class and one unintentional class.
struct LabelVector {
  std::size_t goal_class = 0;
  std::size_t unint_class = 0;
};

struct VideoEntry {
  std::string id;
  std::string feature_path;
  std::size_t goal_label = 0;
  std::size_t unint_label = 0;
  std::size_t num_clips = 0;
  std::optional<std::size_t> transition_clip;  // test split only
};

struct Manifest {
  std::vector<std::string> goal_classes;
  std::vector<std::string> unint_classes;
  std::vector<VideoEntry> videos;
};

/// In-memory dataset: features loaded next to their manifest entries.
struct Dataset {
  Manifest manifest;
  std::vector<Matrix> features;  // parallel to manifest.videos
};

// Clip/time conversion: 16-frame clips at 25 fps.
inline constexpr double kSecondsPerClip = 16.0 / 25.0;

}  // namespace wsloc
