#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "wsloc/model.hpp"
#include "wsloc/types.hpp"

namespace wsloc {

/// One predicted segment: inclusive clip range, class, and ranking score.
struct SegmentTriplet {
  std::size_t start_clip = 0;
  std::size_t end_clip = 0;
  std::size_t class_id = 0;
  double score = 0.0;
};

/// A prediction lifted to dataset scope for AP computation.
struct ScoredSegment {
  std::string video_id;
  std::size_t start_clip = 0;
  std::size_t end_clip = 0;
  std::size_t class_id = 0;
  double score = 0.0;
};

/// A ground-truth segment (no score).
struct GtSegment {
  std::string video_id;
  std::size_t start_clip = 0;
  std::size_t end_clip = 0;
  std::size_t class_id = 0;
};

/// Test-video annotation: the transition clip splits the video into the
/// goal-directed prefix [0, transition-1] and unintentional suffix
/// [transition, l-1].
struct GroundTruthSplit {
  std::string video_id;
  std::size_t num_clips = 0;
  std::size_t transition_clip = 0;  // 0 < transition_clip < num_clips
  std::size_t goal_class = 0;
  std::size_t unint_class = 0;

  GtSegment goal_segment() const;
  GtSegment unint_segment() const;
};

inline constexpr std::array<double, 9> kIouThresholds = {0.1, 0.2, 0.3, 0.4, 0.5,
                                                         0.6, 0.7, 0.8, 0.9};

/// mAP at each IoU threshold plus their mean.
struct MapRow {
  std::array<double, 9> at_iou{};
  double avg = 0.0;
};

struct MapTable {
  MapRow goal;
  MapRow unint;
};

/// psi[t] = lambda[t] * sigmoid(tcam(t, class_id)).
std::vector<double> weighted_tcam(const std::vector<double>& lambda,
                                  const Matrix& tcam, std::size_t class_id);

/// Classes whose video-level score is strictly positive.
std::vector<std::size_t> candidate_classes(const std::vector<double>& scores);

/// Maximal runs with psi[t] >= seg_threshold; segment score = mean psi over
/// the run.
std::vector<SegmentTriplet> extract_segments(const std::vector<double>& psi,
                                             double seg_threshold,
                                             std::size_t class_id);

/// Intersection over union of two inclusive clip ranges.
double temporal_iou(std::size_t a_start, std::size_t a_end, std::size_t b_start,
                    std::size_t b_end);

/// AP for one class: rank by (score desc, video_id, start_clip), greedy-match
/// each prediction against the unmatched ground truth of its video at the IoU
/// threshold, then take the area under the exact precision-recall staircase.
/// Returns 0 when there is no ground truth (callers skip such classes).
double average_precision(std::vector<ScoredSegment> preds,
                         const std::vector<GtSegment>& gts, double iou_thr);

/// Mean per-class AP at each threshold in kIouThresholds for one head.
/// Classes without ground truth are skipped.
MapRow map_at_iou(const std::vector<ScoredSegment>& preds,
                  const std::vector<GtSegment>& gts, std::size_t num_classes);

/// Classification mAP: per class, rank videos by that class's score and
/// compute AP with relevance (label == class); mean over classes that have at
/// least one positive. Scores need not be normalized (ranking only).
double classification_map(const std::vector<std::vector<double>>& scores,
                          const std::vector<std::size_t>& labels,
                          std::size_t num_classes);

/// Everything localization produces for one video and one head.
struct HeadLocalization {
  std::vector<SegmentTriplet> segments;
  std::vector<double> class_scores;  // k-max pooled per class (pre-softmax)
  std::vector<double> pmf;           // softmax of class_scores
  std::vector<double> lambda;        // bottom-up attention track
  double centroid = 0.0;             // softmax-weighted attention centroid
};

struct VideoLocalization {
  std::string video_id;
  HeadLocalization goal;
  HeadLocalization unint;
};

struct LocalizeOptions {
  double seg_threshold = 0.2;
  int threads = 1;
};

/// Forward every video (no gradient recording) and extract segments for every
/// candidate class of each head. Videos are processed in parallel when
/// threads > 1; output order always follows the dataset order.
std::vector<VideoLocalization> localize_dataset(const Dataset& dataset,
                                                const Params& params,
                                                const ModelHyper& hp,
                                                const LocalizeOptions& opts);

struct EvalResult {
  MapTable table;
  double cmap_goal = 0.0;
  double cmap_unint = 0.0;
};

/// Ground-truth splits from the manifest; every video must carry a
/// transition clip.
std::vector<GroundTruthSplit> ground_truth_splits(const Manifest& manifest);

/// Full protocol: localize, build ground truth, and compute mAP@IoU for both
/// heads plus classification mAP.
EvalResult evaluate_dataset(const Dataset& dataset, const Params& params,
                            const ModelHyper& hp, const LocalizeOptions& opts);

}  // namespace wsloc
