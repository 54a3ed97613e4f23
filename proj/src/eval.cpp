#include "wsloc/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "wsloc/losses.hpp"
#include "wsloc/tensor.hpp"

namespace wsloc {

GtSegment GroundTruthSplit::goal_segment() const {
  return GtSegment{video_id, 0, transition_clip - 1, goal_class};
}

GtSegment GroundTruthSplit::unint_segment() const {
  return GtSegment{video_id, transition_clip, num_clips - 1, unint_class};
}

std::vector<double> weighted_tcam(const std::vector<double>& lambda,
                                  const Matrix& tcam, std::size_t class_id) {
  if (lambda.size() != tcam.rows) {
    throw ShapeError("weighted_tcam: attention length does not match TCAM rows");
  }
  if (class_id >= tcam.cols) {
    throw Error("weighted_tcam: class id out of range");
  }
  std::vector<double> psi(lambda.size());
  for (std::size_t t = 0; t < lambda.size(); ++t) {
    psi[t] = lambda[t] / (1.0 + std::exp(-tcam(t, class_id)));
  }
  return psi;
}

std::vector<std::size_t> candidate_classes(const std::vector<double>& scores) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (scores[c] > 0.0) out.push_back(c);
  }
  return out;
}

std::vector<SegmentTriplet> extract_segments(const std::vector<double>& psi,
                                             double seg_threshold,
                                             std::size_t class_id) {
  std::vector<SegmentTriplet> out;
  std::size_t t = 0;
  while (t < psi.size()) {
    if (psi[t] < seg_threshold) {
      ++t;
      continue;
    }
    std::size_t start = t;
    double sum = 0.0;
    while (t < psi.size() && psi[t] >= seg_threshold) {
      sum += psi[t];
      ++t;
    }
    out.push_back(SegmentTriplet{start, t - 1, class_id,
                                 sum / static_cast<double>(t - start)});
  }
  return out;
}

double temporal_iou(std::size_t a_start, std::size_t a_end, std::size_t b_start,
                    std::size_t b_end) {
  if (a_end < a_start || b_end < b_start) {
    throw Error("temporal_iou: segment end precedes start");
  }
  const double lo = static_cast<double>(std::max(a_start, b_start));
  const double hi = static_cast<double>(std::min(a_end, b_end));
  const double inter = hi >= lo ? hi - lo + 1.0 : 0.0;
  const double len_a = static_cast<double>(a_end - a_start) + 1.0;
  const double len_b = static_cast<double>(b_end - b_start) + 1.0;
  return inter / (len_a + len_b - inter);
}

namespace {

void sort_predictions(std::vector<ScoredSegment>& preds) {
  std::sort(preds.begin(), preds.end(),
            [](const ScoredSegment& a, const ScoredSegment& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.video_id != b.video_id) return a.video_id < b.video_id;
              return a.start_clip < b.start_clip;
            });
}

}  // namespace

double average_precision(std::vector<ScoredSegment> preds,
                         const std::vector<GtSegment>& gts, double iou_thr) {
  if (gts.empty()) return 0.0;
  sort_predictions(preds);

  std::vector<bool> matched(gts.size(), false);
  const double num_gt = static_cast<double>(gts.size());
  double tp = 0.0;
  double ap = 0.0;
  for (std::size_t rank = 0; rank < preds.size(); ++rank) {
    const auto& pr = preds[rank];
    std::size_t best = gts.size();
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (matched[g] || gts[g].video_id != pr.video_id) continue;
      double iou = temporal_iou(pr.start_clip, pr.end_clip, gts[g].start_clip,
                                gts[g].end_clip);
      if (iou >= iou_thr && iou > best_iou) {
        best_iou = iou;
        best = g;
      }
    }
    if (best < gts.size()) {
      matched[best] = true;
      tp += 1.0;
      ap += (tp / static_cast<double>(rank + 1)) / num_gt;
    }
  }
  return ap;
}

MapRow map_at_iou(const std::vector<ScoredSegment>& preds,
                  const std::vector<GtSegment>& gts, std::size_t num_classes) {
  MapRow row;
  std::size_t classes_with_gt = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<GtSegment> class_gts;
    for (const auto& g : gts) {
      if (g.class_id == c) class_gts.push_back(g);
    }
    if (class_gts.empty()) continue;
    ++classes_with_gt;
    std::vector<ScoredSegment> class_preds;
    for (const auto& p : preds) {
      if (p.class_id == c) class_preds.push_back(p);
    }
    for (std::size_t i = 0; i < kIouThresholds.size(); ++i) {
      row.at_iou[i] += average_precision(class_preds, class_gts, kIouThresholds[i]);
    }
  }
  if (classes_with_gt == 0) {
    throw Error("map_at_iou: no class has ground truth");
  }
  double sum = 0.0;
  for (auto& v : row.at_iou) {
    v /= static_cast<double>(classes_with_gt);
    sum += v;
  }
  row.avg = sum / static_cast<double>(kIouThresholds.size());
  return row;
}

double classification_map(const std::vector<std::vector<double>>& scores,
                          const std::vector<std::size_t>& labels,
                          std::size_t num_classes) {
  if (scores.size() != labels.size()) {
    throw Error("classification_map: scores and labels disagree on video count");
  }
  const std::size_t n = scores.size();
  double total = 0.0;
  std::size_t classes_with_pos = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t num_pos = 0;
    for (auto l : labels) {
      if (l == c) ++num_pos;
    }
    if (num_pos == 0) continue;
    ++classes_with_pos;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return scores[a][c] > scores[b][c];
                     });
    double tp = 0.0;
    double ap = 0.0;
    for (std::size_t rank = 0; rank < n; ++rank) {
      if (labels[order[rank]] == c) {
        tp += 1.0;
        ap += (tp / static_cast<double>(rank + 1)) / static_cast<double>(num_pos);
      }
    }
    total += ap;
  }
  if (classes_with_pos == 0) {
    throw Error("classification_map: no class has a positive video");
  }
  return total / static_cast<double>(classes_with_pos);
}

namespace {

std::vector<double> stable_softmax(const std::vector<double>& x) {
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  std::vector<double> y(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - m);
    z += y[i];
  }
  for (auto& v : y) v /= z;
  return y;
}

HeadLocalization localize_head(const Tensor& lambda, const Tensor& tcam, int s,
                               double seg_threshold) {
  HeadLocalization head;
  head.lambda = lambda.value();
  head.class_scores = video_class_scores(tcam, s).value();
  head.pmf = stable_softmax(head.class_scores);
  head.centroid = attention_centroid(lambda).item();

  const std::size_t l = tcam.shape()[0];
  const std::size_t n = tcam.shape()[1];
  Matrix tcam_m(l, n);
  tcam_m.data = tcam.value();
  for (std::size_t c : candidate_classes(head.class_scores)) {
    auto psi = weighted_tcam(head.lambda, tcam_m, c);
    auto segs = extract_segments(psi, seg_threshold, c);
    head.segments.insert(head.segments.end(), segs.begin(), segs.end());
  }
  return head;
}

}  // namespace

std::vector<VideoLocalization> localize_dataset(const Dataset& dataset,
                                                const Params& params,
                                                const ModelHyper& hp,
                                                const LocalizeOptions& opts) {
  const std::size_t n = dataset.manifest.videos.size();
  if (dataset.features.size() != n) {
    throw Error("localize_dataset: feature rows do not match manifest videos");
  }
  std::vector<VideoLocalization> out(n);

  auto work = [&](std::size_t i) {
    Tape::Pause pause;  // inference only, keep the tape out of it
    Tensor x = features_tensor(dataset.features[i]);
    ModelOutputs mo = forward(x, params, hp);
    VideoLocalization& v = out[i];
    v.video_id = dataset.manifest.videos[i].id;
    v.goal = localize_head(mo.lambda_ia, mo.tcam_ia, hp.s, opts.seg_threshold);
    v.unint = localize_head(mo.lambda_ua, mo.tcam_ua, hp.s, opts.seg_threshold);
  };

  const int threads = std::max(1, opts.threads);
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return out;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto runner = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        work(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(runner);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

std::vector<GroundTruthSplit> ground_truth_splits(const Manifest& manifest) {
  std::vector<GroundTruthSplit> out;
  out.reserve(manifest.videos.size());
  for (const auto& v : manifest.videos) {
    if (!v.transition_clip.has_value()) {
      throw Error("video '" + v.id + "' has no transition_clip; evaluation needs one");
    }
    std::size_t t = *v.transition_clip;
    if (t == 0 || t >= v.num_clips) {
      throw Error("video '" + v.id + "' transition_clip must lie strictly inside the video");
    }
    out.push_back(GroundTruthSplit{v.id, v.num_clips, t, v.goal_label, v.unint_label});
  }
  return out;
}

EvalResult evaluate_dataset(const Dataset& dataset, const Params& params,
                            const ModelHyper& hp, const LocalizeOptions& opts) {
  auto splits = ground_truth_splits(dataset.manifest);
  auto locs = localize_dataset(dataset, params, hp, opts);

  std::vector<ScoredSegment> goal_preds;
  std::vector<ScoredSegment> unint_preds;
  for (const auto& v : locs) {
    for (const auto& s : v.goal.segments) {
      goal_preds.push_back(
          ScoredSegment{v.video_id, s.start_clip, s.end_clip, s.class_id, s.score});
    }
    for (const auto& s : v.unint.segments) {
      unint_preds.push_back(
          ScoredSegment{v.video_id, s.start_clip, s.end_clip, s.class_id, s.score});
    }
  }
  std::vector<GtSegment> goal_gts;
  std::vector<GtSegment> unint_gts;
  for (const auto& sp : splits) {
    goal_gts.push_back(sp.goal_segment());
    unint_gts.push_back(sp.unint_segment());
  }

  EvalResult res;
  res.table.goal =
      map_at_iou(goal_preds, goal_gts, dataset.manifest.goal_classes.size());
  res.table.unint =
      map_at_iou(unint_preds, unint_gts, dataset.manifest.unint_classes.size());

  std::vector<std::vector<double>> goal_scores;
  std::vector<std::vector<double>> unint_scores;
  std::vector<std::size_t> goal_labels;
  std::vector<std::size_t> unint_labels;
  for (std::size_t i = 0; i < locs.size(); ++i) {
    goal_scores.push_back(locs[i].goal.pmf);
    unint_scores.push_back(locs[i].unint.pmf);
    goal_labels.push_back(dataset.manifest.videos[i].goal_label);
    unint_labels.push_back(dataset.manifest.videos[i].unint_label);
  }
  res.cmap_goal = classification_map(goal_scores, goal_labels,
                                     dataset.manifest.goal_classes.size());
  res.cmap_unint = classification_map(unint_scores, unint_labels,
                                      dataset.manifest.unint_classes.size());
  return res;
}

}  // namespace wsloc
