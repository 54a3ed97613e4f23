#include "wsloc/pose.hpp"

#include <cmath>
#include <cstddef>

#include "wsloc/tensor.hpp"

namespace wsloc {

const std::array<std::pair<std::size_t, std::size_t>, kNumConnections>& pose_connections() {
  static const std::array<std::pair<std::size_t, std::size_t>, kNumConnections> conns = {{
      {kNeck, kLShoulder},
      {kLShoulder, kLElbow},
      {kLElbow, kLWrist},
      {kNeck, kRShoulder},
      {kRShoulder, kRElbow},
      {kRElbow, kRWrist},
      {kNeck, kLHip},
      {kLHip, kLKnee},
      {kLKnee, kLAnkle},
      {kNeck, kRHip},
      {kRHip, kRKnee},
      {kRKnee, kRAnkle},
  }};
  return conns;
}

FrameVector vectorize_frame(const FrameKeypoints& kps) {
  FrameVector out{};
  const auto& conns = pose_connections();
  for (std::size_t i = 0; i < conns.size(); ++i) {
    const Keypoint& from = kps[conns[i].first];
    const Keypoint& to = kps[conns[i].second];
    if (!from.present || !to.present) continue;  // stays (0,0)
    double dx = to.x - from.x;
    double dy = to.y - from.y;
    double norm = std::sqrt(dx * dx + dy * dy);
    if (norm == 0.0) continue;  // coincident keypoints carry no direction
    out[2 * i] = dx / norm;
    out[2 * i + 1] = dy / norm;
  }
  return out;
}

std::vector<FrameVector> impute_track(const PoseTrack& track, std::size_t num_frames) {
  std::vector<FrameVector> out(num_frames, FrameVector{});
  FrameVector last{};
  bool seen = false;
  for (std::size_t f = 0; f < num_frames; ++f) {
    if (f < track.frames.size() && track.frames[f].has_value()) {
      last = vectorize_frame(*track.frames[f]);
      seen = true;
    }
    if (seen) out[f] = last;
  }
  return out;
}

std::pair<const PoseTrack*, const PoseTrack*> select_principal_tracks(
    const std::vector<PoseTrack>& tracks) {
  auto observed = [](const PoseTrack& t) {
    std::size_t n = 0;
    for (const auto& f : t.frames) {
      if (f.has_value()) ++n;
    }
    return n;
  };
  auto better = [&](const PoseTrack* a, const PoseTrack* b) {
    if (b == nullptr) return true;
    if (a == nullptr) return false;
    std::size_t na = observed(*a), nb = observed(*b);
    if (na != nb) return na > nb;
    return a->track_id < b->track_id;
  };
  const PoseTrack* first = nullptr;
  const PoseTrack* second = nullptr;
  for (const auto& t : tracks) {
    if (better(&t, first)) {
      second = first;
      first = &t;
    } else if (better(&t, second)) {
      second = &t;
    }
  }
  return {first, second};
}

std::vector<PairFrameVector> pose_frame_vectors(const PoseVideo& video) {
  auto [left, right] = select_principal_tracks(video.tracks);
  std::vector<FrameVector> lv =
      left ? impute_track(*left, video.num_frames)
           : std::vector<FrameVector>(video.num_frames, FrameVector{});
  std::vector<FrameVector> rv =
      right ? impute_track(*right, video.num_frames)
            : std::vector<FrameVector>(video.num_frames, FrameVector{});
  std::vector<PairFrameVector> out(video.num_frames, PairFrameVector{});
  for (std::size_t f = 0; f < video.num_frames; ++f) {
    for (std::size_t i = 0; i < kFrameVectorWidth; ++i) {
      out[f][i] = lv[f][i];
      out[f][kFrameVectorWidth + i] = rv[f][i];
    }
  }
  return out;
}

Matrix chunk_pose(const std::vector<PairFrameVector>& frames, std::size_t chunk) {
  if (chunk == 0) {
    throw Error("chunk_pose: chunk size must be positive");
  }
  const std::size_t num_chunks = (frames.size() + chunk - 1) / chunk;
  Matrix out(num_chunks, chunk * kPairFrameWidth);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const std::size_t h = f / chunk;
    const std::size_t offset = (f % chunk) * kPairFrameWidth;
    for (std::size_t i = 0; i < kPairFrameWidth; ++i) {
      out(h, offset + i) = frames[f][i];
    }
  }
  return out;
}

Matrix pose_features(const PoseVideo& video) {
  return chunk_pose(pose_frame_vectors(video));
}

ClipFeatureSequence fuse_with_rgb(const ClipFeatureSequence& rgb, const Matrix& pose_chunks) {
  if (pose_chunks.rows < rgb.num_clips()) {
    throw Error("fuse_with_rgb: " + std::to_string(pose_chunks.rows) +
                " pose chunks cannot cover " + std::to_string(rgb.num_clips()) +
                " clips");
  }
  ClipFeatureSequence out;
  out.video_id = rgb.video_id;
  out.features = Matrix(rgb.num_clips(), rgb.feature_dim() + pose_chunks.cols);
  for (std::size_t t = 0; t < rgb.num_clips(); ++t) {
    for (std::size_t j = 0; j < rgb.feature_dim(); ++j) {
      out.features(t, j) = rgb.features(t, j);
    }
    for (std::size_t j = 0; j < pose_chunks.cols; ++j) {
      out.features(t, rgb.feature_dim() + j) = pose_chunks(t, j);
    }
  }
  return out;
}

}  // namespace wsloc
