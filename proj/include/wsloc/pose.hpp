#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "wsloc/types.hpp"

namespace wsloc {

// COCO-18 keypoint indices (documented in docs/formats.md).
enum CocoKeypoint : std::size_t {
  kNose = 0,
  kNeck = 1,
  kRShoulder = 2,
  kRElbow = 3,
  kRWrist = 4,
  kLShoulder = 5,
  kLElbow = 6,
  kLWrist = 7,
  kRHip = 8,
  kRKnee = 9,
  kRAnkle = 10,
  kLHip = 11,
  kLKnee = 12,
  kLAnkle = 13,
  kREye = 14,
  kLEye = 15,
  kREar = 16,
  kLEar = 17,
};

inline constexpr std::size_t kNumKeypoints = 18;
inline constexpr std::size_t kNumConnections = 12;
inline constexpr std::size_t kFrameVectorWidth = 2 * kNumConnections;  // 24
inline constexpr std::size_t kPairFrameWidth = 2 * kFrameVectorWidth;  // 48
inline constexpr std::size_t kPoseChunkFrames = 16;
inline constexpr std::size_t kPoseChunkWidth = kPoseChunkFrames * kPairFrameWidth;  // 768

// A keypoint below this confidence counts as missing.
inline constexpr double kKeypointConfidenceMin = 0.1;

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double confidence = 0.0;
  bool present = false;  // entry existed and confidence >= threshold
};

using FrameKeypoints = std::array<Keypoint, kNumKeypoints>;

/// One tracked person: a (possibly sparse) observation per frame.
struct PoseTrack {
  int track_id = 0;
  std::vector<std::optional<FrameKeypoints>> frames;  // length = video frames
};

/// Parsed keypoint file for one video.
struct PoseVideo {
  std::string video_id;
  std::size_t num_frames = 0;
  std::vector<PoseTrack> tracks;
};

using FrameVector = std::array<double, kFrameVectorWidth>;
using PairFrameVector = std::array<double, kPairFrameWidth>;

/// The 12 directed limb connections in output order, as (from, to) keypoint
/// indices: left arm chain, right arm chain, left leg chain, right leg chain,
/// each rooted at the neck.
const std::array<std::pair<std::size_t, std::size_t>, kNumConnections>& pose_connections();

/// 12 unit direction vectors (to - from, normalized), flattened x,y per
/// connection. Any connection touching a missing keypoint is (0,0). Face
/// keypoints are never used.
FrameVector vectorize_frame(const FrameKeypoints& kps);

/// Dense per-frame vectors: zero before the first observation, last observed
/// frame's vectors carried forward through gaps and beyond.
std::vector<FrameVector> impute_track(const PoseTrack& track, std::size_t num_frames);

/// The two tracks with the most observed frames (ties broken by lower
/// track_id). Missing slots are null.
std::pair<const PoseTrack*, const PoseTrack*> select_principal_tracks(
    const std::vector<PoseTrack>& tracks);

/// Per-frame concatenation of the two principal tracks' vectors (48 values;
/// a missing slot contributes zeros).
std::vector<PairFrameVector> pose_frame_vectors(const PoseVideo& video);

/// Non-overlapping groups of `chunk` frames concatenated into one vector per
/// chunk; the trailing partial chunk is zero-padded.
Matrix chunk_pose(const std::vector<PairFrameVector>& frames,
                  std::size_t chunk = kPoseChunkFrames);

/// Whole pipeline: keypoints to per-clip 768-wide pose features.
Matrix pose_features(const PoseVideo& video);

/// Per-clip concatenation [rgb | pose]. Extra pose chunks are dropped; fewer
/// pose chunks than clips is an error.
ClipFeatureSequence fuse_with_rgb(const ClipFeatureSequence& rgb, const Matrix& pose_chunks);

}  // namespace wsloc
