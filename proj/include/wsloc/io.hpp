#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wsloc/eval.hpp"
#include "wsloc/model.hpp"
#include "wsloc/pose.hpp"
#include "wsloc/types.hpp"

namespace wsloc {

/// Feature file starts with bytes other than "TFV1".
struct BadMagicError : Error {
  using Error::Error;
};

/// File is shorter than its header promises.
struct TruncatedFileError : Error {
  using Error::Error;
};

/// Header dimensions imply an implausibly large payload.
struct SizeOverflowError : Error {
  using Error::Error;
};

/// Binary clip-feature format: "TFV1", u32 LE num_clips, u32 LE feature_dim,
/// then num_clips*feature_dim f32 LE values, clip-major. Values are widened
/// to doubles in memory.
ClipFeatureSequence read_feature_file(const std::string& path);
void write_feature_file(const std::string& path, const Matrix& features);

/// Manifest JSON (format_version 1). Schema violations name the JSON path.
/// feature_path entries resolve relative to the manifest's directory.
Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& manifest, const std::string& path);

/// Manifest plus every referenced feature file. Checks each video's
/// num_clips against its file and that all videos share one feature_dim.
Dataset load_dataset(const std::string& manifest_path);

/// Keypoint JSON for one video (schema in docs/formats.md).
PoseVideo load_keypoints(const std::string& path);

struct Checkpoint {
  ModelHyper hyper;
  Params params;
};

/// Checkpoint JSON: hyperparameters plus an ordered list of named parameter
/// tensors. Doubles survive the round trip exactly.
void save_checkpoint(const std::string& path, const Params& params,
                     const ModelHyper& hyper);
Checkpoint load_checkpoint(const std::string& path);

struct PredictionRecord {
  std::string video_id;
  std::string head;  // "goal" or "unint"
  std::vector<SegmentTriplet> segments;
};

/// One JSON line per video per head.
void write_predictions(const std::string& path,
                       const std::vector<VideoLocalization>& locs);
std::vector<PredictionRecord> load_predictions(const std::string& path);

/// Metrics as JSON (mAP table plus cMAP fields) and as CSV with one row per
/// IoU threshold per head plus the avg rows.
void write_metrics_json(const std::string& path, const EvalResult& result);
void write_metrics_csv(const std::string& path, const EvalResult& result);

}  // namespace wsloc
