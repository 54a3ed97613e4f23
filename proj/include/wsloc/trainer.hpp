#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wsloc/model.hpp"
#include "wsloc/types.hpp"

namespace wsloc {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t iterations = 10000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool literal_eq5 = false;
};

/// Adam first/second moments, stored in parameter order (the order the
/// checkpoint preserves).
struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  explicit AdamState(const Params& params);
};

/// One bias-corrected Adam update from the gradients currently on `params`.
/// A non-finite gradient aborts, naming the parameter.
void adam_step(Params& params, AdamState& state, const TrainConfig& config);

/// Batch-mean loss values at one iteration.
struct LossRecord {
  std::size_t iter = 0;
  double cls_ia = 0.0;
  double cls_ua = 0.0;
  double overlap = 0.0;
  double order = 0.0;
  double total = 0.0;
};

/// Optional file outputs of a training run.
struct TrainIo {
  std::string log_path;              // JSONL, one LossRecord per iteration
  std::string out_dir;               // checkpoints land here as ckpt_{iter}.json
  std::size_t checkpoint_every = 0;  // 0 writes only the final checkpoint
};

/// Iterations of: sample batch_size videos with replacement, forward each,
/// average the per-video losses, backprop, Adam step. Deterministic per seed.
/// A non-finite batch loss aborts, naming the iteration.
std::vector<LossRecord> train(const Dataset& dataset, Params& params,
                              const ModelHyper& hyper, const TrainConfig& config,
                              const TrainIo& io = {});

/// Synthetic benchmark: one prototype vector per class, clips are the active
/// prototype plus Gaussian noise, transition placed at a uniform fraction of
/// the video.
struct SyntheticSpec {
  std::size_t num_videos = 200;
  std::size_t l_min = 16;
  std::size_t l_max = 32;
  std::size_t d = 32;
  std::size_t n_goal = 4;
  std::size_t n_unint = 3;
  double transition_lo = 0.3;
  double transition_hi = 0.7;
  double noise_sigma = 0.3;
  std::uint64_t seed = 0;
};

/// Every generated video carries its transition clip; training simply ignores
/// it, evaluation uses it as ground truth.
Dataset synth_generate(const SyntheticSpec& spec);

/// Deterministic prefix/suffix split (videos are exchangeable by construction).
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset,
                                          double train_fraction);

/// Write feature files plus manifest.json under `dir`. Returns the manifest
/// path. `strip_transitions` drops transition clips (train-split shape).
std::string materialize_dataset(const Dataset& dataset, const std::string& dir,
                                bool strip_transitions = false);

}  // namespace wsloc
