#include "wsloc/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "wsloc/io.hpp"
#include "wsloc/losses.hpp"
#include "wsloc/rng.hpp"
#include "wsloc/tensor.hpp"

namespace fs = std::filesystem;

namespace wsloc {

AdamState::AdamState(const Params& params) {
  m.reserve(params.count());
  v.reserve(params.count());
  for (const auto& [name, t] : params.items()) {
    m.emplace_back(t.size(), 0.0);
    v.emplace_back(t.size(), 0.0);
  }
}

void adam_step(Params& params, AdamState& state, const TrainConfig& config) {
  if (state.m.size() != params.count()) {
    throw Error("adam_step: state does not match parameter count");
  }
  ++state.step;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double correct1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correct2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.count(); ++i) {
    auto& [name, t] = params.items()[i];
    const std::vector<double> g = t.grad();
    auto& value = t.node()->value;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(g[j])) {
        throw Error("adam_step: non-finite gradient in '" + name + "'");
      }
      state.m[i][j] = b1 * state.m[i][j] + (1.0 - b1) * g[j];
      state.v[i][j] = b2 * state.v[i][j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = state.m[i][j] / correct1;
      const double vhat = state.v[i][j] / correct2;
      value[j] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  }
}

namespace {

LossHyper loss_hyper(const ModelHyper& hp, const TrainConfig& config) {
  LossHyper lh;
  lh.s = hp.s;
  lh.p = hp.p;
  lh.q = hp.q;
  lh.activation_threshold = hp.activation_threshold;
  lh.lambda_weight = hp.lambda_weight;
  lh.literal_eq5 = config.literal_eq5;
  return lh;
}

void append_log(std::ofstream& log, const LossRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "{\"iter\":%zu,\"l_cls_ia\":%.17g,\"l_cls_ua\":%.17g,"
                "\"l_overlap\":%.17g,\"l_order\":%.17g,\"total\":%.17g}",
                r.iter, r.cls_ia, r.cls_ua, r.overlap, r.order, r.total);
  log << buf << '\n';
}

}  // namespace

std::vector<LossRecord> train(const Dataset& dataset, Params& params,
                              const ModelHyper& hyper, const TrainConfig& config,
                              const TrainIo& io) {
  const std::size_t n = dataset.manifest.videos.size();
  if (n == 0) {
    throw Error("train: dataset is empty");
  }
  if (dataset.features.size() != n) {
    throw Error("train: feature rows do not match manifest videos");
  }
  if (config.batch_size == 0) {
    throw Error("train: batch_size must be positive");
  }

  std::ofstream log;
  if (!io.log_path.empty()) {
    log.open(io.log_path);
    if (!log) {
      throw Error("cannot open '" + io.log_path + "' for writing");
    }
  }
  if (!io.out_dir.empty()) {
    fs::create_directories(io.out_dir);
  }

  const LossHyper lh = loss_hyper(hyper, config);
  Rng rng(config.seed);
  AdamState state(params);
  std::vector<LossRecord> history;
  history.reserve(config.iterations);

  const double inv_b = 1.0 / static_cast<double>(config.batch_size);
  for (std::size_t iter = 1; iter <= config.iterations; ++iter) {
    std::vector<std::size_t> batch(config.batch_size);
    for (auto& b : batch) b = rng.index(n);

    params.zero_grad();
    LossRecord rec;
    rec.iter = iter;
    for (std::size_t b : batch) {
      Tape tape;  // per-video tape: one backward pass each, then discard
      Tensor x = features_tensor(dataset.features[b]);
      ModelOutputs mo = forward(x, params, hyper);
      LabelVector label{dataset.manifest.videos[b].goal_label,
                        dataset.manifest.videos[b].unint_label};
      LossBreakdown bd = total_loss(mo, label, lh);
      tape.backward(bd.total_t, inv_b);
      rec.cls_ia += bd.cls_ia * inv_b;
      rec.cls_ua += bd.cls_ua * inv_b;
      rec.overlap += bd.overlap * inv_b;
      rec.order += bd.order * inv_b;
      rec.total += bd.total * inv_b;
    }
    if (!std::isfinite(rec.total)) {
      throw Error("train: non-finite loss at iteration " + std::to_string(iter));
    }
    adam_step(params, state, config);

    history.push_back(rec);
    if (log.is_open()) append_log(log, rec);
    if (!io.out_dir.empty() && io.checkpoint_every > 0 &&
        iter % io.checkpoint_every == 0) {
      save_checkpoint(io.out_dir + "/ckpt_" + std::to_string(iter) + ".json",
                      params, hyper);
    }
  }
  if (!io.out_dir.empty()) {
    save_checkpoint(io.out_dir + "/ckpt_" + std::to_string(config.iterations) + ".json",
                    params, hyper);
  }
  return history;
}

Dataset synth_generate(const SyntheticSpec& spec) {
  if (spec.num_videos == 0 || spec.d == 0) {
    throw Error("synth_generate: need videos and a feature dim");
  }
  if (spec.n_goal < 2 || spec.n_unint < 2) {
    throw Error("synth_generate: need at least two classes per head");
  }
  if (spec.l_min < 2 || spec.l_max < spec.l_min) {
    throw Error("synth_generate: bad clip-length range");
  }
  if (!(spec.transition_lo > 0.0 && spec.transition_hi < 1.0 &&
        spec.transition_lo <= spec.transition_hi)) {
    throw Error("synth_generate: transition fractions must satisfy 0 < lo <= hi < 1");
  }

  Rng rng(spec.seed);
  auto prototype = [&]() {
    std::vector<double> v(spec.d);
    for (auto& x : v) x = rng.normal();
    return v;
  };
  std::vector<std::vector<double>> goal_protos;
  std::vector<std::vector<double>> unint_protos;
  for (std::size_t c = 0; c < spec.n_goal; ++c) goal_protos.push_back(prototype());
  for (std::size_t c = 0; c < spec.n_unint; ++c) unint_protos.push_back(prototype());

  Dataset ds;
  for (std::size_t c = 0; c < spec.n_goal; ++c) {
    ds.manifest.goal_classes.push_back("goal_" + std::to_string(c));
  }
  for (std::size_t c = 0; c < spec.n_unint; ++c) {
    ds.manifest.unint_classes.push_back("unint_" + std::to_string(c));
  }

  for (std::size_t i = 0; i < spec.num_videos; ++i) {
    VideoEntry v;
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%04zu", i);
    v.id = id;
    v.feature_path = std::string("features/") + id + ".tfv";
    v.goal_label = rng.index(spec.n_goal);
    v.unint_label = rng.index(spec.n_unint);
    v.num_clips = spec.l_min + rng.index(spec.l_max - spec.l_min + 1);
    double frac = rng.uniform(spec.transition_lo, spec.transition_hi);
    auto t = static_cast<std::size_t>(
        std::lround(frac * static_cast<double>(v.num_clips)));
    if (t == 0) t = 1;
    if (t >= v.num_clips) t = v.num_clips - 1;
    v.transition_clip = t;

    Matrix feat(v.num_clips, spec.d);
    for (std::size_t clip = 0; clip < v.num_clips; ++clip) {
      const auto& proto =
          clip < t ? goal_protos[v.goal_label] : unint_protos[v.unint_label];
      for (std::size_t j = 0; j < spec.d; ++j) {
        feat(clip, j) = proto[j] + spec.noise_sigma * rng.normal();
      }
    }
    ds.manifest.videos.push_back(std::move(v));
    ds.features.push_back(std::move(feat));
  }
  return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset,
                                          double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error("split_dataset: train_fraction must lie in (0,1)");
  }
  const std::size_t n = dataset.manifest.videos.size();
  auto cut = static_cast<std::size_t>(train_fraction * static_cast<double>(n));
  if (cut == 0 || cut == n) {
    throw Error("split_dataset: split leaves one side empty");
  }
  Dataset train, test;
  train.manifest.goal_classes = dataset.manifest.goal_classes;
  train.manifest.unint_classes = dataset.manifest.unint_classes;
  test.manifest = train.manifest;
  for (std::size_t i = 0; i < n; ++i) {
    Dataset& side = i < cut ? train : test;
    side.manifest.videos.push_back(dataset.manifest.videos[i]);
    side.features.push_back(dataset.features[i]);
  }
  return {std::move(train), std::move(test)};
}

std::string materialize_dataset(const Dataset& dataset, const std::string& dir,
                                bool strip_transitions) {
  fs::create_directories(fs::path(dir) / "features");
  Manifest manifest = dataset.manifest;
  for (std::size_t i = 0; i < manifest.videos.size(); ++i) {
    if (strip_transitions) manifest.videos[i].transition_clip.reset();
    fs::path p = fs::path(dir) / manifest.videos[i].feature_path;
    write_feature_file(p.string(), dataset.features[i]);
  }
  std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  save_manifest(manifest, manifest_path);
  return manifest_path;
}

}  // namespace wsloc
