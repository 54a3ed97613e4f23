#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wsloc/analysis.hpp"
#include "wsloc/eval.hpp"
#include "wsloc/io.hpp"
#include "wsloc/losses.hpp"
#include "wsloc/model.hpp"
#include "wsloc/pose.hpp"
#include "wsloc/tensor.hpp"
#include "wsloc/trainer.hpp"
#include "wsloc/types.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void print_config(const std::string& cmd, const json& resolved) {
  std::cout << "config[" << cmd << "] " << resolved.dump() << "\n";
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  wsloc::SyntheticSpec spec;
  double train_fraction = 0.8;
};

int run_synth(const SynthArgs& a) {
  json cfg{{"out", a.out},
           {"num_videos", a.spec.num_videos},
           {"l_min", a.spec.l_min},
           {"l_max", a.spec.l_max},
           {"d", a.spec.d},
           {"n_goal", a.spec.n_goal},
           {"n_unint", a.spec.n_unint},
           {"transition_lo", a.spec.transition_lo},
           {"transition_hi", a.spec.transition_hi},
           {"noise_sigma", a.spec.noise_sigma},
           {"seed", a.spec.seed},
           {"train_fraction", a.train_fraction}};
  print_config("synth", cfg);

  wsloc::Dataset ds = wsloc::synth_generate(a.spec);
  std::string manifest_path = wsloc::materialize_dataset(ds, a.out);
  auto [train, test] = wsloc::split_dataset(ds, a.train_fraction);
  wsloc::Manifest train_m = train.manifest;
  for (auto& v : train_m.videos) v.transition_clip.reset();
  wsloc::save_manifest(train_m, (fs::path(a.out) / "manifest_train.json").string());
  wsloc::save_manifest(test.manifest, (fs::path(a.out) / "manifest_test.json").string());
  std::cout << "wrote " << ds.manifest.videos.size() << " videos under " << a.out
            << " (" << train_m.videos.size() << " train / " << test.manifest.videos.size()
            << " test)\n";
  std::cout << "manifest: " << manifest_path << "\n";
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string out;
  std::string config_path;
  wsloc::TrainConfig config;
  std::size_t h = 256;
  std::size_t layers = 3;
  int s = 3;
  double p = 1000.0;
  double q = 10.0;
  double lambda_weight = 0.8;
  double activation_threshold = 0.5;
  std::size_t checkpoint_every = 0;
};

// Flat JSON config; CLI flags given explicitly override these values.
void apply_config_file(TrainArgs& a) {
  std::ifstream f(a.config_path);
  if (!f) {
    throw wsloc::Error("cannot open config '" + a.config_path + "'");
  }
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw wsloc::Error("config '" + a.config_path + "' is not a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "learning_rate") a.config.learning_rate = value.get<double>();
    else if (key == "batch_size") a.config.batch_size = value.get<std::size_t>();
    else if (key == "iterations") a.config.iterations = value.get<std::size_t>();
    else if (key == "beta1") a.config.beta1 = value.get<double>();
    else if (key == "beta2") a.config.beta2 = value.get<double>();
    else if (key == "epsilon") a.config.epsilon = value.get<double>();
    else if (key == "seed") a.config.seed = value.get<std::uint64_t>();
    else if (key == "literal_eq5") a.config.literal_eq5 = value.get<bool>();
    else if (key == "h") a.h = value.get<std::size_t>();
    else if (key == "layers") a.layers = value.get<std::size_t>();
    else if (key == "s") a.s = value.get<int>();
    else if (key == "p") a.p = value.get<double>();
    else if (key == "q") a.q = value.get<double>();
    else if (key == "lambda_weight") a.lambda_weight = value.get<double>();
    else if (key == "activation_threshold") a.activation_threshold = value.get<double>();
    else throw wsloc::Error("config '" + a.config_path + "': unknown key '" + key + "'");
  }
}

json train_config_json(const TrainArgs& a) {
  return json{{"manifest", a.manifest},
              {"out", a.out},
              {"learning_rate", a.config.learning_rate},
              {"batch_size", a.config.batch_size},
              {"iterations", a.config.iterations},
              {"beta1", a.config.beta1},
              {"beta2", a.config.beta2},
              {"epsilon", a.config.epsilon},
              {"seed", a.config.seed},
              {"literal_eq5", a.config.literal_eq5},
              {"h", a.h},
              {"layers", a.layers},
              {"s", a.s},
              {"p", a.p},
              {"q", a.q},
              {"lambda_weight", a.lambda_weight},
              {"activation_threshold", a.activation_threshold},
              {"checkpoint_every", a.checkpoint_every}};
}

int run_train(const TrainArgs& a) {
  print_config("train", train_config_json(a));
  wsloc::Dataset ds = wsloc::load_dataset(a.manifest);
  if (ds.features.empty()) {
    throw wsloc::Error("manifest '" + a.manifest + "' lists no videos");
  }

  wsloc::ModelHyper hp;
  hp.d = ds.features.front().cols;
  hp.h = a.h;
  hp.layers = a.layers;
  hp.n_ia = ds.manifest.goal_classes.size();
  hp.n_ua = ds.manifest.unint_classes.size();
  hp.s = a.s;
  hp.p = a.p;
  hp.q = a.q;
  hp.lambda_weight = a.lambda_weight;
  hp.activation_threshold = a.activation_threshold;

  fs::create_directories(a.out);
  wsloc::Params params = wsloc::init_params(hp, a.config.seed);
  wsloc::TrainIo io;
  io.log_path = (fs::path(a.out) / "train_log.jsonl").string();
  io.out_dir = a.out;
  io.checkpoint_every = a.checkpoint_every;
  auto history = wsloc::train(ds, params, hp, a.config, io);
  std::cout << "trained " << history.size() << " iterations; final total loss "
            << history.back().total << "\n";
  std::cout << "checkpoint: " << a.out << "/ckpt_" << a.config.iterations
            << ".json\n";
  return 0;
}

// Output paths like st/report imply directories the user never made.
void ensure_parent_dir(const std::string& path) {
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// ---- eval / localize --------------------------------------------------------

struct EvalArgs {
  std::string manifest;
  std::string ckpt;
  std::string out;
  double seg_threshold = 0.2;
  int threads = 1;
};

void print_map_row(const char* head, const wsloc::MapRow& row) {
  std::cout << head << " mAP@IoU";
  for (std::size_t i = 0; i < wsloc::kIouThresholds.size(); ++i) {
    std::printf(" %.1f=%.4f", wsloc::kIouThresholds[i], row.at_iou[i]);
  }
  std::printf(" avg=%.4f\n", row.avg);
}

int run_eval(const EvalArgs& a) {
  print_config("eval", json{{"manifest", a.manifest},
                            {"ckpt", a.ckpt},
                            {"out", a.out},
                            {"seg_threshold", a.seg_threshold},
                            {"threads", a.threads}});
  wsloc::Dataset ds = wsloc::load_dataset(a.manifest);
  wsloc::Checkpoint ck = wsloc::load_checkpoint(a.ckpt);
  wsloc::LocalizeOptions opts;
  opts.seg_threshold = a.seg_threshold;
  opts.threads = a.threads;

  fs::create_directories(a.out);
  auto locs = wsloc::localize_dataset(ds, ck.params, ck.hyper, opts);
  wsloc::write_predictions((fs::path(a.out) / "predictions.jsonl").string(), locs);
  wsloc::EvalResult res = wsloc::evaluate_dataset(ds, ck.params, ck.hyper, opts);
  wsloc::write_metrics_json((fs::path(a.out) / "metrics.json").string(), res);
  wsloc::write_metrics_csv((fs::path(a.out) / "metrics.csv").string(), res);

  print_map_row("goal ", res.table.goal);
  print_map_row("unint", res.table.unint);
  std::printf("cMAP goal=%.4f unint=%.4f\n", res.cmap_goal, res.cmap_unint);
  return 0;
}

struct LocalizeArgs {
  std::string manifest;
  std::string ckpt;
  std::string out;
  double seg_threshold = 0.2;
  int threads = 1;
};

int run_localize(const LocalizeArgs& a) {
  print_config("localize", json{{"manifest", a.manifest},
                                {"ckpt", a.ckpt},
                                {"out", a.out},
                                {"seg_threshold", a.seg_threshold},
                                {"threads", a.threads}});
  wsloc::Dataset ds = wsloc::load_dataset(a.manifest);
  wsloc::Checkpoint ck = wsloc::load_checkpoint(a.ckpt);
  wsloc::LocalizeOptions opts;
  opts.seg_threshold = a.seg_threshold;
  opts.threads = a.threads;
  auto locs = wsloc::localize_dataset(ds, ck.params, ck.hyper, opts);
  ensure_parent_dir(a.out);
  wsloc::write_predictions(a.out, locs);
  std::size_t total = 0;
  for (const auto& v : locs) total += v.goal.segments.size() + v.unint.segments.size();
  std::cout << "wrote " << total << " segments for " << locs.size() << " videos to "
            << a.out << "\n";
  return 0;
}

// ---- pose -------------------------------------------------------------------

struct PoseArgs {
  std::string keypoints;
  std::string out;
  std::string rgb;
};

int run_pose(const PoseArgs& a) {
  print_config("pose", json{{"keypoints", a.keypoints}, {"out", a.out}, {"rgb", a.rgb}});
  wsloc::PoseVideo video = wsloc::load_keypoints(a.keypoints);
  wsloc::Matrix chunks = wsloc::pose_features(video);
  ensure_parent_dir(a.out);
  if (a.rgb.empty()) {
    wsloc::write_feature_file(a.out, chunks);
    std::cout << "wrote " << chunks.rows << " pose chunks (width " << chunks.cols
              << ") to " << a.out << "\n";
    return 0;
  }
  wsloc::ClipFeatureSequence rgb = wsloc::read_feature_file(a.rgb);
  wsloc::ClipFeatureSequence fused = wsloc::fuse_with_rgb(rgb, chunks);
  wsloc::write_feature_file(a.out, fused.features);
  std::cout << "wrote " << fused.num_clips() << " fused clips (width "
            << fused.feature_dim() << ") to " << a.out << "\n";
  return 0;
}

// ---- stats ------------------------------------------------------------------

struct StatsArgs {
  std::string manifest;
  std::string out_prefix;
};

int run_stats(const StatsArgs& a) {
  print_config("stats", json{{"manifest", a.manifest}, {"out_prefix", a.out_prefix}});
  wsloc::Manifest m = wsloc::load_manifest(a.manifest);
  wsloc::DatasetStats st = wsloc::dataset_stats(m);
  wsloc::ConditionalEntropy ce = wsloc::conditional_entropy(wsloc::label_pair_counts(m));
  ensure_parent_dir(a.out_prefix);
  wsloc::write_stats_csv(st, m, a.out_prefix);
  wsloc::write_entropy_csv(ce, m, a.out_prefix + "_entropy.csv");
  std::cout << "videos: " << st.num_videos << " (" << st.num_train << " train / "
            << st.num_test << " test)\n";
  std::printf("mean length: %.2f clips (%.2f s)\n", st.mean_length_clips,
              st.mean_length_seconds);
  std::printf("conditional entropy H(unint|goal): %.4f bits\n", ce.average_bits);
  std::cout << "wrote " << a.out_prefix << "_{fractions,classes,summary,entropy}.csv\n";
  return 0;
}

// ---- gradcheck ----------------------------------------------------------------

struct GradcheckArgs {
  std::size_t d = 12;
  std::size_t h = 8;
  std::size_t layers = 2;
  std::size_t n_goal = 5;
  std::size_t n_unint = 4;
  std::vector<std::size_t> lengths = {4, 9};
  std::size_t seeds = 3;
  double eps = 1e-5;
  double threshold = 1e-4;
  long max_coords = 400;
  bool literal_eq5 = false;
};

int run_gradcheck(const GradcheckArgs& a) {
  print_config("gradcheck", json{{"d", a.d},
                                 {"h", a.h},
                                 {"layers", a.layers},
                                 {"n_goal", a.n_goal},
                                 {"n_unint", a.n_unint},
                                 {"lengths", a.lengths},
                                 {"seeds", a.seeds},
                                 {"eps", a.eps},
                                 {"threshold", a.threshold},
                                 {"max_coords", a.max_coords},
                                 {"literal_eq5", a.literal_eq5}});
  wsloc::ModelHyper hp;
  hp.d = a.d;
  hp.h = a.h;
  hp.layers = a.layers;
  hp.n_ia = a.n_goal;
  hp.n_ua = a.n_unint;

  wsloc::GradCheckOptions opts;
  opts.eps = a.eps;
  opts.max_coords = a.max_coords;

  bool ok = true;
  for (std::uint64_t seed = 0; seed < a.seeds; ++seed) {
    for (std::size_t l : a.lengths) {
      opts.sample_seed = seed * 1000 + l;
      double err = wsloc::total_loss_grad_check(hp, l, seed, opts, a.literal_eq5);
      bool pass = err < a.threshold;
      ok = ok && pass;
      std::printf("seed=%llu l=%zu max_rel_err=%.3e %s\n",
                  static_cast<unsigned long long>(seed), l, err,
                  pass ? "ok" : "FAIL");
    }
  }
  if (!ok) {
    std::cerr << "gradient check failed (threshold " << a.threshold << ")\n";
    return 1;
  }
  return 0;
}

std::string find_config_arg(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    std::string s = argv[i];
    if (s == "--config" && i + 1 < argc) return argv[i + 1];
    if (s.rfind("--config=", 0) == 0) return s.substr(9);
  }
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised temporal localization of goal-directed and "
               "unintentional activity"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  TrainArgs train_args;
  EvalArgs eval_args;
  LocalizeArgs loc_args;
  PoseArgs pose_args;
  StatsArgs stats_args;
  GradcheckArgs gc_args;

  // A config file supplies train defaults; explicit flags still win because
  // CLI11 writes parsed values after these defaults are installed.
  if (argc > 1 && std::string(argv[1]) == "train") {
    train_args.config_path = find_config_arg(argc, argv);
  }
  if (!train_args.config_path.empty()) {
    try {
      apply_config_file(train_args);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }

  auto* synth = app.add_subcommand("synth", "Generate a synthetic benchmark dataset");
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--num-videos", synth_args.spec.num_videos, "Videos to generate")
      ->capture_default_str();
  synth->add_option("--l-min", synth_args.spec.l_min, "Min clips per video")
      ->capture_default_str();
  synth->add_option("--l-max", synth_args.spec.l_max, "Max clips per video")
      ->capture_default_str();
  synth->add_option("--d", synth_args.spec.d, "Feature dim")->capture_default_str();
  synth->add_option("--n-goal", synth_args.spec.n_goal, "Goal classes")
      ->capture_default_str();
  synth->add_option("--n-unint", synth_args.spec.n_unint, "Unintentional classes")
      ->capture_default_str();
  synth->add_option("--sigma", synth_args.spec.noise_sigma, "Cluster noise sigma")
      ->capture_default_str();
  synth->add_option("--transition-lo", synth_args.spec.transition_lo,
                    "Min transition fraction")
      ->capture_default_str();
  synth->add_option("--transition-hi", synth_args.spec.transition_hi,
                    "Max transition fraction")
      ->capture_default_str();
  synth->add_option("--train-fraction", synth_args.train_fraction,
                    "Share of videos in manifest_train.json")
      ->capture_default_str();
  synth->add_option("--seed", synth_args.spec.seed, "RNG seed")->capture_default_str();

  auto* train = app.add_subcommand("train", "Train a model from a manifest");
  train->add_option("--manifest", train_args.manifest, "Dataset manifest JSON")
      ->required();
  train->add_option("--out", train_args.out, "Output directory")->required();
  train->add_option("--config", train_args.config_path,
                    "JSON config with flat TrainConfig keys (flags override)");
  train->add_option("--lr", train_args.config.learning_rate, "Learning rate")
      ->capture_default_str();
  train->add_option("--batch-size", train_args.config.batch_size, "Batch size")
      ->capture_default_str();
  train->add_option("--iterations", train_args.config.iterations, "Training iterations")
      ->capture_default_str();
  train->add_option("--seed", train_args.config.seed, "RNG seed")->capture_default_str();
  train->add_flag("--literal-eq5", train_args.config.literal_eq5,
                  "Use the printed l/q ordering margin instead of 1/q");
  train->add_option("--hidden", train_args.h, "GRU hidden size per direction")
      ->capture_default_str();
  train->add_option("--layers", train_args.layers, "Stacked BiGRU layers")
      ->capture_default_str();
  train->add_option("--s", train_args.s, "Top-k divisor (k = max(1, l/s))")
      ->capture_default_str();
  train->add_option("--p", train_args.p, "Overlap margin divisor")->capture_default_str();
  train->add_option("--q", train_args.q, "Ordering margin divisor")->capture_default_str();
  train->add_option("--lambda-weight", train_args.lambda_weight,
                    "Classification weight in the combined loss")
      ->capture_default_str();
  train->add_option("--activation-threshold", train_args.activation_threshold,
                    "Attention threshold for the overlap index sets")
      ->capture_default_str();
  train->add_option("--checkpoint-every", train_args.checkpoint_every,
                    "Also write ckpt_{i}.json every N iterations (0 = final only)")
      ->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint: mAP@IoU and cMAP");
  eval->add_option("--manifest", eval_args.manifest, "Test manifest (needs transitions)")
      ->required();
  eval->add_option("--ckpt", eval_args.ckpt, "Checkpoint JSON")->required();
  eval->add_option("--out", eval_args.out, "Output directory")->required();
  eval->add_option("--seg-threshold", eval_args.seg_threshold,
                   "Weighted-TCAM segment threshold")
      ->capture_default_str();
  eval->add_option("--threads", eval_args.threads, "Per-video eval parallelism")
      ->capture_default_str();

  auto* localize = app.add_subcommand("localize", "Write predicted segments");
  localize->add_option("--manifest", loc_args.manifest, "Manifest JSON")->required();
  localize->add_option("--ckpt", loc_args.ckpt, "Checkpoint JSON")->required();
  localize->add_option("--out", loc_args.out, "Predictions JSONL path")->required();
  localize->add_option("--seg-threshold", loc_args.seg_threshold,
                       "Weighted-TCAM segment threshold")
      ->capture_default_str();
  localize->add_option("--threads", loc_args.threads, "Per-video parallelism")
      ->capture_default_str();

  auto* pose = app.add_subcommand("pose", "Keypoint JSON to pose feature file");
  pose->add_option("--keypoints", pose_args.keypoints, "Keypoint JSON path")->required();
  pose->add_option("--out", pose_args.out, "Output feature file")->required();
  pose->add_option("--rgb", pose_args.rgb,
                   "RGB feature file to fuse (output is per-clip [rgb|pose])");

  auto* stats = app.add_subcommand("stats", "Dataset statistics and entropy study");
  stats->add_option("--manifest", stats_args.manifest, "Manifest JSON")->required();
  stats->add_option("--out", stats_args.out_prefix, "Output CSV path prefix")
      ->required();

  auto* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference check of the combined loss");
  gradcheck->add_option("--d", gc_args.d, "Feature dim")->capture_default_str();
  gradcheck->add_option("--hidden", gc_args.h, "GRU hidden size")->capture_default_str();
  gradcheck->add_option("--layers", gc_args.layers, "BiGRU layers")->capture_default_str();
  gradcheck->add_option("--n-goal", gc_args.n_goal, "Goal classes")->capture_default_str();
  gradcheck->add_option("--n-unint", gc_args.n_unint, "Unintentional classes")
      ->capture_default_str();
  gradcheck->add_option("--lengths", gc_args.lengths, "Clip counts to test")
      ->delimiter(',')
      ->capture_default_str();
  gradcheck->add_option("--seeds", gc_args.seeds, "Number of seeds")->capture_default_str();
  gradcheck->add_option("--eps", gc_args.eps, "Central-difference step")
      ->capture_default_str();
  gradcheck->add_option("--threshold", gc_args.threshold, "Max relative error allowed")
      ->capture_default_str();
  gradcheck->add_option("--max-coords", gc_args.max_coords,
                        "Coordinates to sample per run (-1 = all)")
      ->capture_default_str();
  gradcheck->add_flag("--literal-eq5", gc_args.literal_eq5,
                      "Use the printed l/q ordering margin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return run_synth(synth_args);
    if (train->parsed()) return run_train(train_args);
    if (eval->parsed()) return run_eval(eval_args);
    if (localize->parsed()) return run_localize(loc_args);
    if (pose->parsed()) return run_pose(pose_args);
    if (stats->parsed()) return run_stats(stats_args);
    if (gradcheck->parsed()) return run_gradcheck(gc_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
