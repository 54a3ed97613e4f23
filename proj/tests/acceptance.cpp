// Runs the ten acceptance checks, one printed line each, exit 1 on any
// failure. Training-based checks share fixture runs to keep the wall time
// reasonable.

#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "wsloc/analysis.hpp"
#include "wsloc/eval.hpp"
#include "wsloc/io.hpp"
#include "wsloc/losses.hpp"
#include "wsloc/model.hpp"
#include "wsloc/pose.hpp"
#include "wsloc/rng.hpp"
#include "wsloc/tensor.hpp"
#include "wsloc/trainer.hpp"

using namespace wsloc;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and bounds.
constexpr double kGradTol = 1e-4;
constexpr double kGradRuntimeLimit = 60.0;  // seconds
constexpr double kOracleTol = 1e-12;
constexpr double kChanceBand = 0.010;       // +-1 percentage point
constexpr double kChance30 = 0.033;
constexpr double kChance44Lo = 0.023;
constexpr double kChance44Hi = 0.027;
constexpr double kEntropyExpected = 4.91;
constexpr double kEntropyTol = 0.01;
constexpr double kMapAvgMin = 0.50;
constexpr double kMapAt3Min = 0.70;
constexpr double kFixtureRuntimeLimit = 300.0;  // seconds
constexpr double kGoalGapMin = 0.10;
constexpr double kUnintGapMin = 0.05;
constexpr double kOrderedFractionMin = 0.90;
constexpr double kPoseNormTol = 1e-9;

struct AcceptFail {
  std::string why;
};

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// ---- independent AP oracle ----------------------------------------------

double oracle_iou(const ScoredSegment& p, const GtSegment& g) {
  double lo = static_cast<double>(std::max(p.start_clip, g.start_clip));
  double hi = static_cast<double>(std::min(p.end_clip, g.end_clip));
  double inter = hi >= lo ? hi - lo + 1.0 : 0.0;
  double uni = static_cast<double>(p.end_clip - p.start_clip + 1) +
               static_cast<double>(g.end_clip - g.start_clip + 1) - inter;
  return inter / uni;
}

double oracle_ap(std::vector<ScoredSegment> preds, const std::vector<GtSegment>& gts,
                 double thr) {
  if (gts.empty()) return 0.0;
  std::sort(preds.begin(), preds.end(),
            [](const ScoredSegment& a, const ScoredSegment& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.video_id != b.video_id) return a.video_id < b.video_id;
              return a.start_clip < b.start_clip;
            });
  std::vector<bool> taken(gts.size(), false);
  std::vector<bool> hit(preds.size(), false);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::size_t arg = gts.size();
    double best = 0.0;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[j] || gts[j].video_id != preds[i].video_id) continue;
      double iou = oracle_iou(preds[i], gts[j]);
      if (iou >= thr && iou > best) {
        best = iou;
        arg = j;
      }
    }
    if (arg < gts.size()) {
      taken[arg] = true;
      hit[i] = true;
    }
  }
  double ap = 0.0, prev_recall = 0.0, cum = 0.0;
  for (std::size_t k = 1; k <= preds.size(); ++k) {
    if (hit[k - 1]) cum += 1.0;
    double precision = cum / static_cast<double>(k);
    double recall = cum / static_cast<double>(gts.size());
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

void random_detection_case(Rng& rng, std::vector<ScoredSegment>& preds,
                           std::vector<GtSegment>& gts, std::size_t& num_classes) {
  preds.clear();
  gts.clear();
  std::size_t num_videos = 1 + rng.index(5);
  num_classes = 1 + rng.index(4);
  for (std::size_t v = 0; v < num_videos; ++v) {
    std::string vid = "v" + std::to_string(v);
    std::size_t l = 10 + rng.index(11);
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (rng.uniform(0.0, 1.0) < 0.6) {
        std::size_t start = rng.index(l - 2);
        std::size_t end = start + 1 + rng.index(l - start - 1);
        gts.push_back(GtSegment{vid, start, end, c});
      }
    }
    std::size_t n = rng.index(7);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t start = rng.index(l - 1);
      std::size_t end = start + rng.index(l - start);
      preds.push_back(ScoredSegment{vid, start, end, rng.index(num_classes),
                                    rng.uniform(0.0, 1.0)});
    }
  }
}

// ---- shared fixture runs ---------------------------------------------------

struct FixtureRun {
  Params params;
  MapTable table;
  double cmap_goal = 0.0;
  double cmap_unint = 0.0;
};

struct Fixture {
  Dataset train_ds;
  Dataset test_ds;
  ModelHyper hyper;                // full loss
  std::vector<FixtureRun> full;    // seeds 0,1,2
  std::vector<FixtureRun> mil;     // lambda_weight = 1
  double seed0_seconds = 0.0;      // train + eval, threads = 1

  static Fixture& get() {
    static Fixture f = build();
    return f;
  }

 private:
  static FixtureRun run_one(const Dataset& train_ds, const Dataset& test_ds,
                            const ModelHyper& hp, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.learning_rate = 3e-3;
    cfg.batch_size = 16;
    cfg.iterations = 2000;
    cfg.seed = seed;
    FixtureRun run{init_params(hp, seed), {}, 0.0, 0.0};
    train(train_ds, run.params, hp, cfg);
    LocalizeOptions opts;
    EvalResult res = evaluate_dataset(test_ds, run.params, hp, opts);
    run.table = res.table;
    run.cmap_goal = res.cmap_goal;
    run.cmap_unint = res.cmap_unint;
    return run;
  }

  static Fixture build() {
    Fixture f;
    SyntheticSpec spec;  // 200 videos, d=32, l in [16,32], 4/3 classes, sigma 0.3
    spec.seed = 0;
    Dataset all = synth_generate(spec);
    auto [train_side, test_side] = split_dataset(all, 0.8);
    f.train_ds = std::move(train_side);
    f.test_ds = std::move(test_side);

    f.hyper.d = spec.d;
    f.hyper.h = 16;
    f.hyper.layers = 1;
    f.hyper.n_ia = spec.n_goal;
    f.hyper.n_ua = spec.n_unint;

    double t0 = now_seconds();
    f.full.push_back(run_one(f.train_ds, f.test_ds, f.hyper, 0));
    f.seed0_seconds = now_seconds() - t0;
    for (std::uint64_t seed : {1ull, 2ull}) {
      f.full.push_back(run_one(f.train_ds, f.test_ds, f.hyper, seed));
    }

    ModelHyper mil_hp = f.hyper;
    mil_hp.lambda_weight = 1.0;  // classification terms only
    for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
      f.mil.push_back(run_one(f.train_ds, f.test_ds, mil_hp, seed));
    }
    return f;
  }
};

// ---- criteria --------------------------------------------------------------

std::string check_gradients() {
  ModelHyper hp;
  hp.d = 6;
  hp.h = 8;
  hp.layers = 1;
  hp.n_ia = 4;
  hp.n_ua = 3;
  GradCheckOptions opts;  // every coordinate, eps 1e-5
  double worst = 0.0;
  double t0 = now_seconds();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (std::size_t l : {4, 9, 17}) {
      double err = total_loss_grad_check(hp, l, seed, opts);
      worst = std::max(worst, err);
      if (err >= kGradTol) {
        std::ostringstream os;
        os << "seed " << seed << " l " << l << " err " << err;
        throw AcceptFail{os.str()};
      }
    }
  }
  double elapsed = now_seconds() - t0;
  if (elapsed >= kGradRuntimeLimit) {
    throw AcceptFail{"runtime " + std::to_string(elapsed) + "s exceeds 60s"};
  }
  std::ostringstream os;
  os << "max err " << std::scientific << worst << std::fixed << ", "
     << std::setprecision(1) << elapsed << "s";
  return os.str();
}

std::string check_oracle() {
  Rng rng(42);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ScoredSegment> preds;
    std::vector<GtSegment> gts;
    std::size_t num_classes = 0;
    random_detection_case(rng, preds, gts, num_classes);

    std::size_t classes_with_gt = 0;
    std::array<double, 9> mean_ap{};
    for (std::size_t c = 0; c < num_classes; ++c) {
      std::vector<ScoredSegment> cp;
      std::vector<GtSegment> cg;
      for (const auto& p : preds) {
        if (p.class_id == c) cp.push_back(p);
      }
      for (const auto& g : gts) {
        if (g.class_id == c) cg.push_back(g);
      }
      if (!cg.empty()) ++classes_with_gt;
      for (std::size_t i = 0; i < kIouThresholds.size(); ++i) {
        double want = oracle_ap(cp, cg, kIouThresholds[i]);
        double got = average_precision(cp, cg, kIouThresholds[i]);
        worst = std::max(worst, std::abs(got - want));
        if (!cg.empty()) mean_ap[i] += want;
      }
    }
    if (classes_with_gt == 0) continue;
    MapRow row = map_at_iou(preds, gts, num_classes);
    for (std::size_t i = 0; i < kIouThresholds.size(); ++i) {
      double want = mean_ap[i] / static_cast<double>(classes_with_gt);
      worst = std::max(worst, std::abs(row.at_iou[i] - want));
    }
  }
  if (worst > kOracleTol) {
    throw AcceptFail{"max deviation " + std::to_string(worst)};
  }
  std::ostringstream os;
  os << "max deviation " << std::scientific << worst << " over 50 cases";
  return os.str();
}

std::string check_perfect_detector() {
  Rng rng(7);
  std::vector<GtSegment> goal_gts, unint_gts;
  std::vector<ScoredSegment> goal_preds, unint_preds;
  std::vector<std::vector<double>> pmfs;
  std::vector<std::size_t> labels;
  const std::size_t n_goal = 4;
  for (std::size_t v = 0; v < 12; ++v) {
    std::string vid = "v" + std::to_string(v);
    std::size_t l = 8 + rng.index(9);
    std::size_t t = 1 + rng.index(l - 1);
    std::size_t gc = rng.index(n_goal);
    std::size_t uc = rng.index(3);
    goal_gts.push_back(GtSegment{vid, 0, t - 1, gc});
    unint_gts.push_back(GtSegment{vid, t, l - 1, uc});
    goal_preds.push_back(ScoredSegment{vid, 0, t - 1, gc, rng.uniform(0.1, 1.0)});
    unint_preds.push_back(ScoredSegment{vid, t, l - 1, uc, rng.uniform(0.1, 1.0)});
    std::vector<double> pmf(n_goal, 0.0);
    pmf[gc] = 1.0;
    pmfs.push_back(pmf);
    labels.push_back(gc);
  }
  MapRow goal_row = map_at_iou(goal_preds, goal_gts, n_goal);
  MapRow unint_row = map_at_iou(unint_preds, unint_gts, 3);
  for (std::size_t i = 0; i < kIouThresholds.size(); ++i) {
    if (std::abs(goal_row.at_iou[i] - 1.0) > 1e-12 ||
        std::abs(unint_row.at_iou[i] - 1.0) > 1e-12) {
      throw AcceptFail{"mAP below 1.0 at threshold " +
                       std::to_string(kIouThresholds[i])};
    }
  }
  double cmap = classification_map(pmfs, labels, n_goal);
  if (std::abs(cmap - 1.0) > 1e-12) {
    throw AcceptFail{"cMAP " + std::to_string(cmap)};
  }
  return "mAP 1.0 at all nine thresholds, cMAP 1.0";
}

double chance_cmap(std::size_t num_classes, std::size_t per_class, Rng& rng) {
  const std::size_t n = num_classes * per_class;
  std::vector<std::vector<double>> scores(n, std::vector<double>(num_classes));
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i % num_classes;
    for (auto& s : scores[i]) s = rng.uniform(0.0, 1.0);
  }
  return classification_map(scores, labels, num_classes);
}

std::string check_chance_anchor() {
  // Random-ranking AP is biased above 1/num_classes when each class has only
  // a handful of positives; 128 per class brings the mean within a whisker
  // of the asymptote while staying cheap.
  Rng rng(100);
  double mean30 = 0.0, mean44 = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    mean30 += chance_cmap(30, 128, rng) / 100.0;
    mean44 += chance_cmap(44, 128, rng) / 100.0;
  }
  if (std::abs(mean30 - kChance30) > kChanceBand) {
    throw AcceptFail{"30-class chance cMAP " + std::to_string(mean30)};
  }
  if (mean44 < kChance44Lo - kChanceBand || mean44 > kChance44Hi + kChanceBand) {
    throw AcceptFail{"44-class chance cMAP " + std::to_string(mean44)};
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "30-class %.4f (target 0.033), 44-class %.4f",
                mean30, mean44);
  return buf;
}

std::string check_entropy_anchor() {
  LabelPairCounts uniform(1, 30);
  for (std::size_t u = 0; u < 30; ++u) uniform.at(0, u) = 2;
  double bits = *conditional_entropy(uniform).per_goal_bits[0];
  if (std::abs(bits - kEntropyExpected) > kEntropyTol) {
    throw AcceptFail{"uniform 30-class entropy " + std::to_string(bits)};
  }
  LabelPairCounts det(1, 30);
  det.at(0, 11) = 9;
  double zero = *conditional_entropy(det).per_goal_bits[0];
  if (zero != 0.0) {
    throw AcceptFail{"deterministic row entropy " + std::to_string(zero)};
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "uniform %.4f bits, deterministic 0", bits);
  return buf;
}

std::string check_fixture_localization() {
  Fixture& f = Fixture::get();
  const MapRow& goal = f.full[0].table.goal;
  const MapRow& unint = f.full[0].table.unint;
  // kIouThresholds[2] = 0.3.
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "goal avg %.3f @0.3 %.3f, unint avg %.3f @0.3 %.3f, %.0fs",
                goal.avg, goal.at_iou[2], unint.avg, unint.at_iou[2],
                f.seed0_seconds);
  if (goal.avg < kMapAvgMin || unint.avg < kMapAvgMin ||
      goal.at_iou[2] < kMapAt3Min || unint.at_iou[2] < kMapAt3Min) {
    throw AcceptFail{buf};
  }
  if (f.seed0_seconds >= kFixtureRuntimeLimit) {
    throw AcceptFail{std::string(buf) + " (over the 300s budget)"};
  }
  return buf;
}

std::string check_ablation_direction() {
  Fixture& f = Fixture::get();
  double full_goal = 0.0, full_unint = 0.0, mil_goal = 0.0, mil_unint = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    full_goal += f.full[i].table.goal.avg / 3.0;
    full_unint += f.full[i].table.unint.avg / 3.0;
    mil_goal += f.mil[i].table.goal.avg / 3.0;
    mil_unint += f.mil[i].table.unint.avg / 3.0;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "goal %.3f vs %.3f (gap %.3f), unint %.3f vs %.3f (gap %.3f)",
                full_goal, mil_goal, full_goal - mil_goal, full_unint, mil_unint,
                full_unint - mil_unint);
  if (full_goal - mil_goal < kGoalGapMin || full_unint - mil_unint < kUnintGapMin) {
    throw AcceptFail{buf};
  }
  return buf;
}

std::string check_centroid_ordering() {
  Fixture& f = Fixture::get();
  LocalizeOptions opts;
  auto locs = localize_dataset(f.test_ds, f.full[0].params, f.hyper, opts);
  std::size_t ordered = 0;
  for (const auto& v : locs) {
    if (v.goal.centroid < v.unint.centroid) ++ordered;
  }
  double frac = static_cast<double>(ordered) / static_cast<double>(locs.size());
  char buf[96];
  std::snprintf(buf, sizeof(buf), "goal centroid precedes unint on %zu/%zu (%.0f%%)",
                ordered, locs.size(), 100.0 * frac);
  if (frac < kOrderedFractionMin) {
    throw AcceptFail{buf};
  }
  return buf;
}

std::string check_pose_pipeline() {
  // Hand-computed toy skeleton (same geometry the docs describe).
  FrameKeypoints kps{};
  auto put = [&](std::size_t i, double x, double y) {
    kps[i] = Keypoint{x, y, 0.9, true};
  };
  put(kNose, 100, 100);
  put(kNeck, 0, 0);
  put(kLShoulder, 1, 0);
  put(kLElbow, 1, 1);
  put(kLWrist, 2, 2);
  put(kRShoulder, -1, 0);
  put(kRElbow, -1, -1);
  put(kRWrist, -4, -5);
  put(kLHip, 0, 3);
  put(kLKnee, 0, 5);
  put(kLAnkle, 3, 9);
  put(kRHip, 0, -3);
  put(kRKnee, -4, -6);
  put(kRAnkle, -4, -6);
  put(kREye, 50, 50);
  put(kLEye, 51, 50);
  put(kREar, 52, 50);
  put(kLEar, 53, 50);

  const double r2 = 1.0 / std::sqrt(2.0);
  const double expected[kFrameVectorWidth] = {
      1, 0, 0, 1, r2, r2, -1, 0, 0, -1, -0.6, -0.8,
      0, 1, 0, 1, 0.6, 0.8, 0, -1, -0.8, -0.6, 0, 0,
  };
  FrameVector toy = vectorize_frame(kps);
  for (std::size_t i = 0; i < kFrameVectorWidth; ++i) {
    if (std::abs(toy[i] - expected[i]) > 1e-12) {
      throw AcceptFail{"toy skeleton direction " + std::to_string(i) + " off"};
    }
  }

  Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    FrameKeypoints frame{};
    for (auto& k : frame) {
      k = Keypoint{rng.uniform(-40.0, 40.0), rng.uniform(-40.0, 40.0), 0.9,
                   rng.uniform(0.0, 1.0) > 0.25};
    }
    FrameVector v = vectorize_frame(frame);
    for (std::size_t i = 0; i < kNumConnections; ++i) {
      double norm = std::hypot(v[2 * i], v[2 * i + 1]);
      if (!(norm == 0.0 || std::abs(norm - 1.0) <= kPoseNormTol)) {
        throw AcceptFail{"connection norm " + std::to_string(norm)};
      }
    }
    // Translation and positive scaling leave directions unchanged.
    double scale = rng.uniform(0.2, 15.0);
    double tx = rng.uniform(-200.0, 200.0), ty = rng.uniform(-200.0, 200.0);
    FrameKeypoints moved = frame;
    for (auto& k : moved) {
      k.x = scale * k.x + tx;
      k.y = scale * k.y + ty;
    }
    FrameVector w = vectorize_frame(moved);
    for (std::size_t i = 0; i < kFrameVectorWidth; ++i) {
      if (std::abs(v[i] - w[i]) > kPoseNormTol) {
        throw AcceptFail{"transform changed a direction by " +
                         std::to_string(std::abs(v[i] - w[i]))};
      }
    }
  }
  return "toy skeleton exact, norms unit-or-zero, 100 transforms invariant";
}

std::string check_determinism_roundtrips() {
  fs::path dir = fs::temp_directory_path() /
                 ("wsloc_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  struct Cleanup {
    fs::path p;
    ~Cleanup() { fs::remove_all(p); }
  } cleanup{dir};

  SyntheticSpec spec;
  spec.num_videos = 24;
  spec.l_min = 6;
  spec.l_max = 10;
  spec.d = 8;
  spec.n_goal = 3;
  spec.n_unint = 2;
  spec.seed = 9;
  Dataset ds = synth_generate(spec);
  ModelHyper hp;
  hp.d = spec.d;
  hp.h = 8;
  hp.layers = 1;
  hp.n_ia = spec.n_goal;
  hp.n_ua = spec.n_unint;
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.iterations = 10;
  cfg.seed = 2;

  auto run_logged = [&](const std::string& name) {
    Params params = init_params(hp, 3);
    TrainIo io;
    io.log_path = (dir / name).string();
    train(ds, params, hp, cfg, io);
    std::ifstream f(io.log_path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  std::string log_a = run_logged("a.jsonl");
  std::string log_b = run_logged("b.jsonl");
  if (log_a.empty() || log_a != log_b) {
    throw AcceptFail{"same-seed training logs differ"};
  }

  // Feature file round trip: exact after one float narrowing, then stable.
  Rng rng(31);
  Matrix m(9, 7);
  for (auto& x : m.data) {
    x = static_cast<double>(static_cast<float>(rng.uniform(-5.0, 5.0)));
  }
  std::string fpath = (dir / "roundtrip.tfv").string();
  write_feature_file(fpath, m);
  ClipFeatureSequence seq = read_feature_file(fpath);
  if (seq.features.data != m.data) {
    throw AcceptFail{"feature round trip changed float-representable values"};
  }

  // Checkpoint round trip: bit-exact doubles, order preserved.
  Params params = init_params(hp, 3);
  std::string cpath = (dir / "ckpt.json").string();
  save_checkpoint(cpath, params, hp);
  Checkpoint ck = load_checkpoint(cpath);
  if (ck.params.count() != params.count()) {
    throw AcceptFail{"checkpoint dropped parameters"};
  }
  for (std::size_t i = 0; i < params.count(); ++i) {
    if (ck.params.items()[i].first != params.items()[i].first ||
        ck.params.items()[i].second.value() != params.items()[i].second.value()) {
      throw AcceptFail{"checkpoint round trip not value-exact at '" +
                       params.items()[i].first + "'"};
    }
  }
  return "logs bit-identical, feature and checkpoint round trips exact";
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<std::string()> run;
  };
  const std::vector<Criterion> criteria = {
      {"gradient integrity of the combined loss", check_gradients},
      {"evaluator matches the brute-force oracle", check_oracle},
      {"perfect detector scores 1.0", check_perfect_detector},
      {"chance-level classification anchor", check_chance_anchor},
      {"conditional entropy anchor", check_entropy_anchor},
      {"synthetic fixture localization quality", check_fixture_localization},
      {"full loss beats MIL-only ablation", check_ablation_direction},
      {"attention centroids are ordered", check_centroid_ordering},
      {"pose vector pipeline", check_pose_pipeline},
      {"determinism and round trips", check_determinism_roundtrips},
  };

  bool all_ok = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    std::string detail;
    bool ok = true;
    try {
      detail = criteria[i].run();
    } catch (const AcceptFail& f) {
      ok = false;
      detail = f.why;
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("unexpected error: ") + e.what();
    }
    std::printf("[%2zu] %s  %s (%s)\n", i + 1, ok ? "PASS" : "FAIL",
                criteria[i].name, detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 1;
}
