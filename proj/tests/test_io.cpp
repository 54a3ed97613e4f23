#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "wsloc/io.hpp"
#include "wsloc/model.hpp"
#include "wsloc/rng.hpp"
#include "wsloc/tensor.hpp"

using namespace wsloc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("wsloc_io_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> feature_bytes(std::uint32_t l, std::uint32_t d,
                                         std::size_t payload_floats) {
  std::vector<unsigned char> b = {'T', 'F', 'V', '1'};
  for (std::uint32_t v : {l, d}) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  b.resize(b.size() + 4 * payload_floats, 0);
  return b;
}

Manifest small_manifest() {
  Manifest m;
  m.goal_classes = {"spin", "lift"};
  m.unint_classes = {"fall"};
  VideoEntry a;
  a.id = "alpha";
  a.feature_path = "alpha.tfv";
  a.goal_label = 1;
  a.unint_label = 0;
  a.num_clips = 4;
  VideoEntry b = a;
  b.id = "beta";
  b.feature_path = "beta.tfv";
  b.goal_label = 0;
  b.num_clips = 6;
  b.transition_clip = 2;
  m.videos = {a, b};
  return m;
}

}  // namespace

TEST_CASE("feature files round-trip at float precision") {
  TempDir dir;
  Rng rng(8);
  Matrix m(7, 5);
  for (auto& x : m.data) x = rng.uniform(-3.0, 3.0);
  std::string path = dir.file("clip01.tfv");
  write_feature_file(path, m);

  ClipFeatureSequence seq = read_feature_file(path);
  CHECK(seq.video_id == "clip01");
  REQUIRE(seq.num_clips() == 7);
  REQUIRE(seq.feature_dim() == 5);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    CHECK(seq.features.data[i] == static_cast<double>(static_cast<float>(m.data[i])));
  }

  // Wide rows survive too.
  Matrix wide(2, 1024);
  for (auto& x : wide.data) x = rng.uniform(-1.0, 1.0);
  std::string wpath = dir.file("wide.tfv");
  write_feature_file(wpath, wide);
  ClipFeatureSequence wseq = read_feature_file(wpath);
  CHECK(wseq.num_clips() == 2);
  CHECK(wseq.feature_dim() == 1024);
}

TEST_CASE("feature file failures are typed and descriptive") {
  TempDir dir;

  std::string magic = dir.file("magic.tfv");
  auto bad = feature_bytes(1, 1, 1);
  bad[0] = 'X';
  write_bytes(magic, bad);
  CHECK_THROWS_AS(read_feature_file(magic), BadMagicError);

  // Header promises 3x2 floats but the payload holds 4.
  std::string trunc = dir.file("short.tfv");
  write_bytes(trunc, feature_bytes(3, 2, 4));
  try {
    read_feature_file(trunc);
    FAIL("expected truncation");
  } catch (const TruncatedFileError& e) {
    std::string msg = e.what();
    CHECK(msg.find(std::to_string(12 + 4 * 6)) != std::string::npos);
    CHECK(msg.find(std::to_string(12 + 4 * 4)) != std::string::npos);
  }

  // Shorter than the fixed header.
  std::string stub = dir.file("stub.tfv");
  write_bytes(stub, {'T', 'F', 'V', '1', 0, 0});
  CHECK_THROWS_AS(read_feature_file(stub), TruncatedFileError);

  // Header dimensions overflow the element budget.
  std::string huge = dir.file("huge.tfv");
  write_bytes(huge, feature_bytes(0xFFFFFFFFu, 0xFFFFFFFFu, 0));
  CHECK_THROWS_AS(read_feature_file(huge), SizeOverflowError);

  CHECK_THROWS_AS(read_feature_file(dir.file("absent.tfv")), Error);
}

TEST_CASE("manifest save/load round trip preserves every field") {
  TempDir dir;
  Manifest m = small_manifest();
  std::string path = dir.file("manifest.json");
  save_manifest(m, path);
  Manifest r = load_manifest(path);

  CHECK(r.goal_classes == m.goal_classes);
  CHECK(r.unint_classes == m.unint_classes);
  REQUIRE(r.videos.size() == 2);
  CHECK(r.videos[0].id == "alpha");
  CHECK(r.videos[0].goal_label == 1);
  CHECK(!r.videos[0].transition_clip.has_value());
  CHECK(r.videos[1].num_clips == 6);
  REQUIRE(r.videos[1].transition_clip.has_value());
  CHECK(*r.videos[1].transition_clip == 2);
}

TEST_CASE("manifest schema violations name the JSON path and video") {
  TempDir dir;
  auto write_json = [&](const std::string& name, const nlohmann::json& j) {
    std::ofstream f(dir.file(name));
    f << j.dump();
    return dir.file(name);
  };

  nlohmann::json base;
  base["format_version"] = 1;
  base["goal_classes"] = {"a", "b"};
  base["unint_classes"] = {"u"};
  base["videos"] = nlohmann::json::array();
  nlohmann::json v;
  v["id"] = "vid0";
  v["feature_path"] = "x.tfv";
  v["goal_label"] = 0;
  v["unint_label"] = 0;
  v["num_clips"] = 5;
  base["videos"].push_back(v);

  CHECK_NOTHROW(load_manifest(write_json("ok.json", base)));

  auto expect_error = [&](const nlohmann::json& j, const std::string& needle) {
    try {
      load_manifest(write_json("bad.json", j));
      FAIL("expected a schema error for ", needle);
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  nlohmann::json missing = base;
  missing["videos"][0].erase("goal_label");
  expect_error(missing, "/videos/0");

  nlohmann::json range = base;
  range["videos"][0]["goal_label"] = 7;
  expect_error(range, "vid0");

  nlohmann::json trans = base;
  trans["videos"][0]["transition_clip"] = 5;  // must be < num_clips
  expect_error(trans, "/videos/0/transition_clip");
  trans["videos"][0]["transition_clip"] = 0;
  expect_error(trans, "transition");

  nlohmann::json clips = base;
  clips["videos"][0]["num_clips"] = 0;
  expect_error(clips, "num_clips");

  nlohmann::json version = base;
  version["format_version"] = 2;
  expect_error(version, "format_version");

  std::ofstream junk(dir.file("junk.json"));
  junk << "not json at all{";
  junk.close();
  CHECK_THROWS_AS(load_manifest(dir.file("junk.json")), Error);

  // Full-size class vocabularies load fine.
  nlohmann::json big = base;
  big["goal_classes"] = nlohmann::json::array();
  for (int i = 0; i < 44; ++i) big["goal_classes"].push_back("goal" + std::to_string(i));
  big["unint_classes"] = nlohmann::json::array();
  for (int i = 0; i < 30; ++i) big["unint_classes"].push_back("oops" + std::to_string(i));
  big["videos"][0]["goal_label"] = 43;
  big["videos"][0]["unint_label"] = 29;
  Manifest loaded = load_manifest(write_json("big.json", big));
  CHECK(loaded.goal_classes.size() == 44);
  CHECK(loaded.unint_classes.size() == 30);
}

TEST_CASE("load_dataset resolves features relative to the manifest") {
  TempDir dir;
  Manifest m = small_manifest();
  Rng rng(6);
  Matrix fa(4, 3), fb(6, 3);
  for (auto& x : fa.data) x = rng.uniform(-1.0, 1.0);
  for (auto& x : fb.data) x = rng.uniform(-1.0, 1.0);
  write_feature_file(dir.file("alpha.tfv"), fa);
  write_feature_file(dir.file("beta.tfv"), fb);
  save_manifest(m, dir.file("manifest.json"));

  Dataset ds = load_dataset(dir.file("manifest.json"));
  REQUIRE(ds.features.size() == 2);
  CHECK(ds.features[0].rows == 4);
  CHECK(ds.features[1].rows == 6);
  CHECK(ds.features[1].cols == 3);

  // Clip-count mismatch names the video.
  Matrix wrong(5, 3);
  write_feature_file(dir.file("alpha.tfv"), wrong);
  try {
    load_dataset(dir.file("manifest.json"));
    FAIL("expected a clip-count error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("alpha") != std::string::npos);
    CHECK(msg.find("4") != std::string::npos);
    CHECK(msg.find("5") != std::string::npos);
  }

  // Dimension drift across files names the video too.
  write_feature_file(dir.file("alpha.tfv"), fa);
  write_feature_file(dir.file("beta.tfv"), Matrix(6, 9));
  try {
    load_dataset(dir.file("manifest.json"));
    FAIL("expected a feature_dim error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("beta") != std::string::npos);
  }
}

TEST_CASE("load_keypoints parses tracks, nulls, and low confidence") {
  TempDir dir;
  nlohmann::json j;
  j["format_version"] = 1;
  j["video_id"] = "pose0";
  j["num_frames"] = 3;
  j["tracks"] = nlohmann::json::array();
  nlohmann::json t;
  t["track_id"] = 2;
  t["observations"] = nlohmann::json::array();
  nlohmann::json obs;
  obs["frame"] = 1;
  obs["keypoints"] = nlohmann::json::array();
  for (int k = 0; k < 18; ++k) {
    if (k == 4) {
      obs["keypoints"].push_back(nullptr);  // absent keypoint
    } else if (k == 5) {
      obs["keypoints"].push_back({1.0, 2.0, 0.05});  // below confidence floor
    } else {
      obs["keypoints"].push_back({10.0 * k, 5.0, 0.9});
    }
  }
  t["observations"].push_back(obs);
  j["tracks"].push_back(t);
  std::ofstream f(dir.file("pose.json"));
  f << j.dump();
  f.close();

  PoseVideo video = load_keypoints(dir.file("pose.json"));
  CHECK(video.video_id == "pose0");
  CHECK(video.num_frames == 3);
  REQUIRE(video.tracks.size() == 1);
  CHECK(video.tracks[0].track_id == 2);
  REQUIRE(video.tracks[0].frames.size() == 3);
  CHECK(!video.tracks[0].frames[0].has_value());
  REQUIRE(video.tracks[0].frames[1].has_value());
  const FrameKeypoints& fk = *video.tracks[0].frames[1];
  CHECK(!fk[4].present);
  CHECK(!fk[5].present);  // present entry but confidence 0.05
  CHECK(fk[6].present);
  CHECK(fk[6].x == 60.0);

  // Frame index past num_frames is a schema violation.
  j["tracks"][0]["observations"][0]["frame"] = 9;
  std::ofstream g(dir.file("pose_bad.json"));
  g << j.dump();
  g.close();
  CHECK_THROWS_AS(load_keypoints(dir.file("pose_bad.json")), Error);

  // Keypoint arrays must have exactly 18 entries.
  j["tracks"][0]["observations"][0]["frame"] = 1;
  j["tracks"][0]["observations"][0]["keypoints"].erase(0);
  std::ofstream h(dir.file("pose_short.json"));
  h << j.dump();
  h.close();
  CHECK_THROWS_AS(load_keypoints(dir.file("pose_short.json")), Error);
}

TEST_CASE("checkpoints round-trip parameters exactly and in order") {
  TempDir dir;
  ModelHyper hp;
  hp.d = 3;
  hp.h = 2;
  hp.layers = 1;
  hp.n_ia = 4;
  hp.n_ua = 2;
  hp.s = 2;
  hp.lambda_weight = 0.65;
  Params params = init_params(hp, 77);
  std::string path = dir.file("ckpt.json");
  save_checkpoint(path, params, hp);

  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.hyper.d == 3);
  CHECK(ck.hyper.h == 2);
  CHECK(ck.hyper.s == 2);
  CHECK(ck.hyper.lambda_weight == 0.65);
  REQUIRE(ck.params.count() == params.count());
  for (std::size_t i = 0; i < params.count(); ++i) {
    const auto& [name, t] = params.items()[i];
    const auto& [rname, rt] = ck.params.items()[i];
    CHECK(rname == name);  // order preserved, not just membership
    CHECK(rt.shape() == t.shape());
    CHECK(rt.value() == t.value());  // bit-exact doubles
  }

  // Mismatched shape and data length is rejected with the parameter name.
  nlohmann::json j;
  {
    std::ifstream in(path);
    in >> j;
  }
  j["params"][0]["data"].push_back(0.5);
  std::ofstream out(dir.file("bad.json"));
  out << j.dump();
  out.close();
  try {
    load_checkpoint(dir.file("bad.json"));
    FAIL("expected a shape mismatch error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(j["params"][0]["name"].get<std::string>()) !=
          std::string::npos);
  }
}

TEST_CASE("predictions JSONL round trip") {
  TempDir dir;
  VideoLocalization v1;
  v1.video_id = "vidA";
  v1.goal.segments = {{0, 3, 1, 0.75}, {5, 6, 0, 0.5}};
  v1.unint.segments = {{4, 7, 2, 0.9}};
  VideoLocalization v2;
  v2.video_id = "vidB";  // no segments at all

  std::string path = dir.file("preds.jsonl");
  write_predictions(path, {v1, v2});

  auto recs = load_predictions(path);
  REQUIRE(recs.size() == 4);  // two heads per video
  CHECK(recs[0].video_id == "vidA");
  CHECK(recs[0].head == "goal");
  REQUIRE(recs[0].segments.size() == 2);
  CHECK(recs[0].segments[0].start_clip == 0);
  CHECK(recs[0].segments[0].end_clip == 3);
  CHECK(recs[0].segments[0].class_id == 1);
  CHECK(recs[0].segments[0].score == 0.75);
  CHECK(recs[1].head == "unint");
  REQUIRE(recs[1].segments.size() == 1);
  CHECK(recs[1].segments[0].score == 0.9);
  CHECK(recs[2].video_id == "vidB");
  CHECK(recs[2].segments.empty());
  CHECK(recs[3].segments.empty());

  // Unknown heads and broken lines fail with the line number.
  std::ofstream f(dir.file("bad.jsonl"));
  f << R"({"video_id":"x","head":"middle","segments":[]})" << '\n';
  f.close();
  CHECK_THROWS_AS(load_predictions(dir.file("bad.jsonl")), Error);

  std::ofstream g(dir.file("junk.jsonl"));
  g << "{{{{" << '\n';
  g.close();
  try {
    load_predictions(dir.file("junk.jsonl"));
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
}

TEST_CASE("metrics emit JSON keyed by threshold and a per-row CSV") {
  TempDir dir;
  EvalResult res;
  for (std::size_t i = 0; i < 9; ++i) {
    res.table.goal.at_iou[i] = 0.9 - 0.1 * static_cast<double>(i);
    res.table.unint.at_iou[i] = 0.5;
  }
  res.table.goal.avg = 0.5;
  res.table.unint.avg = 0.5;
  res.cmap_goal = 0.42;
  res.cmap_unint = 0.37;

  std::string jpath = dir.file("metrics.json");
  write_metrics_json(jpath, res);
  nlohmann::json j;
  {
    std::ifstream in(jpath);
    in >> j;
  }
  CHECK(j["format_version"] == 1);
  CHECK(j["map_goal"]["0.1"].get<double>() == doctest::Approx(0.9));
  CHECK(j["map_goal"]["0.9"].get<double>() == doctest::Approx(0.1));
  CHECK(j["map_goal"]["avg"].get<double>() == 0.5);
  CHECK(j["map_unint"]["0.5"].get<double>() == 0.5);
  CHECK(j["cmap_goal"].get<double>() == 0.42);
  CHECK(j["cmap_unint"].get<double>() == 0.37);

  std::string cpath = dir.file("metrics.csv");
  write_metrics_csv(cpath, res);
  std::ifstream in(cpath);
  std::string line;
  std::getline(in, line);
  CHECK(line == "head,iou,map");
  std::size_t rows = 0;
  std::size_t cmap_rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (line.find("cmap") != std::string::npos) ++cmap_rows;
  }
  CHECK(rows == 2 * 10 + 2);  // 9 thresholds + avg per head, then cmap rows
  CHECK(cmap_rows == 2);
}
