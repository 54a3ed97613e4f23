#include "wsloc/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wsloc {

namespace {

static_assert(std::numeric_limits<float>::is_iec559, "needs IEEE-754 floats");

constexpr char kMagic[4] = {'T', 'F', 'V', '1'};
// Keeps a corrupt header from triggering a giant allocation.
constexpr std::uint64_t kMaxFeatureElements = 1ull << 31;

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t read_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

ClipFeatureSequence read_feature_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw Error("cannot open feature file '" + path + "'");
  }
  std::uintmax_t file_size = fs::file_size(path);
  if (file_size < 12) {
    throw TruncatedFileError("feature file '" + path + "': expected at least 12 header bytes, file has " +
                             std::to_string(file_size));
  }
  unsigned char header[12];
  f.read(reinterpret_cast<char*>(header), 12);
  if (std::memcmp(header, kMagic, 4) != 0) {
    throw BadMagicError("feature file '" + path + "': bad magic, expected TFV1");
  }
  std::uint32_t l = read_u32(header + 4);
  std::uint32_t d = read_u32(header + 8);
  std::uint64_t count = static_cast<std::uint64_t>(l) * d;
  if (count > kMaxFeatureElements) {
    throw SizeOverflowError("feature file '" + path + "': header implies " +
                            std::to_string(count) + " values (limit " +
                            std::to_string(kMaxFeatureElements) + ")");
  }
  std::uint64_t expected = 12 + 4 * count;
  if (file_size != expected) {
    throw TruncatedFileError("feature file '" + path + "': expected " +
                             std::to_string(expected) + " bytes for " +
                             std::to_string(l) + "x" + std::to_string(d) +
                             ", file has " + std::to_string(file_size));
  }
  std::vector<unsigned char> payload(4 * count);
  f.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!f) {
    throw TruncatedFileError("feature file '" + path + "': payload read failed");
  }
  ClipFeatureSequence seq;
  seq.video_id = fs::path(path).stem().string();
  seq.features = Matrix(l, d);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t bits = read_u32(payload.data() + 4 * i);
    float v;
    std::memcpy(&v, &bits, 4);
    seq.features.data[i] = static_cast<double>(v);
  }
  return seq;
}

void write_feature_file(const std::string& path, const Matrix& features) {
  if (features.rows > std::numeric_limits<std::uint32_t>::max() ||
      features.cols > std::numeric_limits<std::uint32_t>::max()) {
    throw SizeOverflowError("feature matrix too large for the file format");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw Error("cannot open '" + path + "' for writing");
  }
  f.write(kMagic, 4);
  put_u32(f, static_cast<std::uint32_t>(features.rows));
  put_u32(f, static_cast<std::uint32_t>(features.cols));
  for (double dv : features.data) {
    float v = static_cast<float>(dv);
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(f, bits);
  }
  if (!f) {
    throw Error("write to '" + path + "' failed");
  }
}

namespace {

json parse_json_file(const std::string& path, const char* what) {
  std::ifstream f(path);
  if (!f) {
    throw Error(std::string("cannot open ") + what + " '" + path + "'");
  }
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) {
    throw Error(std::string(what) + " '" + path + "' is not valid JSON");
  }
  return j;
}

[[noreturn]] void schema_error(const std::string& path, const std::string& why) {
  throw Error("schema violation at " + path + ": " + why);
}

const json& field(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) schema_error(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(path + "/" + key, "missing field");
  return *it;
}

std::string get_string(const json& obj, const char* key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_string()) schema_error(path + "/" + key, "expected a string");
  return v.get<std::string>();
}

std::size_t get_index(const json& obj, const char* key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_number_unsigned()) schema_error(path + "/" + key, "expected a nonnegative integer");
  return v.get<std::size_t>();
}

void check_version(const json& j, const std::string& path) {
  if (get_index(j, "format_version", path) != 1) {
    schema_error(path + "/format_version", "unsupported version");
  }
}

std::vector<std::string> get_string_list(const json& obj, const char* key,
                                         const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_array()) schema_error(path + "/" + key, "expected an array");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) {
      schema_error(path + "/" + key + "/" + std::to_string(i), "expected a string");
    }
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

}  // namespace

Manifest load_manifest(const std::string& path) {
  json j = parse_json_file(path, "manifest");
  check_version(j, "");
  Manifest m;
  m.goal_classes = get_string_list(j, "goal_classes", "");
  m.unint_classes = get_string_list(j, "unint_classes", "");
  if (m.goal_classes.empty() || m.unint_classes.empty()) {
    schema_error("/goal_classes", "class lists must be nonempty");
  }
  const json& videos = field(j, "videos", "");
  if (!videos.is_array()) schema_error("/videos", "expected an array");
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const std::string vp = "/videos/" + std::to_string(i);
    const json& jv = videos[i];
    VideoEntry v;
    v.id = get_string(jv, "id", vp);
    v.feature_path = get_string(jv, "feature_path", vp);
    v.goal_label = get_index(jv, "goal_label", vp);
    v.unint_label = get_index(jv, "unint_label", vp);
    v.num_clips = get_index(jv, "num_clips", vp);
    if (v.goal_label >= m.goal_classes.size()) {
      schema_error(vp + "/goal_label", "label out of range for video '" + v.id + "'");
    }
    if (v.unint_label >= m.unint_classes.size()) {
      schema_error(vp + "/unint_label", "label out of range for video '" + v.id + "'");
    }
    if (v.num_clips == 0) {
      schema_error(vp + "/num_clips", "video '" + v.id + "' has no clips");
    }
    if (jv.contains("transition_clip")) {
      std::size_t t = get_index(jv, "transition_clip", vp);
      if (t == 0 || t >= v.num_clips) {
        schema_error(vp + "/transition_clip",
                     "video '" + v.id + "' transition must lie strictly inside (0, num_clips)");
      }
      v.transition_clip = t;
    }
    m.videos.push_back(std::move(v));
  }
  return m;
}

void save_manifest(const Manifest& manifest, const std::string& path) {
  json j;
  j["format_version"] = 1;
  j["goal_classes"] = manifest.goal_classes;
  j["unint_classes"] = manifest.unint_classes;
  j["videos"] = json::array();
  for (const auto& v : manifest.videos) {
    json jv;
    jv["id"] = v.id;
    jv["feature_path"] = v.feature_path;
    jv["goal_label"] = v.goal_label;
    jv["unint_label"] = v.unint_label;
    jv["num_clips"] = v.num_clips;
    if (v.transition_clip.has_value()) jv["transition_clip"] = *v.transition_clip;
    j["videos"].push_back(std::move(jv));
  }
  std::ofstream f(path);
  if (!f) {
    throw Error("cannot open '" + path + "' for writing");
  }
  f << j.dump(2) << '\n';
}

Dataset load_dataset(const std::string& manifest_path) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  fs::path base = fs::path(manifest_path).parent_path();
  std::size_t dim = 0;
  for (const auto& v : ds.manifest.videos) {
    fs::path p(v.feature_path);
    if (p.is_relative()) p = base / p;
    ClipFeatureSequence seq = read_feature_file(p.string());
    if (seq.num_clips() != v.num_clips) {
      throw Error("video '" + v.id + "': manifest says " + std::to_string(v.num_clips) +
                  " clips but feature file has " + std::to_string(seq.num_clips()));
    }
    if (dim == 0) {
      dim = seq.feature_dim();
    } else if (seq.feature_dim() != dim) {
      throw Error("video '" + v.id + "': feature_dim " + std::to_string(seq.feature_dim()) +
                  " differs from the dataset's " + std::to_string(dim));
    }
    ds.features.push_back(std::move(seq.features));
  }
  return ds;
}

PoseVideo load_keypoints(const std::string& path) {
  json j = parse_json_file(path, "keypoint file");
  PoseVideo video;
  video.video_id = get_string(j, "video_id", "");
  video.num_frames = get_index(j, "num_frames", "");
  const json& tracks = field(j, "tracks", "");
  if (!tracks.is_array()) schema_error("/tracks", "expected an array");
  for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
    const std::string tp = "/tracks/" + std::to_string(ti);
    const json& jt = tracks[ti];
    PoseTrack track;
    const json& id = field(jt, "track_id", tp);
    if (!id.is_number_integer()) schema_error(tp + "/track_id", "expected an integer");
    track.track_id = id.get<int>();
    track.frames.resize(video.num_frames);
    const json& obs = field(jt, "observations", tp);
    if (!obs.is_array()) schema_error(tp + "/observations", "expected an array");
    for (std::size_t oi = 0; oi < obs.size(); ++oi) {
      const std::string op = tp + "/observations/" + std::to_string(oi);
      std::size_t frame = get_index(obs[oi], "frame", op);
      if (frame >= video.num_frames) {
        schema_error(op + "/frame", "frame index beyond num_frames");
      }
      const json& kps = field(obs[oi], "keypoints", op);
      if (!kps.is_array() || kps.size() != kNumKeypoints) {
        schema_error(op + "/keypoints", "expected 18 entries");
      }
      FrameKeypoints fk{};
      for (std::size_t k = 0; k < kNumKeypoints; ++k) {
        const json& e = kps[k];
        if (e.is_null()) continue;  // absent keypoint
        if (!e.is_array() || e.size() != 3 || !e[0].is_number() ||
            !e[1].is_number() || !e[2].is_number()) {
          schema_error(op + "/keypoints/" + std::to_string(k),
                       "expected [x, y, confidence] or null");
        }
        Keypoint kp;
        kp.x = e[0].get<double>();
        kp.y = e[1].get<double>();
        kp.confidence = e[2].get<double>();
        kp.present = kp.confidence >= kKeypointConfidenceMin;
        fk[k] = kp;
      }
      track.frames[frame] = fk;
    }
    video.tracks.push_back(std::move(track));
  }
  return video;
}

void save_checkpoint(const std::string& path, const Params& params,
                     const ModelHyper& hyper) {
  json j;
  j["format_version"] = 1;
  json& h = j["hyperparams"];
  h["d"] = hyper.d;
  h["h"] = hyper.h;
  h["layers"] = hyper.layers;
  h["n_ia"] = hyper.n_ia;
  h["n_ua"] = hyper.n_ua;
  h["s"] = hyper.s;
  h["p"] = hyper.p;
  h["q"] = hyper.q;
  h["lambda_weight"] = hyper.lambda_weight;
  h["activation_threshold"] = hyper.activation_threshold;
  // Ordered array, not an object: optimizer state is indexed by position.
  json params_j = json::array();
  for (const auto& [name, t] : params.items()) {
    json pj;
    pj["name"] = name;
    pj["shape"] = t.shape();
    pj["data"] = t.value();
    params_j.push_back(std::move(pj));
  }
  j["params"] = std::move(params_j);
  std::ofstream f(path);
  if (!f) {
    throw Error("cannot open '" + path + "' for writing");
  }
  f << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  json j = parse_json_file(path, "checkpoint");
  check_version(j, "");
  Checkpoint ck;
  const json& h = field(j, "hyperparams", "");
  ck.hyper.d = get_index(h, "d", "/hyperparams");
  ck.hyper.h = get_index(h, "h", "/hyperparams");
  ck.hyper.layers = get_index(h, "layers", "/hyperparams");
  ck.hyper.n_ia = get_index(h, "n_ia", "/hyperparams");
  ck.hyper.n_ua = get_index(h, "n_ua", "/hyperparams");
  ck.hyper.s = static_cast<int>(get_index(h, "s", "/hyperparams"));
  ck.hyper.p = field(h, "p", "/hyperparams").get<double>();
  ck.hyper.q = field(h, "q", "/hyperparams").get<double>();
  ck.hyper.lambda_weight = field(h, "lambda_weight", "/hyperparams").get<double>();
  ck.hyper.activation_threshold =
      field(h, "activation_threshold", "/hyperparams").get<double>();
  const json& params_j = field(j, "params", "");
  if (!params_j.is_array()) schema_error("/params", "expected an array");
  for (std::size_t i = 0; i < params_j.size(); ++i) {
    const std::string pp = "/params/" + std::to_string(i);
    const json& pj = params_j[i];
    std::string name = get_string(pj, "name", pp);
    const json& shape_j = field(pj, "shape", pp);
    const json& data_j = field(pj, "data", pp);
    if (!shape_j.is_array() || !data_j.is_array()) {
      schema_error(pp, "shape and data must be arrays");
    }
    Shape shape = shape_j.get<Shape>();
    std::vector<double> data = data_j.get<std::vector<double>>();
    if (shape_numel(shape) != data.size()) {
      schema_error(pp, "shape does not match data length for '" + name + "'");
    }
    ck.params.add(std::move(name), Tensor::variable(std::move(shape), std::move(data)));
  }
  return ck;
}

void write_predictions(const std::string& path,
                       const std::vector<VideoLocalization>& locs) {
  std::ofstream f(path);
  if (!f) {
    throw Error("cannot open '" + path + "' for writing");
  }
  auto line = [&](const std::string& id, const char* head,
                  const std::vector<SegmentTriplet>& segs) {
    json j;
    j["video_id"] = id;
    j["head"] = head;
    j["segments"] = json::array();
    for (const auto& s : segs) {
      json sj;
      sj["start_clip"] = s.start_clip;
      sj["end_clip"] = s.end_clip;
      sj["class"] = s.class_id;
      sj["score"] = s.score;
      j["segments"].push_back(std::move(sj));
    }
    f << j.dump() << '\n';
  };
  for (const auto& v : locs) {
    line(v.video_id, "goal", v.goal.segments);
    line(v.video_id, "unint", v.unint.segments);
  }
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    throw Error("cannot open predictions file '" + path + "'");
  }
  std::vector<PredictionRecord> out;
  std::string linebuf;
  std::size_t lineno = 0;
  while (std::getline(f, linebuf)) {
    ++lineno;
    if (linebuf.empty()) continue;
    json j = json::parse(linebuf, nullptr, false);
    if (j.is_discarded()) {
      throw Error("predictions file '" + path + "' line " + std::to_string(lineno) +
                  " is not valid JSON");
    }
    const std::string lp = "/line" + std::to_string(lineno);
    PredictionRecord rec;
    rec.video_id = get_string(j, "video_id", lp);
    rec.head = get_string(j, "head", lp);
    if (rec.head != "goal" && rec.head != "unint") {
      schema_error(lp + "/head", "expected \"goal\" or \"unint\"");
    }
    const json& segs = field(j, "segments", lp);
    if (!segs.is_array()) schema_error(lp + "/segments", "expected an array");
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const std::string sp = lp + "/segments/" + std::to_string(i);
      SegmentTriplet s;
      s.start_clip = get_index(segs[i], "start_clip", sp);
      s.end_clip = get_index(segs[i], "end_clip", sp);
      s.class_id = get_index(segs[i], "class", sp);
      s.score = field(segs[i], "score", sp).get<double>();
      rec.segments.push_back(s);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

namespace {

json map_row_json(const MapRow& row) {
  json j;
  for (std::size_t i = 0; i < kIouThresholds.size(); ++i) {
    char key[8];
    std::snprintf(key, sizeof(key), "%.1f", kIouThresholds[i]);
    j[key] = row.at_iou[i];
  }
  j["avg"] = row.avg;
  return j;
}

}  // namespace

void write_metrics_json(const std::string& path, const EvalResult& result) {
  json j;
  j["format_version"] = 1;
  j["map_goal"] = map_row_json(result.table.goal);
  j["map_unint"] = map_row_json(result.table.unint);
  j["cmap_goal"] = result.cmap_goal;
  j["cmap_unint"] = result.cmap_unint;
  std::ofstream f(path);
  if (!f) {
    throw Error("cannot open '" + path + "' for writing");
  }
  f << j.dump(2) << '\n';
}

void write_metrics_csv(const std::string& path, const EvalResult& result) {
  std::ofstream f(path);
  if (!f) {
    throw Error("cannot open '" + path + "' for writing");
  }
  f << "head,iou,map\n";
  auto rows = [&](const char* head, const MapRow& row) {
    for (std::size_t i = 0; i < kIouThresholds.size(); ++i) {
      f << head << ',' << kIouThresholds[i] << ',' << row.at_iou[i] << '\n';
    }
    f << head << ",avg," << row.avg << '\n';
  };
  rows("goal", result.table.goal);
  rows("unint", result.table.unint);
  f << "goal,cmap," << result.cmap_goal << '\n';
  f << "unint,cmap," << result.cmap_unint << '\n';
}

}  // namespace wsloc
