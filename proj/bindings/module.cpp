#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "wsloc/analysis.hpp"
#include "wsloc/eval.hpp"
#include "wsloc/io.hpp"
#include "wsloc/losses.hpp"
#include "wsloc/model.hpp"
#include "wsloc/tensor.hpp"
#include "wsloc/trainer.hpp"

namespace py = pybind11;
using namespace wsloc;

namespace {

py::dict map_row_dict(const MapRow& row) {
  py::dict d;
  for (std::size_t i = 0; i < kIouThresholds.size(); ++i) {
    d[py::float_(kIouThresholds[i])] = row.at_iou[i];
  }
  d["avg"] = row.avg;
  return d;
}

py::dict loss_record_dict(const LossRecord& r) {
  py::dict d;
  d["iter"] = r.iter;
  d["l_cls_ia"] = r.cls_ia;
  d["l_cls_ua"] = r.cls_ua;
  d["l_overlap"] = r.overlap;
  d["l_order"] = r.order;
  d["total"] = r.total;
  return d;
}

py::dict head_dict(const HeadLocalization& head) {
  py::dict d;
  py::list segs;
  for (const auto& s : head.segments) {
    py::dict sd;
    sd["start_clip"] = s.start_clip;
    sd["end_clip"] = s.end_clip;
    sd["class"] = s.class_id;
    sd["score"] = s.score;
    segs.append(sd);
  }
  d["segments"] = segs;
  d["class_scores"] = head.class_scores;
  d["pmf"] = head.pmf;
  d["lambda"] = head.lambda;
  d["centroid"] = head.centroid;
  return d;
}

Matrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) {
    throw Error("features need at least one clip row");
  }
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols) {
      throw Error("feature rows must share one width");
    }
    for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = rows[r][c];
  }
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Weakly supervised temporal localization core";

  py::register_exception<Error>(m, "WslocError");

  py::class_<ModelHyper>(m, "ModelHyper")
      .def(py::init<>())
      .def_readwrite("d", &ModelHyper::d)
      .def_readwrite("h", &ModelHyper::h)
      .def_readwrite("layers", &ModelHyper::layers)
      .def_readwrite("n_ia", &ModelHyper::n_ia)
      .def_readwrite("n_ua", &ModelHyper::n_ua)
      .def_readwrite("s", &ModelHyper::s)
      .def_readwrite("p", &ModelHyper::p)
      .def_readwrite("q", &ModelHyper::q)
      .def_readwrite("lambda_weight", &ModelHyper::lambda_weight)
      .def_readwrite("activation_threshold", &ModelHyper::activation_threshold);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("iterations", &TrainConfig::iterations)
      .def_readwrite("beta1", &TrainConfig::beta1)
      .def_readwrite("beta2", &TrainConfig::beta2)
      .def_readwrite("epsilon", &TrainConfig::epsilon)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("literal_eq5", &TrainConfig::literal_eq5);

  py::class_<SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("num_videos", &SyntheticSpec::num_videos)
      .def_readwrite("l_min", &SyntheticSpec::l_min)
      .def_readwrite("l_max", &SyntheticSpec::l_max)
      .def_readwrite("d", &SyntheticSpec::d)
      .def_readwrite("n_goal", &SyntheticSpec::n_goal)
      .def_readwrite("n_unint", &SyntheticSpec::n_unint)
      .def_readwrite("transition_lo", &SyntheticSpec::transition_lo)
      .def_readwrite("transition_hi", &SyntheticSpec::transition_hi)
      .def_readwrite("noise_sigma", &SyntheticSpec::noise_sigma)
      .def_readwrite("seed", &SyntheticSpec::seed);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def("num_videos",
           [](const Dataset& ds) { return ds.manifest.videos.size(); })
      .def("video_ids",
           [](const Dataset& ds) {
             std::vector<std::string> ids;
             for (const auto& v : ds.manifest.videos) ids.push_back(v.id);
             return ids;
           })
      .def("labels",
           [](const Dataset& ds) {
             py::list out;
             for (const auto& v : ds.manifest.videos) {
               py::dict d;
               d["id"] = v.id;
               d["goal_label"] = v.goal_label;
               d["unint_label"] = v.unint_label;
               d["num_clips"] = v.num_clips;
               if (v.transition_clip) {
                 d["transition_clip"] = *v.transition_clip;
               }
               out.append(d);
             }
             return out;
           })
      .def("features",
           [](const Dataset& ds, std::size_t i) {
             const Matrix& f = ds.features.at(i);
             std::vector<std::vector<double>> rows(f.rows,
                                                   std::vector<double>(f.cols));
             for (std::size_t r = 0; r < f.rows; ++r) {
               for (std::size_t c = 0; c < f.cols; ++c) rows[r][c] = f(r, c);
             }
             return rows;
           });

  py::class_<Params>(m, "Params")
      .def("count", &Params::count)
      .def("total_size", &Params::total_size)
      .def("names", [](const Params& p) {
        std::vector<std::string> names;
        for (const auto& [name, t] : p.items()) names.push_back(name);
        return names;
      });

  m.def("synth_generate", &synth_generate, py::arg("spec"));
  m.def(
      "split_dataset",
      [](const Dataset& ds, double train_fraction) {
        auto [train_side, test_side] = split_dataset(ds, train_fraction);
        return py::make_tuple(std::move(train_side), std::move(test_side));
      },
      py::arg("dataset"), py::arg("train_fraction"));
  m.def("materialize_dataset", &materialize_dataset, py::arg("dataset"),
        py::arg("dir"), py::arg("strip_transitions") = false);
  m.def("load_dataset", &load_dataset, py::arg("manifest_path"));

  m.def("init_params", &init_params, py::arg("hyper"), py::arg("seed"));
  m.def(
      "train",
      [](const Dataset& ds, Params& params, const ModelHyper& hyper,
         const TrainConfig& config, const std::string& log_path,
         const std::string& out_dir, std::size_t checkpoint_every) {
        TrainIo io{log_path, out_dir, checkpoint_every};
        py::list out;
        for (const auto& r : train(ds, params, hyper, config, io)) {
          out.append(loss_record_dict(r));
        }
        return out;
      },
      py::arg("dataset"), py::arg("params"), py::arg("hyper"), py::arg("config"),
      py::arg("log_path") = std::string(), py::arg("out_dir") = std::string(),
      py::arg("checkpoint_every") = 0);

  m.def(
      "localize_dataset",
      [](const Dataset& ds, const Params& params, const ModelHyper& hyper,
         double seg_threshold, int threads) {
        LocalizeOptions opts;
        opts.seg_threshold = seg_threshold;
        opts.threads = threads;
        py::list out;
        for (const auto& v : localize_dataset(ds, params, hyper, opts)) {
          py::dict d;
          d["video_id"] = v.video_id;
          d["goal"] = head_dict(v.goal);
          d["unint"] = head_dict(v.unint);
          out.append(d);
        }
        return out;
      },
      py::arg("dataset"), py::arg("params"), py::arg("hyper"),
      py::arg("seg_threshold") = 0.2, py::arg("threads") = 1);

  m.def(
      "evaluate_dataset",
      [](const Dataset& ds, const Params& params, const ModelHyper& hyper,
         double seg_threshold, int threads) {
        LocalizeOptions opts;
        opts.seg_threshold = seg_threshold;
        opts.threads = threads;
        EvalResult res = evaluate_dataset(ds, params, hyper, opts);
        py::dict d;
        d["map_goal"] = map_row_dict(res.table.goal);
        d["map_unint"] = map_row_dict(res.table.unint);
        d["cmap_goal"] = res.cmap_goal;
        d["cmap_unint"] = res.cmap_unint;
        return d;
      },
      py::arg("dataset"), py::arg("params"), py::arg("hyper"),
      py::arg("seg_threshold") = 0.2, py::arg("threads") = 1);

  m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("params"),
        py::arg("hyper"));
  m.def(
      "load_checkpoint",
      [](const std::string& path) {
        Checkpoint ck = load_checkpoint(path);
        return py::make_tuple(std::move(ck.params), ck.hyper);
      },
      py::arg("path"));

  m.def(
      "forward_scores",
      [](const std::vector<std::vector<double>>& features, const Params& params,
         const ModelHyper& hyper) {
        Tape::Pause pause;
        Tensor x = features_tensor(matrix_from_rows(features));
        ModelOutputs mo = forward(x, params, hyper);
        py::dict d;
        d["scores_goal"] = video_class_scores(mo.tcam_ia, hyper.s).value();
        d["scores_unint"] = video_class_scores(mo.tcam_ua, hyper.s).value();
        d["lambda_goal"] = mo.lambda_ia.value();
        d["lambda_unint"] = mo.lambda_ua.value();
        return d;
      },
      py::arg("features"), py::arg("params"), py::arg("hyper"));

  m.def(
      "total_loss_grad_check",
      [](const ModelHyper& hyper, std::size_t l, std::uint64_t seed, double eps,
         long max_coords) {
        GradCheckOptions opts;
        opts.eps = eps;
        opts.max_coords = max_coords;
        opts.sample_seed = seed;
        return total_loss_grad_check(hyper, l, seed, opts);
      },
      py::arg("hyper"), py::arg("l"), py::arg("seed") = 0, py::arg("eps") = 1e-5,
      py::arg("max_coords") = -1);

  m.def("temporal_iou", &temporal_iou, py::arg("a_start"), py::arg("a_end"),
        py::arg("b_start"), py::arg("b_end"));

  m.def(
      "conditional_entropy_bits",
      [](const std::vector<std::vector<std::size_t>>& table) {
        if (table.empty()) {
          throw Error("conditional_entropy_bits: empty table");
        }
        LabelPairCounts counts(table.size(), table[0].size());
        for (std::size_t g = 0; g < table.size(); ++g) {
          if (table[g].size() != counts.n_unint) {
            throw Error("conditional_entropy_bits: ragged table");
          }
          for (std::size_t u = 0; u < counts.n_unint; ++u) {
            counts.at(g, u) = table[g][u];
          }
        }
        ConditionalEntropy ce = conditional_entropy(counts);
        py::list rows;
        for (const auto& r : ce.per_goal_bits) {
          if (r.has_value()) {
            rows.append(*r);
          } else {
            rows.append(py::none());
          }
        }
        return py::make_tuple(rows, ce.average_bits);
      },
      py::arg("table"));
}
