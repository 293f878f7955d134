#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ccaf/eval.hpp"
#include "ccaf/losses.hpp"
#include "ccaf/masking.hpp"
#include "ccaf/toybench.hpp"
#include "ccaf/trainer.hpp"

namespace py = pybind11;
using namespace ccaf;

namespace {

double py_ce_loss(const Mat& logits, const std::vector<int>& labels) {
    return ce_loss(constant(logits), labels)->scalar();
}

double py_triplet_loss(const Mat& feats, const std::vector<int>& labels, double margin) {
    return triplet_loss(constant(feats), labels, margin)->scalar();
}

double py_i2tce_loss(const Mat& feats, const Mat& prompts,
                     const std::vector<int>& labels, double temperature) {
    return i2tce_loss(constant(feats), constant(prompts), labels,
                      SimilarityConfig{temperature})->scalar();
}

double py_centroid_loss(const Mat& raw, const Mat& shield,
                        const std::vector<int>& labels) {
    return centroid_consistency_loss(constant(raw), constant(shield), labels)->scalar();
}

double py_disentangle_loss(const Mat& ped, const Mat& clothes) {
    return disentangle_loss(constant(ped), constant(clothes))->scalar();
}

py::dict py_score(const Mat& qf, const Mat& gf,
                  const std::vector<std::tuple<int, int, int>>& query_meta,
                  const std::vector<std::tuple<int, int, int>>& gallery_meta,
                  const std::string& protocol) {
    auto to_samples = [](const std::vector<std::tuple<int, int, int>>& meta) {
        std::vector<Sample> out;
        for (auto& [id, clothes, cam] : meta) {
            Sample s;
            s.identity = id;
            s.clothes_id = clothes;
            s.camera_id = cam;
            out.push_back(s);
        }
        return out;
    };
    RetrievalResult r = score(qf, gf, to_samples(query_meta), to_samples(gallery_meta),
                              protocol_from_name(protocol));
    py::dict d;
    d["rank1"] = r.cmc_at(1);
    d["rank5"] = r.cmc_at(5);
    d["rank10"] = r.cmc_at(10);
    d["map"] = r.mAP;
    d["cmc"] = r.cmc;
    d["skipped_queries"] = r.skipped_queries;
    return d;
}

py::dict py_generate_toy(py::kwargs kwargs) {
    ToySpec spec;
    std::string out_dir = py::cast<std::string>(kwargs["out_dir"]);
    if (kwargs.contains("k")) spec.K = py::cast<int>(kwargs["k"]);
    if (kwargs.contains("outfits")) spec.outfits = py::cast<int>(kwargs["outfits"]);
    if (kwargs.contains("images_per_combo"))
        spec.images_per_combo = py::cast<int>(kwargs["images_per_combo"]);
    if (kwargs.contains("img_h")) spec.img_h = py::cast<int>(kwargs["img_h"]);
    if (kwargs.contains("img_w")) spec.img_w = py::cast<int>(kwargs["img_w"]);
    if (kwargs.contains("noise_level"))
        spec.noise_level = py::cast<double>(kwargs["noise_level"]);
    if (kwargs.contains("seed")) spec.seed = py::cast<uint64_t>(kwargs["seed"]);
    DatasetManifest m = generate(spec, out_dir);
    ConfoundReport rep = plant_confound_check(m);
    py::dict d;
    d["manifest"] = out_dir + "/manifest.tsv";
    d["records"] = m.records.size();
    d["identities"] = m.K;
    d["clothes_classes"] = m.K_c;
    d["confound_clothes_accuracy"] = rep.clothes_accuracy;
    d["confound_biometric_accuracy"] = rep.biometric_accuracy;
    d["cloth_changing_testable"] = rep.cloth_changing_testable;
    return d;
}

}  // namespace

PYBIND11_MODULE(_ccaf, m) {
    m.doc() = "cloth-changing re-id training framework (C++ core)";

    m.def("build_clothes_mask",
          [](const Eigen::MatrixXi& parsing, const std::set<int>& labels) {
              return build_clothes_mask(parsing, labels);
          },
          py::arg("parsing"), py::arg("clothes_labels"));
    m.def("default_clothes_labels", [] { return default_clothes_labels(); });
    m.def("make_shielding_image",
          [](const Mat& r, const Mat& g, const Mat& b, const Mat& mask) {
              Image out = make_shielding_image({r, g, b}, mask);
              return py::make_tuple(out[0], out[1], out[2]);
          });
    m.def("make_clothes_image",
          [](const Mat& r, const Mat& g, const Mat& b, const Mat& mask) {
              Image out = make_clothes_image({r, g, b}, mask);
              return py::make_tuple(out[0], out[1], out[2]);
          });

    m.def("ce_loss", &py_ce_loss, py::arg("logits"), py::arg("labels"));
    m.def("triplet_loss", &py_triplet_loss, py::arg("features"), py::arg("labels"),
          py::arg("margin") = 0.3);
    m.def("i2tce_loss", &py_i2tce_loss, py::arg("features"), py::arg("prompts"),
          py::arg("labels"), py::arg("temperature") = 0.07);
    m.def("centroid_consistency_loss", &py_centroid_loss, py::arg("raw"),
          py::arg("shield"), py::arg("labels"));
    m.def("disentangle_loss", &py_disentangle_loss, py::arg("ped"), py::arg("clothes"));

    m.def("score", &py_score, py::arg("query_feats"), py::arg("gallery_feats"),
          py::arg("query_meta"), py::arg("gallery_meta"),
          py::arg("protocol") = "general",
          "meta entries are (identity, clothes_id, camera_id) tuples");

    m.def("generate_toy", &py_generate_toy);

    m.def("load_manifest_summary", [](const std::string& path) {
        DatasetManifest man = load_manifest(path);
        py::dict d;
        d["records"] = man.records.size();
        d["identities"] = man.K;
        d["clothes_classes"] = man.K_c;
        return d;
    });
}
