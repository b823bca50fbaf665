#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "dull/dataset.hpp"
#include "dull/harness.hpp"
#include "dull/ifd.hpp"
#include "dull/manifest.hpp"
#include "dull/mixer.hpp"
#include "dull/relabel.hpp"
#include "dull/synth.hpp"
#include "dull/unlearn.hpp"

namespace py = pybind11;
using namespace dull;

namespace {

Tensor matrix_from_numpy(const py::array_t<double, py::array::c_style |
                                                       py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  Tensor t({static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1))});
  std::copy(a.data(), a.data() + a.size(), t.data.begin());
  return t;
}

py::array_t<double> matrix_to_numpy(const Tensor& t) {
  py::array_t<double> a({t.dim(0), t.dim(1)});
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

NoisyDataset noisy_from_labels(const std::vector<int>& true_labels,
                               const std::vector<int>& observed_labels,
                               int class_count) {
  if (true_labels.size() != observed_labels.size())
    throw std::invalid_argument("label vectors differ in length");
  NoisyDataset d;
  d.class_count = class_count;
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    NoisyInstance inst;
    inst.id = static_cast<int>(i);
    inst.true_label = true_labels[i];
    inst.observed_label = observed_labels[i];
    d.instances.push_back(std::move(inst));
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "core operations for long-tailed noisy-label training";

  py::register_exception<ForgeError>(m, "ForgeError");
  py::register_exception<TrainError>(m, "TrainError");

  // ---- dataset forge ----
  py::class_<LabeledDataset>(m, "LabeledDataset")
      .def(py::init<>())
      .def_readonly("class_count", &LabeledDataset::class_count)
      .def_readonly("long_tailed", &LabeledDataset::long_tailed)
      .def("class_sizes", &LabeledDataset::class_sizes)
      .def("true_labels", [](const LabeledDataset& d) {
        std::vector<int> out;
        for (const auto& inst : d.instances) out.push_back(inst.true_label);
        return out;
      })
      .def("__len__",
           [](const LabeledDataset& d) { return d.instances.size(); });

  py::class_<NoisyDataset>(m, "NoisyDataset")
      .def_readonly("class_count", &NoisyDataset::class_count)
      .def_readonly("noise_ratio", &NoisyDataset::noise_ratio)
      .def_readonly("seed", &NoisyDataset::seed)
      .def("true_labels", [](const NoisyDataset& d) {
        std::vector<int> out;
        for (const auto& inst : d.instances) out.push_back(inst.true_label);
        return out;
      })
      .def("observed_labels", [](const NoisyDataset& d) {
        std::vector<int> out;
        for (const auto& inst : d.instances) out.push_back(inst.observed_label);
        return out;
      })
      .def("__len__", [](const NoisyDataset& d) { return d.instances.size(); });

  m.def("make_label_source", &make_label_source, py::arg("classes"),
        py::arg("per_class"));
  m.def("build_longtail", &build_longtail, py::arg("source"),
        py::arg("imbalance_factor"), py::arg("seed"));
  m.def("inject_t2h_noise", &inject_t2h_noise, py::arg("dataset"),
        py::arg("noise_ratio"), py::arg("seed"));
  m.def(
      "empirical_transition_matrix",
      [](const NoisyDataset& d) {
        const auto t = empirical_transition_matrix(d);
        py::array_t<double> a({t.class_count, t.class_count});
        std::copy(t.p.begin(), t.p.end(), a.mutable_data());
        return a;
      },
      py::arg("noisy"));
  m.def(
      "transition_from_labels",
      [](const std::vector<int>& true_labels,
         const std::vector<int>& observed_labels, int class_count) {
        const auto t = empirical_transition_matrix(
            noisy_from_labels(true_labels, observed_labels, class_count));
        py::array_t<double> a({t.class_count, t.class_count});
        std::copy(t.p.begin(), t.p.end(), a.mutable_data());
        return a;
      },
      py::arg("true_labels"), py::arg("observed_labels"),
      py::arg("class_count"));
  m.def("imbalance_factor",
        py::overload_cast<const std::vector<int>&>(&imbalance_factor),
        py::arg("class_sizes"));
  m.def("observed_imbalance_factor", &observed_imbalance_factor,
        py::arg("noisy"));
  m.def("observed_class_sizes", &observed_class_sizes, py::arg("noisy"));

  // ---- relabeler primitives ----
  m.def("fused_confidence", &fused_confidence, py::arg("p_weak"),
        py::arg("p_strong"), py::arg("gamma"));
  m.def("jsd", &jsd, py::arg("a"), py::arg("b"));
  m.def("label_count", &label_count, py::arg("d"), py::arg("class_count"));
  m.def(
      "split_clean_noisy",
      [](const std::vector<double>& d) {
        double tau = 0.0;
        const auto flags = split_clean_noisy(d, &tau);
        std::vector<bool> out(flags.begin(), flags.end());
        return py::make_tuple(out, tau);
      },
      py::arg("scores"));
  m.def("build_multilabel", &build_multilabel, py::arg("p"),
        py::arg("observed"), py::arg("q"), py::arg("clean"));

  // ---- masks, metrics, mixing ----
  m.def(
      "instance_mask",
      [](const std::vector<int>& label_set, const py::array_t<double>& g) {
        const Tensor gt = matrix_from_numpy(g);
        const Tensor mask = instance_mask(label_set, gt);
        py::array_t<double> a(mask.dim(0));
        std::copy(mask.data.begin(), mask.data.end(), a.mutable_data());
        return a;
      },
      py::arg("label_set"), py::arg("g"));
  m.def(
      "project_g",
      [](const py::array_t<double>& g) {
        Tensor gt = matrix_from_numpy(g);
        project_g(gt);
        return matrix_to_numpy(gt);
      },
      py::arg("g"));
  m.def(
      "orthogonality_penalty",
      [](const py::array_t<double>& g, double beta) {
        return orthogonality_penalty(matrix_from_numpy(g), beta);
      },
      py::arg("g"), py::arg("beta"));
  m.def(
      "sparsity_penalty",
      [](const py::array_t<double>& g, int p) {
        return sparsity_penalty(matrix_from_numpy(g), p);
      },
      py::arg("g"), py::arg("p") = 1);
  m.def(
      "om_metric",
      [](const py::array_t<double>& g) { return om_metric(matrix_from_numpy(g)); },
      py::arg("g"));
  m.def(
      "lsm_metric",
      [](const py::array_t<double>& g) { return lsm_metric(matrix_from_numpy(g)); },
      py::arg("g"));
  m.def("smooth_labels", &smooth_labels, py::arg("observed"), py::arg("y_hat"),
        py::arg("alpha"));
  m.def(
      "mixup",
      [](const std::vector<double>& xi, const std::vector<double>& xj,
         const std::vector<double>& yi, const std::vector<double>& yj,
         double lam) {
        return py::make_tuple(mix(xi, xj, lam), mix(yi, yj, lam));
      },
      py::arg("x_i"), py::arg("x_j"), py::arg("y_i"), py::arg("y_j"),
      py::arg("lam"));
  m.def(
      "select_pairs",
      [](const py::array_t<double>& matrix, int count) {
        const auto pairs = select_pairs(matrix_from_numpy(matrix), count);
        std::vector<std::tuple<int, int, double>> out;
        for (const auto& p : pairs) out.emplace_back(p.i, p.j, p.similarity);
        return out;
      },
      py::arg("matrix"), py::arg("count"));
  m.def(
      "similarity_matrix",
      [](const py::array_t<double>& feats, const std::vector<int>& observed,
         const std::vector<int>& class_rank) {
        return matrix_to_numpy(
            similarity_matrix(matrix_from_numpy(feats), observed, class_rank));
      },
      py::arg("masked_features"), py::arg("observed"), py::arg("class_rank"));
  m.def("class_rank_by_size", &class_rank_by_size, py::arg("sizes"));

  // ---- pipeline ----
  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        const auto cfg =
            nlohmann::json::parse(config_json).get<ExperimentConfig>();
        const auto rec = run_experiment(cfg);
        nlohmann::json out{{"method", rec.method},
                           {"failure_stage", rec.failure_stage},
                           {"overall", rec.metrics.overall},
                           {"head", rec.metrics.head},
                           {"middle", rec.metrics.middle},
                           {"tail", rec.metrics.tail},
                           {"hit_rate", rec.hit},
                           {"observed_if", rec.observed_if}};
        return out.dump();
      },
      py::arg("config_json"));
  m.def(
      "baseline_ce",
      [](const std::string& config_json) {
        const auto cfg =
            nlohmann::json::parse(config_json).get<ExperimentConfig>();
        const auto rec = baseline_ce(cfg);
        nlohmann::json out{{"method", rec.method},
                           {"failure_stage", rec.failure_stage},
                           {"overall", rec.metrics.overall}};
        return out.dump();
      },
      py::arg("config_json"));
  m.def("save_manifest", &save_manifest, py::arg("dataset"), py::arg("path"));
  m.def("load_manifest", &load_manifest, py::arg("path"));
  m.def("write_synthetic_image_corpus", &write_synthetic_image_corpus,
        py::arg("dir"), py::arg("classes"), py::arg("train_per_class"),
        py::arg("test_per_class"), py::arg("signal"), py::arg("seed"));
}
