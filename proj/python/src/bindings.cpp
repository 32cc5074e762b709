#include "dlc/errors.hpp"
#include "dlc/hiergen.hpp"
#include "dlc/oracle.hpp"
#include "dlc/patches.hpp"
#include "dlc/pipeline.hpp"
#include "dlc/spec_io.hpp"
#include "dlc/suites.hpp"
#include "dlc/tlgd.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;

namespace {

using dlc::hiergen::Example;
using dlc::hiergen::HierarchySpec;

// Records cross the boundary as JSON text; the Python side decodes them.
std::string dump(const nlohmann::json& j) { return j.dump(); }

py::dict example_dict(const Example& ex) {
  py::dict d;
  d["label"] = ex.label;
  d["latent"] = ex.latent;
  d["observed"] = ex.observed;
  return d;
}

Example example_from(const py::handle& obj) {
  Example ex;
  auto d = obj.cast<py::dict>();
  ex.label = d["label"].cast<int>();
  ex.observed = d["observed"].cast<std::vector<double>>();
  if (d.contains("latent")) ex.latent = d["latent"].cast<std::vector<std::vector<int>>>();
  return ex;
}

std::vector<Example> examples_from(const py::list& items) {
  std::vector<Example> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(example_from(item));
  return out;
}

}  // namespace

PYBIND11_MODULE(_dlc, m) {
  m.doc() = "Deep layerwise clustering on hierarchical generative models";

  py::register_exception<dlc::Error>(m, "DlcError", PyExc_RuntimeError);

  py::class_<HierarchySpec>(m, "Spec")
      .def_readonly("name", &HierarchySpec::name)
      .def_readonly("k", &HierarchySpec::k)
      .def_readonly("m", &HierarchySpec::m)
      .def_readonly("s", &HierarchySpec::s)
      .def_readonly("d", &HierarchySpec::d)
      .def_readonly("labels", &HierarchySpec::labels)
      .def_readonly("class_names", &HierarchySpec::class_names)
      .def("to_json", [](const HierarchySpec& s) { return dump(dlc::io::spec_to_json(s)); })
      .def("image_size", &HierarchySpec::image_size);

  m.def("resolve_spec", &dlc::io::resolve_spec, py::arg("name_or_path"),
        "Built-in spec ('m1', 'digits', 'random:<seed>') or a spec file");
  m.def("spec_from_json", [](const std::string& text) { return dlc::io::spec_from_json(nlohmann::json::parse(text)); });
  m.def("validate_spec", [](const HierarchySpec& spec) {
    std::vector<std::string> out;
    for (const auto& v : dlc::hiergen::validate_spec(spec)) out.push_back(v.message);
    return out;
  });

  m.def(
      "sample_dataset",
      [](const HierarchySpec& spec, std::size_t n, std::uint64_t seed) {
        py::list out;
        for (const auto& ex : dlc::hiergen::sample_dataset(spec, n, seed)) out.append(example_dict(ex));
        return out;
      },
      py::arg("spec"), py::arg("n"), py::arg("seed") = 0);

  m.def(
      "count_distinct", [](const HierarchySpec& spec, int level) { return py::int_(py::str(dlc::hiergen::count_distinct(spec, level).str())); },
      py::arg("spec"), py::arg("level"));

  m.def("mean_image", [](const HierarchySpec& spec, int level, int index) {
    return dlc::hiergen::mean_image(spec, {level, index}).values;
  });

  m.def("analytics", [](const HierarchySpec& spec) {
    const auto an = dlc::hiergen::analytics(spec);
    py::dict d;
    d["theta"] = an.theta ? py::cast(*an.theta) : py::none();
    d["lambda"] = an.lambda ? py::cast(*an.lambda) : py::none();
    d["delta_min"] = an.delta_min;
    d["max_classes"] = an.max_classes;
    return d;
  });

  m.def(
      "hyperparams",
      [](double theta, double lambda, int s, int d, double gamma, double delta, int c_max, double eta) {
        const auto hp = dlc::tlgd::hyperparams(theta, lambda, s, d, gamma, delta, c_max, eta);
        return py::make_tuple(hp.sigma, hp.n_min, hp.T_min);
      },
      py::arg("theta"), py::arg("lambda_"), py::arg("s"), py::arg("d"), py::arg("gamma"), py::arg("delta"),
      py::arg("c_max"), py::arg("eta"), "Returns (sigma, n_min, T_min)");

  m.def(
      "cluster_gamma",
      [](const Eigen::MatrixXd& columns, double gamma) {
        const auto c = dlc::patches::cluster_gamma(columns, gamma);
        return py::make_tuple(c.mapping.ell(), c.assignment);
      },
      py::arg("columns"), py::arg("gamma"), "Leader clustering of the columns; returns (ell, assignment)");

  m.def(
      "forward",
      [](const Eigen::MatrixXd& K, const Eigen::MatrixXd& W, const Eigen::MatrixXd& X) {
        dlc::tlgd::TwoLayerNet net{K, {W}};
        return dlc::tlgd::forward(net, X);
      },
      py::arg("K"), py::arg("W"), py::arg("X"));

  m.def(
      "init_net",
      [](std::size_t ell, std::size_t n, std::size_t width, double sigma, std::uint64_t seed) {
        dlc::tlgd::Rng rng(seed);
        const auto net = dlc::tlgd::init(ell, n, width, 1, sigma, rng);
        return py::make_tuple(net.K, net.W.front());
      },
      py::arg("ell"), py::arg("n"), py::arg("width"), py::arg("sigma"), py::arg("seed") = 0);

  py::class_<dlc::pipeline::DeepModel>(m, "DeepModel")
      .def_property_readonly("num_blocks", [](const dlc::pipeline::DeepModel& model) { return model.blocks.size(); })
      .def_property_readonly("top_clusters", [](const dlc::pipeline::DeepModel& model) { return model.top_phi.ell(); })
      .def("predict",
           [](const dlc::pipeline::DeepModel& model, const std::vector<double>& observed) {
             return dlc::pipeline::predict(model, observed);
           })
      .def("save", [](const dlc::pipeline::DeepModel& model, const std::string& dir) { dlc::pipeline::save_model(model, dir); });

  m.def("load_model", [](const std::string& dir) { return dlc::pipeline::load_model(dir); });

  m.def(
      "train_deep",
      [](const HierarchySpec& spec, const py::list& data, std::uint64_t seed, std::optional<double> gamma) {
        const auto tp = dlc::suites::theory_params(spec, 0.01, 0.1, gamma);
        auto model = dlc::pipeline::train_deep(examples_from(data), dlc::pipeline::shape_of(spec),
                                               dlc::suites::deep_params(tp, seed));
        model.spec_hash = dlc::io::spec_hash(spec);
        return model;
      },
      py::arg("spec"), py::arg("data"), py::arg("seed") = 0, py::arg("gamma") = py::none(),
      "Train with the hyperparameters derived from the spec");

  m.def("evaluate", [](const dlc::pipeline::DeepModel& model, const py::list& data) {
    return dump(dlc::pipeline::evaluation_to_json(dlc::pipeline::evaluate(model, examples_from(data))));
  });

  m.def(
      "run_suite",
      [](const std::string& name, const std::string& spec, std::size_t trials, std::size_t draws, std::size_t runs,
         std::uint64_t seed) {
        dlc::suites::SuiteOptions options;
        options.spec = spec;
        options.trials = trials;
        options.draws = draws;
        options.runs = runs;
        options.seed = seed;
        std::vector<std::string> out;
        for (const auto& r : dlc::suites::run_suite(name, options)) out.push_back(dump(dlc::oracle::to_json(r)));
        return out;
      },
      py::arg("name"), py::arg("spec") = "m1", py::arg("trials") = 50, py::arg("draws") = 2000, py::arg("runs") = 10,
      py::arg("seed") = 1);
}
