#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fedloc/dataset.hpp"
#include "fedloc/experiment.hpp"
#include "fedloc/fedavg.hpp"
#include "fedloc/floor3d.hpp"
#include "fedloc/model.hpp"
#include "fedloc/synth.hpp"

namespace py = pybind11;
using namespace fedloc;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::span<const double> as_span(const DoubleArray& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-D array");
  return {a.data(), static_cast<std::size_t>(a.shape(0))};
}

Matrix as_matrix(const DoubleArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

// Strides are spelled out: the defaulted ones come out as 0 with some
// pybind11/numpy combinations.
py::array_t<double> to_array(std::span<const double> v) {
  py::array_t<double> out({static_cast<py::ssize_t>(v.size())},
                          {static_cast<py::ssize_t>(sizeof(double))});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> to_array(const Matrix& m) {
  const auto cols = static_cast<py::ssize_t>(m.cols);
  const auto item = static_cast<py::ssize_t>(sizeof(double));
  py::array_t<double> out({static_cast<py::ssize_t>(m.rows), cols}, {cols * item, item});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

Batch as_batch(const DoubleArray& x, const DoubleArray& y) {
  Batch b;
  b.features = as_matrix(x);
  b.targets = as_matrix(y);
  return b;
}

py::dict summary_dict(const SummaryRow& s) {
  py::dict d;
  d["experiment_id"] = s.experiment_id;
  d["metric"] = s.metric;
  d["units"] = s.units;
  d["method"] = s.method;
  d["n_seeds"] = s.n_seeds;
  d["final_mean"] = s.final_mean;
  d["final_std"] = s.final_std;
  d["vs_method"] = s.vs_method;
  d["relative_improvement"] = s.relative_improvement;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fedloc, m) {
  m.doc() = "Federated WiFi fingerprint localization";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DatasetError>(m, "DatasetError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

  py::enum_<Activation>(m, "Activation").value("relu", Activation::relu).value("tanh", Activation::tanh);
  py::enum_<Head>(m, "Head")
      .value("linear", Head::linear)
      .value("sigmoid", Head::sigmoid)
      .value("softmax", Head::softmax);

  py::class_<MlpArchitecture>(m, "MlpArchitecture")
      .def(py::init([](std::vector<std::size_t> widths, Activation act, Head head) {
             MlpArchitecture a{std::move(widths), act, head};
             a.validate();
             return a;
           }),
           py::arg("layer_widths"), py::arg("activation") = Activation::relu,
           py::arg("head") = Head::linear)
      .def_readonly("layer_widths", &MlpArchitecture::layer_widths)
      .def_readonly("activation", &MlpArchitecture::hidden_activation)
      .def_readonly("head", &MlpArchitecture::output_head)
      .def_property_readonly("param_count", &MlpArchitecture::param_count)
      .def("fingerprint", &MlpArchitecture::fingerprint);

  m.def("init_params", [](const MlpArchitecture& a, std::uint64_t seed) { return to_array(init_params(a, seed)); },
        py::arg("arch"), py::arg("seed"));
  m.def("forward", [](const DoubleArray& p, const MlpArchitecture& a, const DoubleArray& x) {
    return to_array(forward(as_span(p), a, as_matrix(x)));
  });
  m.def("batch_loss",
        [](const DoubleArray& p, const MlpArchitecture& a, const DoubleArray& x, const DoubleArray& y,
           double positive_weight) {
          return batch_loss(as_span(p), a, as_batch(x, y), LossOptions{positive_weight});
        },
        py::arg("params"), py::arg("arch"), py::arg("features"), py::arg("targets"),
        py::arg("positive_weight") = 1.0);
  m.def("gradient",
        [](const DoubleArray& p, const MlpArchitecture& a, const DoubleArray& x, const DoubleArray& y,
           double positive_weight) {
          return to_array(gradient(as_span(p), a, as_batch(x, y), LossOptions{positive_weight}));
        },
        py::arg("params"), py::arg("arch"), py::arg("features"), py::arg("targets"),
        py::arg("positive_weight") = 1.0);

  m.def("aggregate", [](const std::vector<DoubleArray>& params, const std::vector<double>& weights) {
    std::vector<ParameterVector> ps;
    for (const auto& p : params) {
      const auto s = as_span(p);
      ps.emplace_back(s.begin(), s.end());
    }
    return to_array(aggregate(ps, weights));
  });
  m.def("predict_floor", [](const std::vector<double>& scores) { return predict_floor(scores); });

  m.def("write_synthetic_corpus", [](const std::string& dir, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    write_synthetic_corpus(dir, cfg);
  }, py::arg("dir"), py::arg("seed") = SynthConfig{}.seed);

  m.def("load_csv", [](const std::string& path) {
    const auto set = load_csv(path, Provenance::derived);
    const auto n = static_cast<py::ssize_t>(set.size());
    const auto waps = static_cast<py::ssize_t>(kNumWaps);
    py::array_t<std::int16_t> rss({n, waps}, {waps * py::ssize_t{2}, py::ssize_t{2}});
    py::array_t<double> pos({n, py::ssize_t{2}}, {py::ssize_t{16}, py::ssize_t{8}});
    // floor, building, phone, user
    py::array_t<std::int32_t> labels({n, py::ssize_t{4}}, {py::ssize_t{16}, py::ssize_t{4}});
    auto r = rss.mutable_unchecked<2>();
    auto p = pos.mutable_unchecked<2>();
    auto l = labels.mutable_unchecked<2>();
    for (py::ssize_t i = 0; i < n; ++i) {
      const auto& rec = set.records[static_cast<std::size_t>(i)];
      for (std::size_t w = 0; w < kNumWaps; ++w) r(i, static_cast<py::ssize_t>(w)) = rec.rss[w];
      p(i, 0) = rec.longitude;
      p(i, 1) = rec.latitude;
      l(i, 0) = rec.floor;
      l(i, 1) = rec.building_id;
      l(i, 2) = rec.phone_id;
      l(i, 3) = rec.user_id;
    }
    py::dict d;
    d["rss"] = rss;
    d["position"] = pos;
    d["labels"] = labels;
    return d;
  });

  m.def("resolve_config", [](const std::string& json_text) {
    return resolved_snapshot(validate_config(json_text));
  });
  m.def("run_experiment", [](const std::string& json_text) {
    const auto cfg = validate_config(json_text);
    RunArtifacts art;
    {
      py::gil_scoped_release release;
      art = run_experiment(cfg);
    }
    py::list summary;
    for (const auto& s : art.summary) summary.append(summary_dict(s));
    py::list runs;
    for (const auto& r : art.runs) {
      py::dict d;
      d["experiment_id"] = r.experiment_id;
      d["method"] = r.method_tag;
      d["seed"] = r.seed;
      d["ok"] = r.ok;
      d["detail"] = r.detail;
      runs.append(d);
    }
    py::dict out;
    out["summary"] = summary;
    out["runs"] = runs;
    out["output_dir"] = cfg.output_dir;
    return out;
  }, py::arg("config_json"));
}
