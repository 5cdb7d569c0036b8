#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "groupforge/balancing.hpp"
#include "groupforge/error.hpp"
#include "groupforge/experiment.hpp"
#include "groupforge/metrics.hpp"
#include "groupforge/model.hpp"
#include "groupforge/spectral.hpp"
#include "groupforge/synthetic.hpp"
#include "groupforge/train.hpp"

namespace py = pybind11;
namespace gf = groupforge;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

gf::Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
  gf::Matrix m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

Array to_array(const gf::Matrix& m) {
  Array a({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), a.mutable_data());
  return a;
}

gf::GroupPartition partition_of(const gf::LabeledDataset& d, std::optional<gf::GroupSchema> schema) {
  return gf::build_partition(d, schema.value_or(d.inferred_schema()));
}

py::dict epoch_dict(const gf::EpochRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["train_loss"] = r.train_loss;
  d["train_acc"] = r.train_acc;
  d["test_group_acc"] = r.test_group_acc;
  d["wga"] = r.wga;
  d["worst_group"] = r.worst_group;
  d["avg_acc"] = r.avg_acc;
  d["train_group_acc"] = r.train_group_acc;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Class balancing, desk-scale training and spectral diagnostics for group robustness.";

  auto error = py::register_exception<gf::Error>(m, "Error");
  py::register_exception<gf::ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<gf::DivergenceError>(m, "DivergenceError", error.ptr());
  py::register_exception<gf::LabelRangeError>(m, "LabelRangeError", error.ptr());

  py::class_<gf::GroupSchema>(m, "GroupSchema")
      .def(py::init<int, int>(), py::arg("num_classes") = 2, py::arg("num_spurious") = 2)
      .def_readwrite("num_classes", &gf::GroupSchema::num_classes)
      .def_readwrite("num_spurious", &gf::GroupSchema::num_spurious)
      .def_property_readonly("num_groups", &gf::GroupSchema::num_groups)
      .def("group_id", &gf::GroupSchema::group_id)
      .def("class_of", &gf::GroupSchema::class_of)
      .def("spurious_of", &gf::GroupSchema::spurious_of)
      .def("__eq__", [](const gf::GroupSchema& a, const gf::GroupSchema& b) { return a == b; })
      .def("__repr__", [](const gf::GroupSchema& s) {
        return "GroupSchema(" + std::to_string(s.num_classes) + ", " +
               std::to_string(s.num_spurious) + ")";
      });

  py::class_<gf::LabeledDataset>(m, "LabeledDataset")
      .def(py::init([](const Array& x, std::vector<int> y, std::vector<int> s) {
             return gf::LabeledDataset(to_matrix(x), std::move(y), std::move(s));
           }),
           py::arg("features"), py::arg("class_labels"), py::arg("spurious_labels"))
      .def_property_readonly("features", [](const gf::LabeledDataset& d) { return to_array(d.features()); })
      .def_property_readonly("class_labels", &gf::LabeledDataset::class_labels)
      .def_property_readonly("spurious_labels", &gf::LabeledDataset::spurious_labels)
      .def_property_readonly("dim", &gf::LabeledDataset::dim)
      .def("inferred_schema", &gf::LabeledDataset::inferred_schema)
      .def("__len__", &gf::LabeledDataset::size);

  py::class_<gf::GroupPartition>(m, "GroupPartition")
      .def_readonly("schema", &gf::GroupPartition::schema)
      .def_readonly("omega_g", &gf::GroupPartition::omega_g)
      .def_readonly("omega_y", &gf::GroupPartition::omega_y)
      .def_readonly("majority_group_per_class", &gf::GroupPartition::majority_group_per_class)
      .def_readonly("minority", &gf::GroupPartition::minority)
      .def("group_sizes", &gf::GroupPartition::group_sizes)
      .def("class_sizes", &gf::GroupPartition::class_sizes);

  m.def("build_partition", &partition_of, py::arg("dataset"), py::arg("schema") = py::none());
  m.def("class_imbalance_ratio", &gf::class_imbalance_ratio);
  m.def("intra_class_min_maj", [](const gf::GroupPartition& p, int y) {
    const auto r = gf::intra_class_min_maj(p, y);
    return py::make_tuple(r.g_min, r.g_maj, r.degenerate);
  });
  m.def("read_dataset_csv", &gf::read_dataset_csv);
  m.def("write_dataset_csv", &gf::write_dataset_csv, py::arg("path"), py::arg("dataset"),
        py::arg("column_prefix") = "x");

  py::class_<gf::SamplingPlan>(m, "SamplingPlan")
      .def_readonly("active_indices", &gf::SamplingPlan::active_indices)
      .def_readonly("probabilities", &gf::SamplingPlan::probabilities)
      .def("__len__", &gf::SamplingPlan::size);

  m.def("subset_balanced", [](const gf::GroupPartition& p, std::uint64_t seed) {
    gf::Rng rng(seed);
    return gf::subset_balanced(p, rng);
  }, py::arg("partition"), py::arg("seed") = 0);
  m.def("subset_to_ratio", [](const gf::GroupPartition& p, double r, std::uint64_t seed) {
    gf::Rng rng(seed);
    return gf::subset_to_ratio(p, r, rng);
  }, py::arg("partition"), py::arg("ratio"), py::arg("seed") = 0);
  m.def("upsampling_plan", [](const gf::GroupPartition& p, std::optional<gf::IndexSet> active) {
    if (!active) {
      active.emplace(p.num_examples());
      std::iota(active->begin(), active->end(), 0);
    }
    return gf::upsampling_plan(p, *active);
  }, py::arg("partition"), py::arg("active") = py::none());
  m.def("uniform_plan", &gf::uniform_plan);
  m.def("upweighting_weights", [](const gf::GroupPartition& p) { return gf::upweighting_plan(p).weights; });
  m.def("mixture_plan", [](const gf::GroupPartition& p, double r, std::uint64_t seed) {
    gf::Rng rng(seed);
    return gf::mixture_plan(p, r, rng).plan;
  }, py::arg("partition"), py::arg("ratio"), py::arg("seed") = 0);
  m.def("draw_minibatch", [](const gf::SamplingPlan& plan, std::size_t n, std::uint64_t seed) {
    gf::Rng rng(seed);
    return gf::draw_minibatch(plan, n, rng);
  }, py::arg("plan"), py::arg("batch_size"), py::arg("seed") = 0);

  py::class_<gf::SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("schema", &gf::SyntheticSpec::schema)
      .def_readwrite("group_proportions", &gf::SyntheticSpec::group_proportions)
      .def_readwrite("d_core", &gf::SyntheticSpec::d_core)
      .def_readwrite("d_spur", &gf::SyntheticSpec::d_spur)
      .def_readwrite("mu_core", &gf::SyntheticSpec::mu_core)
      .def_readwrite("mu_spur", &gf::SyntheticSpec::mu_spur)
      .def_readwrite("sigma", &gf::SyntheticSpec::sigma)
      .def_readwrite("m", &gf::SyntheticSpec::m);
  m.def("preset", [](const std::string& name) { return gf::preset(name); });
  m.def("preset_names", &gf::preset_names);
  m.def("generate", [](const gf::SyntheticSpec& spec, std::uint64_t seed) {
    gf::Rng rng(seed);
    return gf::generate(spec, rng);
  }, py::arg("spec"), py::arg("seed") = 0);

  py::class_<gf::ModelParams>(m, "ModelParams")
      .def_property_readonly("values", [](const gf::ModelParams& p) {
        return std::vector<double>(p.values().begin(), p.values().end());
      })
      .def_property_readonly("parameter_count", &gf::ModelParams::parameter_count)
      .def_property_readonly("feature_dim", &gf::ModelParams::feature_dim)
      .def("predict", [](const gf::ModelParams& p, const Array& x) { return gf::predict(p, to_matrix(x)); })
      .def("features", [](const gf::ModelParams& p, const Array& x) {
        return to_array(gf::extract_features(p, to_matrix(x)));
      });

  py::class_<gf::TrainResult>(m, "TrainResult")
      .def_readonly("params", &gf::TrainResult::params)
      .def_property_readonly("trace", [](const gf::TrainResult& r) {
        py::list out;
        for (const auto& e : r.trace.epochs) out.append(epoch_dict(e));
        return out;
      })
      .def_property_readonly("final_wga", [](const gf::TrainResult& r) { return r.trace.final_epoch().wga; })
      .def_property_readonly("peak_wga", [](const gf::TrainResult& r) { return r.trace.peak_wga_epoch().wga; })
      .def_property_readonly("interpolation_epoch", [](const gf::TrainResult& r) {
        return gf::interpolation_epoch(r.trace);
      })
      .def("trace_csv", [](const gf::TrainResult& r) { return gf::trace_to_csv(r.trace); });

  m.def("train",
        [](const gf::LabeledDataset& train_set, const gf::LabeledDataset& test_set,
           const gf::GroupSchema& schema, const std::string& strategy,
           std::optional<double> mixture_ratio, std::size_t width, std::size_t epochs,
           std::size_t batch_size, double lr, std::uint64_t seed) {
          gf::TrainConfig cfg;
          cfg.epochs = epochs;
          cfg.batch_size = batch_size;
          cfg.optimizer.learning_rate = lr;
          cfg.seed = seed;
          const gf::BalancingStrategy s{gf::parse_strategy_kind(strategy), mixture_ratio};
          py::gil_scoped_release release;
          return gf::train(train_set, test_set, schema, s, gf::ModelConfig::from_width(width), cfg);
        },
        py::arg("train_set"), py::arg("test_set"), py::arg("schema"), py::arg("strategy") = "none",
        py::arg("mixture_ratio") = py::none(), py::arg("width") = 64, py::arg("epochs") = 100,
        py::arg("batch_size") = 32, py::arg("lr") = 1e-3, py::arg("seed") = 0);

  m.def("group_accuracies", [](std::vector<int> pred, const gf::LabeledDataset& d,
                               std::optional<gf::GroupSchema> schema) {
    return gf::per_group_accuracy(pred, d, partition_of(d, schema)).accuracies();
  }, py::arg("predictions"), py::arg("dataset"), py::arg("schema") = py::none());
  m.def("worst_group_accuracy", [](std::vector<std::size_t> correct, std::vector<std::size_t> total) {
    const auto e = gf::worst_group_accuracy({std::move(correct), std::move(total)});
    return py::make_tuple(e.value, e.id);
  }, py::arg("correct"), py::arg("total"));
  m.def("average_accuracy", [](std::vector<std::size_t> correct, std::vector<std::size_t> total,
                               std::optional<std::vector<double>> weights) {
    const gf::GroupAccuracies acc{std::move(correct), std::move(total)};
    if (!weights) return gf::average_accuracy(acc);
    return gf::average_accuracy(acc, std::span<const double>(*weights));
  }, py::arg("correct"), py::arg("total"), py::arg("weights") = py::none());

  m.def("covariance", [](const Array& z) {
    const auto mat = to_matrix(z);
    gf::IndexSet rows(mat.rows());
    std::iota(rows.begin(), rows.end(), 0);
    return to_array(gf::covariance(mat, rows));
  });
  m.def("eigh", [](const Array& a) {
    const auto e = gf::eigendecompose_symmetric(to_matrix(a));
    return py::make_tuple(e.values, to_array(e.vectors));
  }, "Eigenvalues (descending) and eigenvectors of a symmetric matrix.");
  m.def("top_k_spectrum", [](const gf::LabeledDataset& bank, std::size_t k,
                             std::optional<gf::GroupSchema> schema) {
    const auto s = gf::top_k_spectrum(gf::FeatureBank(bank, schema.value_or(bank.inferred_schema())), k);
    return py::make_tuple(s.per_group, s.per_class);
  }, py::arg("bank"), py::arg("k") = 10, py::arg("schema") = py::none());
  m.def("intra_class_rho", [](const gf::LabeledDataset& bank, std::optional<gf::GroupSchema> schema) {
    return gf::intra_class_rho(gf::FeatureBank(bank, schema.value_or(bank.inferred_schema())));
  }, py::arg("bank"), py::arg("schema") = py::none());

  m.def("run_experiment", [](const std::string& config_json, std::optional<std::filesystem::path> out,
                             std::size_t jobs) {
    const auto config = gf::parse_config(config_json);
    const gf::RunOptions options{jobs, true};
    gf::ExperimentResult result;
    {
      py::gil_scoped_release release;
      result = gf::run_experiment(config, options);
      if (out) gf::write_experiment(result, config, *out, options);
    }
    py::dict d;
    d["summary_csv"] = result.summary_csv;
    d["runs_csv"] = result.runs_csv;
    d["report_json"] = result.report_json;
    d["class_ratio"] = result.class_ratio;
    return d;
  }, py::arg("config_json"), py::arg("output_dir") = py::none(), py::arg("jobs") = 1);
}
