#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fedsim/attack.hpp"
#include "fedsim/config.hpp"
#include "fedsim/data_gen.hpp"
#include "fedsim/defense.hpp"
#include "fedsim/engine.hpp"
#include "fedsim/model.hpp"
#include "fedsim/optimizer.hpp"
#include "fedsim/runner.hpp"

namespace py = pybind11;
using namespace fedsim;

namespace {

py::dict record_to_dict(const MetricsRecord& r) {
  py::dict d;
  d["round"] = r.round;
  d["test_accuracy"] = r.test_accuracy;
  d["test_loss"] = r.test_loss;
  d["train_loss_mean"] = r.train_loss_mean;
  d["num_updates_aggregated"] = r.num_updates_aggregated;
  d["wall_time_ms"] = r.wall_time_ms;
  if (r.defense_selected_ids) d["defense_selected_ids"] = *r.defense_selected_ids;
  if (r.attack_poisoned_ids) d["attack_poisoned_ids"] = *r.attack_poisoned_ids;
  return d;
}

py::list records_to_list(const std::vector<MetricsRecord>& records) {
  py::list out;
  for (const auto& r : records) out.append(record_to_dict(r));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Federated-learning attack/defense simulation core";

  py::enum_<ModelKind>(m, "ModelKind")
      .value("logreg", ModelKind::logreg)
      .value("mlp", ModelKind::mlp);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init([](ModelKind kind, int64_t input_dim, int num_classes,
                       std::vector<int64_t> hidden_dims) {
             ModelSpec spec{kind, input_dim, num_classes, std::move(hidden_dims)};
             spec.validate();
             return spec;
           }),
           py::arg("kind"), py::arg("input_dim"), py::arg("num_classes"),
           py::arg("hidden_dims") = std::vector<int64_t>{})
      .def_readonly("kind", &ModelSpec::kind)
      .def_readonly("input_dim", &ModelSpec::input_dim)
      .def_readonly("num_classes", &ModelSpec::num_classes)
      .def_readonly("hidden_dims", &ModelSpec::hidden_dims)
      .def("param_count", &ModelSpec::param_count);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init([](int epochs, int64_t batch_size, double learning_rate,
                       uint64_t seed) {
             TrainConfig cfg{epochs, batch_size, learning_rate, seed};
             cfg.validate();
             return cfg;
           }),
           py::arg("epochs") = 1, py::arg("batch_size") = 32,
           py::arg("learning_rate") = 0.1, py::arg("seed") = 0)
      .def_readonly("epochs", &TrainConfig::local_epochs)
      .def_readonly("batch_size", &TrainConfig::batch_size)
      .def_readonly("learning_rate", &TrainConfig::learning_rate)
      .def_readonly("seed", &TrainConfig::seed);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<std::vector<double>, std::vector<int>, int64_t, int>(),
           py::arg("features"), py::arg("labels"), py::arg("dim"),
           py::arg("num_classes"))
      .def("__len__", &Dataset::size)
      .def_property_readonly("dim", &Dataset::dim)
      .def_property_readonly("num_classes", &Dataset::num_classes)
      .def_property_readonly("features",
                             [](const Dataset& d) { return d.features(); })
      .def_property_readonly("labels",
                             [](const Dataset& d) { return d.labels(); });

  py::class_<ParamVector>(m, "ParamVector")
      .def_property_readonly("values",
                             [](const ParamVector& p) { return p.values(); })
      .def("__len__", &ParamVector::size)
      .def("norm", [](const ParamVector& p) { return l2_norm(p); });

  py::class_<ClientUpdate>(m, "ClientUpdate")
      .def(py::init([](int client_id, int64_t sample_count, ParamVector params) {
             return ClientUpdate{client_id, sample_count, std::move(params)};
           }),
           py::arg("client_id"), py::arg("sample_count"), py::arg("params"))
      .def_readonly("client_id", &ClientUpdate::client_id)
      .def_readonly("sample_count", &ClientUpdate::sample_count)
      .def_readonly("params", &ClientUpdate::params);

  // model-core operations
  m.def("init_params", &init_params, py::arg("spec"), py::arg("seed"));
  m.def(
      "forward_loss_grad",
      [](const ModelSpec& spec, const ParamVector& params, const Dataset& batch) {
        const LossGrad lg = forward_loss_grad(spec, params, batch);
        return py::make_tuple(lg.loss, lg.grad);
      },
      py::arg("spec"), py::arg("params"), py::arg("batch"));
  m.def(
      "local_train",
      [](const ModelSpec& spec, const ParamVector& params, const Dataset& data,
         const TrainConfig& cfg) -> py::object {
        auto out = local_train(spec, params, data, cfg);
        if (!out) return py::none();
        return py::cast(std::move(*out));
      },
      py::arg("spec"), py::arg("params"), py::arg("data"), py::arg("cfg"));
  m.def(
      "evaluate",
      [](const ModelSpec& spec, const ParamVector& params, const Dataset& data) {
        const EvalResult r = evaluate(spec, params, data);
        return py::make_tuple(r.accuracy, r.loss);
      },
      py::arg("spec"), py::arg("params"), py::arg("data"));
  m.def("make_synthetic", &make_synthetic, py::arg("num_classes"),
        py::arg("dim"), py::arg("total_samples"), py::arg("seed"));
  m.def(
      "partition_dirichlet",
      [](const Dataset& data, int num_clients, double alpha, uint64_t seed) {
        return partition_dirichlet(data, num_clients, alpha, seed);
      },
      py::arg("data"), py::arg("num_clients"), py::arg("alpha"), py::arg("seed"));
  m.def("load_csv_dataset", &load_csv_dataset, py::arg("path"),
        py::arg("num_classes") = 0);

  // aggregation and defense kernels
  m.def("fedavg_aggregate", &fedavg_aggregate, py::arg("updates"));
  m.def("krum_scores", &krum_scores, py::arg("updates"), py::arg("f"));
  m.def(
      "krum_select",
      [](const std::vector<ClientUpdate>& updates, int f, int m_count) {
        DefenseSpec spec;
        spec.kind = m_count > 1 ? DefenseKind::mkrum : DefenseKind::krum;
        spec.byzantine_f = f;
        spec.krum_m = m_count;
        return krum_select(updates, spec);
      },
      py::arg("updates"), py::arg("f"), py::arg("m") = 1);
  m.def("coord_median_aggregate", &coord_median_aggregate, py::arg("updates"));
  m.def("trimmed_mean_aggregate", &trimmed_mean_aggregate, py::arg("updates"),
        py::arg("beta"));
  m.def("geometric_median", &geometric_median, py::arg("points"),
        py::arg("weights"), py::arg("nu") = 1e-6, py::arg("iters") = 100);

  // attack operations
  m.def("flip_labels", &flip_labels, py::arg("data"), py::arg("pairs"));
  m.def(
      "dlg_reconstruct",
      [](const ModelSpec& model, const ParamVector& params,
         const ParamVector& target_gradient, int iters, double lr,
         uint64_t seed) {
        RngStream rng(derive_seed(seed, "dlg"));
        const Reconstruction r =
            dlg_reconstruct(model, params, target_gradient, iters, lr, rng);
        py::dict d;
        d["features"] = r.features;
        d["label_probs"] = r.label_probs;
        d["match_loss"] = r.match_loss;
        d["loss_history"] = r.loss_history;
        return d;
      },
      py::arg("model"), py::arg("params"), py::arg("target_gradient"),
      py::arg("iters") = 400, py::arg("lr") = 0.1, py::arg("seed") = 0);

  m.def("derive_seed", &derive_seed, py::arg("master"), py::arg("purpose"),
        py::arg("a") = 0, py::arg("b") = 0);

  // harness operations
  m.def("preset_names", &preset_names);
  m.def("preset_yaml", &preset_yaml, py::arg("name"));
  m.def(
      "run_preset",
      [](const std::string& name, const std::vector<std::string>& overrides) {
        return records_to_list(run_experiment(preset(name, overrides)).records);
      },
      py::arg("name"), py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "run_config",
      [](const std::string& path, const std::vector<std::string>& overrides) {
        return records_to_list(run_experiment(load_config(path, overrides)).records);
      },
      py::arg("path"), py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "run_config_text",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        return records_to_list(
            run_experiment(parse_config_text(text, overrides)).records);
      },
      py::arg("text"), py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "validate_config",
      [](const std::string& path) {
        load_config(path);
        return true;
      },
      py::arg("path"));
}
