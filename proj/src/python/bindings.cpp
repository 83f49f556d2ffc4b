#include "fedirr/alerts.hpp"
#include "fedirr/config.hpp"
#include "fedirr/error.hpp"
#include "fedirr/experiment.hpp"
#include "fedirr/learning.hpp"
#include "fedirr/protocol.hpp"
#include "fedirr/sensor.hpp"
#include "fedirr/soil.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <random>

namespace py = pybind11;
using namespace fedirr;

namespace {

py::dict ledger_dict(const experiment::NodeReport& r) {
  py::dict d;
  d["node_id"] = r.node_id;
  d["applied_liters"] = r.ledger.applied_liters;
  d["drained_from_irrigation_liters"] = r.ledger.drained_from_irrigation_liters;
  d["rain_preempted_liters"] = r.ledger.rain_preempted_liters;
  d["avoidable_applied_liters"] = r.ledger.avoidable_applied_liters;
  d["baseline_applied_liters"] = r.ledger.baseline_applied_liters;
  d["wasted_liters"] = r.ledger.wasted_liters();
  d["mean_moisture_deficit"] = r.mean_moisture_deficit;
  return d;
}

std::vector<fl::TrainingExample> examples(const std::vector<std::vector<double>>& x,
                                          const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(Errc::dimension_mismatch, "features and targets differ in length");
  std::vector<fl::TrainingExample> out;
  out.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.push_back({x[i], y[i]});
  return out;
}

} // namespace

PYBIND11_MODULE(_fedirr, m) {
  m.doc() = "Federated irrigation simulator core";

  static py::exception<Error> exc(m, "FedirrError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(exc, (std::string(errc_name(e.code())) + ": " + e.what()).c_str());
    }
  });

  py::class_<soil::SoilState>(m, "SoilState")
      .def(py::init<>())
      .def_readwrite("moisture", &soil::SoilState::moisture)
      .def_readwrite("saturation", &soil::SoilState::saturation)
      .def_readwrite("field_capacity", &soil::SoilState::field_capacity)
      .def_readwrite("et_coeff", &soil::SoilState::et_coeff)
      .def_readwrite("drain_coeff", &soil::SoilState::drain_coeff);

  m.def("et_loss", &soil::et_loss, py::arg("state"), py::arg("demand"));
  m.def("drainage_loss", &soil::drainage_loss, py::arg("state"));
  m.def(
      "step_soil",
      [](const soil::SoilState& s, double irrigation, double rain, double et_demand, double dt) {
        const auto r = soil::step_soil(s, irrigation, {rain, et_demand}, dt);
        py::dict report;
        report["irrigation"] = r.report.irrigation;
        report["rain"] = r.report.rain;
        report["et"] = r.report.et;
        report["drainage"] = r.report.drainage;
        report["clamped_excess"] = r.report.clamped_excess;
        report["clamped_deficit"] = r.report.clamped_deficit;
        report["net_rate"] = r.report.net_rate();
        return py::make_tuple(r.state, report);
      },
      py::arg("state"), py::arg("irrigation_rate"), py::arg("rain_rate"), py::arg("et_demand"),
      py::arg("dt_hours") = 1.0);
  m.def(
      "make_scenario",
      [](const std::string& kind, std::size_t length, std::uint64_t seed) {
        std::vector<std::pair<double, double>> out;
        for (const auto& t : soil::make_scenario(soil::parse_scenario(kind), length, seed).ticks)
          out.emplace_back(t.rain_rate, t.et_demand);
        return out;
      },
      py::arg("kind"), py::arg("length"), py::arg("seed"),
      "List of (rain_rate, et_demand) per tick.");

  m.def(
      "analog_read",
      [](double moisture, double noise_std, std::uint64_t seed) {
        sensor::SensorCalib c;
        c.noise_std = noise_std;
        std::mt19937_64 rng(seed);
        return sensor::analog_read(moisture, c, rng);
      },
      py::arg("moisture"), py::arg("noise_std") = 0.0, py::arg("seed") = 0);
  m.def(
      "estimate_moisture",
      [](double counts) { return sensor::estimate_moisture(counts, sensor::SensorCalib{}); },
      py::arg("counts"));
  m.def(
      "digital_read",
      [](int counts, int threshold) {
        sensor::SensorCalib c;
        c.threshold_counts = threshold;
        return sensor::digital_read(counts, c);
      },
      py::arg("counts"), py::arg("threshold_counts") = 205);

  m.def(
      "predict",
      [](const std::vector<double>& w, const std::vector<double>& x) {
        return fl::predict(fl::ModelParams{w, 0, {}}, x);
      },
      py::arg("weights"), py::arg("features"));
  m.def(
      "mse_loss",
      [](const std::vector<double>& w, const std::vector<std::vector<double>>& x,
         const std::vector<double>& y, double l2) {
        return fl::mse_loss(fl::ModelParams{w, 0, {}}, examples(x, y), l2);
      },
      py::arg("weights"), py::arg("features"), py::arg("targets"), py::arg("l2") = 0.0);
  m.def(
      "gradient",
      [](const std::vector<double>& w, const std::vector<std::vector<double>>& x,
         const std::vector<double>& y, double l2) {
        return fl::gradient(fl::ModelParams{w, 0, {}}, examples(x, y), l2);
      },
      py::arg("weights"), py::arg("features"), py::arg("targets"), py::arg("l2") = 0.0);
  m.def(
      "local_train",
      [](const std::vector<double>& w, const std::vector<std::vector<double>>& x,
         const std::vector<double>& y, int epochs, double lr, double l2) {
        fl::TrainConfig cfg;
        cfg.local_epochs = epochs;
        cfg.learning_rate = lr;
        cfg.l2 = l2;
        const auto u = fl::local_train(fl::ModelParams{w, 0, {}}, examples(x, y), cfg);
        return py::make_tuple(u.weights, u.local_loss);
      },
      py::arg("weights"), py::arg("features"), py::arg("targets"), py::arg("local_epochs") = 5,
      py::arg("learning_rate") = 0.1, py::arg("l2") = 0.0, "Returns (weights, final_loss).");
  m.def(
      "aggregate",
      [](const std::vector<std::vector<double>>& weights, const std::vector<std::uint64_t>& counts) {
        if (weights.size() != counts.size())
          throw Error(Errc::dimension_mismatch, "weights and counts differ in length");
        std::vector<fl::ClientUpdate> ups;
        for (std::size_t i = 0; i < weights.size(); ++i) {
          char id[16];
          std::snprintf(id, sizeof id, "c%06zu", i);
          ups.push_back({id, 0, weights[i], counts[i], 0.0});
        }
        return fl::aggregate(ups).weights;
      },
      py::arg("weights"), py::arg("sample_counts"));

  m.def(
      "heartbeat_frame",
      [](const std::string& client_id) { return py::bytes(proto::encode(proto::Heartbeat{client_id})); },
      py::arg("client_id"), "JSON payload of a heartbeat message.");
  m.def(
      "roundtrip_update",
      [](const std::string& id, std::uint64_t round, const std::vector<double>& w, std::uint64_t n,
         double loss) {
        const auto msg = proto::decode(proto::encode(proto::ClientUpdateMsg{id, round, w, n, loss}));
        return std::get<proto::ClientUpdateMsg>(msg).weights;
      },
      py::arg("client_id"), py::arg("round"), py::arg("weights"), py::arg("sample_count"),
      py::arg("local_loss"));

  m.attr("DRY_MESSAGE") = std::string(alerts::kDryMessage);

  m.def("default_config", [] { return config_to_json(default_config()); },
        "Default experiment config as JSON text.");
  m.def(
      "run_demo",
      [](const std::string& config_json, const std::filesystem::path& run_dir) {
        const auto cfg = config_from_json(config_json);
        experiment::DemoResult r;
        {
          py::gil_scoped_release release;
          r = experiment::run_demo(cfg, run_dir);
        }
        py::dict out;
        py::list nodes;
        for (const auto& n : r.nodes) nodes.append(ledger_dict(n));
        out["nodes"] = nodes;
        out["total"] = ledger_dict(r.total);
        out["converged"] = r.training.converged;
        out["rounds"] = r.training.final_model.round;
        out["weights"] = r.training.final_model.weights;
        return out;
      },
      py::arg("config_json"), py::arg("run_dir"));
  m.def(
      "compare",
      [](const std::filesystem::path& a, const std::filesystem::path& b) {
        py::list rows;
        for (const auto& r : experiment::compare_runs(a, b)) {
          py::dict d;
          d["node_id"] = r.node_id;
          d["metric"] = r.metric;
          d["a"] = r.a;
          d["b"] = r.b;
          d["delta_pct"] = r.delta_pct ? py::cast(*r.delta_pct) : py::none();
          rows.append(d);
        }
        return rows;
      },
      py::arg("run_a"), py::arg("run_b"));
}
