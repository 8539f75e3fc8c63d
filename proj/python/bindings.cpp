#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "surconfort/bench.hpp"
#include "surconfort/diffusion.hpp"
#include "surconfort/errors.hpp"
#include "surconfort/graphssl.hpp"
#include "surconfort/nn.hpp"
#include "surconfort/railgraph.hpp"
#include "surconfort/synthgen.hpp"

namespace py = pybind11;
using namespace surconfort;

namespace {

struct TrainOutput {
  nn::MlpModel model;
  nn::TrainLog log;
};

bench::ExperimentConfig config_from(const std::string& json) { return bench::parse_config(json.empty() ? "{}" : json); }

TrainOutput train(const std::string& method_name, double ratio, std::uint64_t seed, const std::string& config_json) {
  const auto cfg = config_from(config_json);
  const auto method = bench::parse_method(method_name);
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ArgumentError("ratio must lie in (0, 1]");
  const auto ds = bench::load_dataset(cfg.data);
  const auto split = data::mask_labels(ds.full, ratio, seed);
  auto tc = cfg.train;
  tc.seed = seed;
  switch (method) {
    case bench::Method::kSnn: {
      auto r = nn::train_supervised(split, tc);
      return {std::move(r.model), std::move(r.log)};
    }
    case bench::Method::kSurconfort:
    case bench::Method::kNgmNatural: {
      auto ngm = cfg.ngm;
      ngm.source = method == bench::Method::kSurconfort ? cfg.station_graph : graphssl::GraphSource::kNatural;
      const auto adj = method == bench::Method::kSurconfort
                           ? bench::station_adjacency(ds.network, cfg.station_graph, cfg.max_distance_km)
                           : railgraph::RailAdjacency();
      auto r = graphssl::train_surconfort(split, adj, ngm, tc);
      return {std::move(r.model), std::move(r.log)};
    }
    case bench::Method::kLpDssl: {
      auto r = diffusion::lp_dssl_train(split, cfg.diffusion, tc).best;
      return {std::move(r.model), std::move(r.log)};
    }
    default:
      throw ArgumentError("train supports surconfort, ngm-natural, snn and lp-dssl");
  }
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Congestion forecasting with graph-regularised neural networks";

  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "adjacency",
      [](const std::vector<std::array<double, 2>>& positions, const std::vector<std::pair<int, int>>& connections,
         double max_distance_km, bool geographic) {
        std::vector<railgraph::Station> stations;
        for (std::size_t i = 0; i < positions.size(); ++i) {
          stations.push_back({static_cast<int>(i), "s" + std::to_string(i), positions[i]});
        }
        const railgraph::RailNetwork net(stations, connections,
                                         geographic ? railgraph::CoordinateMode::kGeographic : railgraph::CoordinateMode::kPlanar);
        std::vector<std::tuple<int, int, double>> out;
        for (const auto& e : railgraph::build_adjacency(net, max_distance_km).unordered_pairs()) out.emplace_back(e.i, e.j, e.weight);
        return out;
      },
      py::arg("positions"), py::arg("connections"), py::arg("max_distance_km") = railgraph::kDefaultMaxDistanceKm,
      py::arg("geographic") = false, "Station adjacency as (i, j, weight) with i < j.");

  m.def(
      "generate_world",
      [](const std::filesystem::path& out, const std::string& config_json) {
        const auto cfg = config_from(config_json);
        const auto world = synth::generate_world(cfg.data.synthetic);
        synth::write_world(world, out);
        return world.reports.size();
      },
      py::arg("out"), py::arg("config_json") = "{}", "Writes a synthetic world as CSV files; returns the report count.");

  m.def(
      "pair_penalty",
      [](const std::vector<double>& a, const std::vector<double>& b, double w) { return graphssl::pair_penalty(a, b, w); },
      py::arg("v_i"), py::arg("v_j"), py::arg("weight"));

  m.def(
      "diffuse",
      [](const Eigen::MatrixXd& weights, const std::vector<int>& labels, double delta, const std::string& kind) {
        diffusion::AffinityMatrix a;
        a.weights = weights.sparseView();
        diffusion::DiffusionResult r;
        if (kind == "cg") {
          r = diffusion::diffuse(a, labels, delta);
        } else if (kind == "spreading") {
          r = diffusion::label_spreading(a, labels, delta);
        } else if (kind == "propagation") {
          r = diffusion::label_propagation(a, labels);
        } else {
          throw ArgumentError("kind must be cg, spreading or propagation");
        }
        return py::make_tuple(Eigen::MatrixXd(r.scores), r.predictions);
      },
      py::arg("weights"), py::arg("labels"), py::arg("delta") = 0.9, py::arg("kind") = "cg",
      "Diffuses one-hot labels (-1 = unlabeled) over a dense affinity; returns (scores, predictions).");

  py::class_<nn::TrainLog>(m, "TrainLog")
      .def_readonly("train_loss", &nn::TrainLog::train_loss)
      .def_readonly("validation_accuracy", &nn::TrainLog::validation_accuracy)
      .def_readonly("best_epoch", &nn::TrainLog::best_epoch)
      .def_readonly("stop_reason", &nn::TrainLog::stop_reason);

  py::class_<nn::MlpModel>(m, "Model")
      .def_static("load", &nn::load_checkpoint, py::arg("path"))
      .def_static("from_string", &nn::checkpoint_from_string, py::arg("text"))
      .def("save", [](const nn::MlpModel& self, const std::filesystem::path& p) { nn::save_checkpoint(self, p); })
      .def("to_string", [](const nn::MlpModel& self) { return nn::checkpoint_to_string(self); })
      .def_readonly("stations", &nn::MlpModel::stations)
      .def_readonly("slots", &nn::MlpModel::slots)
      .def_property_readonly("input_dim", &nn::MlpModel::input_dim)
      .def(
          "predict_proba",
          [](const nn::MlpModel& self, const nn::Matrix& x) { return nn::Matrix(nn::forward(self, x, nn::Mode::kInfer).probabilities); },
          py::arg("features"))
      .def(
          "forecast",
          [](const nn::MlpModel& self, int station, const std::string& date, int minute_of_day) {
            const auto r = bench::forecast(self, station, data::parse_date(date), minute_of_day, {});
            return py::make_tuple(r.predicted_class, std::vector<double>(r.confidences.begin(), r.confidences.end()));
          },
          py::arg("station"), py::arg("date"), py::arg("minute_of_day"));

  m.def(
      "train",
      [](const std::string& method, double ratio, std::uint64_t seed, const std::string& config_json) {
        py::gil_scoped_release release;
        auto out = train(method, ratio, seed, config_json);
        py::gil_scoped_acquire acquire;
        return py::make_tuple(std::move(out.model), std::move(out.log));
      },
      py::arg("method"), py::arg("ratio") = 0.1, py::arg("seed") = 1, py::arg("config_json") = "{}",
      "Trains one model on the configured data source; returns (Model, TrainLog).");

  m.def(
      "sweep",
      [](const std::string& config_json) {
        std::string csv;
        {
          py::gil_scoped_release release;
          const auto cfg = config_from(config_json);
          const auto ds = bench::load_dataset(cfg.data);
          csv = bench::results_to_csv(bench::run_sweep(ds, cfg));
        }
        return csv;
      },
      py::arg("config_json") = "{}", "Runs the configured sweep and returns results.csv text.");

  m.def("encode", &data::encode_sample, py::arg("station"), py::arg("context"), py::arg("slot"), py::arg("stations"),
        py::arg("slots"));
  py::class_<data::DateContext>(m, "DateContext")
      .def(py::init([](int dow, bool holiday) { return data::DateContext{dow, holiday}; }), py::arg("day_of_week"),
           py::arg("is_holiday") = false)
      .def_readwrite("day_of_week", &data::DateContext::day_of_week)
      .def_readwrite("is_holiday", &data::DateContext::is_holiday);
}
