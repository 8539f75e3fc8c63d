#include "surconfort/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "surconfort/errors.hpp"
#include "surconfort/io.hpp"

namespace surconfort::bench {

using nlohmann::json;

namespace {

constexpr Method kAllMethods[] = {Method::kRandom, Method::kMode, Method::kSnn,  Method::kSurconfort,
                                  Method::kNgmNatural, Method::kLp, Method::kLs, Method::kLpDssl};

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string topology_name(synth::Topology t) { return t == synth::Topology::kRing ? "ring" : "line"; }

synth::Topology parse_topology(const std::string& s) {
  if (s == "ring") return synth::Topology::kRing;
  if (s == "line") return synth::Topology::kLine;
  throw ArgumentError("unknown topology '" + s + "' (expected ring or line)");
}

// Reads `key` from a JSON object into `out` when present.
template <class T>
void take(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("config key '") + key + "': " + e.what());
  }
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ArgumentError("config section '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ArgumentError("unknown config key '" + where + (where.empty() ? "" : ".") + key + "'");
    }
  }
}

std::vector<data::Sample> pick(std::span<const data::Sample> samples, std::span<const std::size_t> rows) {
  std::vector<data::Sample> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(samples[r]);
  return out;
}

double sample_std(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

Cell make_cell(std::span<const ResultRecord* const> runs) {
  Cell c;
  c.runs = runs.size();
  std::vector<double> acc;
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto* r : runs) {
    acc.push_back(r->accuracy);
    correct += r->correct;
    total += r->total;
  }
  c.mean = acc.empty() ? 0.0 : std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
  c.std = sample_std(acc, c.mean);
  c.micro = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return c;
}

std::string percent_header(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g%%", 100.0 * ratio);
  return buf;
}

std::string per_station_field(const std::map<int, StationScore>& m) {
  std::string s;
  for (const auto& [station, sc] : m) {
    if (!s.empty()) s += ';';
    s += std::to_string(station) + ':' + std::to_string(sc.correct) + '/' + std::to_string(sc.total);
  }
  return s;
}

std::map<int, StationScore> parse_per_station(const std::string& field) {
  std::map<int, StationScore> out;
  if (field.empty()) return out;
  std::stringstream ss(field);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto colon = item.find(':');
    const auto slash = item.find('/');
    if (colon == std::string::npos || slash == std::string::npos || slash < colon) {
      throw DataError("malformed per-station entry '" + item + "'");
    }
    StationScore sc;
    sc.correct = static_cast<std::size_t>(io::parse_int(item.substr(colon + 1, slash - colon - 1), "correct"));
    sc.total = static_cast<std::size_t>(io::parse_int(item.substr(slash + 1), "total"));
    out[io::parse_int(item.substr(0, colon), "station")] = sc;
  }
  return out;
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::kRandom: return "random";
    case Method::kMode: return "mode";
    case Method::kSnn: return "snn";
    case Method::kSurconfort: return "surconfort";
    case Method::kNgmNatural: return "ngm-natural";
    case Method::kLp: return "lp";
    case Method::kLs: return "ls";
    case Method::kLpDssl: return "lp-dssl";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (auto m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  throw ArgumentError("unknown method '" + name +
                      "' (expected random, mode, snn, surconfort, ngm-natural, lp, ls or lp-dssl)");
}

std::string display_name(Method method) {
  switch (method) {
    case Method::kRandom: return "Random";
    case Method::kMode: return "MODE";
    case Method::kSnn: return "SNN";
    case Method::kSurconfort: return "SURCONFORT";
    case Method::kNgmNatural: return "NGM";
    case Method::kLp: return "LP";
    case Method::kLs: return "LS";
    case Method::kLpDssl: return "LP-DSSL";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ArgumentError("at least one method is required");
  if (ratios.empty()) throw ArgumentError("at least one label ratio is required");
  for (double r : ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ArgumentError("label ratios must lie in (0, 1], got " + shortest(r));
  }
  if (folds < 2) throw ArgumentError("folds must be at least 2");
  if (seeds.empty()) throw ArgumentError("at least one seed is required");
  if (threads < 1) throw ArgumentError("threads must be at least 1");
  if (!(sensitivity_ratio > 0.0 && sensitivity_ratio <= 1.0)) throw ArgumentError("sensitivity ratio must lie in (0, 1]");
  for (double z : zeta_grid) {
    if (!(z >= 0.0)) throw ArgumentError("zeta grid values must be non-negative");
  }
  if (!(max_distance_km > 0.0)) throw ArgumentError("max distance must be positive");
  if (station_graph == graphssl::GraphSource::kNatural) {
    throw ArgumentError("the station graph must be rail or cosine");
  }
  if (train.batch_size < 2) throw ArgumentError("batch size must be at least 2");
  if (train.max_epochs < 1) throw ArgumentError("max epochs must be positive");
  if (train.patience < 1) throw ArgumentError("patience must be positive");
  if (!(train.validation_fraction >= 0.0 && train.validation_fraction < 1.0)) {
    throw ArgumentError("validation fraction must lie in [0, 1)");
  }
  if (!(train.adam.learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
  ngm.validate();
  diffusion.validate();
  if (!data.directory) data.synthetic.validate();
  data::slot_minutes(data.slots);
}

ExperimentConfig parse_config(const std::string& json_text, ExperimentConfig cfg) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(doc, "", {"data", "methods", "ratios", "folds", "seeds", "train", "ngm", "diffusion", "sensitivity",
                       "truth", "threads", "output_dir"});
  if (doc.contains("data")) {
    const auto& d = doc["data"];
    check_keys(d, "data", {"dir", "slots", "synthetic"});
    if (d.contains("dir")) cfg.data.directory = d["dir"].get<std::string>();
    take(d, "slots", cfg.data.slots);
    if (d.contains("synthetic")) {
      const auto& s = d["synthetic"];
      auto& w = cfg.data.synthetic;
      check_keys(s, "data.synthetic",
                 {"n_stations", "topology", "station_spacing_km", "n_days", "report_rate", "spatial_smoothing",
                  "smoothing_rounds", "noise_std", "subjectivity", "extra_holidays", "start_date", "seed",
                  "profile_modes", "station_jitter", "peak_shift_minutes"});
      take(s, "n_stations", w.n_stations);
      if (s.contains("topology")) w.topology = parse_topology(s["topology"].get<std::string>());
      take(s, "station_spacing_km", w.station_spacing_km);
      take(s, "n_days", w.n_days);
      take(s, "report_rate", w.report_rate);
      take(s, "spatial_smoothing", w.spatial_smoothing);
      take(s, "smoothing_rounds", w.smoothing_rounds);
      take(s, "noise_std", w.noise_std);
      take(s, "subjectivity", w.subjectivity);
      take(s, "extra_holidays", w.extra_holidays);
      if (s.contains("start_date")) w.start_date = data::parse_date(s["start_date"].get<std::string>());
      take(s, "seed", w.seed);
      take(s, "profile_modes", w.profile_modes);
      take(s, "station_jitter", w.station_jitter);
      take(s, "peak_shift_minutes", w.peak_shift_minutes);
    }
    cfg.data.synthetic.slots_per_day = cfg.data.slots;
  }
  if (doc.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : doc["methods"]) cfg.methods.push_back(parse_method(m.get<std::string>()));
  }
  take(doc, "ratios", cfg.ratios);
  take(doc, "folds", cfg.folds);
  take(doc, "seeds", cfg.seeds);
  take(doc, "truth", cfg.evaluate_truth);
  take(doc, "threads", cfg.threads);
  if (doc.contains("output_dir")) cfg.output_dir = doc["output_dir"].get<std::string>();
  if (doc.contains("train")) {
    const auto& t = doc["train"];
    check_keys(t, "train", {"batch_size", "max_epochs", "patience", "validation_fraction", "learning_rate", "beta1",
                            "beta2", "epsilon"});
    take(t, "batch_size", cfg.train.batch_size);
    take(t, "max_epochs", cfg.train.max_epochs);
    take(t, "patience", cfg.train.patience);
    take(t, "validation_fraction", cfg.train.validation_fraction);
    take(t, "learning_rate", cfg.train.adam.learning_rate);
    take(t, "beta1", cfg.train.adam.beta1);
    take(t, "beta2", cfg.train.adam.beta2);
    take(t, "epsilon", cfg.train.adam.epsilon);
  }
  if (doc.contains("ngm")) {
    const auto& g = doc["ngm"];
    check_keys(g, "ngm", {"zeta", "edges_per_batch", "graph", "max_distance_km", "normalization", "natural_k",
                          "natural_unlabeled_cap", "full_batch"});
    take(g, "zeta", cfg.ngm.zeta);
    take(g, "edges_per_batch", cfg.ngm.edges_per_batch);
    if (g.contains("graph")) cfg.station_graph = graphssl::parse_graph_source(g["graph"].get<std::string>());
    take(g, "max_distance_km", cfg.max_distance_km);
    if (g.contains("normalization")) {
      cfg.ngm.normalization = graphssl::parse_edge_normalization(g["normalization"].get<std::string>());
    }
    take(g, "natural_k", cfg.ngm.natural_k);
    take(g, "natural_unlabeled_cap", cfg.ngm.natural_unlabeled_cap);
    take(g, "full_batch", cfg.ngm.full_batch);
  }
  if (doc.contains("diffusion")) {
    const auto& d = doc["diffusion"];
    check_keys(d, "diffusion", {"delta", "k", "gamma", "rounds", "pretrain_epochs", "pseudo_label_weight",
                                "unlabeled_cap", "tolerance", "max_iterations"});
    take(d, "delta", cfg.diffusion.delta);
    take(d, "k", cfg.diffusion.k);
    take(d, "gamma", cfg.diffusion.gamma);
    take(d, "rounds", cfg.diffusion.rounds);
    take(d, "pretrain_epochs", cfg.diffusion.pretrain_epochs);
    take(d, "pseudo_label_weight", cfg.diffusion.pseudo_label_weight);
    take(d, "unlabeled_cap", cfg.diffusion.unlabeled_cap);
    take(d, "tolerance", cfg.diffusion.solver.tolerance);
    take(d, "max_iterations", cfg.diffusion.solver.max_iterations);
  }
  if (doc.contains("sensitivity")) {
    const auto& s = doc["sensitivity"];
    check_keys(s, "sensitivity", {"zetas", "ratio"});
    take(s, "zetas", cfg.zeta_grid);
    take(s, "ratio", cfg.sensitivity_ratio);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json doc;
  json d;
  if (cfg.data.directory) d["dir"] = cfg.data.directory->string();
  d["slots"] = cfg.data.slots;
  const auto& w = cfg.data.synthetic;
  d["synthetic"] = {{"n_stations", w.n_stations},
                    {"topology", topology_name(w.topology)},
                    {"station_spacing_km", w.station_spacing_km},
                    {"n_days", w.n_days},
                    {"report_rate", w.report_rate},
                    {"spatial_smoothing", w.spatial_smoothing},
                    {"smoothing_rounds", w.smoothing_rounds},
                    {"noise_std", w.noise_std},
                    {"subjectivity", w.subjectivity},
                    {"extra_holidays", w.extra_holidays},
                    {"start_date", data::format_date(w.start_date)},
                    {"seed", w.seed},
                    {"profile_modes", w.profile_modes},
                    {"station_jitter", w.station_jitter},
                    {"peak_shift_minutes", w.peak_shift_minutes}};
  doc["data"] = d;
  json methods = json::array();
  for (auto m : cfg.methods) methods.push_back(to_string(m));
  doc["methods"] = methods;
  doc["ratios"] = cfg.ratios;
  doc["folds"] = cfg.folds;
  doc["seeds"] = cfg.seeds;
  doc["truth"] = cfg.evaluate_truth;
  doc["threads"] = cfg.threads;
  doc["output_dir"] = cfg.output_dir.string();
  doc["train"] = {{"batch_size", cfg.train.batch_size},
                  {"max_epochs", cfg.train.max_epochs},
                  {"patience", cfg.train.patience},
                  {"validation_fraction", cfg.train.validation_fraction},
                  {"learning_rate", cfg.train.adam.learning_rate},
                  {"beta1", cfg.train.adam.beta1},
                  {"beta2", cfg.train.adam.beta2},
                  {"epsilon", cfg.train.adam.epsilon}};
  doc["ngm"] = {{"zeta", cfg.ngm.zeta},
                {"edges_per_batch", cfg.ngm.edges_per_batch},
                {"graph", graphssl::to_string(cfg.station_graph)},
                {"max_distance_km", cfg.max_distance_km},
                {"normalization", graphssl::to_string(cfg.ngm.normalization)},
                {"natural_k", cfg.ngm.natural_k},
                {"natural_unlabeled_cap", cfg.ngm.natural_unlabeled_cap},
                {"full_batch", cfg.ngm.full_batch}};
  doc["diffusion"] = {{"delta", cfg.diffusion.delta},
                      {"k", cfg.diffusion.k},
                      {"gamma", cfg.diffusion.gamma},
                      {"rounds", cfg.diffusion.rounds},
                      {"pretrain_epochs", cfg.diffusion.pretrain_epochs},
                      {"pseudo_label_weight", cfg.diffusion.pseudo_label_weight},
                      {"unlabeled_cap", cfg.diffusion.unlabeled_cap},
                      {"tolerance", cfg.diffusion.solver.tolerance},
                      {"max_iterations", cfg.diffusion.solver.max_iterations}};
  doc["sensitivity"] = {{"zetas", cfg.zeta_grid}, {"ratio", cfg.sensitivity_ratio}};
  return doc.dump(2);
}

Dataset load_dataset(const DataSource& source) {
  Dataset ds;
  data::LabelMap labels;
  data::Calendar calendar;
  const int slots = source.slots;
  if (source.directory) {
    const auto& dir = *source.directory;
    ds.network = railgraph::read_network(dir / "stations.csv", dir / "edges.csv");
    const auto reports = data::read_reports_csv(dir / "reports.csv");
    if (reports.empty()) throw DataError("reports.csv holds no reports");
    for (const auto& r : reports) {
      if (r.station_id < 0 || r.station_id >= ds.network.size()) {
        throw DataError("report references unknown station " + std::to_string(r.station_id));
      }
    }
    if (std::filesystem::exists(dir / "holidays.csv")) {
      ds.holidays = data::HolidayCalendar(data::read_holidays_csv(dir / "holidays.csv"));
    }
    auto [lo, hi] = std::minmax_element(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
      return data::day_number(a.date) < data::day_number(b.date);
    });
    calendar = data::Calendar::consecutive(lo->date, data::day_number(hi->date) - data::day_number(lo->date) + 1,
                                           ds.holidays);
    labels = data::aggregate_reports(reports, slots);
    if (std::filesystem::exists(dir / "truth.csv")) ds.truth = synth::read_truth_csv(dir / "truth.csv");
  } else {
    auto wc = source.synthetic;
    wc.slots_per_day = slots;
    const auto world = synth::generate_world(wc);
    ds.network = world.network;
    ds.holidays = world.holidays;
    calendar = world.calendar;
    labels = data::aggregate_reports(world.reports, slots);
    ds.truth = synth::truth_labels(world);
  }
  std::vector<data::CellKey> dropped;
  ds.full = data::build_split(ds.network.size(), slots, calendar, labels, {}, &dropped);
  ds.dropped_labels = dropped.size();
  if (ds.full.l() == 0) throw DataError("no labeled cells remain after the service-hour filter");
  return ds;
}

railgraph::RailAdjacency station_adjacency(const railgraph::RailNetwork& network, graphssl::GraphSource graph,
                                           double max_distance_km) {
  switch (graph) {
    case graphssl::GraphSource::kRail: return railgraph::build_adjacency(network, max_distance_km);
    case graphssl::GraphSource::kCosine: return railgraph::build_cosine_adjacency(network);
    case graphssl::GraphSource::kNatural: break;
  }
  throw ArgumentError("the station graph must be rail or cosine");
}

Evaluation score(std::span<const data::Sample> samples, std::span<const int> labels, std::span<const int> predicted) {
  if (samples.empty()) throw ArgumentError("evaluation needs at least one labeled test sample");
  if (labels.size() != samples.size() || predicted.size() != samples.size()) {
    throw ArgumentError("sample, label and prediction counts differ");
  }
  Evaluation ev;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& st = ev.per_station[samples[i].station_id];
    const bool ok = labels[i] == predicted[i];
    ++st.total;
    ++ev.total;
    st.correct += ok ? 1 : 0;
    ev.correct += ok ? 1 : 0;
  }
  ev.accuracy = static_cast<double>(ev.correct) / static_cast<double>(ev.total);
  return ev;
}

Evaluation evaluate(const nn::MlpModel& model, int stations, int slots, std::span<const data::Sample> samples) {
  if (model.stations != stations) {
    throw ArgumentError("checkpoint was built for S=" + std::to_string(model.stations) + " stations but the data has S=" +
                        std::to_string(stations));
  }
  if (model.slots != slots) {
    throw ArgumentError("checkpoint was built for T=" + std::to_string(model.slots) + " slots but the data has T=" +
                        std::to_string(slots));
  }
  if (samples.empty()) throw ArgumentError("evaluation needs at least one labeled test sample");
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.label) throw ArgumentError("evaluation sample without a label");
    labels.push_back(*s.label);
  }
  data::SplitDataset shape;
  shape.stations = stations;
  shape.slots = slots;
  const auto predicted = nn::predict(model, nn::encode_features(shape, samples));
  return score(samples, labels, predicted);
}

ForecastResult forecast(const nn::MlpModel& model, int station, const data::Date& date, int minute_of_day,
                        const data::HolidayCalendar& holidays, const data::ServiceWindow& window) {
  if (model.stations < 1 || model.slots < 1) throw ArgumentError("model is not tied to a station/slot layout");
  if (station < 0 || station >= model.stations) {
    throw ArgumentError("station " + std::to_string(station) + " outside 0.." + std::to_string(model.stations - 1));
  }
  if (minute_of_day < 0 || minute_of_day >= data::kMinutesPerDay) throw ArgumentError("time of day out of range");
  const int slot = minute_of_day / data::slot_minutes(model.slots);
  if (!window.in_service(slot, model.slots)) {
    throw ArgumentError("requested time falls outside service hours (no forecasts during " + window.describe() + ")");
  }
  const data::FeatureEncoder enc(model.stations, model.slots);
  const auto x = enc.encode(station, holidays.context(date), slot);
  nn::Matrix row(1, enc.width());
  std::copy(x.begin(), x.end(), row.data());
  const auto probs = nn::forward(model, row, nn::Mode::kInfer).probabilities;
  ForecastResult out;
  for (int c = 0; c < data::kNumClasses; ++c) out.confidences[static_cast<std::size_t>(c)] = probs(0, c);
  out.predicted_class = nn::argmax_rows(probs)[0];
  return out;
}

ModeBaseline::ModeBaseline(std::span<const data::Sample> training) {
  std::map<std::pair<int, int>, std::array<int, data::kNumClasses>> counts;
  for (const auto& s : training) {
    if (!s.label) continue;
    counts[{s.context.day_of_week, s.time_slot}][static_cast<std::size_t>(*s.label)]++;
  }
  for (const auto& [key, c] : counts) {
    table_[key] = static_cast<int>(std::max_element(c.begin(), c.end()) - c.begin());
  }
}

std::vector<int> ModeBaseline::predict(std::span<const data::Sample> samples, Rng& rng) const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto it = table_.find({s.context.day_of_week, s.time_slot});
    out.push_back(it != table_.end() ? it->second : static_cast<int>(uniform_index(rng, data::kNumClasses)));
  }
  return out;
}

namespace {

std::vector<int> test_labels(const Dataset& ds, const ExperimentConfig& cfg, std::span<const data::Sample> test) {
  std::vector<int> out;
  out.reserve(test.size());
  for (const auto& s : test) {
    if (cfg.evaluate_truth) {
      if (!ds.truth) throw ArgumentError("ground-truth evaluation needs synthetic data or truth.csv");
      const auto it = ds.truth->find(ds.full.key(s));
      if (it == ds.truth->end()) throw DataError("ground truth lacks a test cell");
      out.push_back(it->second);
    } else {
      out.push_back(*s.label);
    }
  }
  return out;
}

// Transductive diffusion over the natural graph: training labels, hidden
// test cells and a seeded subsample of the unlabeled pool.
std::vector<int> diffusion_predict(const data::SplitDataset& split, std::span<const data::Sample> test,
                                   const diffusion::DiffusionConfig& cfg, bool spreading, std::uint64_t seed) {
  std::vector<std::size_t> pool(split.u());
  std::iota(pool.begin(), pool.end(), 0);
  auto rng = make_rng(seed, "diffusion_pool");
  const std::size_t take = std::min(cfg.unlabeled_cap, pool.size());
  for (std::size_t i = 0; i < take && i + 1 < pool.size(); ++i) {
    std::swap(pool[i], pool[i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i))]);
  }
  pool.resize(take);
  std::sort(pool.begin(), pool.end());

  std::vector<data::Sample> nodes(split.labeled.begin(), split.labeled.end());
  std::vector<int> labels;
  for (const auto& s : split.labeled) labels.push_back(*s.label);
  const std::size_t test_begin = nodes.size();
  for (const auto& s : test) {
    nodes.push_back(s);
    labels.push_back(-1);
  }
  for (auto i : pool) {
    nodes.push_back(split.unlabeled[i]);
    labels.push_back(-1);
  }
  const auto x = nn::encode_features(split, nodes);
  const int k = std::min<int>(cfg.k, static_cast<int>(nodes.size()) - 1);
  const auto affinity = diffusion::natural_affinity(x, k);
  const auto res = spreading ? diffusion::label_spreading(affinity, labels, cfg.delta, cfg.solver)
                             : diffusion::label_propagation(affinity, labels, cfg.solver);
  return {res.predictions.begin() + static_cast<std::ptrdiff_t>(test_begin),
          res.predictions.begin() + static_cast<std::ptrdiff_t>(test_begin + test.size())};
}

}  // namespace

ResultRecord run_job(const Dataset& ds, const ExperimentConfig& cfg, Method method, double ratio, int fold,
                     std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const auto folds = data::kfold_split(ds.full.l(), cfg.folds, seed);
  if (fold < 0 || fold >= cfg.folds) throw ArgumentError("fold index out of range");
  const auto& f = folds[static_cast<std::size_t>(fold)];
  const std::uint64_t job_seed = derive_seed(seed, static_cast<std::uint64_t>(fold));

  data::SplitDataset train;
  train.stations = ds.full.stations;
  train.slots = ds.full.slots;
  train.calendar = ds.full.calendar;
  train.labeled = pick(ds.full.labeled, f.train);
  train.unlabeled = ds.full.unlabeled;
  const auto masked = data::mask_labels(train, ratio, job_seed);
  const auto test = pick(ds.full.labeled, f.test);
  const auto labels = test_labels(ds, cfg, test);

  nn::TrainConfig tc = cfg.train;
  tc.seed = job_seed;
  std::vector<int> predicted;
  auto predict_with = [&](const nn::TrainResult& r) { return nn::predict(r.model, nn::encode_features(masked, test)); };
  switch (method) {
    case Method::kRandom: {
      auto rng = make_rng(job_seed, "random_baseline");
      for (std::size_t i = 0; i < test.size(); ++i) predicted.push_back(static_cast<int>(uniform_index(rng, data::kNumClasses)));
      break;
    }
    case Method::kMode: {
      auto rng = make_rng(job_seed, "mode_baseline");
      predicted = ModeBaseline(masked.labeled).predict(test, rng);
      break;
    }
    case Method::kSnn:
      predicted = predict_with(nn::train_supervised(masked, tc));
      break;
    case Method::kSurconfort: {
      const auto adj = station_adjacency(ds.network, cfg.station_graph, cfg.max_distance_km);
      auto ngm = cfg.ngm;
      ngm.source = cfg.station_graph;
      predicted = predict_with(graphssl::train_surconfort(masked, adj, ngm, tc));
      break;
    }
    case Method::kNgmNatural: {
      auto ngm = cfg.ngm;
      ngm.source = graphssl::GraphSource::kNatural;
      predicted = predict_with(graphssl::train_surconfort(masked, railgraph::RailAdjacency(), ngm, tc));
      break;
    }
    case Method::kLp:
    case Method::kLs:
      predicted = diffusion_predict(masked, test, cfg.diffusion, method == Method::kLs, job_seed);
      break;
    case Method::kLpDssl:
      predicted = predict_with(diffusion::lp_dssl_train(masked, cfg.diffusion, tc).best);
      break;
  }
  const auto ev = score(test, labels, predicted);
  ResultRecord rec;
  rec.method = method;
  rec.ratio = ratio;
  rec.fold = fold;
  rec.seed = seed;
  rec.accuracy = ev.accuracy;
  rec.correct = ev.correct;
  rec.total = ev.total;
  rec.per_station = ev.per_station;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

namespace {

struct Job {
  Method method;
  double ratio;
  int fold;
  std::uint64_t seed;
  std::optional<double> zeta;
};

std::vector<ResultRecord> run_jobs(const Dataset& ds, const ExperimentConfig& cfg, const std::vector<Job>& jobs) {
  std::vector<ResultRecord> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const auto& j = jobs[i];
        if (j.zeta) {
          auto c = cfg;
          c.ngm.zeta = *j.zeta;
          out[i] = run_job(ds, c, j.method, j.ratio, j.fold, j.seed);
          out[i].zeta = j.zeta;
        } else {
          out[i] = run_job(ds, cfg, j.method, j.ratio, j.fold, j.seed);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::min<int>(cfg.threads, static_cast<int>(jobs.size())));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<Job> grid(const ExperimentConfig& cfg, std::span<const Method> methods, std::span<const double> ratios) {
  std::vector<Job> jobs;
  for (auto m : methods) {
    for (double r : ratios) {
      for (auto s : cfg.seeds) {
        for (int f = 0; f < cfg.folds; ++f) jobs.push_back({m, r, f, s, std::nullopt});
      }
    }
  }
  return jobs;
}

}  // namespace

std::vector<ResultRecord> run_sweep(const Dataset& ds, const ExperimentConfig& cfg) {
  cfg.validate();
  return run_jobs(ds, cfg, grid(cfg, cfg.methods, cfg.ratios));
}

std::vector<ResultRecord> run_ablation(const Dataset& ds, const ExperimentConfig& cfg) {
  cfg.validate();
  const Method triple[] = {Method::kSurconfort, Method::kNgmNatural, Method::kSnn};
  return run_jobs(ds, cfg, grid(cfg, triple, cfg.ratios));
}

std::vector<ResultRecord> run_sensitivity(const Dataset& ds, const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.zeta_grid.empty()) throw ArgumentError("the zeta grid is empty");
  std::vector<Job> jobs;
  for (double z : cfg.zeta_grid) {
    for (auto s : cfg.seeds) {
      for (int f = 0; f < cfg.folds; ++f) jobs.push_back({Method::kSurconfort, cfg.sensitivity_ratio, f, s, z});
    }
  }
  return run_jobs(ds, cfg, jobs);
}

std::vector<SummaryRow> summarize(std::span<const ResultRecord> records) {
  std::vector<std::pair<Method, double>> keys;
  std::map<std::pair<Method, double>, std::vector<const ResultRecord*>> groups;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.method, r.ratio);
    if (!groups.contains(key)) keys.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<SummaryRow> out;
  for (const auto& key : keys) out.push_back({key.first, key.second, make_cell(groups[key])});
  return out;
}

std::vector<SensitivityRow> sensitivity_curve(std::span<const ResultRecord> records) {
  std::vector<double> order;
  std::map<double, std::vector<const ResultRecord*>> groups;
  for (const auto& r : records) {
    if (!r.zeta) continue;
    if (!groups.contains(*r.zeta)) order.push_back(*r.zeta);
    groups[*r.zeta].push_back(&r);
  }
  std::vector<SensitivityRow> out;
  for (double z : order) out.push_back({z, make_cell(groups[z])});
  return out;
}

std::string format_cell(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * mean, 100.0 * std);
  return buf;
}

namespace {

std::string pivot(std::span<const ResultRecord> records, bool ablation_columns) {
  const auto rows = summarize(records);
  std::vector<double> ratios;
  std::vector<Method> methods;
  for (const auto& r : rows) {
    if (std::find(ratios.begin(), ratios.end(), r.ratio) == ratios.end()) ratios.push_back(r.ratio);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  std::sort(ratios.begin(), ratios.end());
  std::string s = ablation_columns ? "| Model | SSL | railroad graph |" : "| Model |";
  for (double r : ratios) s += " " + percent_header(r) + " |";
  s += ablation_columns ? "\n|---|:-:|:-:|" : "\n|---|";
  for (std::size_t i = 0; i < ratios.size(); ++i) s += "---:|";
  s += '\n';
  for (auto m : methods) {
    s += "| " + display_name(m) + " |";
    if (ablation_columns) {
      const bool ssl = m == Method::kSurconfort || m == Method::kNgmNatural;
      const bool rail = m == Method::kSurconfort;
      s += std::string(ssl ? " ✓ |" : " - |") + (rail ? " ✓ |" : " - |");
    }
    for (double r : ratios) {
      const auto it = std::find_if(rows.begin(), rows.end(), [&](const SummaryRow& x) { return x.method == m && x.ratio == r; });
      s += " " + (it == rows.end() ? std::string("n/a") : format_cell(it->cell.mean, it->cell.std)) + " |";
    }
    s += '\n';
  }
  return s;
}

}  // namespace

std::string markdown_table(std::span<const ResultRecord> records) { return pivot(records, false); }

std::string results_to_csv(std::span<const ResultRecord> records) {
  std::string s = "method,ratio,fold,seed,zeta,accuracy,correct,total,per_station\n";
  for (const auto& r : records) {
    s += to_string(r.method) + ',' + shortest(r.ratio) + ',' + std::to_string(r.fold) + ',' + std::to_string(r.seed) + ',' +
         (r.zeta ? shortest(*r.zeta) : std::string()) + ',' + shortest(r.accuracy) + ',' + std::to_string(r.correct) +
         ',' + std::to_string(r.total) + ',' + per_station_field(r.per_station) + '\n';
  }
  return s;
}

std::vector<ResultRecord> results_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("results CSV is empty");
  const auto header = io::split_csv_line(line);
  const std::vector<std::string> expected{"method", "ratio", "fold", "seed", "zeta", "accuracy", "correct", "total",
                                          "per_station"};
  if (header != expected) throw DataError("unexpected results CSV header");
  std::vector<ResultRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = io::split_csv_line(line);
    if (f.size() != expected.size()) throw DataError("results CSV row has the wrong number of fields");
    ResultRecord r;
    r.method = parse_method(f[0]);
    r.ratio = io::parse_double(f[1], "ratio");
    r.fold = io::parse_int(f[2], "fold");
    r.seed = std::stoull(f[3]);
    if (!f[4].empty()) r.zeta = io::parse_double(f[4], "zeta");
    r.accuracy = io::parse_double(f[5], "accuracy");
    r.correct = static_cast<std::size_t>(std::stoull(f[6]));
    r.total = static_cast<std::size_t>(std::stoull(f[7]));
    r.per_station = parse_per_station(f[8]);
    out.push_back(std::move(r));
  }
  return out;
}

void emit_report(std::span<const ResultRecord> records, const std::filesystem::path& dir, const ReportOptions& options) {
  if (records.empty()) throw ArgumentError("no result records to report");
  std::map<std::string, std::string> files;
  files["results.csv"] = results_to_csv(records);

  std::string timings = "method,ratio,fold,seed,zeta,seconds\n";
  for (const auto& r : records) {
    timings += to_string(r.method) + ',' + shortest(r.ratio) + ',' + std::to_string(r.fold) + ',' + std::to_string(r.seed) +
               ',' + (r.zeta ? shortest(*r.zeta) : std::string()) + ',' + shortest(r.seconds) + '\n';
  }
  files["timings.csv"] = timings;

  const bool sensitivity = std::any_of(records.begin(), records.end(), [](const ResultRecord& r) { return r.zeta.has_value(); });
  if (sensitivity) {
    std::string s = "zeta,runs,mean_accuracy,std_accuracy,acc_micro\n";
    for (const auto& row : sensitivity_curve(records)) {
      s += shortest(row.zeta) + ',' + std::to_string(row.cell.runs) + ',' + shortest(row.cell.mean) + ',' +
           shortest(row.cell.std) + ',' + shortest(row.cell.micro) + '\n';
    }
    files["sensitivity.csv"] = s;
  } else {
    std::string s = "method,ratio,runs,acc_macro,acc_std,acc_micro\n";
    for (const auto& row : summarize(records)) {
      s += to_string(row.method) + ',' + shortest(row.ratio) + ',' + std::to_string(row.cell.runs) + ',' +
           shortest(row.cell.mean) + ',' + shortest(row.cell.std) + ',' + shortest(row.cell.micro) + '\n';
    }
    files["summary.csv"] = s;
    files["table1.md"] = pivot(records, false);
    if (options.ablation) files["table2.md"] = pivot(records, true);
  }

  std::map<std::tuple<std::string, double, int>, StationScore> stations;
  for (const auto& r : records) {
    const std::string name = r.zeta ? "surconfort@zeta=" + shortest(*r.zeta) : to_string(r.method);
    for (const auto& [st, sc] : r.per_station) {
      auto& agg = stations[{name, r.ratio, st}];
      agg.correct += sc.correct;
      agg.total += sc.total;
    }
  }
  std::string ps = "method,ratio,station,correct,total,accuracy\n";
  for (const auto& [key, sc] : stations) {
    ps += std::get<0>(key) + ',' + shortest(std::get<1>(key)) + ',' + std::to_string(std::get<2>(key)) + ',' +
          std::to_string(sc.correct) + ',' + std::to_string(sc.total) + ',' +
          shortest(static_cast<double>(sc.correct) / static_cast<double>(sc.total)) + '\n';
  }
  files["per_station.csv"] = ps;

  json meta;
  meta["tool"] = "surconfort";
  meta["version"] = "0.1.0";
  meta["records"] = records.size();
  std::set<std::uint64_t> seeds;
  for (const auto& r : records) seeds.insert(r.seed);
  meta["seeds"] = std::vector<std::uint64_t>(seeds.begin(), seeds.end());
  meta["command"] = options.command_line;
  meta["config"] = options.config_json.empty() ? json(nullptr) : json::parse(options.config_json);
  meta["compiler"] = __VERSION__;
  files["run.json"] = meta.dump(2) + "\n";

  try {
    std::filesystem::create_directories(dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw DataError("cannot create output directory " + dir.string() + ": " + e.what());
  }
  for (const auto& [name, contents] : files) io::write_file_atomic(dir / name, contents);
}

}  // namespace surconfort::bench
