#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "surconfort/data.hpp"
#include "surconfort/diffusion.hpp"
#include "surconfort/graphssl.hpp"
#include "surconfort/nn.hpp"
#include "surconfort/railgraph.hpp"
#include "surconfort/synthgen.hpp"

namespace surconfort::bench {

enum class Method { kRandom, kMode, kSnn, kSurconfort, kNgmNatural, kLp, kLs, kLpDssl };

/// random, mode, snn, surconfort, ngm-natural, lp, ls, lp-dssl
std::string to_string(Method method);
Method parse_method(const std::string& name);
/// Display name used in tables.
std::string display_name(Method method);

/// Either a synthetic world or a directory holding stations.csv, edges.csv,
/// reports.csv and (optionally) holidays.csv and truth.csv.
struct DataSource {
  std::optional<std::filesystem::path> directory;
  synth::SynthWorldConfig synthetic;
  int slots = data::kDefaultSlots;
};

struct ExperimentConfig {
  DataSource data;
  std::vector<Method> methods{Method::kRandom, Method::kMode, Method::kSnn, Method::kSurconfort};
  std::vector<double> ratios{0.10, 0.25, 0.50, 0.75, 1.00};
  int folds = 5;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  nn::TrainConfig train;
  graphssl::NgmConfig ngm;
  /// Station graph of the surconfort method: rail or cosine.
  graphssl::GraphSource station_graph = graphssl::GraphSource::kRail;
  double max_distance_km = railgraph::kDefaultMaxDistanceKm;
  diffusion::DiffusionConfig diffusion;
  std::vector<double> zeta_grid{0.0, 0.35, 0.7, 1.0, 2.0};
  double sensitivity_ratio = 0.10;
  /// Score against the ground-truth field instead of the aggregated labels
  /// (synthetic data or a directory with truth.csv).
  bool evaluate_truth = false;
  int threads = 1;
  std::filesystem::path output_dir = "results";

  void validate() const;
};

/// JSON document mirroring ExperimentConfig. Unknown keys are an
/// ArgumentError; missing keys keep their defaults.
ExperimentConfig parse_config(const std::string& json_text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
std::string config_to_json(const ExperimentConfig& cfg);

struct Dataset {
  railgraph::RailNetwork network;
  data::HolidayCalendar holidays;
  /// Every in-service cell; labeled ones carry the aggregated label.
  data::SplitDataset full;
  std::optional<data::LabelMap> truth;
  std::size_t dropped_labels = 0;
};

Dataset load_dataset(const DataSource& source);
railgraph::RailAdjacency station_adjacency(const railgraph::RailNetwork& network, graphssl::GraphSource graph,
                                           double max_distance_km);

struct StationScore {
  std::size_t correct = 0;
  std::size_t total = 0;
  bool operator==(const StationScore&) const = default;
};

struct Evaluation {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::map<int, StationScore> per_station;
};

/// Scores predictions against labels, grouped by station.
Evaluation score(std::span<const data::Sample> samples, std::span<const int> labels, std::span<const int> predicted);

/// Accuracy of a model on labeled samples. The model must have been built
/// for `stations` x `slots`.
Evaluation evaluate(const nn::MlpModel& model, int stations, int slots, std::span<const data::Sample> samples);

struct ForecastResult {
  int predicted_class = 0;
  std::array<double, data::kNumClasses> confidences{};
};

ForecastResult forecast(const nn::MlpModel& model, int station, const data::Date& date, int minute_of_day,
                        const data::HolidayCalendar& holidays, const data::ServiceWindow& window = {});

/// Most frequent training label per (day-of-week, slot); cells never seen
/// in training get a uniformly random class.
class ModeBaseline {
 public:
  explicit ModeBaseline(std::span<const data::Sample> training);
  std::vector<int> predict(std::span<const data::Sample> samples, Rng& rng) const;

 private:
  std::map<std::pair<int, int>, int> table_;
};

struct ResultRecord {
  Method method = Method::kSnn;
  double ratio = 0.0;
  int fold = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::map<int, StationScore> per_station;
  double seconds = 0.0;  // not part of results.csv
  /// Set for sensitivity runs.
  std::optional<double> zeta;
};

/// One (method, ratio, fold, seed) job.
ResultRecord run_job(const Dataset& dataset, const ExperimentConfig& cfg, Method method, double ratio, int fold,
                     std::uint64_t seed);

/// Every (method, ratio, fold, seed) combination, ordered by method (config
/// order), ratio, seed and fold whatever the thread count.
std::vector<ResultRecord> run_sweep(const Dataset& dataset, const ExperimentConfig& cfg);

struct Cell {
  std::size_t runs = 0;
  double mean = 0.0;  // mean of per-run accuracies
  double std = 0.0;   // sample standard deviation
  double micro = 0.0;  // pooled correct / total
};

struct SummaryRow {
  Method method;
  double ratio;
  Cell cell;
};
std::vector<SummaryRow> summarize(std::span<const ResultRecord> records);

/// Records for the surconfort / ngm-natural / snn triple.
std::vector<ResultRecord> run_ablation(const Dataset& dataset, const ExperimentConfig& cfg);

struct SensitivityRow {
  double zeta = 0.0;
  Cell cell;
};
/// Trains surconfort at cfg.sensitivity_ratio for every value in cfg.zeta_grid.
std::vector<ResultRecord> run_sensitivity(const Dataset& dataset, const ExperimentConfig& cfg);
std::vector<SensitivityRow> sensitivity_curve(std::span<const ResultRecord> records);

/// "56.76 ± 1.93": percent, two decimals.
std::string format_cell(double mean, double std);
/// Methods as rows, ratios as columns.
std::string markdown_table(std::span<const ResultRecord> records);

std::string results_to_csv(std::span<const ResultRecord> records);
std::vector<ResultRecord> results_from_csv(const std::string& text);

struct ReportOptions {
  bool ablation = false;
  std::string config_json;
  std::vector<std::string> command_line;
};

/// Writes results.csv, summary.csv, timings.csv, per_station.csv, table1.md,
/// run.json and, when applicable, table2.md and sensitivity.csv into `dir`.
/// Every file goes through a temporary file and a rename.
void emit_report(std::span<const ResultRecord> records, const std::filesystem::path& dir, const ReportOptions& options);

}  // namespace surconfort::bench
