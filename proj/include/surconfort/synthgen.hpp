#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "surconfort/data.hpp"
#include "surconfort/railgraph.hpp"

namespace surconfort::synth {

enum class Topology { kRing, kLine };

/// Knobs of the synthetic world. Defaults give a 30-station loop over 60 days
/// with roughly 10k labeled cells after the service-hour filter.
struct SynthWorldConfig {
  int n_stations = 30;
  Topology topology = Topology::kRing;
  double station_spacing_km = 1.2;
  int n_days = 60;
  int slots_per_day = data::kDefaultSlots;
  /// Poisson mean of reports per cell.
  double report_rate = 0.045;
  /// Fourier modes of the station-profile curves along the line; fewer modes
  /// give smoother variation between neighbours.
  int profile_modes = 3;
  /// Largest per-station offset of the rush-hour peaks, in minutes.
  double peak_shift_minutes = 60.0;
  /// Independent per-station deviation added to each profile curve.
  double station_jitter = 0.1;
  /// Weight of the neighbour mean in each mixing round, in [0, 1).
  double spatial_smoothing = 0.5;
  int smoothing_rounds = 3;
  double noise_std = 0.25;
  /// Probability that a report is moved to an adjacent level.
  double subjectivity = 0.1;
  /// Weekday holidays inserted on top of weekends.
  int extra_holidays = 2;
  data::Date start_date{std::chrono::year{2021}, std::chrono::month{4}, std::chrono::day{5}};
  std::uint64_t seed = 1;

  void validate() const;
};

/// Real-valued congestion intensity in [1, 4] per (station, day, slot).
class CongestionField {
 public:
  CongestionField() = default;
  CongestionField(int stations, int days, int slots);

  int stations() const { return stations_; }
  int days() const { return days_; }
  int slots() const { return slots_; }
  double value(int station, int day, int slot) const { return values_[index(station, day, slot)]; }
  double& value(int station, int day, int slot) { return values_[index(station, day, slot)]; }
  /// Discretized class in {0..3}.
  int cls(int station, int day, int slot) const { return data::discretize_mean_level(value(station, day, slot)); }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t index(int station, int day, int slot) const {
    return (static_cast<std::size_t>(station) * static_cast<std::size_t>(days_) + static_cast<std::size_t>(day)) *
               static_cast<std::size_t>(slots_) +
           static_cast<std::size_t>(slot);
  }
  int stations_ = 0;
  int days_ = 0;
  int slots_ = 0;
  std::vector<double> values_;
};

railgraph::RailNetwork generate_network(const SynthWorldConfig& cfg);

/// Holiday calendar of the world: weekends plus `extra_holidays` seeded weekdays.
data::HolidayCalendar generate_holidays(const SynthWorldConfig& cfg);

CongestionField generate_ground_truth(const railgraph::RailNetwork& network, const data::Calendar& calendar,
                                      const SynthWorldConfig& cfg);

std::vector<data::Report> sample_reports(const CongestionField& field, const data::Calendar& calendar,
                                         const SynthWorldConfig& cfg);

struct SynthWorld {
  SynthWorldConfig config;
  railgraph::RailNetwork network;
  data::HolidayCalendar holidays;
  data::Calendar calendar;
  CongestionField truth;
  std::vector<data::Report> reports;
};

SynthWorld generate_world(const SynthWorldConfig& cfg);

/// Writes stations.csv, edges.csv, reports.csv, holidays.csv and truth.csv
/// (station,date,slot,class) into `dir`.
void write_world(const SynthWorld& world, const std::filesystem::path& dir);

/// truth.csv rows as a label map.
data::LabelMap read_truth_csv(const std::filesystem::path& path);
data::LabelMap truth_labels(const SynthWorld& world);

}  // namespace surconfort::synth
