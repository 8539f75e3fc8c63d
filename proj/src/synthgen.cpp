#include "surconfort/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "surconfort/errors.hpp"
#include "surconfort/io.hpp"
#include "surconfort/random.hpp"

namespace surconfort::synth {

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform_unit(rng); }

double gaussian(Rng& rng) {
  // Box-Muller on our own uniforms so fields match across standard libraries.
  double u1 = uniform_unit(rng);
  while (u1 <= 0.0) u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int poisson(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  const double limit = std::exp(-mean);
  int k = 0;
  double p = uniform_unit(rng);
  while (p > limit) {
    ++k;
    p *= uniform_unit(rng);
  }
  return k;
}

double bump(double minute, double centre, double width) {
  const double z = (minute - centre) / width;
  return std::exp(-0.5 * z * z);
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct StationProfile {
  double base;
  double morning;
  double evening;
  double holiday;
  double shift;  // minutes
};

}  // namespace

void SynthWorldConfig::validate() const {
  if (n_stations < 3) throw ArgumentError("synthetic world needs at least 3 stations");
  if (!(station_spacing_km > 0.0)) throw ArgumentError("station spacing must be positive");
  if (n_days < 1) throw ArgumentError("synthetic world needs at least one day");
  data::slot_minutes(slots_per_day);
  if (report_rate < 0.0) throw ArgumentError("report rate must be non-negative");
  if (!(spatial_smoothing >= 0.0 && spatial_smoothing < 1.0)) throw ArgumentError("spatial_smoothing must lie in [0, 1)");
  if (smoothing_rounds < 0) throw ArgumentError("smoothing rounds must be non-negative");
  if (noise_std < 0.0) throw ArgumentError("noise_std must be non-negative");
  if (!(subjectivity >= 0.0 && subjectivity <= 1.0)) throw ArgumentError("subjectivity must lie in [0, 1]");
  if (extra_holidays < 0) throw ArgumentError("extra_holidays must be non-negative");
  if (peak_shift_minutes < 0.0) throw ArgumentError("peak_shift_minutes must be non-negative");
  if (profile_modes < 0) throw ArgumentError("profile_modes must be non-negative");
  if (station_jitter < 0.0) throw ArgumentError("station_jitter must be non-negative");
}

CongestionField::CongestionField(int stations, int days, int slots)
    : stations_(stations),
      days_(days),
      slots_(slots),
      values_(static_cast<std::size_t>(stations) * static_cast<std::size_t>(days) * static_cast<std::size_t>(slots), 1.0) {}

railgraph::RailNetwork generate_network(const SynthWorldConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_stations;
  std::vector<railgraph::Station> stations;
  std::vector<std::pair<int, int>> connections;
  if (cfg.topology == Topology::kRing) {
    const double radius = n * cfg.station_spacing_km / (2.0 * std::numbers::pi);
    for (int i = 0; i < n; ++i) {
      const double angle = 2.0 * std::numbers::pi * i / n;
      stations.push_back({i, "S" + std::to_string(i), {radius * std::cos(angle), radius * std::sin(angle)}});
      connections.emplace_back(i, (i + 1) % n);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      stations.push_back({i, "S" + std::to_string(i), {i * cfg.station_spacing_km, 0.0}});
      if (i + 1 < n) connections.emplace_back(i, i + 1);
    }
  }
  return railgraph::RailNetwork(std::move(stations), connections, railgraph::CoordinateMode::kPlanar);
}

data::HolidayCalendar generate_holidays(const SynthWorldConfig& cfg) {
  cfg.validate();
  auto rng = make_rng(cfg.seed, "holidays");
  const auto start = std::chrono::sys_days(cfg.start_date);
  std::vector<data::Date> weekdays;
  for (int k = 0; k < cfg.n_days; ++k) {
    const data::Date d{start + std::chrono::days{k}};
    if (data::day_of_week(d) < 5) weekdays.push_back(d);
  }
  std::vector<data::Date> chosen;
  for (int h = 0; h < cfg.extra_holidays && !weekdays.empty(); ++h) {
    const auto pick = static_cast<std::size_t>(uniform_index(rng, weekdays.size()));
    chosen.push_back(weekdays[pick]);
    weekdays.erase(weekdays.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  std::sort(chosen.begin(), chosen.end());
  return data::HolidayCalendar(chosen);
}

CongestionField generate_ground_truth(const railgraph::RailNetwork& network, const data::Calendar& calendar,
                                      const SynthWorldConfig& cfg) {
  cfg.validate();
  const int n = network.size();
  const int days = calendar.size();
  const int slots = cfg.slots_per_day;
  const int minutes = data::slot_minutes(slots);
  auto rng = make_rng(cfg.seed, "ground_truth");

  // Station profiles vary smoothly with position along the line: a few
  // random Fourier modes of the station angle, squashed into [0, 1], plus a
  // small per-station jitter.
  const int modes = cfg.profile_modes;
  auto smooth_profile = [&]() {
    std::vector<double> a(static_cast<std::size_t>(modes)), b(static_cast<std::size_t>(modes));
    for (int m = 0; m < modes; ++m) {
      a[static_cast<std::size_t>(m)] = gaussian(rng);
      b[static_cast<std::size_t>(m)] = gaussian(rng);
    }
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
      const double theta = cfg.topology == Topology::kRing ? 2.0 * std::numbers::pi * s / n
                                                           : std::numbers::pi * s / std::max(n - 1, 1);
      double f = 0.0;
      for (int m = 0; m < modes; ++m) {
        f += a[static_cast<std::size_t>(m)] * std::cos((m + 1) * theta) + b[static_cast<std::size_t>(m)] * std::sin((m + 1) * theta);
      }
      f = modes > 0 ? f / std::sqrt(static_cast<double>(modes)) : 0.0;
      f += cfg.station_jitter * gaussian(rng);
      out[static_cast<std::size_t>(s)] = 0.5 + 0.5 * std::tanh(f);
    }
    return out;
  };
  const auto base = smooth_profile();
  const auto morning = smooth_profile();
  const auto evening = smooth_profile();
  const auto holiday = smooth_profile();
  const auto shift = smooth_profile();
  std::vector<StationProfile> prof(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    const auto i = static_cast<std::size_t>(s);
    prof[i] = {0.3 + 1.0 * base[i], 0.6 + 2.0 * morning[i], 0.5 + 1.7 * evening[i], 0.3 + 1.3 * holiday[i],
               cfg.peak_shift_minutes * (2.0 * shift[i] - 1.0)};
  }
  // Weekday-specific scaling: Monday rush heavier, Friday evening heavier.
  constexpr double kMorningByDow[5] = {1.10, 1.0, 1.0, 0.95, 0.90};
  constexpr double kEveningByDow[5] = {0.90, 0.95, 1.0, 1.05, 1.20};

  CongestionField field(n, days, slots);
  std::vector<double> day_factor(static_cast<std::size_t>(days));
  for (auto& f : day_factor) f = uniform(rng, 0.9, 1.1);

  for (int d = 0; d < days; ++d) {
    const auto& ctx = calendar.contexts[static_cast<std::size_t>(d)];
    for (int s = 0; s < n; ++s) {
      const auto& p = prof[static_cast<std::size_t>(s)];
      for (int t = 0; t < slots; ++t) {
        const double m = t * minutes + 0.5 * minutes;
        double excess;
        if (ctx.is_holiday) {
          excess = p.holiday * bump(m, 840.0 + 0.5 * p.shift, 170.0);
        } else {
          const int dow = std::min(ctx.day_of_week, 4);
          excess = kMorningByDow[dow] * p.morning * bump(m, 480.0 + p.shift, 55.0) +
                   kEveningByDow[dow] * p.evening * bump(m, 1110.0 - p.shift, 75.0);
        }
        const double daytime = logistic((m - 360.0) / 40.0) * logistic((1380.0 - m) / 40.0);
        field.value(s, d, t) = 1.0 + p.base * daytime + day_factor[static_cast<std::size_t>(d)] * excess;
      }
    }
  }

  if (cfg.spatial_smoothing > 0.0) {
    std::vector<double> mixed(static_cast<std::size_t>(n));
    for (int round = 0; round < cfg.smoothing_rounds; ++round) {
      for (int d = 0; d < days; ++d) {
        for (int t = 0; t < slots; ++t) {
          for (int s = 0; s < n; ++s) {
            const auto& nb = network.neighbors(s);
            double mean = field.value(s, d, t);
            if (!nb.empty()) {
              mean = 0.0;
              for (int j : nb) mean += field.value(j, d, t);
              mean /= static_cast<double>(nb.size());
            }
            mixed[static_cast<std::size_t>(s)] =
                (1.0 - cfg.spatial_smoothing) * field.value(s, d, t) + cfg.spatial_smoothing * mean;
          }
          for (int s = 0; s < n; ++s) field.value(s, d, t) = mixed[static_cast<std::size_t>(s)];
        }
      }
    }
  }

  for (int s = 0; s < n; ++s) {
    for (int d = 0; d < days; ++d) {
      for (int t = 0; t < slots; ++t) {
        double v = field.value(s, d, t);
        if (cfg.noise_std > 0.0) v += cfg.noise_std * gaussian(rng);
        field.value(s, d, t) = std::clamp(v, 1.0, 4.0);
      }
    }
  }
  return field;
}

std::vector<data::Report> sample_reports(const CongestionField& field, const data::Calendar& calendar,
                                         const SynthWorldConfig& cfg) {
  cfg.validate();
  auto rng = make_rng(cfg.seed, "reports");
  const int minutes = data::slot_minutes(field.slots());
  std::vector<data::Report> out;
  for (int d = 0; d < field.days(); ++d) {
    for (int t = 0; t < field.slots(); ++t) {
      for (int s = 0; s < field.stations(); ++s) {
        const int count = poisson(rng, cfg.report_rate);
        for (int k = 0; k < count; ++k) {
          int level = field.cls(s, d, t) + 1;
          if (cfg.subjectivity > 0.0 && uniform_unit(rng) < cfg.subjectivity) {
            if (level == 1) {
              level = 2;
            } else if (level == 4) {
              level = 3;
            } else {
              level += (uniform_unit(rng) < 0.5) ? -1 : 1;
            }
          }
          const int minute = t * minutes + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(minutes)));
          out.push_back({s, calendar.dates[static_cast<std::size_t>(d)], minute, level});
        }
      }
    }
  }
  return out;
}

SynthWorld generate_world(const SynthWorldConfig& cfg) {
  cfg.validate();
  SynthWorld w;
  w.config = cfg;
  w.network = generate_network(cfg);
  w.holidays = generate_holidays(cfg);
  w.calendar = data::Calendar::consecutive(cfg.start_date, cfg.n_days, w.holidays);
  w.truth = generate_ground_truth(w.network, w.calendar, cfg);
  w.reports = sample_reports(w.truth, w.calendar, cfg);
  return w;
}

data::LabelMap truth_labels(const SynthWorld& world) {
  data::LabelMap out;
  for (int s = 0; s < world.truth.stations(); ++s) {
    for (int d = 0; d < world.truth.days(); ++d) {
      const int day = data::day_number(world.calendar.dates[static_cast<std::size_t>(d)]);
      for (int t = 0; t < world.truth.slots(); ++t) out.emplace(data::CellKey{s, day, t}, world.truth.cls(s, d, t));
    }
  }
  return out;
}

void write_world(const SynthWorld& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  railgraph::write_stations_csv(world.network, dir / "stations.csv");
  railgraph::write_edges_csv(world.network, dir / "edges.csv");
  data::write_reports_csv(world.reports, dir / "reports.csv");
  std::vector<data::Date> listed;
  for (int dn : world.holidays.listed()) listed.emplace_back(std::chrono::sys_days{std::chrono::days{dn}});
  data::write_holidays_csv(listed, dir / "holidays.csv");
  std::string s = "station,date,slot,class\n";
  for (int st = 0; st < world.truth.stations(); ++st) {
    for (int d = 0; d < world.truth.days(); ++d) {
      const auto date = data::format_date(world.calendar.dates[static_cast<std::size_t>(d)]);
      for (int t = 0; t < world.truth.slots(); ++t) {
        s += std::to_string(st) + ',' + date + ',' + std::to_string(t) + ',' + std::to_string(world.truth.cls(st, d, t)) + '\n';
      }
    }
  }
  io::write_file_atomic(dir / "truth.csv", s);
}

data::LabelMap read_truth_csv(const std::filesystem::path& path) {
  const auto table = io::read_csv(path);
  const auto cs = table.column("station");
  const auto cd = table.column("date");
  const auto ct = table.column("slot");
  const auto cc = table.column("class");
  data::LabelMap out;
  for (const auto& row : table.rows) {
    const int cls = io::parse_int(row[cc], "class");
    if (cls < 0 || cls > 3) throw DataError("truth class outside 0..3");
    out[data::CellKey{io::parse_int(row[cs], "station"), data::day_number(data::parse_date(row[cd])),
                      io::parse_int(row[ct], "slot")}] = cls;
  }
  return out;
}

}  // namespace surconfort::synth
