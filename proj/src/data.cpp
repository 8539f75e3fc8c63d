#include "surconfort/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "surconfort/errors.hpp"
#include "surconfort/io.hpp"
#include "surconfort/random.hpp"

namespace surconfort::data {

namespace {

int parse_fixed(std::string_view text, std::size_t pos, std::size_t len, std::string_view what) {
  if (pos + len > text.size()) throw DataError("truncated " + std::string(what) + ": '" + std::string(text) + "'");
  return io::parse_int(text.substr(pos, len), what);
}

}  // namespace

Date parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw DataError("expected YYYY-MM-DD, got '" + std::string(text) + "'");
  }
  const Date d{std::chrono::year{parse_fixed(text, 0, 4, "year")},
               std::chrono::month{static_cast<unsigned>(parse_fixed(text, 5, 2, "month"))},
               std::chrono::day{static_cast<unsigned>(parse_fixed(text, 8, 2, "day"))}};
  if (!d.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
  return d;
}

std::string format_date(const Date& date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

int day_of_week(const Date& date) {
  // iso_encoding: Monday = 1 ... Sunday = 7.
  return static_cast<int>(std::chrono::weekday(std::chrono::sys_days(date)).iso_encoding()) - 1;
}

HolidayCalendar::HolidayCalendar(const std::vector<Date>& dates) {
  for (const auto& d : dates) listed_.insert(day_number(d));
}

bool HolidayCalendar::is_holiday(const Date& date) const {
  return day_of_week(date) >= 5 || listed_.contains(day_number(date));
}

DateContext HolidayCalendar::context(const Date& date) const { return {day_of_week(date), is_holiday(date)}; }

Calendar Calendar::consecutive(const Date& first, int count, const HolidayCalendar& holidays) {
  if (count < 1) throw ArgumentError("calendar needs at least one day");
  Calendar cal;
  const auto start = std::chrono::sys_days(first);
  for (int k = 0; k < count; ++k) {
    const Date d{start + std::chrono::days{k}};
    cal.dates.push_back(d);
    cal.contexts.push_back(holidays.context(d));
  }
  return cal;
}

int Calendar::index_of(const Date& date) const {
  if (dates.empty()) return -1;
  const int offset = day_number(date) - day_number(dates.front());
  if (offset >= 0 && offset < size() && dates[static_cast<std::size_t>(offset)] == date) return offset;
  auto it = std::find(dates.begin(), dates.end(), date);
  return it == dates.end() ? -1 : static_cast<int>(it - dates.begin());
}

int slot_minutes(int slots) {
  if (slots < 1 || kMinutesPerDay % slots != 0) {
    throw ArgumentError("slot count " + std::to_string(slots) + " must divide 1440");
  }
  return kMinutesPerDay / slots;
}

int discretize_mean_level(double mean_level) {
  const double rounded = std::floor(mean_level + 0.5);
  return static_cast<int>(std::clamp(rounded, 1.0, 4.0)) - 1;
}

LabelMap aggregate_reports(std::span<const Report> reports, int slots) {
  const int minutes = slot_minutes(slots);
  struct Acc {
    long sum = 0;
    long count = 0;
  };
  std::map<CellKey, Acc> acc;
  for (const auto& r : reports) {
    if (r.level < 1 || r.level > 4) throw DataError("report level " + std::to_string(r.level) + " outside 1..4");
    if (r.minute_of_day < 0 || r.minute_of_day >= kMinutesPerDay) throw DataError("report minute out of range");
    auto& a = acc[CellKey{r.station_id, day_number(r.date), r.minute_of_day / minutes}];
    a.sum += r.level;
    a.count += 1;
  }
  LabelMap out;
  for (const auto& [key, a] : acc) {
    // Integer round-half-up of sum/count: floor((2*sum + count) / (2*count)).
    const long rounded = (2 * a.sum + a.count) / (2 * a.count);
    out.emplace_hint(out.end(), key, static_cast<int>(std::clamp(rounded, 1L, 4L)) - 1);
  }
  return out;
}

FeatureEncoder::FeatureEncoder(int stations, int slots) : stations_(stations), slots_(slots) {
  if (stations < 1) throw ArgumentError("station count must be positive");
  if (slots < 1) throw ArgumentError("slot count must be positive");
}

void FeatureEncoder::encode_into(int station_id, const DateContext& context, int slot, std::span<double> out) const {
  if (station_id < 0 || station_id >= stations_) {
    throw ArgumentError("station id " + std::to_string(station_id) + " out of range [0, " + std::to_string(stations_) + ")");
  }
  if (slot < 0 || slot >= slots_) {
    throw ArgumentError("time slot " + std::to_string(slot) + " out of range [0, " + std::to_string(slots_) + ")");
  }
  if (context.day_of_week < 0 || context.day_of_week > 6) throw ArgumentError("day of week outside 0..6");
  if (static_cast<int>(out.size()) != width()) throw ArgumentError("feature buffer has the wrong width");
  std::fill(out.begin(), out.end(), 0.0);
  out[static_cast<std::size_t>(station_id)] = 1.0;
  out[static_cast<std::size_t>(stations_ + context.day_of_week)] = 1.0;
  out[static_cast<std::size_t>(stations_ + (context.is_holiday ? 8 : 7))] = 1.0;
  out[static_cast<std::size_t>(stations_ + kContextWidth + slot)] = 1.0;
}

std::vector<double> FeatureEncoder::encode(int station_id, const DateContext& context, int slot) const {
  std::vector<double> out(static_cast<std::size_t>(width()));
  encode_into(station_id, context, slot, out);
  return out;
}

FeatureEncoder::Decoded FeatureEncoder::decode(std::span<const double> f) const {
  if (static_cast<int>(f.size()) != width()) throw DataError("feature vector has the wrong width");
  auto hot = [&](int begin, int count) {
    int found = -1;
    for (int k = 0; k < count; ++k) {
      const double v = f[static_cast<std::size_t>(begin + k)];
      if (v == 1.0) {
        if (found >= 0) throw DataError("feature block is not one-hot");
        found = k;
      } else if (v != 0.0) {
        throw DataError("feature vector entries must be 0 or 1");
      }
    }
    if (found < 0) throw DataError("feature block is not one-hot");
    return found;
  };
  const int station = hot(0, stations_);
  const int dow = hot(stations_, 7);
  const int holiday = hot(stations_ + 7, 2);
  const int slot = hot(stations_ + kContextWidth, slots_);
  return {station, DateContext{dow, holiday == 1}, slot};
}

std::vector<double> encode_sample(int station_id, const DateContext& context, int slot, int stations, int slots) {
  return FeatureEncoder(stations, slots).encode(station_id, context, slot);
}

bool ServiceWindow::in_service(int slot, int slots) const {
  const int start = slot * slot_minutes(slots);
  return !(start >= start_minute && start < end_minute);
}

std::string ServiceWindow::describe() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d:%02d-%02d:%02d", start_minute / 60, start_minute % 60, end_minute / 60,
                end_minute % 60);
  return buf;
}

std::vector<int> in_service_slots(int slots, const ServiceWindow& window) {
  std::vector<int> out;
  for (int t = 0; t < slots; ++t) {
    if (window.in_service(t, slots)) out.push_back(t);
  }
  return out;
}

std::vector<Sample> filter_service_hours(std::span<const Sample> cells, int slots, const ServiceWindow& window) {
  std::vector<Sample> out;
  out.reserve(cells.size());
  for (const auto& c : cells) {
    if (window.in_service(c.time_slot, slots)) out.push_back(c);
  }
  return out;
}

std::vector<Sample> make_universe(int stations, int slots, const Calendar& calendar) {
  std::vector<Sample> cells;
  cells.reserve(static_cast<std::size_t>(stations) * static_cast<std::size_t>(slots) * calendar.dates.size());
  for (int d = 0; d < calendar.size(); ++d) {
    for (int t = 0; t < slots; ++t) {
      for (int s = 0; s < stations; ++s) {
        cells.push_back(Sample{s, d, calendar.contexts[static_cast<std::size_t>(d)], t, std::nullopt});
      }
    }
  }
  return cells;
}

CellKey SplitDataset::key(const Sample& s) const {
  return CellKey{s.station_id, day_number(calendar.dates.at(static_cast<std::size_t>(s.day))), s.time_slot};
}

SplitDataset build_split(int stations, int slots, const Calendar& calendar, const LabelMap& labels,
                         const ServiceWindow& window, std::vector<CellKey>* dropped) {
  SplitDataset split;
  split.stations = stations;
  split.slots = slots;
  split.calendar = calendar;
  const auto universe = make_universe(stations, slots, calendar);
  auto cells = filter_service_hours(universe, slots, window);
  std::size_t used = 0;
  for (auto& c : cells) {
    auto it = labels.find(split.key(c));
    if (it != labels.end()) {
      c.label = it->second;
      ++used;
      split.labeled.push_back(c);
    } else {
      split.unlabeled.push_back(c);
    }
  }
  if (used != labels.size() && dropped != nullptr) {
    for (const auto& [key, cls] : labels) {
      const bool known_station = key.station >= 0 && key.station < stations;
      const bool known_slot = key.slot >= 0 && key.slot < slots;
      const int day_index = key.day - (calendar.dates.empty() ? 0 : day_number(calendar.dates.front()));
      const bool known_day = day_index >= 0 && day_index < calendar.size();
      if (!known_station || !known_slot || !known_day || !window.in_service(key.slot, slots)) dropped->push_back(key);
    }
  }
  return split;
}

SplitDataset mask_labels(const SplitDataset& split, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ArgumentError("label ratio must lie in (0, 1]");
  const std::size_t l = split.l();
  const auto keep = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(l) + 1e-9));
  std::vector<std::size_t> order(l);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, "mask_labels");
  // Partial Fisher-Yates: the first `keep` slots become a uniform subset.
  for (std::size_t i = 0; i < keep && i + 1 < l; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, l - i));
    std::swap(order[i], order[j]);
  }
  std::vector<char> retained(l, 0);
  for (std::size_t i = 0; i < keep; ++i) retained[order[i]] = 1;

  SplitDataset out;
  out.stations = split.stations;
  out.slots = split.slots;
  out.calendar = split.calendar;
  out.unlabeled = split.unlabeled;
  for (std::size_t i = 0; i < l; ++i) {
    if (retained[i]) {
      out.labeled.push_back(split.labeled[i]);
    } else {
      Sample s = split.labeled[i];
      s.label.reset();
      out.unlabeled.push_back(s);
    }
  }
  return out;
}

std::vector<Fold> kfold_split(std::size_t labeled_count, int k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("k-fold split needs k >= 2");
  if (labeled_count < static_cast<std::size_t>(k)) {
    throw ArgumentError("k-fold split needs at least k labeled samples (l=" + std::to_string(labeled_count) +
                        ", k=" + std::to_string(k) + ")");
  }
  std::vector<std::size_t> order(labeled_count);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, "kfold");
  for (std::size_t i = labeled_count; i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_index(rng, i))]);
  }
  const std::size_t base = labeled_count / static_cast<std::size_t>(k);
  const std::size_t extra = labeled_count % static_cast<std::size_t>(k);
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  std::size_t begin = 0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                  order.begin() + static_cast<std::ptrdiff_t>(begin + size));
    std::sort(test.begin(), test.end());
    folds[f].test = std::move(test);
    begin += size;
  }
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<char> in_test(labeled_count, 0);
    for (auto i : folds[f].test) in_test[i] = 1;
    for (std::size_t i = 0; i < labeled_count; ++i) {
      if (!in_test[i]) folds[f].train.push_back(i);
    }
  }
  return folds;
}

std::vector<Fold> kfold_split(std::span<const Sample> labeled, int k, std::uint64_t seed) {
  return kfold_split(labeled.size(), k, seed);
}

std::vector<Report> read_reports_csv(const std::filesystem::path& path) {
  const auto table = io::read_csv(path);
  const auto cs = table.column("station_id");
  const auto ct = table.column("timestamp");
  const auto cl = table.column("level");
  std::vector<Report> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string_view ts = row[ct];
    if (ts.size() != 16 || ts[10] != 'T' || ts[13] != ':') {
      throw DataError(path.string() + ":" + std::to_string(table.line_numbers[r]) +
                      ": timestamp must be YYYY-MM-DDTHH:MM, got '" + std::string(ts) + "'");
    }
    Report rep;
    rep.station_id = io::parse_int(row[cs], "station_id");
    rep.date = parse_date(ts.substr(0, 10));
    const int hh = io::parse_int(ts.substr(11, 2), "hour");
    const int mm = io::parse_int(ts.substr(14, 2), "minute");
    if (hh < 0 || hh > 23 || mm < 0 || mm > 59) throw DataError("invalid time in '" + std::string(ts) + "'");
    rep.minute_of_day = hh * 60 + mm;
    rep.level = io::parse_int(row[cl], "level");
    if (rep.level < 1 || rep.level > 4) {
      throw DataError(path.string() + ":" + std::to_string(table.line_numbers[r]) + ": level must be 1..4");
    }
    out.push_back(rep);
  }
  return out;
}

void write_reports_csv(std::span<const Report> reports, const std::filesystem::path& path) {
  std::string s = "station_id,timestamp,level\n";
  char buf[64];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%d,%sT%02d:%02d,%d\n", r.station_id, format_date(r.date).c_str(),
                  r.minute_of_day / 60, r.minute_of_day % 60, r.level);
    s += buf;
  }
  io::write_file_atomic(path, s);
}

std::vector<Date> read_holidays_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Date> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    if (first && (line == "date" || line == "holiday")) {
      first = false;
      continue;
    }
    first = false;
    out.push_back(parse_date(line));
  }
  return out;
}

void write_holidays_csv(const std::vector<Date>& dates, const std::filesystem::path& path) {
  std::string s;
  for (const auto& d : dates) s += format_date(d) + "\n";
  io::write_file_atomic(path, s);
}

}  // namespace surconfort::data
