#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace surconfort::data {

using Date = std::chrono::year_month_day;

Date parse_date(std::string_view text);
std::string format_date(const Date& date);
/// Days since the civil epoch; a compact sortable key.
inline int day_number(const Date& date) {
  return static_cast<int>(std::chrono::sys_days(date).time_since_epoch().count());
}

inline constexpr int kMinutesPerDay = 1440;
inline constexpr int kContextWidth = 9;
inline constexpr int kNumClasses = 4;
inline constexpr int kDefaultSlots = 144;

/// Day of week (Monday = 0) plus the holiday flag.
struct DateContext {
  int day_of_week = 0;
  bool is_holiday = false;
  bool operator==(const DateContext&) const = default;
};

/// Weekends are always holidays; listed dates are holidays in addition.
class HolidayCalendar {
 public:
  HolidayCalendar() = default;
  explicit HolidayCalendar(const std::vector<Date>& dates);
  bool is_holiday(const Date& date) const;
  DateContext context(const Date& date) const;
  const std::set<int>& listed() const { return listed_; }

 private:
  std::set<int> listed_;
};

int day_of_week(const Date& date);

/// Consecutive days [first, first + count).
struct Calendar {
  std::vector<Date> dates;
  std::vector<DateContext> contexts;

  static Calendar consecutive(const Date& first, int count, const HolidayCalendar& holidays);
  int size() const { return static_cast<int>(dates.size()); }
  /// Index of `date`, or -1.
  int index_of(const Date& date) const;
};

/// One passenger report; level is the raw 1..4 scale.
struct Report {
  int station_id = 0;
  Date date;
  int minute_of_day = 0;
  int level = 1;
};

/// (station, date, slot) identity of a sample.
struct CellKey {
  int station = 0;
  int day = 0;  // day_number(date)
  int slot = 0;
  auto operator<=>(const CellKey&) const = default;
};

using LabelMap = std::map<CellKey, int>;

/// Length of one slot in minutes; ArgumentError unless T divides 1440.
int slot_minutes(int slots);

/// Mean level -> class in {0..3}: round half up, clamp to [1, 4], shift down.
int discretize_mean_level(double mean_level);

/// Averages reports per (station, date, slot) and discretizes the mean.
LabelMap aggregate_reports(std::span<const Report> reports, int slots);

/// One-hot [station | day-of-week | holiday flag | slot] of width S + 9 + T.
class FeatureEncoder {
 public:
  FeatureEncoder(int stations, int slots);
  int stations() const { return stations_; }
  int slots() const { return slots_; }
  int width() const { return stations_ + kContextWidth + slots_; }

  /// Writes into `out` (size width()), zeroing it first.
  void encode_into(int station_id, const DateContext& context, int slot, std::span<double> out) const;
  std::vector<double> encode(int station_id, const DateContext& context, int slot) const;

  struct Decoded {
    int station_id;
    DateContext context;
    int slot;
  };
  /// Inverse of encode; DataError unless the vector is a valid encoding.
  Decoded decode(std::span<const double> features) const;

 private:
  int stations_;
  int slots_;
};

std::vector<double> encode_sample(int station_id, const DateContext& context, int slot, int stations, int slots);

/// A (station, day, slot) cell. `day` indexes the dataset calendar.
struct Sample {
  int station_id = 0;
  int day = 0;
  DateContext context;
  int time_slot = 0;
  std::optional<int> label;

  bool operator==(const Sample&) const = default;
};

/// Out-of-service window [start, end) in minutes after midnight.
struct ServiceWindow {
  int start_minute = 80;   // 01:20
  int end_minute = 270;    // 04:30
  bool in_service(int slot, int slots) const;
  std::string describe() const;
};

std::vector<int> in_service_slots(int slots, const ServiceWindow& window = {});

/// Removes cells whose slot starts inside the window.
std::vector<Sample> filter_service_hours(std::span<const Sample> cells, int slots, const ServiceWindow& window = {});

/// Every station x calendar day x slot cell, unlabeled, before filtering.
std::vector<Sample> make_universe(int stations, int slots, const Calendar& calendar);

struct SplitDataset {
  int stations = 0;
  int slots = 0;
  Calendar calendar;
  std::vector<Sample> labeled;
  std::vector<Sample> unlabeled;

  std::size_t l() const { return labeled.size(); }
  std::size_t u() const { return unlabeled.size(); }
  std::size_t n() const { return labeled.size() + unlabeled.size(); }
  FeatureEncoder encoder() const { return FeatureEncoder(stations, slots); }
  CellKey key(const Sample& s) const;
};

/// Filters the universe to service hours, then splits it by label presence.
/// Labels that fall on a filtered or unknown cell are dropped and, if
/// `dropped` is given, appended there.
SplitDataset build_split(int stations, int slots, const Calendar& calendar, const LabelMap& labels,
                         const ServiceWindow& window = {}, std::vector<CellKey>* dropped = nullptr);

/// Keeps floor(ratio * l) labeled samples chosen uniformly without
/// replacement; the rest lose their label and join the unlabeled pool.
SplitDataset mask_labels(const SplitDataset& split, double ratio, std::uint64_t seed);

struct Fold {
  std::vector<std::size_t> train;  // indices into the labeled list
  std::vector<std::size_t> test;
};

/// Seeded shuffle then k contiguous folds whose sizes differ by at most one.
std::vector<Fold> kfold_split(std::size_t labeled_count, int k, std::uint64_t seed);
std::vector<Fold> kfold_split(std::span<const Sample> labeled, int k, std::uint64_t seed);

// CSV ingestion.
std::vector<Report> read_reports_csv(const std::filesystem::path& path);
void write_reports_csv(std::span<const Report> reports, const std::filesystem::path& path);
std::vector<Date> read_holidays_csv(const std::filesystem::path& path);
void write_holidays_csv(const std::vector<Date>& dates, const std::filesystem::path& path);

}  // namespace surconfort::data
