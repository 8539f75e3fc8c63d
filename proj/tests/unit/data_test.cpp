#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "surconfort/data.hpp"
#include "surconfort/errors.hpp"
#include "test_util.hpp"

using namespace surconfort;
using namespace surconfort::data;

namespace {

Date ymd(int y, unsigned m, unsigned d) { return Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}}; }

std::vector<int> ones(const std::vector<double>& v) {
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == 1.0) out.push_back(static_cast<int>(i));
    else EXPECT_EQ(v[i], 0.0);
  }
  return out;
}

SplitDataset labeled_split(std::size_t l) {
  SplitDataset s;
  s.stations = 1;
  s.slots = 144;
  s.calendar = Calendar::consecutive(ymd(2021, 1, 4), 1, {});
  // `day` doubles as a unique id here.
  for (std::size_t i = 0; i < l; ++i) s.labeled.push_back(Sample{0, static_cast<int>(i), {}, 0, static_cast<int>(i % 4)});
  s.unlabeled.push_back(Sample{0, -1, {}, 0, std::nullopt});
  return s;
}

}  // namespace

TEST(Dates, ParseFormatAndDayOfWeek) {
  const auto d = parse_date("2021-04-07");
  EXPECT_EQ(format_date(d), "2021-04-07");
  EXPECT_EQ(day_of_week(ymd(2021, 4, 5)), 0);  // Monday
  EXPECT_EQ(day_of_week(ymd(2021, 4, 11)), 6);
  EXPECT_THROW(parse_date("2021-02-30"), DataError);
  EXPECT_THROW(parse_date("2021/02/03"), DataError);
}

TEST(HolidayCalendar, WeekendsPlusListedDates) {
  const HolidayCalendar cal({ymd(2021, 4, 29)});
  EXPECT_FALSE(cal.is_holiday(ymd(2021, 4, 28)));
  EXPECT_TRUE(cal.is_holiday(ymd(2021, 4, 29)));
  EXPECT_TRUE(cal.is_holiday(ymd(2021, 5, 1)));
  EXPECT_EQ(cal.context(ymd(2021, 4, 29)), (DateContext{3, true}));
  EXPECT_TRUE(HolidayCalendar().is_holiday(ymd(2021, 5, 2)));
}

TEST(EncodeSample, WorkedExamples) {
  // Wednesday, not a holiday.
  auto v = encode_sample(2, {2, false}, 3, 4, 6);
  EXPECT_EQ(v.size(), 19u);
  EXPECT_EQ(ones(v), (std::vector<int>{2, 6, 11, 16}));
  // Sunday, holiday, single slot.
  v = encode_sample(0, {6, true}, 0, 1, 1);
  EXPECT_EQ(v.size(), 11u);
  EXPECT_EQ(ones(v), (std::vector<int>{0, 7, 9, 10}));
  EXPECT_THROW(encode_sample(4, {0, false}, 0, 4, 6), ArgumentError);
  EXPECT_THROW(encode_sample(0, {0, false}, 6, 4, 6), ArgumentError);
  EXPECT_THROW(encode_sample(-1, {0, false}, 0, 4, 6), ArgumentError);
}

TEST(EncodeSample, RoundTripProperty) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const int S = 1 + static_cast<int>(rng() % 40);
    const int slot_choices[] = {1, 24, 48, 96, 144, 288};
    const int T = slot_choices[rng() % 6];
    const FeatureEncoder enc(S, T);
    for (int k = 0; k < 20; ++k) {
      const int s = static_cast<int>(rng() % static_cast<unsigned>(S));
      const DateContext c{static_cast<int>(rng() % 7), rng() % 2 == 0};
      const int t = static_cast<int>(rng() % static_cast<unsigned>(T));
      const auto v = enc.encode(s, c, t);
      ASSERT_EQ(static_cast<int>(v.size()), S + 9 + T);
      EXPECT_EQ(std::accumulate(v.begin(), v.end(), 0.0), 4.0);
      const auto d = enc.decode(v);
      EXPECT_EQ(d.station_id, s);
      EXPECT_EQ(d.context, c);
      EXPECT_EQ(d.slot, t);
    }
  }
}

TEST(Decode, RejectsInvalidVectors) {
  const FeatureEncoder enc(2, 2);
  auto v = enc.encode(1, {3, false}, 1);
  v[0] = 1.0;
  EXPECT_THROW(enc.decode(v), DataError);
  v = enc.encode(1, {3, false}, 1);
  v[1] = 0.5;
  EXPECT_THROW(enc.decode(v), DataError);
  EXPECT_THROW(enc.decode(std::vector<double>(3, 0.0)), DataError);
}

TEST(Discretize, RoundHalfUpThenShift) {
  EXPECT_EQ(discretize_mean_level(3.0), 2);
  EXPECT_EQ(discretize_mean_level(1.5), 1);
  EXPECT_EQ(discretize_mean_level(11.0 / 3.0), 3);
  EXPECT_EQ(discretize_mean_level(2.49), 1);
  EXPECT_EQ(discretize_mean_level(0.2), 0);
  EXPECT_EQ(discretize_mean_level(4.6), 3);
}

TEST(AggregateReports, WorkedExamples) {
  const auto d = ymd(2021, 4, 5);
  std::vector<Report> r{{0, d, 600, 3}};
  EXPECT_EQ(aggregate_reports(r, 144).begin()->second, 2);
  r = {{0, d, 600, 1}, {0, d, 605, 2}};
  auto m = aggregate_reports(r, 144);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.begin()->second, 1);
  r = {{0, d, 600, 4}, {0, d, 601, 4}, {0, d, 609, 3}};
  EXPECT_EQ(aggregate_reports(r, 144).begin()->second, 3);
  EXPECT_TRUE(aggregate_reports({}, 144).empty());
}

TEST(AggregateReports, SlotBoundaryBelongsToLaterSlot) {
  const auto d = ymd(2021, 4, 5);
  const std::vector<Report> r{{0, d, 609, 1}, {0, d, 610, 4}};
  const auto m = aggregate_reports(r, 144);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.at(CellKey{0, day_number(d), 60}), 0);
  EXPECT_EQ(m.at(CellKey{0, day_number(d), 61}), 3);
  EXPECT_THROW(aggregate_reports(r, 7), ArgumentError);
}

TEST(AggregateReports, PermutationInvariantProperty) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<Report> r;
    for (int i = 0; i < 200; ++i) {
      r.push_back({static_cast<int>(rng() % 3), ymd(2021, 4, 5 + static_cast<unsigned>(rng() % 3)),
                   static_cast<int>(rng() % 60), 1 + static_cast<int>(rng() % 4)});
    }
    const auto a = aggregate_reports(r, 144);
    std::shuffle(r.begin(), r.end(), rng);
    EXPECT_EQ(aggregate_reports(r, 144), a);
  }
}

TEST(ServiceHours, BoundariesAndCount) {
  const ServiceWindow w;
  EXPECT_FALSE(w.in_service(8, 144));   // 01:20
  EXPECT_TRUE(w.in_service(27, 144));   // 04:30
  EXPECT_TRUE(w.in_service(72, 144));   // 12:00
  EXPECT_TRUE(w.in_service(7, 144));
  EXPECT_FALSE(w.in_service(26, 144));
  const auto kept = in_service_slots(144);
  EXPECT_EQ(kept.size(), 125u);
  for (int t = 8; t <= 26; ++t) EXPECT_EQ(std::count(kept.begin(), kept.end(), t), 0);
  EXPECT_EQ(w.describe(), "01:20-04:30");
}

TEST(ServiceHours, FilterRemovesNineteenSlotsProperty) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const int stations = 1 + static_cast<int>(rng() % 5);
    const int days = 1 + static_cast<int>(rng() % 4);
    const auto cal = Calendar::consecutive(ymd(2021, 1, 1 + static_cast<unsigned>(rng() % 20)), days, {});
    const auto universe = make_universe(stations, 144, cal);
    const auto kept = filter_service_hours(universe, 144);
    EXPECT_EQ(universe.size() - kept.size(), static_cast<std::size_t>(19 * stations * days));
    std::set<int> removed;
    for (const auto& c : universe) {
      if (std::find(kept.begin(), kept.end(), c) == kept.end()) removed.insert(c.time_slot);
    }
    EXPECT_EQ(removed.size(), 19u);
    EXPECT_EQ(*removed.begin(), 8);
    EXPECT_EQ(*removed.rbegin(), 26);
  }
}

TEST(BuildSplit, CountsAndDroppedLabels) {
  const auto cal = Calendar::consecutive(ymd(2021, 4, 5), 1, {});
  const int T = 360;  // 4-minute slots; every slot before 01:20 is in service
  LabelMap labels;
  labels[{0, day_number(cal.dates[0]), 0}] = 1;
  labels[{1, day_number(cal.dates[0]), 1}] = 2;
  labels[{1, day_number(cal.dates[0]), 3}] = 0;
  labels[{0, day_number(cal.dates[0]), 30}] = 0;  // 02:00, filtered out
  std::vector<CellKey> dropped;
  const auto split = build_split(2, T, cal, labels, {}, &dropped);
  EXPECT_EQ(split.l(), 3u);
  ASSERT_EQ(dropped.size(), 1u);
  EXPECT_EQ(dropped[0].slot, 30);
  for (const auto& s : split.labeled) EXPECT_TRUE(s.label.has_value());
  for (const auto& s : split.unlabeled) EXPECT_FALSE(s.label.has_value());
  EXPECT_EQ(split.n(), split.l() + split.u());
}

TEST(BuildSplit, TwoStationsOneDayFourSlots) {
  const auto cal = Calendar::consecutive(ymd(2021, 4, 5), 1, {});
  const int T = 360;
  LabelMap labels;
  for (auto [s, t] : {std::pair{0, 0}, {0, 1}, {1, 2}}) labels[{s, day_number(cal.dates[0]), t}] = 1;
  const ServiceWindow only_four{16, kMinutesPerDay};  // keeps slots 0..3
  const auto split = build_split(2, T, cal, labels, only_four);
  EXPECT_EQ(split.l(), 3u);
  EXPECT_EQ(split.u(), 5u);
  EXPECT_EQ(split.n(), 8u);
}

TEST(MaskLabels, FloorCountAndPartitionProperty) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t l = 1 + rng() % 500;
    const int percent = 1 + static_cast<int>(rng() % 100);
    const double ratio = percent / 100.0;
    const auto split = labeled_split(l);
    const auto m = mask_labels(split, ratio, seed);
    EXPECT_EQ(m.l(), l * static_cast<std::size_t>(percent) / 100);
    EXPECT_EQ(m.n(), split.n());
    std::vector<int> seen(l, 0);
    for (const auto& x : m.labeled) {
      ASSERT_TRUE(x.label.has_value());
      EXPECT_EQ(*x.label, x.day % 4);
      ++seen[static_cast<std::size_t>(x.day)];
    }
    ASSERT_EQ(m.unlabeled.size(), 1 + l - m.l());
    EXPECT_EQ(m.unlabeled[0].day, -1);
    for (std::size_t i = 1; i < m.unlabeled.size(); ++i) {
      EXPECT_FALSE(m.unlabeled[i].label.has_value());
      ++seen[static_cast<std::size_t>(m.unlabeled[i].day)];
    }
    for (int c : seen) EXPECT_EQ(c, 1);
    EXPECT_EQ(mask_labels(split, ratio, seed).labeled, m.labeled);
  }
}

TEST(MaskLabels, PaperScaleCountAndErrors) {
  const auto split = labeled_split(10373);
  EXPECT_EQ(mask_labels(split, 0.10, 1).l(), 1037u);
  const auto full = mask_labels(split, 1.0, 1);
  EXPECT_EQ(full.labeled, split.labeled);
  EXPECT_THROW(mask_labels(split, 0.0, 1), ArgumentError);
  EXPECT_THROW(mask_labels(split, 1.5, 1), ArgumentError);
}

TEST(KFold, SizesAndErrors) {
  auto f = kfold_split(10, 5, 3);
  for (const auto& fold : f) EXPECT_EQ(fold.test.size(), 2u);
  f = kfold_split(11, 5, 3);
  std::vector<std::size_t> sizes;
  for (const auto& fold : f) sizes.push_back(fold.test.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 2, 2, 2, 2}));
  EXPECT_THROW(kfold_split(4, 5, 1), ArgumentError);
  EXPECT_THROW(kfold_split(10, 1, 1), ArgumentError);
}

TEST(KFold, PartitionProperty) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const int k = 2 + static_cast<int>(rng() % 9);
    const std::size_t l = static_cast<std::size_t>(k) + rng() % 300;
    const auto folds = kfold_split(l, k, seed);
    ASSERT_EQ(folds.size(), static_cast<std::size_t>(k));
    std::vector<int> tested(l, 0);
    std::size_t lo = l, hi = 0;
    for (const auto& f : folds) {
      lo = std::min(lo, f.test.size());
      hi = std::max(hi, f.test.size());
      EXPECT_EQ(f.train.size() + f.test.size(), l);
      std::set<std::size_t> train(f.train.begin(), f.train.end());
      for (auto i : f.test) {
        ++tested[i];
        EXPECT_FALSE(train.contains(i));
      }
    }
    EXPECT_LE(hi - lo, 1u);
    for (int t : tested) EXPECT_EQ(t, 1);
  }
}

TEST(ReportsCsv, RoundTripAndErrors) {
  surconfort::testing::TempDir dir("data");
  const std::vector<Report> r{{3, ymd(2021, 4, 5), 7 * 60 + 5, 2}, {0, ymd(2021, 12, 31), 23 * 60 + 59, 4}};
  write_reports_csv(r, dir / "r.csv");
  const auto back = read_reports_csv(dir / "r.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].station_id, 3);
  EXPECT_EQ(back[0].minute_of_day, 425);
  EXPECT_EQ(back[1].level, 4);
  EXPECT_EQ(back[1].date, ymd(2021, 12, 31));
  surconfort::testing::write_text(dir / "bad.csv", "station_id,timestamp,level\n0,2021-04-05T07:05,5\n");
  EXPECT_THROW(read_reports_csv(dir / "bad.csv"), DataError);
  surconfort::testing::write_text(dir / "bad2.csv", "station_id,timestamp,level\n0,2021-04-05 07:05,1\n");
  EXPECT_THROW(read_reports_csv(dir / "bad2.csv"), DataError);
}

TEST(HolidaysCsv, RoundTrip) {
  surconfort::testing::TempDir dir("data");
  const std::vector<Date> d{ymd(2021, 4, 29), ymd(2021, 5, 3)};
  write_holidays_csv(d, dir / "h.csv");
  EXPECT_EQ(surconfort::testing::read_text(dir / "h.csv"), "2021-04-29\n2021-05-03\n");
  EXPECT_EQ(read_holidays_csv(dir / "h.csv"), d);
}
