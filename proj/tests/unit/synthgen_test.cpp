#include <gtest/gtest.h>

#include <cmath>

#include "surconfort/errors.hpp"
#include "surconfort/railgraph.hpp"
#include "surconfort/synthgen.hpp"
#include "test_util.hpp"

using namespace surconfort;
using namespace surconfort::synth;

namespace {

double mean_abs_difference(const CongestionField& f, int a, int b) {
  double sum = 0.0;
  for (int d = 0; d < f.days(); ++d) {
    for (int t = 0; t < f.slots(); ++t) sum += std::abs(f.value(a, d, t) - f.value(b, d, t));
  }
  return sum / (f.days() * f.slots());
}

}  // namespace

TEST(GenerateNetwork, TopologyCounts) {
  SynthWorldConfig cfg;
  cfg.n_stations = 4;
  EXPECT_EQ(generate_network(cfg).connections().size(), 4u);
  cfg.topology = Topology::kLine;
  EXPECT_EQ(generate_network(cfg).connections().size(), 3u);
  cfg.n_stations = 2;
  EXPECT_THROW(generate_network(cfg), ArgumentError);
}

TEST(GenerateNetwork, RingGeometry) {
  const auto net = generate_network({});
  ASSERT_EQ(net.size(), 30);
  for (int i = 0; i < 30; ++i) {
    EXPECT_EQ(net.neighbors(i).size(), 2u);
    EXPECT_LT(railgraph::distance(net, i, (i + 1) % 30), 1.2588);
  }
}

TEST(GenerateNetwork, DefaultRingAdjacencyReachesTwoHops) {
  const auto adj = railgraph::build_adjacency(generate_network({}), 3.0);
  for (int i = 0; i < 30; ++i) {
    EXPECT_EQ(adj.weight(i, (i + 1) % 30), 1.0);
    EXPECT_GT(adj.weight(i, (i + 2) % 30), 0.0);
    EXPECT_EQ(adj.weight(i, (i + 3) % 30), 0.0);
  }
}

TEST(Config, Validation) {
  SynthWorldConfig cfg;
  cfg.spatial_smoothing = 1.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.slots_per_day = 7;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.report_rate = -1;
  EXPECT_THROW(cfg.validate(), ArgumentError);
}

TEST(GroundTruth, RangeAndDeterminism) {
  const auto a = generate_world({});
  const auto b = generate_world({});
  EXPECT_EQ(a.truth.values(), b.truth.values());
  for (double v : a.truth.values()) {
    EXPECT_GE(v, 1.0);
    EXPECT_LE(v, 4.0);
  }
  SynthWorldConfig other;
  other.seed = 2;
  EXPECT_NE(generate_world(other).truth.values(), a.truth.values());
}

TEST(GroundTruth, NeighboursCloserThanAntipodes) {
  SynthWorldConfig cfg;
  cfg.spatial_smoothing = 0.5;
  const auto w = generate_world(cfg);
  double connected = 0.0, antipodal = 0.0;
  for (int s = 0; s < 30; ++s) {
    connected += mean_abs_difference(w.truth, s, (s + 1) % 30);
    antipodal += mean_abs_difference(w.truth, s, (s + 15) % 30);
  }
  EXPECT_LT(connected, antipodal);
}

TEST(GroundTruth, NoMixingKeepsStationsIndependentOfNeighbours) {
  // Without mixing or noise a station's series depends on its own profile only:
  // perturbing the field of another station is impossible, so check that
  // changing the smoothing changes nothing when it is zero rounds.
  SynthWorldConfig a;
  a.spatial_smoothing = 0.0;
  a.noise_std = 0.0;
  SynthWorldConfig b = a;
  b.smoothing_rounds = 5;
  const auto wa = generate_world(a);
  const auto wb = generate_world(b);
  EXPECT_EQ(wa.truth.values(), wb.truth.values());
}

TEST(GroundTruth, WeekdayPeaksExceedHolidayPeaks) {
  SynthWorldConfig cfg;
  cfg.noise_std = 0.0;
  cfg.spatial_smoothing = 0.0;
  const auto w = generate_world(cfg);
  double weekday = 0.0, holiday = 0.0;
  int nw = 0, nh = 0;
  for (int d = 0; d < w.calendar.size(); ++d) {
    double peak = 0.0;
    for (int s = 0; s < 30; ++s) {
      for (int t = 0; t < w.truth.slots(); ++t) peak = std::max(peak, w.truth.value(s, d, t));
    }
    if (w.calendar.contexts[static_cast<std::size_t>(d)].is_holiday) {
      holiday += peak;
      ++nh;
    } else {
      weekday += peak;
      ++nw;
    }
  }
  ASSERT_GT(nh, 0);
  ASSERT_GT(nw, 0);
  EXPECT_GT(weekday / nw, holiday / nh);
}

TEST(Reports, ZeroRateAndNoiselessMajority) {
  SynthWorldConfig cfg;
  cfg.n_days = 3;
  cfg.report_rate = 0.0;
  EXPECT_TRUE(generate_world(cfg).reports.empty());
  cfg.report_rate = 10.0;
  cfg.subjectivity = 0.0;
  const auto w = generate_world(cfg);
  const auto labels = data::aggregate_reports(w.reports, cfg.slots_per_day);
  ASSERT_FALSE(labels.empty());
  const int first_day = data::day_number(w.calendar.dates[0]);
  for (const auto& [key, cls] : labels) EXPECT_EQ(cls, w.truth.cls(key.station, key.day - first_day, key.slot));
}

TEST(Reports, LabeledFractionMatchesPoissonZeroProbability) {
  for (double rate : {0.045, 0.2, 1.0}) {
    SynthWorldConfig cfg;
    cfg.report_rate = rate;
    const auto w = generate_world(cfg);
    const auto labels = data::aggregate_reports(w.reports, cfg.slots_per_day);
    const double cells = 30.0 * cfg.n_days * cfg.slots_per_day;
    EXPECT_NEAR(labels.size() / cells, 1.0 - std::exp(-rate), 0.02) << "rate " << rate;
  }
}

TEST(Reports, DefaultWorldShape) {
  const auto w = generate_world({});
  const auto labels = data::aggregate_reports(w.reports, 144);
  const auto split = data::build_split(30, 144, w.calendar, labels);
  // Roughly ten thousand labeled in-service cells.
  EXPECT_GT(split.l(), 9000u);
  EXPECT_LT(split.l(), 11000u);
  int hist[4] = {0, 0, 0, 0};
  for (const auto& s : split.labeled) ++hist[*s.label];
  for (int c = 0; c < 4; ++c) EXPECT_GT(hist[c], 0) << "class " << c;
  for (const auto& r : w.reports) {
    EXPECT_GE(r.level, 1);
    EXPECT_LE(r.level, 4);
  }
}

TEST(WriteWorld, FilesRoundTrip) {
  surconfort::testing::TempDir dir("synth");
  SynthWorldConfig cfg;
  cfg.n_days = 5;
  cfg.extra_holidays = 1;
  const auto w = generate_world(cfg);
  write_world(w, dir.path());
  for (const char* f : {"stations.csv", "edges.csv", "reports.csv", "holidays.csv", "truth.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_EQ(read_truth_csv(dir / "truth.csv"), truth_labels(w));
  EXPECT_EQ(data::read_reports_csv(dir / "reports.csv").size(), w.reports.size());
  EXPECT_EQ(data::read_holidays_csv(dir / "holidays.csv").size(), 1u);
}
