#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "gradcheck.hpp"
#include "surconfort/errors.hpp"
#include "surconfort/graphssl.hpp"
#include "surconfort/railgraph.hpp"

using namespace surconfort;
using namespace surconfort::graphssl;

namespace {

// Planar ring of n stations on a circle of radius r, each connected to its
// two neighbours.
railgraph::RailNetwork ring_network(int n, double r) {
  std::vector<railgraph::Station> stations;
  std::vector<std::pair<int, int>> connections;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n;
    stations.push_back({i, "s" + std::to_string(i), {r * std::cos(a), r * std::sin(a)}});
    connections.emplace_back(i, (i + 1) % n);
  }
  return railgraph::RailNetwork(stations, connections, railgraph::CoordinateMode::kPlanar);
}

// Every cell of a small world, labeled with probability `p_label`.
data::SplitDataset random_split(int stations, int days, int slots, double p_label, std::uint64_t seed) {
  data::SplitDataset s;
  s.stations = stations;
  s.slots = slots;
  s.calendar = data::Calendar::consecutive(data::parse_date("2021-04-05"), days, {});
  auto rng = make_rng(seed, "test_split");
  for (int d = 0; d < days; ++d) {
    for (int t = 0; t < slots; ++t) {
      for (int st = 0; st < stations; ++st) {
        data::Sample x{st, d, s.calendar.contexts[static_cast<std::size_t>(d)], t, std::nullopt};
        if (uniform_unit(rng) < p_label) {
          x.label = static_cast<int>(uniform_index(rng, 4));
          s.labeled.push_back(x);
        } else {
          s.unlabeled.push_back(x);
        }
      }
    }
  }
  return s;
}

struct OracleEdge {
  std::size_t i, j;
  double w;
};

// Brute force over all node pairs.
std::vector<OracleEdge> oracle_edges(const data::SplitDataset& s, const railgraph::RailAdjacency& adj) {
  auto sample = [&](std::size_t n) -> const data::Sample& { return n < s.l() ? s.labeled[n] : s.unlabeled[n - s.l()]; };
  std::vector<OracleEdge> out;
  for (std::size_t a = 0; a < s.n(); ++a) {
    for (std::size_t b = a + 1; b < s.n(); ++b) {
      const auto& x = sample(a);
      const auto& y = sample(b);
      if (x.day != y.day || x.time_slot != y.time_slot) continue;
      const double w = adj.weight(x.station_id, y.station_id);
      if (w > 0.0) out.push_back({a, b, w});
    }
  }
  return out;
}

}  // namespace

TEST(PairPenalty, Examples) {
  const std::vector<double> a{1.0, 2.0, 3.0};
  const std::vector<double> b{1.0, 0.0, 1.0};
  EXPECT_DOUBLE_EQ(pair_penalty(a, b, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(pair_penalty(a, b, 0.25), 1.0);
  EXPECT_EQ(pair_penalty(a, a, 1.0), 0.0);
  EXPECT_EQ(pair_penalty(a, b, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(pair_penalty(a, b, 0.5), pair_penalty(b, a, 0.5));
  EXPECT_THROW(pair_penalty(a, std::vector<double>{1.0}, 1.0), ArgumentError);
}

TEST(SampleGraph, TwoStationExample) {
  // Connected pair 10 km apart: one LL, one LU and one UU edge on the
  // shared slots, none across slots or days.
  const railgraph::RailNetwork net({{0, "a", {0, 0}}, {1, "b", {10, 0}}}, {{0, 1}}, railgraph::CoordinateMode::kPlanar);
  const auto adj = railgraph::build_adjacency(net);
  data::SplitDataset s;
  s.stations = 2;
  s.slots = 4;
  s.calendar = data::Calendar::consecutive(data::parse_date("2021-04-05"), 2, {});
  const auto ctx = s.calendar.contexts[0];
  s.labeled = {{0, 0, ctx, 0, 1}, {1, 0, ctx, 0, 2}, {0, 0, ctx, 1, 0}};
  s.unlabeled = {{1, 0, ctx, 1, std::nullopt}, {0, 0, ctx, 2, std::nullopt}, {1, 0, ctx, 2, std::nullopt},
                 {1, 1, s.calendar.contexts[1], 0, std::nullopt}, {0, 0, ctx, 3, std::nullopt}};
  const auto g = build_sample_graph(s, adj);
  ASSERT_EQ(g.edges.size(), 3u);
  EXPECT_EQ(g.count(PairKind::kLL), 1u);
  EXPECT_EQ(g.count(PairKind::kLU), 1u);
  EXPECT_EQ(g.count(PairKind::kUU), 1u);
  for (const auto& e : g.edges) EXPECT_EQ(e.weight, 1.0);
  std::set<std::pair<std::size_t, std::size_t>> got;
  for (const auto& e : g.edges) got.emplace(e.i, e.j);
  EXPECT_EQ(got, (std::set<std::pair<std::size_t, std::size_t>>{{0, 1}, {2, 3}, {4, 5}}));
}

TEST(SampleGraph, RingWithShortCutoffHasOnlyTrackEdges) {
  // d_max below the second-neighbour chord: only the 30 track connections
  // survive in a single fully observed slot.
  const int n = 30;
  const double r = 5.0;
  const double second_chord = 2.0 * r * std::sin(2.0 * std::numbers::pi / n);
  const auto adj = railgraph::build_adjacency(ring_network(n, r), 0.9 * second_chord);
  const auto split = random_split(n, 1, 1, 0.5, 4);
  const auto g = build_sample_graph(split, adj);
  EXPECT_EQ(g.edges.size(), 30u);
  EXPECT_EQ(oracle_edges(split, adj).size(), 30u);
}

TEST(SampleGraph, MatchesBruteForceOverSeeds) {
  const auto adj = railgraph::build_adjacency(ring_network(12, 2.0));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto split = random_split(12, 2, 3, 0.3, seed);
    const auto g = build_sample_graph(split, adj);
    const auto oracle = oracle_edges(split, adj);
    ASSERT_EQ(g.edges.size(), oracle.size()) << "seed " << seed;
    std::map<std::pair<std::size_t, std::size_t>, double> want;
    for (const auto& e : oracle) want[{e.i, e.j}] = e.w;
    for (const auto& e : g.edges) {
      ASSERT_LT(e.i, e.j);
      const auto it = want.find({e.i, e.j});
      ASSERT_NE(it, want.end());
      EXPECT_EQ(it->second, e.weight);
      const int labeled_ends = (e.i < split.l()) + (e.j < split.l());
      EXPECT_EQ(static_cast<int>(e.kind), 2 - labeled_ends);
    }
  }
}

TEST(NgmLoss, MatchesDirectEvaluation) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto toy = surconfort::testing::make_toy_ngm(seed);
    const double zeta = 0.7;
    const auto out = ngm_loss(toy.model, toy.batch, zeta);
    const auto fwd = nn::forward(toy.model, toy.batch.features, nn::Mode::kTrain);
    double ce = 0.0;
    for (std::size_t i = 0; i < toy.batch.labels.size(); ++i) {
      const double p = fwd.probabilities(static_cast<Eigen::Index>(i), toy.batch.labels[i]);
      ce += toy.batch.label_weights[i] * -std::log(std::max(p, 1e-12));
    }
    ce /= static_cast<double>(toy.batch.labels.size());
    double graph = 0.0;
    for (const auto& pr : toy.batch.pairs) {
      const auto d = fwd.descriptors.row(static_cast<Eigen::Index>(pr.row_a)) -
                     fwd.descriptors.row(static_cast<Eigen::Index>(pr.row_b));
      graph += pr.multiplier * 0.5 * pr.weight * d.squaredNorm();
    }
    EXPECT_NEAR(out.supervised, ce, 1e-12);
    EXPECT_NEAR(out.regularizer, zeta * graph, 1e-12);
    EXPECT_NEAR(out.loss, ce + zeta * graph, 1e-12);
  }
}

TEST(NgmLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto toy = surconfort::testing::make_toy_ngm(seed);
    const auto report = surconfort::testing::finite_difference_check(
        toy.model, [&](const nn::MlpModel& m) { return ngm_loss(m, toy.batch, 0.7); });
    EXPECT_LE(report.relative_error, 1e-6) << "seed " << seed;
  }
}

TEST(NgmLoss, RegularizerIsLinearInZeta) {
  const auto toy = surconfort::testing::make_toy_ngm(11);
  const auto base = ngm_loss(toy.model, toy.batch, 1.0);
  for (double zeta : {0.1, 0.35, 0.7, 2.0}) {
    const auto out = ngm_loss(toy.model, toy.batch, zeta);
    EXPECT_NEAR(out.regularizer, zeta * base.regularizer, 1e-12 * base.regularizer);
    EXPECT_EQ(out.supervised, base.supervised);
  }
}

TEST(NgmLoss, ZeroZetaIsExactlySupervised) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto toy = surconfort::testing::make_toy_ngm(seed);
    const auto out = ngm_loss(toy.model, toy.batch, 0.0);
    const nn::Matrix top = toy.batch.features.topRows(4);
    const auto ref = nn::supervised_loss(toy.model, top, toy.batch.labels, toy.batch.label_weights);
    EXPECT_EQ(out.loss, ref.loss);
    EXPECT_EQ(out.regularizer, 0.0);
    auto a = out.grads;
    auto b = ref.grads;
    const auto ga = nn::gradient_spans(a);
    const auto gb = nn::gradient_spans(b);
    for (std::size_t t = 0; t < ga.size(); ++t) {
      ASSERT_TRUE(std::equal(ga[t].begin(), ga[t].end(), gb[t].begin(), gb[t].end()));
    }
    auto no_pairs = toy.batch;
    no_pairs.pairs.clear();
    EXPECT_EQ(ngm_loss(toy.model, no_pairs, 0.7).loss, ref.loss);
  }
}

TEST(NgmLoss, Errors) {
  auto toy = surconfort::testing::make_toy_ngm(1);
  EXPECT_THROW(ngm_loss(toy.model, toy.batch, -0.1), ArgumentError);
  auto bad = toy.batch;
  bad.pairs.push_back({0, 9, 1.0, 1.0});
  EXPECT_THROW(ngm_loss(toy.model, bad, 0.7), ArgumentError);
  bad = toy.batch;
  bad.label_weights.pop_back();
  EXPECT_THROW(ngm_loss(toy.model, bad, 0.7), ArgumentError);
  bad = toy.batch;
  bad.labels.clear();
  EXPECT_THROW(ngm_loss(toy.model, bad, 0.7), ArgumentError);
}

TEST(Parsing, GraphSourceAndNormalization) {
  EXPECT_EQ(parse_graph_source("rail"), GraphSource::kRail);
  EXPECT_EQ(parse_graph_source("natural"), GraphSource::kNatural);
  EXPECT_EQ(parse_graph_source("cosine"), GraphSource::kCosine);
  EXPECT_THROW(parse_graph_source("knn"), ArgumentError);
  EXPECT_EQ(parse_edge_normalization(to_string(EdgeNormalization::kSum)), EdgeNormalization::kSum);
  EXPECT_THROW(parse_edge_normalization("max"), ArgumentError);
  NgmConfig cfg;
  cfg.edges_per_batch = 0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
}

TEST(RailEdgeSampler, FullDrawEqualsSampleGraph) {
  const auto adj = railgraph::build_adjacency(ring_network(10, 2.0));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto split = random_split(10, 2, 3, 0.4, seed);
    const auto g = build_sample_graph(split, adj);
    RailEdgeSampler sampler(split, adj, std::vector<char>(split.l(), 0));
    for (int k = 0; k < kPairKinds; ++k) {
      EXPECT_EQ(sampler.partition_size(static_cast<PairKind>(k)), g.count(static_cast<PairKind>(k)));
    }
    auto rng = make_rng(seed, "draw");
    const auto all = sampler.draw(rng, 0, EdgeNormalization::kMean);
    std::multiset<std::tuple<std::size_t, std::size_t, double>> got;
    std::multiset<std::tuple<std::size_t, std::size_t, double>> want;
    for (const auto& p : all) got.emplace(p.a, p.b, p.weight);
    for (const auto& e : g.edges) want.emplace(e.i, e.j, e.weight);
    EXPECT_EQ(got, want) << "seed " << seed;
  }
}

TEST(RailEdgeSampler, ExcludedSamplesNeverAppear) {
  const auto adj = railgraph::build_adjacency(ring_network(10, 2.0));
  const auto split = random_split(10, 3, 4, 0.5, 8);
  std::vector<char> excluded(split.l(), 0);
  for (std::size_t i = 0; i < split.l(); i += 3) excluded[i] = 1;
  RailEdgeSampler sampler(split, adj, excluded);
  auto rng = make_rng(1, "draw");
  for (int rep = 0; rep < 20; ++rep) {
    for (const auto& p : sampler.draw(rng, 32, EdgeNormalization::kMean)) {
      if (p.a < split.l()) EXPECT_FALSE(excluded[p.a]);
      if (p.b < split.l()) EXPECT_FALSE(excluded[p.b]);
    }
  }
  EXPECT_THROW(RailEdgeSampler(split, adj, std::vector<char>(1, 0)), ArgumentError);
}

TEST(EdgeSampler, SampledRegularizerIsUnbiased) {
  // E[sum multiplier * f] equals the mean of f over all edges (kMean) or its
  // sum (kSum).
  const auto adj = railgraph::build_adjacency(ring_network(10, 2.0));
  const auto split = random_split(10, 4, 6, 0.3, 21);
  RailEdgeSampler sampler(split, adj, std::vector<char>(split.l(), 0));
  auto f = [](const WeightedPair& p) { return p.weight * static_cast<double>((p.a * 7 + p.b * 13) % 11); };
  auto rng = make_rng(2, "draw");
  double exact = 0.0;
  const auto all = sampler.draw(rng, 0, EdgeNormalization::kSum);
  for (const auto& p : all) exact += f(p);
  for (auto norm : {EdgeNormalization::kMean, EdgeNormalization::kSum}) {
    const double target = norm == EdgeNormalization::kMean ? exact / static_cast<double>(all.size()) : exact;
    const int reps = 4000;
    double mean = 0.0;
    for (int r = 0; r < reps; ++r) {
      double est = 0.0;
      for (const auto& p : sampler.draw(rng, 16, norm)) est += p.multiplier * f(p);
      mean += est / reps;
    }
    EXPECT_NEAR(mean / target, 1.0, 0.02) << to_string(norm);
  }
}

TEST(MaterializedEdgeSampler, PartitionsAndValidation) {
  std::vector<SampleEdge> edges{{0, 1, 1.0, PairKind::kLL}, {1, 3, 0.5, PairKind::kLL}, {3, 4, 0.2, PairKind::kLL}};
  MaterializedEdgeSampler s(2, edges);
  EXPECT_EQ(s.partition_size(PairKind::kLL), 1u);
  EXPECT_EQ(s.partition_size(PairKind::kLU), 1u);
  EXPECT_EQ(s.partition_size(PairKind::kUU), 1u);
  EXPECT_DOUBLE_EQ(s.multiplier(PairKind::kLU, 4, EdgeNormalization::kMean), 1.0 / 12.0);
  EXPECT_DOUBLE_EQ(s.multiplier(PairKind::kLU, 4, EdgeNormalization::kSum), 0.25);
  EXPECT_THROW(MaterializedEdgeSampler(2, {{1, 1, 1.0, PairKind::kLL}}), ArgumentError);
  EXPECT_THROW(MaterializedEdgeSampler(2, {{0, 1, 1.5, PairKind::kLL}}), ArgumentError);
}

TEST(NaturalGraph, CapsUnlabeledAndExcludesHoldout) {
  const auto split = random_split(6, 2, 4, 0.4, 3);
  std::vector<char> excluded(split.l(), 0);
  excluded[0] = 1;
  const auto s = natural_edge_sampler(split, excluded, 3, 5, 7);
  auto rng = make_rng(0, "draw");
  std::set<std::size_t> unlabeled_nodes;
  for (const auto& p : s.draw(rng, 0, EdgeNormalization::kSum)) {
    EXPECT_NE(p.a, 0u);
    EXPECT_NE(p.b, 0u);
    EXPECT_GT(p.weight, 0.0);
    EXPECT_LE(p.weight, 1.0);
    for (auto n : {p.a, p.b}) {
      if (n >= split.l()) unlabeled_nodes.insert(n);
    }
  }
  EXPECT_LE(unlabeled_nodes.size(), 5u);
  EXPECT_GT(s.total_size(), 0u);
}

TEST(TrainSurconfort, ZeroZetaIsBitIdenticalToSupervised) {
  const auto adj = railgraph::build_adjacency(ring_network(8, 2.0));
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto split = random_split(8, 3, 6, 0.5, seed);
    nn::TrainConfig tc;
    tc.batch_size = 16;
    tc.max_epochs = 5;
    tc.hidden = {16, 16, 8};
    tc.seed = seed;
    NgmConfig cfg;
    cfg.zeta = 0.0;
    const auto a = train_surconfort(split, adj, cfg, tc);
    const auto b = nn::train_supervised(split, tc);
    EXPECT_EQ(nn::checkpoint_to_string(a.model), nn::checkpoint_to_string(b.model));
    EXPECT_EQ(a.log.validation_accuracy, b.log.validation_accuracy);
  }
}

TEST(TrainSurconfort, DeterministicAndReportsPartitions) {
  const auto adj = railgraph::build_adjacency(ring_network(8, 2.0));
  const auto split = random_split(8, 3, 6, 0.5, 5);
  nn::TrainConfig tc;
  tc.batch_size = 16;
  tc.max_epochs = 4;
  tc.hidden = {16, 16, 8};
  tc.seed = 5;
  NgmConfig cfg;
  cfg.edges_per_batch = 8;
  GraphStats stats;
  const auto a = train_surconfort(split, adj, cfg, tc, &stats);
  const auto b = train_surconfort(split, adj, cfg, tc);
  EXPECT_EQ(nn::checkpoint_to_string(a.model), nn::checkpoint_to_string(b.model));
  EXPECT_GT(stats.partition_sizes[0] + stats.partition_sizes[1] + stats.partition_sizes[2], 0u);
  cfg.source = GraphSource::kNatural;
  cfg.natural_k = 4;
  EXPECT_NO_THROW(train_surconfort(split, adj, cfg, tc));
}
