#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "surconfort/data.hpp"
#include "surconfort/nn.hpp"
#include "surconfort/railgraph.hpp"

namespace surconfort::graphssl {

using nn::Matrix;

/// (1/2) |v_i - v_j|^2 * w.
double pair_penalty(std::span<const double> v_i, std::span<const double> v_j, double weight);

enum class PairKind { kLL = 0, kLU = 1, kUU = 2 };
inline constexpr int kPairKinds = 3;
std::string to_string(PairKind kind);

/// Node ids: [0, l) are split.labeled indices, [l, l + u) are l + the
/// split.unlabeled index.
struct SampleEdge {
  std::size_t i = 0;
  std::size_t j = 0;
  double weight = 0.0;
  PairKind kind = PairKind::kLL;
};

struct SampleGraph {
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;
  std::vector<SampleEdge> edges;

  std::size_t count(PairKind kind) const;
};

/// One edge per unordered pair of samples that share (date, slot) and whose
/// stations carry a positive adjacency weight. Materialises every edge, so
/// meant for small splits.
SampleGraph build_sample_graph(const data::SplitDataset& split, const railgraph::RailAdjacency& adjacency);

enum class GraphSource { kRail, kNatural, kCosine };
std::string to_string(GraphSource source);
GraphSource parse_graph_source(const std::string& text);

/// How sampled partition sums are scaled.
///  kMean: each partition sum estimates |D_p| / |D| times its mean, so the
///         regulariser is the mean penalty over all edges.
///  kSum:  each partition sum estimates the full sum over |D_p| edges.
enum class EdgeNormalization { kMean, kSum };
std::string to_string(EdgeNormalization normalization);
EdgeNormalization parse_edge_normalization(const std::string& text);

struct NgmConfig {
  double zeta = 0.7;
  /// Edges drawn with replacement per partition and mini-batch.
  int edges_per_batch = 256;
  GraphSource source = GraphSource::kRail;
  EdgeNormalization normalization = EdgeNormalization::kMean;
  /// Natural graph only: neighbours per node and the seeded cap on the
  /// unlabeled samples that join the graph.
  int natural_k = 50;
  std::size_t natural_unlabeled_cap = 3000;
  /// Use every edge in every step instead of sampling.
  bool full_batch = false;

  void validate() const;
};

/// Rows [0, labels.size()) of `features` are the labeled mini-batch; the
/// remaining rows are edge endpoints that are not in it. Each pair indexes
/// rows of `features`.
struct NgmBatch {
  struct Pair {
    std::size_t row_a = 0;
    std::size_t row_b = 0;
    double weight = 0.0;
    /// Estimator scale applied to this pair's penalty.
    double multiplier = 1.0;
  };
  Matrix features;
  std::vector<int> labels;
  std::vector<double> label_weights;  // empty means all ones
  std::vector<Pair> pairs;
};

/// (1/B) sum_i w_i CE_i + zeta * sum_pairs multiplier * pair_penalty, with one
/// shared train-mode forward pass over all rows. `regularizer` holds the
/// zeta-scaled graph term. With zeta = 0 or no pairs this is exactly
/// nn::supervised_loss on the labeled rows.
nn::LossAndGradients ngm_loss(const nn::MlpModel& model, const NgmBatch& batch, double zeta);

struct WeightedPair {
  std::size_t a = 0;  // node ids
  std::size_t b = 0;
  double weight = 0.0;
  double multiplier = 1.0;
};

/// Edge source for one training run. Node ids as in SampleEdge; nodes that
/// are excluded (validation samples) never appear.
class EdgeSampler {
 public:
  virtual ~EdgeSampler() = default;
  virtual std::size_t partition_size(PairKind kind) const = 0;
  /// Draws `per_partition` edges with replacement from each non-empty
  /// partition, or every edge when `per_partition` is 0.
  virtual std::vector<WeightedPair> draw(Rng& rng, int per_partition, EdgeNormalization normalization) const = 0;

  std::size_t total_size() const;
  /// Multiplier for one edge of partition `kind` when `drawn` were sampled.
  double multiplier(PairKind kind, std::size_t drawn, EdgeNormalization normalization) const;
};

/// Contemporaneous station-adjacency edges, never listed in full: labeled
/// partitions are materialised, unlabeled-unlabeled edges are drawn by
/// rejection over (day, slot) groups and station pairs.
class RailEdgeSampler final : public EdgeSampler {
 public:
  /// `excluded[i]` removes labeled sample i from the graph.
  RailEdgeSampler(const data::SplitDataset& split, const railgraph::RailAdjacency& adjacency,
                  const std::vector<char>& excluded);
  std::size_t partition_size(PairKind kind) const override { return counts_[static_cast<int>(kind)]; }
  std::vector<WeightedPair> draw(Rng& rng, int per_partition, EdgeNormalization normalization) const override;

 private:
  std::size_t group_count() const { return static_cast<std::size_t>(days_) * static_cast<std::size_t>(slots_); }
  long node_at(std::size_t group, int station) const {
    return occupancy_[group * static_cast<std::size_t>(stations_) + static_cast<std::size_t>(station)];
  }
  std::vector<WeightedPair> enumerate_unlabeled() const;

  int stations_ = 0;
  int days_ = 0;
  int slots_ = 0;
  std::size_t labeled_ = 0;
  std::vector<long> occupancy_;  // node id or -1
  std::vector<railgraph::AdjacencyEntry> pairs_;
  std::array<std::vector<WeightedPair>, 2> listed_;  // LL, LU
  std::array<std::size_t, kPairKinds> counts_{};
};

/// Explicit edge list.
class MaterializedEdgeSampler final : public EdgeSampler {
 public:
  MaterializedEdgeSampler(std::size_t labeled, std::vector<SampleEdge> edges);
  std::size_t partition_size(PairKind kind) const override { return parts_[static_cast<int>(kind)].size(); }
  std::vector<WeightedPair> draw(Rng& rng, int per_partition, EdgeNormalization normalization) const override;

 private:
  std::array<std::vector<WeightedPair>, kPairKinds> parts_;
};

/// k-NN graph in input space over the non-excluded labeled samples and a
/// seeded subsample of at most `unlabeled_cap` unlabeled samples.
MaterializedEdgeSampler natural_edge_sampler(const data::SplitDataset& split, const std::vector<char>& excluded, int k,
                                             std::size_t unlabeled_cap, std::uint64_t seed);

struct GraphStats {
  std::array<std::size_t, kPairKinds> partition_sizes{};
};

/// Mini-batch Adam on ngm_loss with per-batch edge resampling and the same
/// early stopping, holdout and initialisation as nn::train_supervised.
/// `adjacency` is ignored for the natural source.
nn::TrainResult train_surconfort(const data::SplitDataset& split, const railgraph::RailAdjacency& adjacency,
                                 const NgmConfig& cfg, const nn::TrainConfig& train_cfg, GraphStats* stats = nullptr);

}  // namespace surconfort::graphssl
