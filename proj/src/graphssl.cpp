#include "surconfort/graphssl.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <unordered_map>

#include "surconfort/diffusion.hpp"
#include "surconfort/errors.hpp"

namespace surconfort::graphssl {

namespace {

PairKind kind_of(std::size_t a, std::size_t b, std::size_t labeled) {
  const int n = (a < labeled ? 1 : 0) + (b < labeled ? 1 : 0);
  return n == 2 ? PairKind::kLL : (n == 1 ? PairKind::kLU : PairKind::kUU);
}

const data::Sample& node_sample(const data::SplitDataset& split, std::size_t node) {
  return node < split.l() ? split.labeled[node] : split.unlabeled[node - split.l()];
}

}  // namespace

double pair_penalty(std::span<const double> v_i, std::span<const double> v_j, double weight) {
  if (v_i.size() != v_j.size()) {
    throw ArgumentError("descriptor dimensions differ: " + std::to_string(v_i.size()) + " vs " +
                        std::to_string(v_j.size()));
  }
  double sq = 0.0;
  for (std::size_t k = 0; k < v_i.size(); ++k) {
    const double d = v_i[k] - v_j[k];
    sq += d * d;
  }
  return 0.5 * sq * weight;
}

std::string to_string(PairKind kind) {
  switch (kind) {
    case PairKind::kLL: return "LL";
    case PairKind::kLU: return "LU";
    case PairKind::kUU: return "UU";
  }
  return "?";
}

std::string to_string(GraphSource source) {
  switch (source) {
    case GraphSource::kRail: return "rail";
    case GraphSource::kNatural: return "natural";
    case GraphSource::kCosine: return "cosine";
  }
  return "?";
}

GraphSource parse_graph_source(const std::string& text) {
  if (text == "rail") return GraphSource::kRail;
  if (text == "natural") return GraphSource::kNatural;
  if (text == "cosine") return GraphSource::kCosine;
  throw ArgumentError("unknown graph source '" + text + "' (expected rail, natural or cosine)");
}

std::string to_string(EdgeNormalization normalization) {
  return normalization == EdgeNormalization::kMean ? "mean" : "sum";
}

EdgeNormalization parse_edge_normalization(const std::string& text) {
  if (text == "mean") return EdgeNormalization::kMean;
  if (text == "sum") return EdgeNormalization::kSum;
  throw ArgumentError("unknown edge normalization '" + text + "' (expected mean or sum)");
}

void NgmConfig::validate() const {
  if (!(zeta >= 0.0)) throw ArgumentError("zeta must be non-negative");
  if (edges_per_batch < 1) throw ArgumentError("edges per batch must be positive");
  if (natural_k < 1) throw ArgumentError("natural graph k must be positive");
}

std::size_t SampleGraph::count(PairKind kind) const {
  return static_cast<std::size_t>(std::count_if(edges.begin(), edges.end(), [&](const SampleEdge& e) { return e.kind == kind; }));
}

SampleGraph build_sample_graph(const data::SplitDataset& split, const railgraph::RailAdjacency& adjacency) {
  if (adjacency.size() != split.stations) throw ArgumentError("adjacency size differs from the station count");
  std::map<std::pair<int, int>, std::vector<std::pair<int, std::size_t>>> groups;
  for (std::size_t node = 0; node < split.n(); ++node) {
    const auto& s = node_sample(split, node);
    groups[{s.day, s.time_slot}].emplace_back(s.station_id, node);
  }
  SampleGraph g;
  g.labeled = split.l();
  g.unlabeled = split.u();
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end());
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        const double w = adjacency.weight(members[a].first, members[b].first);
        if (w <= 0.0) continue;
        const auto i = std::min(members[a].second, members[b].second);
        const auto j = std::max(members[a].second, members[b].second);
        g.edges.push_back({i, j, w, kind_of(i, j, g.labeled)});
      }
    }
  }
  return g;
}

nn::LossAndGradients ngm_loss(const nn::MlpModel& model, const NgmBatch& batch, double zeta) {
  const std::size_t b = batch.labels.size();
  if (b == 0) throw ArgumentError("ngm_loss needs a nonempty labeled batch");
  if (!(zeta >= 0.0)) throw ArgumentError("zeta must be non-negative");
  if (static_cast<std::size_t>(batch.features.rows()) < b) throw ArgumentError("batch has fewer rows than labels");
  if (!batch.label_weights.empty() && batch.label_weights.size() != b) {
    throw ArgumentError("label weight count differs from the labeled batch");
  }
  if (zeta == 0.0 || batch.pairs.empty()) {
    if (static_cast<std::size_t>(batch.features.rows()) == b) {
      return nn::supervised_loss(model, batch.features, batch.labels, batch.label_weights);
    }
    const Matrix top = batch.features.topRows(static_cast<Eigen::Index>(b));
    return nn::supervised_loss(model, top, batch.labels, batch.label_weights);
  }

  auto fwd = nn::forward(model, batch.features, nn::Mode::kTrain);
  const auto& p = fwd.probabilities;
  const auto& v = fwd.descriptors;
  const double inv_batch = 1.0 / static_cast<double>(b);
  Matrix grad_logits = Matrix::Zero(p.rows(), p.cols());
  double supervised = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double w = batch.label_weights.empty() ? 1.0 : batch.label_weights[i];
    const auto r = static_cast<Eigen::Index>(i);
    supervised += w * nn::cross_entropy({p.row(r).data(), static_cast<std::size_t>(p.cols())}, batch.labels[i]);
    grad_logits.row(r) = p.row(r);
    grad_logits(r, batch.labels[i]) -= 1.0;
    grad_logits.row(r) *= w * inv_batch;
  }

  Matrix grad_desc = Matrix::Zero(v.rows(), v.cols());
  const auto dim = static_cast<std::size_t>(v.cols());
  double graph = 0.0;
  for (const auto& pr : batch.pairs) {
    const auto ra = static_cast<Eigen::Index>(pr.row_a);
    const auto rb = static_cast<Eigen::Index>(pr.row_b);
    if (ra >= v.rows() || rb >= v.rows()) throw ArgumentError("pair row outside the batch");
    graph += pr.multiplier * pair_penalty({v.row(ra).data(), dim}, {v.row(rb).data(), dim}, pr.weight);
    const Eigen::RowVectorXd g = (zeta * pr.multiplier * pr.weight) * (v.row(ra) - v.row(rb));
    grad_desc.row(ra) += g;
    grad_desc.row(rb) -= g;
  }

  nn::LossAndGradients out;
  out.supervised = supervised * inv_batch;
  out.regularizer = zeta * graph;
  out.loss = out.supervised + out.regularizer;
  out.grads = nn::backward(model, fwd.cache, grad_logits, &grad_desc);
  out.cache = std::move(fwd.cache);
  return out;
}

std::size_t EdgeSampler::total_size() const {
  std::size_t t = 0;
  for (int k = 0; k < kPairKinds; ++k) t += partition_size(static_cast<PairKind>(k));
  return t;
}

double EdgeSampler::multiplier(PairKind kind, std::size_t drawn, EdgeNormalization normalization) const {
  const double scale = static_cast<double>(partition_size(kind)) / static_cast<double>(drawn);
  if (normalization == EdgeNormalization::kSum) return scale;
  return scale / static_cast<double>(total_size());
}

RailEdgeSampler::RailEdgeSampler(const data::SplitDataset& split, const railgraph::RailAdjacency& adjacency,
                                 const std::vector<char>& excluded)
    : stations_(split.stations),
      days_(split.calendar.size()),
      slots_(split.slots),
      labeled_(split.l()),
      pairs_(adjacency.unordered_pairs()) {
  if (adjacency.size() != split.stations) throw ArgumentError("adjacency size differs from the station count");
  if (excluded.size() != split.l()) throw ArgumentError("exclusion mask length differs from the labeled count");
  occupancy_.assign(group_count() * static_cast<std::size_t>(stations_), -1);
  for (std::size_t node = 0; node < split.n(); ++node) {
    if (node < labeled_ && excluded[node]) continue;
    const auto& s = node_sample(split, node);
    const auto g = static_cast<std::size_t>(s.day) * static_cast<std::size_t>(slots_) + static_cast<std::size_t>(s.time_slot);
    occupancy_[g * static_cast<std::size_t>(stations_) + static_cast<std::size_t>(s.station_id)] = static_cast<long>(node);
  }
  for (std::size_t g = 0; g < group_count(); ++g) {
    for (const auto& e : pairs_) {
      const long a = node_at(g, e.i);
      const long b = node_at(g, e.j);
      if (a < 0 || b < 0) continue;
      const auto ua = static_cast<std::size_t>(a);
      const auto ub = static_cast<std::size_t>(b);
      const auto kind = kind_of(ua, ub, labeled_);
      ++counts_[static_cast<int>(kind)];
      if (kind == PairKind::kLL) {
        listed_[0].push_back({std::min(ua, ub), std::max(ua, ub), e.weight, 1.0});
      } else if (kind == PairKind::kLU) {
        listed_[1].push_back({std::min(ua, ub), std::max(ua, ub), e.weight, 1.0});
      }
    }
  }
}

std::vector<WeightedPair> RailEdgeSampler::enumerate_unlabeled() const {
  std::vector<WeightedPair> out;
  out.reserve(counts_[static_cast<int>(PairKind::kUU)]);
  for (std::size_t g = 0; g < group_count(); ++g) {
    for (const auto& e : pairs_) {
      const long a = node_at(g, e.i);
      const long b = node_at(g, e.j);
      if (a < static_cast<long>(labeled_) || b < static_cast<long>(labeled_)) continue;
      out.push_back({static_cast<std::size_t>(std::min(a, b)), static_cast<std::size_t>(std::max(a, b)), e.weight, 1.0});
    }
  }
  return out;
}

std::vector<WeightedPair> RailEdgeSampler::draw(Rng& rng, int per_partition, EdgeNormalization normalization) const {
  std::vector<WeightedPair> out;
  if (per_partition < 0) throw ArgumentError("edges per partition must be non-negative");
  if (per_partition == 0) {
    for (const auto& part : listed_) out.insert(out.end(), part.begin(), part.end());
    const auto uu = enumerate_unlabeled();
    out.insert(out.end(), uu.begin(), uu.end());
    const double m = normalization == EdgeNormalization::kMean ? 1.0 / static_cast<double>(std::max<std::size_t>(out.size(), 1)) : 1.0;
    for (auto& p : out) p.multiplier = m;
    return out;
  }
  const auto n = static_cast<std::size_t>(per_partition);
  for (int k = 0; k < 2; ++k) {
    const auto& part = listed_[static_cast<std::size_t>(k)];
    if (part.empty()) continue;
    const double m = multiplier(static_cast<PairKind>(k), n, normalization);
    for (std::size_t d = 0; d < n; ++d) {
      auto p = part[static_cast<std::size_t>(uniform_index(rng, part.size()))];
      p.multiplier = m;
      out.push_back(p);
    }
  }
  if (counts_[static_cast<int>(PairKind::kUU)] > 0) {
    const double m = multiplier(PairKind::kUU, n, normalization);
    // Every group holds the same station pairs, so a uniform (group, pair)
    // draw accepted when both ends are unlabeled is uniform over UU edges.
    std::size_t drawn = 0;
    while (drawn < n) {
      const auto g = static_cast<std::size_t>(uniform_index(rng, group_count()));
      const auto& e = pairs_[static_cast<std::size_t>(uniform_index(rng, pairs_.size()))];
      const long a = node_at(g, e.i);
      const long b = node_at(g, e.j);
      if (a < static_cast<long>(labeled_) || b < static_cast<long>(labeled_)) continue;
      out.push_back({static_cast<std::size_t>(std::min(a, b)), static_cast<std::size_t>(std::max(a, b)), e.weight, m});
      ++drawn;
    }
  }
  return out;
}

MaterializedEdgeSampler::MaterializedEdgeSampler(std::size_t labeled, std::vector<SampleEdge> edges) {
  for (const auto& e : edges) {
    if (e.i == e.j) throw ArgumentError("self edge in sample graph");
    if (!(e.weight > 0.0 && e.weight <= 1.0)) throw ArgumentError("sample graph weight outside (0, 1]");
    const auto kind = kind_of(e.i, e.j, labeled);
    parts_[static_cast<int>(kind)].push_back({e.i, e.j, e.weight, 1.0});
  }
}

std::vector<WeightedPair> MaterializedEdgeSampler::draw(Rng& rng, int per_partition,
                                                        EdgeNormalization normalization) const {
  std::vector<WeightedPair> out;
  if (per_partition < 0) throw ArgumentError("edges per partition must be non-negative");
  if (per_partition == 0) {
    for (const auto& part : parts_) out.insert(out.end(), part.begin(), part.end());
    const double m = normalization == EdgeNormalization::kMean ? 1.0 / static_cast<double>(std::max<std::size_t>(out.size(), 1)) : 1.0;
    for (auto& p : out) p.multiplier = m;
    return out;
  }
  const auto n = static_cast<std::size_t>(per_partition);
  for (int k = 0; k < kPairKinds; ++k) {
    const auto& part = parts_[static_cast<std::size_t>(k)];
    if (part.empty()) continue;
    const double m = multiplier(static_cast<PairKind>(k), n, normalization);
    for (std::size_t d = 0; d < n; ++d) {
      auto p = part[static_cast<std::size_t>(uniform_index(rng, part.size()))];
      p.multiplier = m;
      out.push_back(p);
    }
  }
  return out;
}

MaterializedEdgeSampler natural_edge_sampler(const data::SplitDataset& split, const std::vector<char>& excluded, int k,
                                             std::size_t unlabeled_cap, std::uint64_t seed) {
  if (excluded.size() != split.l()) throw ArgumentError("exclusion mask length differs from the labeled count");
  std::vector<std::size_t> nodes;
  for (std::size_t i = 0; i < split.l(); ++i) {
    if (!excluded[i]) nodes.push_back(i);
  }
  std::vector<std::size_t> pool(split.u());
  std::iota(pool.begin(), pool.end(), 0);
  auto rng = make_rng(seed, "natural_graph");
  const std::size_t take = std::min(unlabeled_cap, pool.size());
  for (std::size_t i = 0; i < take && i + 1 < pool.size(); ++i) {
    std::swap(pool[i], pool[i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i))]);
  }
  pool.resize(take);
  std::sort(pool.begin(), pool.end());
  for (auto u : pool) nodes.push_back(split.l() + u);

  std::vector<data::Sample> samples;
  samples.reserve(nodes.size());
  for (auto node : nodes) samples.push_back(node_sample(split, node));
  std::vector<SampleEdge> edges;
  if (nodes.size() >= 2) {
    const Matrix x = nn::encode_features(split, samples);
    const int kk = std::min<int>(k, static_cast<int>(nodes.size()) - 1);
    const auto affinity = diffusion::natural_affinity(x, kk);
    const auto& w = affinity.weights;
    for (Eigen::Index r = 0; r < w.outerSize(); ++r) {
      for (diffusion::SparseMatrix::InnerIterator it(w, r); it; ++it) {
        if (it.col() <= r || it.value() <= 0.0) continue;
        edges.push_back({nodes[static_cast<std::size_t>(r)], nodes[static_cast<std::size_t>(it.col())],
                         std::min(it.value(), 1.0), PairKind::kLL});
      }
    }
  }
  return MaterializedEdgeSampler(split.l(), std::move(edges));
}

nn::TrainResult train_surconfort(const data::SplitDataset& split, const railgraph::RailAdjacency& adjacency,
                                 const NgmConfig& cfg, const nn::TrainConfig& train_cfg, GraphStats* stats) {
  cfg.validate();
  if (split.l() == 0) throw ArgumentError("SURCONFORT training needs at least one labeled sample");
  const auto all = nn::encode_labeled(split, split.labeled);
  const auto [train_rows, val_rows] = nn::holdout_split(all.size(), train_cfg.validation_fraction, train_cfg.seed);
  const auto train = all.subset(train_rows);
  const auto validation = all.subset(val_rows);
  nn::MlpModel model(split.encoder().width(), train_cfg.hidden, train_cfg.seed);
  model.stations = split.stations;
  model.slots = split.slots;

  std::vector<char> excluded(split.l(), 0);
  for (auto r : val_rows) excluded[r] = 1;
  std::unique_ptr<EdgeSampler> sampler;
  if (cfg.source == GraphSource::kNatural) {
    sampler = std::make_unique<MaterializedEdgeSampler>(
        natural_edge_sampler(split, excluded, cfg.natural_k, cfg.natural_unlabeled_cap, train_cfg.seed));
  } else {
    sampler = std::make_unique<RailEdgeSampler>(split, adjacency, excluded);
  }
  if (stats) {
    for (int k = 0; k < kPairKinds; ++k) stats->partition_sizes[static_cast<std::size_t>(k)] = sampler->partition_size(static_cast<PairKind>(k));
  }
  if (cfg.zeta == 0.0) return nn::fit(std::move(model), train, validation, train_cfg);
  if (sampler->total_size() == 0) {
    std::cerr << "warning: sample graph is empty; training reduces to the supervised network\n";
    return nn::fit(std::move(model), train, validation, train_cfg);
  }

  const auto enc = split.encoder();
  const auto width = static_cast<std::size_t>(enc.width());
  auto edge_rng = make_rng(train_cfg.seed, "edges");
  const int per_partition = cfg.full_batch ? 0 : cfg.edges_per_batch;
  nn::StepObjective objective = [&](const nn::MlpModel& m, const nn::LabeledSet& batch) {
    NgmBatch nb;
    const auto pairs = sampler->draw(edge_rng, per_partition, cfg.normalization);
    std::unordered_map<std::size_t, std::size_t> row_of;
    row_of.reserve(batch.size() + 2 * pairs.size());
    for (std::size_t r = 0; r < batch.size(); ++r) row_of.emplace(batch.ids[r], r);
    std::vector<std::size_t> extra;
    auto row = [&](std::size_t node) {
      auto [it, inserted] = row_of.emplace(node, batch.size() + extra.size());
      if (inserted) extra.push_back(node);
      return it->second;
    };
    nb.pairs.reserve(pairs.size());
    for (const auto& p : pairs) {
      const auto ra = row(p.a);
      const auto rb = row(p.b);
      nb.pairs.push_back({ra, rb, p.weight, p.multiplier});
    }
    nb.features.resize(static_cast<Eigen::Index>(batch.size() + extra.size()), enc.width());
    nb.features.topRows(static_cast<Eigen::Index>(batch.size())) = batch.features;
    for (std::size_t e = 0; e < extra.size(); ++e) {
      const auto& s = node_sample(split, extra[e]);
      enc.encode_into(s.station_id, s.context, s.time_slot,
                      {nb.features.row(static_cast<Eigen::Index>(batch.size() + e)).data(), width});
    }
    nb.labels = batch.labels;
    nb.label_weights = batch.weights;
    return ngm_loss(m, nb, cfg.zeta);
  };
  return nn::fit(std::move(model), train, validation, train_cfg, objective);
}

}  // namespace surconfort::graphssl
