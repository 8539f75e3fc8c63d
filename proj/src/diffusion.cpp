#include "surconfort/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "surconfort/errors.hpp"
#include "surconfort/random.hpp"

namespace surconfort::diffusion {

namespace {

using Triplet = Eigen::Triplet<double>;

void check_labels(std::span<const int> labels, Eigen::Index n) {
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ArgumentError("label vector length differs from graph size");
  bool any = false;
  for (int y : labels) {
    if (y < -1 || y >= data::kNumClasses) throw ArgumentError("labels must be -1 or a class in 0..3");
    any = any || y >= 0;
  }
  if (!any) throw ArgumentError("diffusion needs at least one labeled node");
}

int most_frequent_label(std::span<const int> labels) {
  std::array<int, data::kNumClasses> counts{};
  for (int y : labels) {
    if (y >= 0) ++counts[static_cast<std::size_t>(y)];
  }
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

void finish(DiffusionResult& res, std::span<const int> labels) {
  res.predictions = nn::argmax_rows(res.scores);
  res.isolated.assign(res.predictions.size(), 0);
  const int fallback = most_frequent_label(labels);
  for (Eigen::Index r = 0; r < res.scores.rows(); ++r) {
    if (res.scores.row(r).isZero(0.0)) {
      res.isolated[static_cast<std::size_t>(r)] = 1;
      res.predictions[static_cast<std::size_t>(r)] = fallback;
    }
  }
}

}  // namespace

std::vector<std::vector<Neighbor>> knn_l2(const Matrix& points, int k) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw ArgumentError("k must be at least 1");
  if (n <= k) throw ArgumentError("k-NN needs more than k points (n=" + std::to_string(n) + ", k=" + std::to_string(k) + ")");
  const Eigen::VectorXd sq = points.rowwise().squaredNorm();
  std::vector<std::vector<Neighbor>> out(static_cast<std::size_t>(n));
  constexpr Eigen::Index kBlock = 256;
  std::vector<std::pair<double, int>> cand;
  for (Eigen::Index begin = 0; begin < n; begin += kBlock) {
    const Eigen::Index rows = std::min(kBlock, n - begin);
    Matrix gram;
    gram.noalias() = points.middleRows(begin, rows) * points.transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index i = begin + r;
      cand.clear();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double d2 = std::max(0.0, sq[i] + sq[j] - 2.0 * gram(r, j));
        cand.emplace_back(d2, static_cast<int>(j));
      }
      std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end());
      std::sort(cand.begin(), cand.begin() + k);
      auto& nb = out[static_cast<std::size_t>(i)];
      nb.reserve(static_cast<std::size_t>(k));
      for (int q = 0; q < k; ++q) nb.push_back({cand[static_cast<std::size_t>(q)].second, cand[static_cast<std::size_t>(q)].first});
    }
  }
  return out;
}

AffinityMatrix natural_affinity(const Matrix& features, int k) {
  const auto nbrs = knn_l2(features, k);
  std::vector<double> dists;
  dists.reserve(nbrs.size() * static_cast<std::size_t>(k));
  for (const auto& row : nbrs) {
    for (const auto& nb : row) dists.push_back(std::sqrt(nb.squared_distance));
  }
  auto median_of = [](std::vector<double> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
  };
  double sigma = median_of(dists);
  if (sigma <= 0.0) {
    std::vector<double> positive;
    for (double d : dists) {
      if (d > 0.0) positive.push_back(d);
    }
    sigma = positive.empty() ? 1.0 : median_of(positive);
  }
  std::vector<Triplet> trip;
  trip.reserve(dists.size() * 2);
  for (std::size_t i = 0; i < nbrs.size(); ++i) {
    for (const auto& nb : nbrs[i]) {
      const double w = std::exp(-nb.squared_distance / (2.0 * sigma * sigma));
      trip.emplace_back(static_cast<int>(i), nb.index, w);
      trip.emplace_back(nb.index, static_cast<int>(i), w);
    }
  }
  const auto n = static_cast<Eigen::Index>(nbrs.size());
  AffinityMatrix a;
  a.weights.resize(n, n);
  // Duplicate (i, j) entries collapse to their max: symmetrisation by max.
  a.weights.setFromTriplets(trip.begin(), trip.end(), [](double x, double y) { return std::max(x, y); });
  a.k = k;
  a.sigma = sigma;
  return a;
}

AffinityMatrix descriptor_affinity(const Matrix& descriptors, int k, double gamma) {
  if (gamma < 1.0) throw ArgumentError("gamma must be at least 1");
  const auto nbrs = knn_l2(descriptors, k);
  std::vector<Triplet> trip;
  for (std::size_t i = 0; i < nbrs.size(); ++i) {
    for (const auto& nb : nbrs[i]) {
      const double dot = descriptors.row(static_cast<Eigen::Index>(i)).dot(descriptors.row(nb.index));
      if (dot <= 0.0) continue;
      const double a = std::pow(dot, gamma);
      trip.emplace_back(static_cast<int>(i), nb.index, a);
      trip.emplace_back(nb.index, static_cast<int>(i), a);
    }
  }
  const auto n = static_cast<Eigen::Index>(nbrs.size());
  AffinityMatrix a;
  a.weights.resize(n, n);
  // Summing duplicates realises A + A^T.
  a.weights.setFromTriplets(trip.begin(), trip.end());
  a.k = k;
  a.gamma = gamma;
  return a;
}

void DiffusionConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw ArgumentError("delta must lie in (0, 1)");
  if (k < 1) throw ArgumentError("k must be at least 1");
  if (gamma < 1.0) throw ArgumentError("gamma must be at least 1");
  if (rounds < 0) throw ArgumentError("rounds must be non-negative");
  if (pretrain_epochs < 1) throw ArgumentError("pretrain epochs must be positive");
  if (solver.tolerance <= 0.0 || solver.max_iterations < 1) throw ArgumentError("invalid solver settings");
}

Matrix label_matrix(std::span<const int> labels, int classes) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

SparseMatrix symmetric_normalize(const SparseMatrix& affinity) {
  Eigen::VectorXd inv_sqrt(affinity.rows());
  for (Eigen::Index r = 0; r < affinity.rows(); ++r) {
    const double deg = affinity.row(r).sum();
    inv_sqrt[r] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  SparseMatrix s = affinity;
  for (Eigen::Index r = 0; r < s.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(s, r); it; ++it) it.valueRef() *= inv_sqrt[it.row()] * inv_sqrt[it.col()];
  }
  return s;
}

int conjugate_gradient(const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& apply,
                       const Eigen::VectorXd& b, Eigen::VectorXd& x, double abs_tolerance, int max_iterations) {
  Eigen::VectorXd ap(b.size());
  apply(x, ap);
  Eigen::VectorXd r = b - ap;
  double rr = r.squaredNorm();
  if (std::sqrt(rr) <= abs_tolerance) return 0;
  Eigen::VectorXd p = r;
  for (int it = 1; it <= max_iterations; ++it) {
    apply(p, ap);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) return -1;  // not positive definite along p
    const double alpha = rr / pap;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    const double rr_new = r.squaredNorm();
    if (std::sqrt(rr_new) <= abs_tolerance) return it;
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  return -1;
}

DiffusionResult diffuse(const AffinityMatrix& affinity, std::span<const int> labels, double delta,
                        const SolverConfig& solver) {
  if (!(delta > 0.0 && delta < 1.0)) throw ArgumentError("delta must lie in (0, 1)");
  check_labels(labels, affinity.size());
  const SparseMatrix s = symmetric_normalize(affinity.weights);
  const Matrix y = label_matrix(labels);
  DiffusionResult res;
  res.scores = Matrix::Zero(y.rows(), y.cols());
  auto apply = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) { out = v - delta * (s * v); };
  // lambda_min(I - delta S) >= 1 - delta, so |r| <= tol (1 - delta) bounds |Z - Z*|_2 by tol.
  const double abs_tol = solver.tolerance * (1.0 - delta);
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    const Eigen::VectorXd b = y.col(c);
    if (b.isZero(0.0)) continue;
    Eigen::VectorXd z = Eigen::VectorXd::Zero(b.size());
    const int its = conjugate_gradient(apply, b, z, abs_tol, solver.max_iterations);
    if (its < 0) {
      throw NumericError("conjugate gradient did not converge within " + std::to_string(solver.max_iterations) +
                         " iterations");
    }
    res.iterations = std::max(res.iterations, its);
    res.scores.col(c) = z;
  }
  finish(res, labels);
  return res;
}

DiffusionResult label_spreading(const AffinityMatrix& affinity, std::span<const int> labels, double delta,
                                const SolverConfig& solver) {
  if (!(delta > 0.0 && delta < 1.0)) throw ArgumentError("delta must lie in (0, 1)");
  check_labels(labels, affinity.size());
  const SparseMatrix s = symmetric_normalize(affinity.weights);
  const Matrix y = label_matrix(labels);
  DiffusionResult res;
  Matrix z = y;
  Matrix next(y.rows(), y.cols());
  res.converged = false;
  for (int it = 1; it <= solver.max_iterations; ++it) {
    next.noalias() = s * z;
    next = delta * next + (1.0 - delta) * y;
    const double change = (next - z).norm();
    z.swap(next);
    res.iterations = it;
    // Contraction factor delta in the 2-norm bounds the remaining error.
    if (delta / (1.0 - delta) * change <= solver.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.scores = std::move(z);
  finish(res, labels);
  return res;
}

DiffusionResult label_propagation(const AffinityMatrix& affinity, std::span<const int> labels,
                                  const SolverConfig& solver) {
  check_labels(labels, affinity.size());
  const auto& a = affinity.weights;
  SparseMatrix p = a;
  for (Eigen::Index r = 0; r < p.outerSize(); ++r) {
    const double deg = a.row(r).sum();
    if (deg <= 0.0) continue;
    for (SparseMatrix::InnerIterator it(p, r); it; ++it) it.valueRef() /= deg;
  }
  const Matrix y = label_matrix(labels);
  std::vector<Eigen::Index> clamped;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) clamped.push_back(static_cast<Eigen::Index>(i));
  }
  DiffusionResult res;
  Matrix z = y;
  Matrix next(y.rows(), y.cols());
  double prev_change = 0.0;
  res.converged = false;
  for (int it = 1; it <= solver.max_iterations; ++it) {
    next.noalias() = p * z;
    for (auto r : clamped) next.row(r) = y.row(r);
    const double change = (next - z).cwiseAbs().maxCoeff();
    z.swap(next);
    res.iterations = it;
    if (change == 0.0) {
      res.converged = true;
      break;
    }
    // A-posteriori estimate of the remaining error from the observed
    // contraction rate of successive changes.
    if (prev_change > 0.0) {
      const double rate = change / prev_change;
      if (rate < 1.0 && change * rate / (1.0 - rate) <= solver.tolerance * 1e-2) {
        res.converged = true;
        break;
      }
    }
    prev_change = change;
  }
  res.scores = std::move(z);
  finish(res, labels);
  return res;
}

LpDsslResult lp_dssl_train(const data::SplitDataset& split, const DiffusionConfig& cfg, const nn::TrainConfig& train_cfg,
                           std::span<const int> hidden_labels) {
  cfg.validate();
  if (split.l() == 0) throw ArgumentError("LP-DSSL needs at least one labeled sample");
  if (!hidden_labels.empty() && hidden_labels.size() != split.u()) {
    throw ArgumentError("hidden label count differs from the unlabeled pool");
  }
  const auto all = nn::encode_labeled(split, split.labeled);
  const auto [train_rows, val_rows] = nn::holdout_split(all.size(), train_cfg.validation_fraction, train_cfg.seed);
  const auto train = all.subset(train_rows);
  const auto validation = all.subset(val_rows);

  nn::TrainConfig pre_cfg = train_cfg;
  pre_cfg.max_epochs = cfg.pretrain_epochs;
  nn::MlpModel init(split.encoder().width(), train_cfg.hidden, train_cfg.seed);
  init.stations = split.stations;
  init.slots = split.slots;

  LpDsslResult out;
  out.best = nn::fit(init, train, validation, pre_cfg);
  if (cfg.rounds == 0) return out;

  // Seeded unlabeled pool for the diffusion graph.
  std::vector<std::size_t> pool(split.u());
  std::iota(pool.begin(), pool.end(), 0);
  auto rng = make_rng(train_cfg.seed, "lp_dssl_pool");
  const std::size_t take = std::min(cfg.unlabeled_cap, pool.size());
  for (std::size_t i = 0; i < take && i + 1 < pool.size(); ++i) {
    std::swap(pool[i], pool[i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i))]);
  }
  pool.resize(take);
  std::sort(pool.begin(), pool.end());
  std::vector<data::Sample> pool_samples;
  for (auto i : pool) pool_samples.push_back(split.unlabeled[i]);
  const Matrix pool_x = nn::encode_features(split, pool_samples);

  const auto n_lab = static_cast<Eigen::Index>(train.size());
  Matrix nodes(n_lab + pool_x.rows(), pool_x.cols());
  nodes.topRows(n_lab) = train.features;
  nodes.bottomRows(pool_x.rows()) = pool_x;
  std::vector<int> node_labels(static_cast<std::size_t>(nodes.rows()), -1);
  std::copy(train.labels.begin(), train.labels.end(), node_labels.begin());

  double best_acc = out.best.log.best_validation_accuracy();
  nn::MlpModel current = out.best.model;
  for (int round = 1; round <= cfg.rounds; ++round) {
    Matrix desc = nn::forward(current, nodes, nn::Mode::kInfer).descriptors;
    for (Eigen::Index r = 0; r < desc.rows(); ++r) {
      const double norm = desc.row(r).norm();
      if (norm > 0.0) desc.row(r) /= norm;
    }
    const int k = std::min<int>(cfg.k, static_cast<int>(nodes.rows()) - 1);
    const auto affinity = descriptor_affinity(desc, k, cfg.gamma);
    const auto diffused = diffuse(affinity, node_labels, cfg.delta, cfg.solver);

    nn::LabeledSet augmented;
    augmented.features = nodes;
    augmented.labels.resize(node_labels.size());
    augmented.weights.resize(node_labels.size());
    std::size_t pseudo_correct = 0;
    std::size_t pseudo_known = 0;
    for (std::size_t i = 0; i < node_labels.size(); ++i) {
      const bool labeled = node_labels[i] >= 0;
      augmented.labels[i] = labeled ? node_labels[i] : diffused.predictions[i];
      augmented.weights[i] = labeled ? 1.0 : cfg.pseudo_label_weight;
      if (!labeled && !hidden_labels.empty()) {
        const int truth = hidden_labels[pool[i - static_cast<std::size_t>(n_lab)]];
        if (truth >= 0) {
          ++pseudo_known;
          pseudo_correct += truth == diffused.predictions[i] ? 1 : 0;
        }
      }
    }
    if (pseudo_known > 0) {
      out.pseudo_label_accuracy.push_back(static_cast<double>(pseudo_correct) / static_cast<double>(pseudo_known));
    }

    nn::TrainConfig round_cfg = train_cfg;
    round_cfg.seed = derive_seed(train_cfg.seed, static_cast<std::uint64_t>(round));
    nn::MlpModel fresh(split.encoder().width(), train_cfg.hidden, round_cfg.seed);
    fresh.stations = split.stations;
    fresh.slots = split.slots;
    auto result = nn::fit(std::move(fresh), augmented, validation, round_cfg);
    current = result.model;
    const double acc = result.log.best_validation_accuracy();
    if (acc > best_acc) {
      best_acc = acc;
      out.best = std::move(result);
      out.best_round = round;
    }
  }
  return out;
}

}  // namespace surconfort::diffusion
