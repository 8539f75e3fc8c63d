#pragma once

#include <Eigen/Sparse>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "surconfort/data.hpp"
#include "surconfort/nn.hpp"

namespace surconfort::diffusion {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using nn::Matrix;

/// Sparse nonnegative n x n affinities with an empty diagonal.
struct AffinityMatrix {
  SparseMatrix weights;
  int k = 0;
  double gamma = 0.0;  // descriptor affinities only
  double sigma = 0.0;  // natural affinities only

  Eigen::Index size() const { return weights.rows(); }
};

struct Neighbor {
  int index = 0;
  double squared_distance = 0.0;
};

/// Exact k nearest neighbours by L2 distance, self excluded, sorted by
/// (distance, index) so ties go to the lowest index.
std::vector<std::vector<Neighbor>> knn_l2(const Matrix& points, int k);

/// Directed k-NN with weights exp(-|x_i - x_j|^2 / (2 sigma^2)), sigma the
/// median k-NN distance (the median positive one if that is zero),
/// symmetrised by elementwise max.
AffinityMatrix natural_affinity(const Matrix& features, int k);

/// a_ij = max(v_i . v_j, 0)^gamma for j among the k nearest neighbours of
/// v_i, then A + A^T.
AffinityMatrix descriptor_affinity(const Matrix& descriptors, int k, double gamma);

struct SolverConfig {
  double tolerance = 1e-6;
  int max_iterations = 1000;
};

struct DiffusionConfig {
  double delta = 0.9;
  int k = 50;
  double gamma = 3.0;
  int rounds = 3;
  int pretrain_epochs = 100;
  double pseudo_label_weight = 0.5;
  /// Unlabeled samples drawn (seeded) into the diffusion graph.
  std::size_t unlabeled_cap = 3000;
  SolverConfig solver;

  void validate() const;
};

struct DiffusionResult {
  Matrix scores;                 // n x classes
  std::vector<int> predictions;  // row argmax, lowest class on ties
  std::vector<char> isolated;    // rows left all-zero (no labeled node reachable)
  int iterations = 0;
  bool converged = true;
};

/// One-hot rows for labels >= 0, zero rows for -1.
Matrix label_matrix(std::span<const int> labels, int classes = data::kNumClasses);

/// D^{-1/2} A D^{-1/2}; rows of zero degree stay zero.
SparseMatrix symmetric_normalize(const SparseMatrix& affinity);

/// Solves A x = b for symmetric positive definite A given as a product
/// functor, starting from x. Stops once |r|_2 <= abs_tolerance. Returns the
/// iteration count or -1 when max_iterations is exhausted.
int conjugate_gradient(const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& apply,
                       const Eigen::VectorXd& b, Eigen::VectorXd& x, double abs_tolerance, int max_iterations);

/// Solves (I - delta S) Z = Y by conjugate gradient, S the symmetrically
/// normalised affinity. Isolated rows fall back to the most frequent label.
/// Throws NumericError if a solve does not converge.
DiffusionResult diffuse(const AffinityMatrix& affinity, std::span<const int> labels, double delta,
                        const SolverConfig& solver = {});

/// Soft-clamped iteration Z <- delta S Z + (1 - delta) Y from Z = Y.
DiffusionResult label_spreading(const AffinityMatrix& affinity, std::span<const int> labels, double delta,
                                const SolverConfig& solver = {});

/// Hard-clamped iteration Z <- D^{-1} A Z with labeled rows reset to their
/// one-hot label after every step.
DiffusionResult label_propagation(const AffinityMatrix& affinity, std::span<const int> labels,
                                  const SolverConfig& solver = {});

struct LpDsslResult {
  nn::TrainResult best;
  /// Accuracy of the pseudo-labels against hidden labels, per round, when
  /// the caller supplies them; otherwise empty.
  std::vector<double> pseudo_label_accuracy;
  int best_round = 0;  // 0 = pre-trained model
};

/// Pre-train on labeled data, then `rounds` times: extract descriptors,
/// build the descriptor graph, diffuse, and retrain from scratch on labeled
/// plus pseudo-labeled samples. `hidden_labels`, if nonempty, holds the true
/// class (or -1) of each split.unlabeled sample and is only used for
/// diagnostics.
LpDsslResult lp_dssl_train(const data::SplitDataset& split, const DiffusionConfig& cfg, const nn::TrainConfig& train_cfg,
                           std::span<const int> hidden_labels = {});

}  // namespace surconfort::diffusion
