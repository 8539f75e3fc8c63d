#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "surconfort/diffusion.hpp"
#include "surconfort/random.hpp"

namespace surconfort::testing {

using Dense = Eigen::MatrixXd;

inline diffusion::AffinityMatrix from_dense(const Dense& a) {
  diffusion::AffinityMatrix out;
  out.weights = a.sparseView();
  return out;
}

inline Dense path_graph(int n) {
  Dense a = Dense::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) a(i, i + 1) = a(i + 1, i) = 1.0;
  return a;
}

// Symmetric random graph on n nodes with density p, plus a spanning path so
// that every node is reachable.
inline Dense random_graph(int n, double p, std::uint64_t seed) {
  auto rng = make_rng(seed, "test_graph");
  Dense a = Dense::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (j == i + 1 || uniform_unit(rng) < p) a(i, j) = a(j, i) = 0.1 + uniform_unit(rng);
    }
  }
  return a;
}

inline Dense dense_labels(const std::vector<int>& labels) {
  Dense y = Dense::Zero(static_cast<Eigen::Index>(labels.size()), 4);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

// (I - delta S)^{-1} Y with S = D^{-1/2} A D^{-1/2}, by dense inverse.
inline Dense spreading_oracle(const Dense& a, const std::vector<int>& labels, double delta) {
  const Eigen::VectorXd d = a.rowwise().sum();
  const Eigen::VectorXd inv = d.unaryExpr([](double x) { return x > 0 ? 1.0 / std::sqrt(x) : 0.0; });
  const Dense s = inv.asDiagonal() * a * inv.asDiagonal();
  const Dense m = Dense::Identity(a.rows(), a.cols()) - delta * s;
  return m.inverse() * dense_labels(labels);
}

// Harmonic solution: labeled rows fixed, Z_U = (D_UU - A_UU)^{-1} A_UL Y_L.
inline Dense harmonic_oracle(const Dense& a, const std::vector<int>& labels) {
  std::vector<int> lab, unl;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) (labels[static_cast<std::size_t>(i)] >= 0 ? lab : unl).push_back(i);
  const Dense y = dense_labels(labels);
  Dense z = y;
  const auto nu = static_cast<Eigen::Index>(unl.size());
  const auto nl = static_cast<Eigen::Index>(lab.size());
  Dense l_uu(nu, nu);
  Dense a_ul(nu, nl);
  Dense y_l(nl, 4);
  for (Eigen::Index r = 0; r < nu; ++r) {
    for (Eigen::Index c = 0; c < nu; ++c) l_uu(r, c) = (r == c ? a.row(unl[r]).sum() : 0.0) - a(unl[r], unl[c]);
    for (Eigen::Index c = 0; c < nl; ++c) a_ul(r, c) = a(unl[r], lab[c]);
  }
  for (Eigen::Index c = 0; c < nl; ++c) y_l.row(c) = y.row(lab[c]);
  const Dense z_u = l_uu.inverse() * a_ul * y_l;
  for (Eigen::Index r = 0; r < nu; ++r) z.row(unl[r]) = z_u.row(r);
  return z;
}

inline double max_abs_diff(const nn::Matrix& a, const Dense& b) { return (Dense(a) - b).cwiseAbs().maxCoeff(); }

}  // namespace surconfort::testing
