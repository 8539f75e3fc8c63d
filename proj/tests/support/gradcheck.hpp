#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "surconfort/graphssl.hpp"
#include "surconfort/nn.hpp"

namespace surconfort::testing {

struct GradCheckReport {
  // ||a - n|| / (||a|| + ||n||) over the whole parameter vector.
  double relative_error = 0.0;
  // Worst coordinate, relative with a floor and absolute.
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t checked = 0;
};

// |a - n| / max(|a| + |n|, floor): relative error with a floor for
// coordinates whose gradient is numerically zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
}

// Compares the analytic gradients of `loss_fn` at `model` with central
// differences of step `h` over every trainable parameter.
inline GradCheckReport finite_difference_check(
    const nn::MlpModel& model, const std::function<nn::LossAndGradients(const nn::MlpModel&)>& loss_fn,
    double h = 1e-5, double floor = 1e-7) {
  const auto analytic = loss_fn(model);
  const auto grads = nn::gradient_spans(analytic.grads);
  nn::MlpModel probe = model;
  auto params = nn::parameter_spans(probe);
  GradCheckReport report;
  double diff_sq = 0.0;
  double a_sq = 0.0;
  double n_sq = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double saved = params[t][i];
      params[t][i] = saved + h;
      const double up = loss_fn(probe).loss;
      params[t][i] = saved - h;
      const double down = loss_fn(probe).loss;
      params[t][i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = grads[t][i];
      report.max_relative_error = std::max(report.max_relative_error, relative_error(a, numeric, floor));
      report.max_absolute_error = std::max(report.max_absolute_error, std::abs(a - numeric));
      diff_sq += (a - numeric) * (a - numeric);
      a_sq += a * a;
      n_sq += numeric * numeric;
      ++report.checked;
    }
  }
  report.relative_error = std::sqrt(diff_sq) / std::max(std::sqrt(a_sq) + std::sqrt(n_sq), 1e-300);
  return report;
}

// Toy NGM problem: an 8 -> 16 -> 16 -> 8 -> 4 network, 6 samples (4 labeled)
// and 5 weighted edges across the LL, LU and UU partitions.
struct ToyNgm {
  nn::MlpModel model;
  graphssl::NgmBatch batch;
};

inline ToyNgm make_toy_ngm(std::uint64_t seed) {
  ToyNgm toy;
  toy.model = nn::MlpModel(8, {16, 16, 8}, seed);
  auto rng = make_rng(seed, "toy_ngm");
  for (auto& bn : toy.model.norm) {
    for (Eigen::Index k = 0; k < bn.scale.size(); ++k) {
      bn.scale[k] = 0.5 + uniform_unit(rng);
      bn.shift[k] = uniform_unit(rng) - 0.5;
    }
  }
  for (auto& b : toy.model.bias) {
    for (Eigen::Index k = 0; k < b.size(); ++k) b[k] = 0.2 * (uniform_unit(rng) - 0.5);
  }
  toy.batch.features.resize(6, 8);
  for (Eigen::Index k = 0; k < toy.batch.features.size(); ++k) toy.batch.features.data()[k] = 2.0 * uniform_unit(rng) - 1.0;
  toy.batch.labels = {0, 3, 1, 2};
  toy.batch.label_weights = {1.0, 0.5, 1.0, 1.0};
  toy.batch.pairs = {{0, 1, 1.0, 0.4}, {1, 4, 0.5, 0.7}, {2, 5, 0.25, 0.7}, {4, 5, 0.8, 1.3}, {3, 4, 1.0, 1.3}};
  return toy;
}

}  // namespace surconfort::testing
